#pragma once

#include <string>

#include "mimoseg/params.hpp"

namespace mimoseg {

// Checkpoint layout: <path>.json holds the manifest (ordered names, shapes,
// dtype), <path>.bin holds every value little-endian, flat, in manifest
// order. Loading into a store whose names/shapes/dtype disagree with the
// manifest is rejected.
template <typename T>
void save_checkpoint(const std::string& path_stem, const ParamStore<T>& store);

template <typename T>
void load_checkpoint(const std::string& path_stem, ParamStore<T>& store);

}  // namespace mimoseg
