#include "mimoseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace mimoseg {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; byte-swapping is not implemented");

namespace {
template <typename T>
const char* dtype_name() {
  if constexpr (sizeof(T) == 4)
    return "f32";
  else
    return "f64";
}
}  // namespace

template <typename T>
void save_checkpoint(const std::string& path_stem, const ParamStore<T>& store) {
  nlohmann::json manifest;
  manifest["dtype"] = dtype_name<T>();
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& p : store.items) {
    manifest["tensors"].push_back({{"name", p.name},
                                   {"group", param_group_name(p.group)},
                                   {"shape", p.value.shape}});
  }
  std::ofstream mf(path_stem + ".json");
  if (!mf) throw std::runtime_error("save_checkpoint: cannot write " + path_stem + ".json");
  mf << manifest.dump(2) << "\n";

  std::ofstream bf(path_stem + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("save_checkpoint: cannot write " + path_stem + ".bin");
  for (const auto& p : store.items)
    bf.write(reinterpret_cast<const char*>(p.value.data.data()),
             static_cast<std::streamsize>(p.value.data.size() * sizeof(T)));
}

template <typename T>
void load_checkpoint(const std::string& path_stem, ParamStore<T>& store) {
  std::ifstream mf(path_stem + ".json");
  if (!mf) throw std::runtime_error("load_checkpoint: missing " + path_stem + ".json");
  nlohmann::json manifest = nlohmann::json::parse(mf);
  if (manifest.at("dtype").get<std::string>() != dtype_name<T>())
    throw std::runtime_error("load_checkpoint: dtype mismatch, manifest has " +
                             manifest.at("dtype").get<std::string>());
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != store.size())
    throw std::runtime_error("load_checkpoint: manifest lists " + std::to_string(tensors.size()) +
                             " tensors, store has " + std::to_string(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = tensors[i];
    if (e.at("name").get<std::string>() != store[i].name)
      throw std::runtime_error("load_checkpoint: tensor " + std::to_string(i) + " is '" +
                               e.at("name").get<std::string>() + "', expected '" + store[i].name + "'");
    if (e.at("shape").get<std::vector<int>>() != store[i].value.shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for " + store[i].name);
  }
  std::ifstream bf(path_stem + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("load_checkpoint: missing " + path_stem + ".bin");
  for (auto& p : store.items) {
    bf.read(reinterpret_cast<char*>(p.value.data.data()),
            static_cast<std::streamsize>(p.value.data.size() * sizeof(T)));
    if (!bf) throw std::runtime_error("load_checkpoint: blob truncated at " + p.name);
  }
  char extra;
  if (bf.read(&extra, 1)) throw std::runtime_error("load_checkpoint: blob longer than manifest");
}

template void save_checkpoint<float>(const std::string&, const ParamStore<float>&);
template void save_checkpoint<double>(const std::string&, const ParamStore<double>&);
template void load_checkpoint<float>(const std::string&, ParamStore<float>&);
template void load_checkpoint<double>(const std::string&, ParamStore<double>&);

}  // namespace mimoseg
