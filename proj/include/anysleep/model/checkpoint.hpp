#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "anysleep/model/network.hpp"

namespace anysleep::model {

// Binary container: "ANYSLEEP", uint32 version, uint64 header length, a JSON
// header {"meta": ..., "tensors": [{"name", "shape", "offset"}]}, then the
// tensors as contiguous little-endian float64 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorFile {
  nlohmann::json meta;
  std::vector<std::pair<std::string, nk::Array>> tensors;

  const nk::Array& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
// Throws ParseError on a malformed file and ConfigError on an unknown version.
TensorFile read_tensor_file(const std::filesystem::path& path);

// Model parameters and normalization statistics ("<layer>.running_mean",
// "<layer>.running_var"). `meta` is stored next to the configuration.
TensorFile model_tensors(const Model& model, nlohmann::json meta = nlohmann::json::object());
Model model_from_tensors(const TensorFile& file);

void save_model(const std::filesystem::path& path, const Model& model,
                nlohmann::json meta = nlohmann::json::object());
Model load_model(const std::filesystem::path& path);

}  // namespace anysleep::model
