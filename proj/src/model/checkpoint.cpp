#include "anysleep/model/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "anysleep/core/errors.hpp"

namespace anysleep::model {

namespace {

constexpr char kMagic[8] = {'A', 'N', 'Y', 'S', 'L', 'E', 'E', 'P'};

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

void put_double(std::ostream& os, double d) { put_le(os, std::bit_cast<std::uint64_t>(d)); }

}  // namespace

const nk::Array& TensorFile::at(const std::string& name) const {
  for (const auto& [n, a] : tensors) {
    if (n == name) return a;
  }
  throw ConfigError("checkpoint has no tensor '" + name + "'");
}

bool TensorFile::contains(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const auto& t) { return t.first == name; });
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, a] : file.tensors) {
    index.push_back({{"name", name}, {"shape", a.shape()}, {"offset", offset}});
    offset += a.size();
  }
  const std::string header = nlohmann::json{{"meta", file.meta}, {"tensors", index}}.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open '" + tmp.string() + "' for writing");
    os.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(os, kCheckpointVersion);
    put_le<std::uint64_t>(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& entry : file.tensors) {
      for (double v : entry.second.values()) put_double(os, v);
    }
    if (!os) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ParseError("not a checkpoint file: bad magic", 0);
  }
  const auto version = get_le<std::uint32_t>(bytes.data() + 8);
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(bytes.data() + 12);
  if (header_len > bytes.size() - 20) throw ParseError("checkpoint header truncated", 12);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what(), 20);
  }
  const std::size_t data_start = 20 + header_len;
  const std::size_t value_count = (bytes.size() - data_start) / 8;

  TensorFile file;
  file.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    nk::Shape shape = entry.at("shape").get<nk::Shape>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t n = nk::shape_size(shape);
    if (offset + n > value_count) throw ParseError("tensor '" + entry.at("name").get<std::string>() + "' truncated", data_start + 8 * offset);
    std::vector<double> values(n);
    const unsigned char* p = bytes.data() + data_start + 8 * offset;
    for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
    file.tensors.emplace_back(entry.at("name").get<std::string>(), nk::Array(std::move(shape), std::move(values)));
  }
  return file;
}

TensorFile model_tensors(const Model& model, nlohmann::json meta) {
  TensorFile file;
  file.meta = std::move(meta);
  file.meta["config"] = model.config.to_json();
  for (std::size_t i = 0; i < model.params.size(); ++i) file.tensors.emplace_back(model.params.name(i), model.params.value(i));
  for (const auto& [name, stats] : model.norms) {
    file.tensors.emplace_back(name + ".running_mean", stats.running_mean);
    file.tensors.emplace_back(name + ".running_var", stats.running_var);
  }
  return file;
}

Model model_from_tensors(const TensorFile& file) {
  if (!file.meta.contains("config")) throw ConfigError("checkpoint carries no model configuration");
  Model m = Model::initialize(ModelConfig::from_json(file.meta.at("config")), 0);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const nk::Array& a = file.at(m.params.name(i));
    if (a.shape() != m.params.value(i).shape()) {
      throw ConfigError("checkpoint tensor '" + m.params.name(i) + "' has shape " + nk::shape_string(a.shape()) +
                        ", expected " + nk::shape_string(m.params.value(i).shape()));
    }
    m.params.value(i) = a;
  }
  for (auto& [name, stats] : m.norms) {
    stats.running_mean = file.at(name + ".running_mean");
    stats.running_var = file.at(name + ".running_var");
  }
  return m;
}

void save_model(const std::filesystem::path& path, const Model& model, nlohmann::json meta) {
  write_tensor_file(path, model_tensors(model, std::move(meta)));
}

Model load_model(const std::filesystem::path& path) { return model_from_tensors(read_tensor_file(path)); }

}  // namespace anysleep::model
