#include "anysleep/model/config.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "anysleep/core/errors.hpp"
#include "anysleep/core/stage.hpp"

namespace anysleep::model {

std::string fusion_name(Fusion f) {
  switch (f) {
    case Fusion::Early: return "early";
    case Fusion::Mid: return "mid";
    case Fusion::Late: return "late";
  }
  return "mid";
}

Fusion fusion_from_name(const std::string& name) {
  if (name == "early") return Fusion::Early;
  if (name == "mid") return Fusion::Mid;
  if (name == "late") return Fusion::Late;
  throw ConfigError("unknown fusion placement '" + name + "' (expected early, mid or late)");
}

ModelConfig ModelConfig::make(std::size_t depth, std::size_t base_filters, Fusion fusion, std::size_t pool,
                              std::size_t kernel) {
  ModelConfig c;
  c.depth = depth;
  c.kernel_size = kernel;
  c.fusion = fusion;
  c.heads = fusion == Fusion::Early ? 4 : 1;
  c.filters.clear();
  for (std::size_t i = 0; i < depth; ++i) {
    c.filters.push_back(static_cast<std::size_t>(std::lround(static_cast<double>(base_filters) * std::pow(std::sqrt(2.0), i))));
  }
  c.connector_filters =
      static_cast<std::size_t>(std::lround(static_cast<double>(base_filters) * std::pow(std::sqrt(2.0), depth)));
  c.pool_factors.assign(depth, pool);
  return c;
}

ModelConfig ModelConfig::desk(Fusion fusion) { return make(4, 8, fusion, 4, 9); }

void ModelConfig::validate() const {
  if (depth < 1) throw ConfigError("model depth must be >= 1");
  if (filters.size() != depth) throw ConfigError("filters schedule must list one entry per encoder block");
  if (pool_factors.size() != depth) throw ConfigError("pool factors must list one entry per encoder block");
  if (connector_filters == 0 || std::count(filters.begin(), filters.end(), 0u) != 0) {
    throw ConfigError("filter counts must be positive");
  }
  if (std::count(pool_factors.begin(), pool_factors.end(), 0u) != 0) throw ConfigError("pool factors must be >= 1");
  if (kernel_size == 0) throw ConfigError("kernel size must be >= 1");
  if (heads < 1) throw ConfigError("attention needs at least one head");
  if (fusion != Fusion::Early && heads != 1) throw ConfigError("only early fusion supports multiple heads");
  if (attention_hidden == 0) throw ConfigError("attention hidden width must be positive");
  if (channel_encoder.filters == 0 || channel_encoder.kernels[0] == 0 || channel_encoder.kernels[1] == 0 ||
      channel_encoder.strides[0] == 0 || channel_encoder.strides[1] == 0) {
    throw ConfigError("channel encoder sizes must be positive");
  }
  if (input_rate_hz != kModelRateHz) throw ConfigError("model input rate must be 128 Hz");
  if (fusion == Fusion::Mid && attention_modules() != depth + 1) {
    throw ConfigError("mid fusion requires depth + 1 attention modules");
  }
}

std::size_t ModelConfig::attention_modules() const {
  switch (fusion) {
    case Fusion::Mid: return depth + 1;
    case Fusion::Early: return heads;
    case Fusion::Late: return 1;
  }
  return 0;
}

std::size_t ModelConfig::required_multiple() const {
  std::size_t pooled = 1;
  for (std::size_t p : pool_factors) pooled *= p;
  return std::lcm(kSamplesPerEpoch, pooled);
}

std::size_t ModelConfig::receptive_radius() const {
  const std::size_t reach = kernel_size - 1;
  std::size_t scale = 1, radius = 0;
  for (std::size_t i = 0; i < depth; ++i) {
    radius += (reach + pool_factors[i]) * scale;
    scale *= pool_factors[i];
  }
  radius += reach * scale;  // connector
  for (std::size_t i = depth; i-- > 0;) {
    scale /= pool_factors[i];
    radius += (pool_factors[i] + 2 * reach) * scale;  // upsample, then two convolutions
  }
  return radius;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"depth", depth},
          {"filters", filters},
          {"connector_filters", connector_filters},
          {"kernel_size", kernel_size},
          {"pool_factors", pool_factors},
          {"fusion", fusion_name(fusion)},
          {"heads", heads},
          {"attention_hidden", attention_hidden},
          {"channel_encoder",
           {{"filters", channel_encoder.filters},
            {"kernels", channel_encoder.kernels},
            {"strides", channel_encoder.strides}}},
          {"input_rate_hz", input_rate_hz}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    if (j.contains("base_filters")) {
      // Shorthand: {"depth": 4, "base_filters": 8, "pool": 4, "fusion": "mid"}.
      c = make(j.at("depth").get<std::size_t>(), j.at("base_filters").get<std::size_t>(),
               fusion_from_name(j.value("fusion", std::string("mid"))), j.value("pool", std::size_t{2}),
               j.value("kernel_size", std::size_t{9}));
      c.attention_hidden = j.value("attention_hidden", c.attention_hidden);
      c.validate();
      return c;
    }
    c.depth = j.at("depth").get<std::size_t>();
    c.filters = j.at("filters").get<std::vector<std::size_t>>();
    c.connector_filters = j.at("connector_filters").get<std::size_t>();
    c.kernel_size = j.at("kernel_size").get<std::size_t>();
    c.pool_factors = j.at("pool_factors").get<std::vector<std::size_t>>();
    c.fusion = fusion_from_name(j.at("fusion").get<std::string>());
    c.heads = j.at("heads").get<std::size_t>();
    c.attention_hidden = j.at("attention_hidden").get<std::size_t>();
    const auto& ce = j.at("channel_encoder");
    c.channel_encoder.filters = ce.at("filters").get<std::size_t>();
    c.channel_encoder.kernels = ce.at("kernels").get<std::array<std::size_t, 2>>();
    c.channel_encoder.strides = ce.at("strides").get<std::array<std::size_t, 2>>();
    c.input_rate_hz = j.value("input_rate_hz", std::size_t{128});
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
}

std::uint64_t ModelConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool is_supported_resolution(std::size_t r) {
  return std::find(kResolutions.begin(), kResolutions.end(), r) != kResolutions.end();
}

void require_resolution(std::size_t r) {
  if (!is_supported_resolution(r)) {
    throw ConfigError("unsupported resolution " + std::to_string(r) +
                      " (expected one of 1,2,4,8,16,32,64,128,256,384,640,960,1920,3840 per epoch)");
  }
}

}  // namespace anysleep::model
