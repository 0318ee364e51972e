#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace anysleep::model {

enum class Fusion { Early, Mid, Late };

std::string fusion_name(Fusion f);
Fusion fusion_from_name(const std::string& name);

// Two-layer convolutional feature extractor used by the attention modules of
// the early- and late-fusion variants.
struct ChannelEncoderSpec {
  std::size_t filters = 32;
  std::array<std::size_t, 2> kernels{64, 9};
  std::array<std::size_t, 2> strides{32, 1};
};

struct ModelConfig {
  std::size_t depth = 4;
  // Output filters of each encoder block; the connector uses `connector_filters`.
  std::vector<std::size_t> filters;
  std::size_t connector_filters = 0;
  std::size_t kernel_size = 9;
  // Max-pool factor after each encoder block.
  std::vector<std::size_t> pool_factors;
  Fusion fusion = Fusion::Mid;
  std::size_t heads = 1;
  std::size_t attention_hidden = 40;
  ChannelEncoderSpec channel_encoder;
  std::size_t input_rate_hz = 128;

  // Filter schedule growing by sqrt(2) per block from `base`, pooling by
  // `pool` everywhere. Early fusion gets four heads.
  static ModelConfig make(std::size_t depth, std::size_t base_filters, Fusion fusion = Fusion::Mid,
                          std::size_t pool = 2, std::size_t kernel = 9);
  // Small configuration trained in the test-suite and by default in the CLI.
  static ModelConfig desk(Fusion fusion = Fusion::Mid);

  // Throws ConfigError on an inconsistent configuration.
  void validate() const;

  // Number of attention modules the configuration instantiates.
  std::size_t attention_modules() const;
  // Every input length must be a multiple of this many samples.
  std::size_t required_multiple() const;
  // Upper bound, in input samples, on how far from an output sample the
  // convolution and pooling path reaches on either side. Attention weights
  // depend on whole-input means and are not covered.
  std::size_t receptive_radius() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  // Stable 64-bit digest of the serialized configuration.
  std::uint64_t hash() const;
};

// Output resolutions (predictions per 30-s epoch) the classifier supports.
inline constexpr std::array<std::size_t, 14> kResolutions{1,   2,   4,   8,   16,   32,   64,
                                                          128, 256, 384, 640, 960, 1920, 3840};
bool is_supported_resolution(std::size_t r);
// Throws ConfigError for anything outside kResolutions.
void require_resolution(std::size_t r);

}  // namespace anysleep::model
