#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "anysleep/model/config.hpp"
#include "anysleep/numkernel/ops.hpp"
#include "anysleep/numkernel/params.hpp"

namespace anysleep::model {

// One learnable array as declared by the architecture.
struct ParameterSpec {
  std::string name;
  nk::Shape shape;
  std::size_t fan_in = 1;
  enum class Kind { Weight, Bias, Gamma, Beta } kind = Kind::Weight;
  // Index of the attention module owning the parameter; -1 for the backbone.
  int attention_module = -1;
};

// Every learnable array of `config` in initialization order.
std::vector<ParameterSpec> parameter_layout(const ModelConfig& config);
// Names of the batch-norm layers whose running statistics are kept.
std::vector<std::pair<std::string, std::size_t>> norm_layout(const ModelConfig& config);

std::size_t count_parameters(const ModelConfig& config);
// Parameters outside the attention modules (and their channel encoders).
std::size_t count_backbone_parameters(const ModelConfig& config);

// A network instance: configuration, learnable arrays and batch-norm running
// statistics keyed by layer name ("enc0.bn", "att3.mlp.bn", ...).
struct Model {
  ModelConfig config;
  nk::ParameterSet params;
  std::map<std::string, nk::BatchNormStats> norms;

  // LeCun-uniform weights, small uniform biases, unit gamma, zero beta.
  static Model initialize(const ModelConfig& config, std::uint64_t seed);
};

// Result of one forward pass over one sample.
struct SampleOutput {
  nk::Var probabilities;  // [epochs * resolution, 5], rows sum to 1
  nk::Var logits;         // pooled pre-softmax scores, same shape
  // Attention weights per module, each of length C. Early fusion reports one
  // vector per head.
  std::vector<nk::Array> attention;
};

struct PassOptions {
  nk::NormMode mode = nk::NormMode::Eval;
  // Fold train-mode statistics into the model's running estimates.
  bool update_running_stats = false;
  // Also return the full-rate classifier map [5, T] (diagnostics).
  bool keep_full_rate_logits = false;
};

// Forward pass over a batch. Each input is one sample [C_s, T_s]; channel
// counts may differ between samples. In train mode every batch-norm layer
// pools its statistics over all samples, channels and time steps that pass
// through it. `params` supplies the graph leaves (trainable or frozen).
std::vector<SampleOutput> forward_batch(Model& model, const nk::Binding& params, std::span<const nk::Array> inputs,
                                        std::size_t resolution, const PassOptions& options = {});

struct Prediction {
  std::size_t resolution = 1;
  nk::Array probabilities;  // [epochs * resolution, 5]
  std::vector<nk::Array> attention;
  nk::Array full_rate_logits;  // [5, T] when requested
};

// Inference on one recording [C, T]: eval-mode normalization, no graph.
Prediction predict(const Model& model, const nk::Array& channels, std::size_t resolution,
                   bool keep_full_rate_logits = false);

struct FusedChannels {
  nk::Var fused;    // [F, T]
  nk::Var weights;  // [1, C], sums to 1
};

// Channel attention of module `prefix` ("att3"): the time-averaged scoring
// maps pass through fc1 -> batch norm over channels -> ReLU -> fc2, a softmax
// across channels gives the weights, and the result is the weighted sum of
// `maps`. Scoring maps are the fused maps themselves for mid fusion and the
// channel-encoder outputs otherwise.
FusedChannels fuse_channels(const nk::Binding& params, const std::string& prefix, nk::BatchNormStats& stats,
                            bool update_stats, std::span<const nk::Var> maps, std::span<const nk::Var> features);

struct AttentionFusion {
  nk::Array fused;    // [F, T]
  nk::Array weights;  // [C]
};

// Applies mid-fusion module `module` of `model` to per-channel maps [F, T].
AttentionFusion attention_fuse(const Model& model, std::size_t module, std::span<const nk::Array> maps);

// Per-module, per-channel mean attention weight over a set of recordings.
struct AttentionTrace {
  std::vector<std::string> channels;
  std::vector<std::vector<double>> weights;  // [module][channel]
  std::size_t recordings = 0;
};

struct NamedRecording {
  std::vector<std::string> channel_names;
  nk::Array signals;  // [C, T]
};

// Throws TraceError when the recordings disagree on channel names or order.
AttentionTrace extract_attention_trace(const Model& model, std::span<const NamedRecording> recordings);

}  // namespace anysleep::model
