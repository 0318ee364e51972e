#include "anysleep/model/network.hpp"

#include <cmath>

#include "anysleep/core/errors.hpp"
#include "anysleep/core/rng.hpp"
#include "anysleep/core/stage.hpp"

namespace anysleep::model {

using nk::Array;
using nk::Var;

namespace {

using Kind = ParameterSpec::Kind;

class LayoutBuilder {
 public:
  void conv(const std::string& prefix, std::size_t cout, std::size_t cin, std::size_t k, int module = -1) {
    specs_.push_back({prefix + ".w", {cout, cin, k}, cin * k, Kind::Weight, module});
    specs_.push_back({prefix + ".b", {cout}, cin * k, Kind::Bias, module});
  }
  void dense(const std::string& prefix, std::size_t out, std::size_t in, int module) {
    specs_.push_back({prefix + ".w", {out, in}, in, Kind::Weight, module});
    specs_.push_back({prefix + ".b", {out}, in, Kind::Bias, module});
  }
  void norm(const std::string& prefix, std::size_t features, int module = -1) {
    specs_.push_back({prefix + ".gamma", {features}, 1, Kind::Gamma, module});
    specs_.push_back({prefix + ".beta", {features}, 1, Kind::Beta, module});
    norms_.emplace_back(prefix, features);
  }

  std::vector<ParameterSpec> specs_;
  std::vector<std::pair<std::string, std::size_t>> norms_;
};

void declare_backbone(LayoutBuilder& b, const ModelConfig& c, std::size_t input_channels) {
  std::size_t cin = input_channels;
  for (std::size_t i = 0; i < c.depth; ++i) {
    const std::string p = "enc" + std::to_string(i);
    b.conv(p + ".conv", c.filters[i], cin, c.kernel_size);
    b.norm(p + ".bn", c.filters[i]);
    cin = c.filters[i];
  }
  b.conv("conn.conv", c.connector_filters, cin, c.kernel_size);
  b.norm("conn.bn", c.connector_filters);
  for (std::size_t i = c.depth; i-- > 0;) {
    const std::string p = "dec" + std::to_string(i);
    const std::size_t below = i + 1 == c.depth ? c.connector_filters : c.filters[i + 1];
    b.conv(p + ".up.conv", c.filters[i], below, c.kernel_size);
    b.norm(p + ".up.bn", c.filters[i]);
    b.conv(p + ".merge.conv", c.filters[i], 2 * c.filters[i], c.kernel_size);
    b.norm(p + ".merge.bn", c.filters[i]);
  }
  b.conv("cls.hidden.conv", c.filters[0], c.filters[0], 1);
  b.conv("cls.out.conv", kNumStages, c.filters[0], 1);
}

void declare_attention(LayoutBuilder& b, const ModelConfig& c, int module, std::size_t features,
                       std::size_t encoder_input) {
  const std::string p = "att" + std::to_string(module);
  std::size_t mlp_in = features;
  if (encoder_input != 0) {
    const auto& ce = c.channel_encoder;
    b.conv(p + ".chenc.conv1", ce.filters, encoder_input, ce.kernels[0], module);
    b.norm(p + ".chenc.bn", ce.filters, module);
    b.conv(p + ".chenc.conv2", ce.filters, ce.filters, ce.kernels[1], module);
    mlp_in = ce.filters;
  }
  b.dense(p + ".mlp.fc1", c.attention_hidden, mlp_in, module);
  b.norm(p + ".mlp.bn", c.attention_hidden, module);
  b.dense(p + ".mlp.fc2", 1, c.attention_hidden, module);
}

LayoutBuilder build_layout(const ModelConfig& c) {
  c.validate();
  LayoutBuilder b;
  switch (c.fusion) {
    case Fusion::Mid:
      declare_backbone(b, c, 1);
      for (std::size_t j = 0; j < c.depth; ++j) declare_attention(b, c, static_cast<int>(j), c.filters[j], 0);
      declare_attention(b, c, static_cast<int>(c.depth), c.connector_filters, 0);
      break;
    case Fusion::Early:
      declare_backbone(b, c, c.heads);
      for (std::size_t h = 0; h < c.heads; ++h) declare_attention(b, c, static_cast<int>(h), 0, 1);
      break;
    case Fusion::Late:
      declare_backbone(b, c, 1);
      declare_attention(b, c, 0, 0, c.filters[0]);
      break;
  }
  return b;
}

std::vector<Var> unary(const std::vector<Var>& xs, Var (*fn)(const Var&)) {
  std::vector<Var> out;
  out.reserve(xs.size());
  for (const Var& x : xs) out.push_back(fn(x));
  return out;
}

}  // namespace

FusedChannels fuse_channels(const nk::Binding& params, const std::string& prefix, nk::BatchNormStats& stats,
                            bool update_stats, std::span<const Var> maps, std::span<const Var> features) {
  if (maps.empty()) throw DimensionError("attention: no channels to fuse");
  if (features.size() != maps.size()) throw DimensionError("attention: one scoring map per channel required");
  const std::string p = prefix + ".mlp";
  std::vector<Var> means;
  means.reserve(features.size());
  for (const Var& f : features) means.push_back(nk::time_mean(f));
  const Var stacked = nk::stack_columns(means);  // [F, C]
  Var hidden = nk::linear(params[p + ".fc1.w"], stacked, params[p + ".fc1.b"]);  // [H, C]
  // Statistics over the channel axis; a lone channel falls back to the running estimates.
  if (maps.size() >= 2) {
    hidden = nk::batch_norm(hidden, params[p + ".bn.gamma"], params[p + ".bn.beta"], nk::NormMode::Train,
                            update_stats ? &stats : nullptr);
  } else {
    hidden = nk::batch_norm(hidden, params[p + ".bn.gamma"], params[p + ".bn.beta"], nk::NormMode::Eval, &stats);
  }
  const Var scores = nk::linear(params[p + ".fc2.w"], nk::relu(hidden), params[p + ".fc2.b"]);  // [1, C]
  const Var weights = nk::softmax(scores);
  return {nk::weighted_sum(maps, weights), weights};
}

namespace {

// One forward pass over a batch. Feature maps of all channels of all samples
// travel together so that every normalization layer sees the whole batch.
class Pass {
 public:
  using Maps = std::vector<Var>;

  Pass(const ModelConfig& config, const nk::Binding& params, std::map<std::string, nk::BatchNormStats>& norms,
       const PassOptions& options)
      : c_(config), p_(params), norms_(norms), opt_(options) {}

  std::vector<SampleOutput> run(std::span<const Array> inputs, std::size_t resolution) {
    require_resolution(resolution);
    if (inputs.empty()) throw DimensionError("forward: empty batch");
    const std::size_t multiple = c_.required_multiple();
    offsets_.assign(1, 0);
    Maps raw;
    for (const Array& x : inputs) {
      if (x.rank() != 2 || x.dim(0) == 0) throw DimensionError("forward: input has no channels");
      const std::size_t t = x.dim(1);
      if (t == 0 || t % multiple != 0) {
        throw AlignmentError("forward: input length " + std::to_string(t) + " is not a positive multiple of " +
                                 std::to_string(multiple) + " samples",
                             multiple);
      }
      for (std::size_t ch = 0; ch < x.dim(0); ++ch) {
        const auto row = x.row(ch);
        raw.push_back(nk::leaf(Array({1, t}, std::vector<double>(row.begin(), row.end()))));
      }
      offsets_.push_back(raw.size());
    }
    attention_.assign(inputs.size(), {});

    Maps decoded;
    switch (c_.fusion) {
      case Fusion::Mid: decoded = mid(raw); break;
      case Fusion::Early: decoded = early(raw); break;
      case Fusion::Late: decoded = late(raw); break;
    }

    std::vector<SampleOutput> out;
    const std::size_t window = kSamplesPerEpoch / resolution;
    for (std::size_t s = 0; s < decoded.size(); ++s) {
      const Var hidden = nk::elu(conv1("cls.hidden.conv", decoded[s]));
      const Var full = conv1("cls.out.conv", hidden);
      if (opt_.keep_full_rate_logits) full_rate_.push_back(full.value());
      const Var logits = nk::transpose(nk::pool_avg(full, window, window));
      out.push_back({nk::softmax_rows(logits), logits, std::move(attention_[s])});
    }
    return out;
  }

  std::vector<Array> full_rate_;

 private:
  std::size_t samples() const { return offsets_.size() - 1; }

  Var conv1(const std::string& prefix, const Var& x, std::size_t stride = 1,
            nk::Padding pad = nk::Padding::Same) const {
    return nk::conv1d(x, p_[prefix + ".w"], p_[prefix + ".b"], stride, pad);
  }

  Maps conv(const std::string& prefix, const Maps& xs, std::size_t stride = 1,
            nk::Padding pad = nk::Padding::Same) const {
    Maps out;
    out.reserve(xs.size());
    for (const Var& x : xs) out.push_back(conv1(prefix, x, stride, pad));
    return out;
  }

  Maps norm(const std::string& prefix, const Maps& xs) {
    nk::BatchNormStats& stats = norms_.at(prefix);
    const bool train = opt_.mode == nk::NormMode::Train;
    return nk::batch_norm(xs, p_[prefix + ".gamma"], p_[prefix + ".beta"], opt_.mode,
                          train ? (opt_.update_running_stats ? &stats : nullptr) : &stats);
  }

  Maps block(const std::string& prefix, const Maps& xs) {
    return unary(norm(prefix + ".bn", conv(prefix + ".conv", xs)), nk::elu);
  }

  static Maps pool(const Maps& xs, std::size_t factor) {
    Maps out;
    out.reserve(xs.size());
    for (const Var& x : xs) out.push_back(nk::pool_max(x, factor));
    return out;
  }

  static Maps upsample(const Maps& xs, std::size_t factor) {
    Maps out;
    out.reserve(xs.size());
    for (const Var& x : xs) out.push_back(nk::upsample_nn(x, factor));
    return out;
  }

  // Encoder blocks; fills `skips` with the pre-pool output of every block.
  Maps encode(Maps x, std::vector<Maps>& skips) {
    skips.clear();
    for (std::size_t i = 0; i < c_.depth; ++i) {
      x = block("enc" + std::to_string(i), x);
      skips.push_back(x);
      x = pool(x, c_.pool_factors[i]);
    }
    return block("conn", x);
  }

  Maps decode(Maps x, const std::vector<Maps>& skips) {
    for (std::size_t i = c_.depth; i-- > 0;) {
      const std::string p = "dec" + std::to_string(i);
      const Maps up = block(p + ".up", upsample(x, c_.pool_factors[i]));
      Maps merged;
      merged.reserve(up.size());
      for (std::size_t k = 0; k < up.size(); ++k) {
        const Var pair[] = {up[k], skips[i][k]};
        merged.push_back(nk::concat_features(pair));
      }
      x = block(p + ".merge", merged);
    }
    return x;
  }

  Maps channel_encoder(const std::string& prefix, const Maps& xs) {
    const auto& ce = c_.channel_encoder;
    Maps h = unary(conv(prefix + ".conv1", xs, ce.strides[0], nk::Padding::Valid), nk::elu);
    h = norm(prefix + ".bn", h);
    return conv(prefix + ".conv2", h, ce.strides[1], nk::Padding::Same);
  }

  Var attend(std::size_t module, std::size_t sample, std::span<const Var> maps, std::span<const Var> features) {
    const std::string prefix = "att" + std::to_string(module);
    const bool update = opt_.mode == nk::NormMode::Train && opt_.update_running_stats;
    FusedChannels f = fuse_channels(p_, prefix, norms_.at(prefix + ".mlp.bn"), update, maps, features);
    attention_[sample].push_back(f.weights.value().reshaped({maps.size()}));
    return f.fused;
  }

  std::span<const Var> slice(const Maps& xs, std::size_t s) const {
    return std::span<const Var>(xs).subspan(offsets_[s], offsets_[s + 1] - offsets_[s]);
  }

  Maps fuse(std::size_t module, const Maps& maps, const Maps& features) {
    Maps out;
    out.reserve(samples());
    for (std::size_t s = 0; s < samples(); ++s) out.push_back(attend(module, s, slice(maps, s), slice(features, s)));
    return out;
  }

  Maps mid(const Maps& raw) {
    std::vector<Maps> skips;
    const Maps bottom = encode(raw, skips);
    std::vector<Maps> fused_skips;
    for (std::size_t j = 0; j < c_.depth; ++j) fused_skips.push_back(fuse(j, skips[j], skips[j]));
    skips.clear();
    return decode(fuse(c_.depth, bottom, bottom), fused_skips);
  }

  Maps early(const Maps& raw) {
    std::vector<Maps> heads;
    for (std::size_t h = 0; h < c_.heads; ++h) {
      const Maps features = channel_encoder("att" + std::to_string(h) + ".chenc", raw);
      heads.push_back(fuse(h, raw, features));
    }
    Maps virtual_channels;
    for (std::size_t s = 0; s < samples(); ++s) {
      Maps per_head;
      for (const Maps& h : heads) per_head.push_back(h[s]);
      virtual_channels.push_back(nk::concat_features(per_head));
    }
    std::vector<Maps> skips;
    const Maps bottom = encode(virtual_channels, skips);
    return decode(bottom, skips);
  }

  Maps late(const Maps& raw) {
    std::vector<Maps> skips;
    const Maps bottom = encode(raw, skips);
    const Maps decoded = decode(bottom, skips);
    skips.clear();
    const Maps features = channel_encoder("att0.chenc", decoded);
    return fuse(0, decoded, features);
  }

  const ModelConfig& c_;
  const nk::Binding& p_;
  std::map<std::string, nk::BatchNormStats>& norms_;
  PassOptions opt_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<Array>> attention_;
};

}  // namespace

std::vector<ParameterSpec> parameter_layout(const ModelConfig& config) { return build_layout(config).specs_; }

std::vector<std::pair<std::string, std::size_t>> norm_layout(const ModelConfig& config) {
  return build_layout(config).norms_;
}

std::size_t count_parameters(const ModelConfig& config) {
  std::size_t n = 0;
  for (const ParameterSpec& s : parameter_layout(config)) n += nk::shape_size(s.shape);
  return n;
}

std::size_t count_backbone_parameters(const ModelConfig& config) {
  std::size_t n = 0;
  for (const ParameterSpec& s : parameter_layout(config)) {
    if (s.attention_module < 0) n += nk::shape_size(s.shape);
  }
  return n;
}

Model Model::initialize(const ModelConfig& config, std::uint64_t seed) {
  Model m;
  m.config = config;
  Rng rng = Rng::stream(seed, "init");
  const LayoutBuilder layout = build_layout(config);
  for (const ParameterSpec& s : layout.specs_) {
    Array a(s.shape);
    const double fan = static_cast<double>(s.fan_in);
    switch (s.kind) {
      case Kind::Weight: {
        const double limit = std::sqrt(3.0 / fan);
        for (double& v : a.values()) v = rng.uniform(-limit, limit);
        break;
      }
      case Kind::Bias: {
        const double limit = 1.0 / std::sqrt(fan);
        for (double& v : a.values()) v = rng.uniform(-limit, limit);
        break;
      }
      case Kind::Gamma: a.fill(1.0); break;
      case Kind::Beta: break;
    }
    m.params.add(s.name, std::move(a));
  }
  for (const auto& [name, features] : layout.norms_) m.norms.emplace(name, nk::BatchNormStats::identity(features));
  return m;
}

std::vector<SampleOutput> forward_batch(Model& model, const nk::Binding& params, std::span<const Array> inputs,
                                        std::size_t resolution, const PassOptions& options) {
  Pass pass(model.config, params, model.norms, options);
  return pass.run(inputs, resolution);
}

Prediction predict(const Model& model, const Array& channels, std::size_t resolution, bool keep_full_rate_logits) {
  nk::NoGradGuard no_grad;
  auto norms = model.norms;
  const nk::Binding frozen = nk::Binding::frozen(model.params);
  PassOptions options;
  options.keep_full_rate_logits = keep_full_rate_logits;
  Pass pass(model.config, frozen, norms, options);
  auto out = pass.run(std::span<const Array>(&channels, 1), resolution);
  Prediction p;
  p.resolution = resolution;
  p.probabilities = out[0].probabilities.value();
  p.attention = std::move(out[0].attention);
  if (keep_full_rate_logits) p.full_rate_logits = std::move(pass.full_rate_[0]);
  return p;
}

AttentionFusion attention_fuse(const Model& model, std::size_t module, std::span<const Array> maps) {
  if (module >= model.config.attention_modules()) throw ConfigError("attention module index out of range");
  if (model.config.fusion != Fusion::Mid) throw ConfigError("standalone fusion needs a mid-fusion module");
  nk::NoGradGuard no_grad;
  const nk::Binding frozen = nk::Binding::frozen(model.params);
  const std::string prefix = "att" + std::to_string(module);
  nk::BatchNormStats stats = model.norms.at(prefix + ".mlp.bn");
  std::vector<Var> vars;
  for (const Array& m : maps) vars.push_back(nk::leaf(m));
  const FusedChannels f = fuse_channels(frozen, prefix, stats, false, vars, vars);
  return {f.fused.value(), f.weights.value().reshaped({maps.size()})};
}

AttentionTrace extract_attention_trace(const Model& model, std::span<const NamedRecording> recordings) {
  AttentionTrace trace;
  if (recordings.empty()) return trace;
  trace.channels = recordings.front().channel_names;
  for (const NamedRecording& rec : recordings) {
    if (rec.channel_names != trace.channels) {
      throw TraceError("attention trace: recordings do not share the same ordered channel set");
    }
    if (rec.signals.rank() != 2 || rec.signals.dim(0) != trace.channels.size()) {
      throw TraceError("attention trace: signal rows do not match the channel names");
    }
  }
  const std::size_t modules = model.config.attention_modules();
  trace.weights.assign(modules, std::vector<double>(trace.channels.size(), 0.0));
  for (const NamedRecording& rec : recordings) {
    const Prediction p = predict(model, rec.signals, 1);
    for (std::size_t j = 0; j < modules; ++j) {
      for (std::size_t ch = 0; ch < trace.channels.size(); ++ch) trace.weights[j][ch] += p.attention[j][ch];
    }
    ++trace.recordings;
  }
  for (auto& row : trace.weights) {
    for (double& w : row) w /= static_cast<double>(trace.recordings);
  }
  return trace;
}

}  // namespace anysleep::model
