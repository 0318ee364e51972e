#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "anysleep/core/errors.hpp"
#include "anysleep/core/rng.hpp"
#include "anysleep/model/checkpoint.hpp"
#include "anysleep/model/network.hpp"
#include "anysleep/numkernel/gradcheck.hpp"

using namespace anysleep;
using namespace anysleep::model;
using nk::Array;

namespace {

Array random_signal(Rng& rng, std::size_t channels, std::size_t epochs) {
  Array a({channels, epochs * 3840});
  for (double& v : a.values()) v = rng.normal();
  return a;
}

Array rows_of(const Array& x, const std::vector<std::size_t>& order) {
  const std::size_t t = x.dim(1);
  Array out({order.size(), t});
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = 0; j < t; ++j) out.at(i, j) = x.at(order[i], j);
  }
  return out;
}

double max_rel_diff(const Array& a, const Array& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

// Parameter count recomputed from the block structure.
std::size_t conv_params(std::size_t cout, std::size_t cin, std::size_t k) { return cout * cin * k + cout; }
std::size_t mlp_params(std::size_t f, std::size_t hidden) { return f * hidden + hidden + hidden + 1 + 2 * hidden; }

std::size_t backbone_oracle(const ModelConfig& c, std::size_t cin) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.depth; ++i) {
    n += conv_params(c.filters[i], i == 0 ? cin : c.filters[i - 1], c.kernel_size) + 2 * c.filters[i];
    const std::size_t below = i + 1 == c.depth ? c.connector_filters : c.filters[i + 1];
    n += conv_params(c.filters[i], below, c.kernel_size) + 2 * c.filters[i];
    n += conv_params(c.filters[i], 2 * c.filters[i], c.kernel_size) + 2 * c.filters[i];
  }
  n += conv_params(c.connector_filters, c.filters.back(), c.kernel_size) + 2 * c.connector_filters;
  n += conv_params(c.filters[0], c.filters[0], 1) + conv_params(5, c.filters[0], 1);
  return n;
}

}  // namespace

TEST(ModelConfig, DeskSchedule) {
  const ModelConfig c = ModelConfig::desk();
  EXPECT_EQ(c.filters, (std::vector<std::size_t>{8, 11, 16, 23}));
  EXPECT_EQ(c.connector_filters, 32u);
  EXPECT_EQ(c.attention_modules(), 5u);
  EXPECT_EQ(c.required_multiple(), 3840u);
  EXPECT_EQ(ModelConfig::make(12, 8).required_multiple(), 61440u);
  EXPECT_EQ(ModelConfig::desk(Fusion::Early).heads, 4u);
}

TEST(ModelConfig, JsonRoundTripAndHash) {
  const ModelConfig c = ModelConfig::desk(Fusion::Late);
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_NE(ModelConfig::desk(Fusion::Mid).hash(), c.hash());
}

TEST(ModelConfig, InvalidConfigsAreRejected) {
  ModelConfig c = ModelConfig::desk();
  c.depth = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::desk();
  c.heads = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::desk();
  c.pool_factors.pop_back();
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(fusion_from_name("middle"), ConfigError);
}

TEST(ParameterCount, AttentionMlpOnEightFeatures) {
  const ModelConfig c = ModelConfig::desk();
  std::size_t att0 = 0;
  for (const ParameterSpec& s : parameter_layout(c)) {
    if (s.attention_module == 0) att0 += nk::shape_size(s.shape);
  }
  EXPECT_EQ(att0, 481u);
  EXPECT_EQ(mlp_params(8, 40), 481u);
}

TEST(ParameterCount, MatchesBlockStructure) {
  for (std::size_t depth : {1u, 2u, 4u, 12u}) {
    const ModelConfig mid = ModelConfig::make(depth, 8, Fusion::Mid);
    std::size_t attention = mlp_params(mid.connector_filters, 40);
    for (std::size_t f : mid.filters) attention += mlp_params(f, 40);
    EXPECT_EQ(count_backbone_parameters(mid), backbone_oracle(mid, 1));
    EXPECT_EQ(count_parameters(mid), backbone_oracle(mid, 1) + attention);
    EXPECT_EQ(count_parameters(mid) - attention, count_backbone_parameters(mid));

    const ModelConfig early = ModelConfig::make(depth, 8, Fusion::Early);
    const std::size_t enc_early = conv_params(32, 1, 64) + 64 + conv_params(32, 32, 9);
    EXPECT_EQ(count_parameters(early), backbone_oracle(early, 4) + 4 * (enc_early + mlp_params(32, 40)));

    const ModelConfig late = ModelConfig::make(depth, 8, Fusion::Late);
    const std::size_t enc_late = conv_params(32, 8, 64) + 64 + conv_params(32, 32, 9);
    EXPECT_EQ(count_parameters(late), backbone_oracle(late, 1) + enc_late + mlp_params(32, 40));
  }
}

TEST(ParameterCount, InitializedModelMatchesLayout) {
  for (Fusion f : {Fusion::Early, Fusion::Mid, Fusion::Late}) {
    const Model m = Model::initialize(ModelConfig::desk(f), 3);
    EXPECT_EQ(m.params.scalar_count(), count_parameters(m.config));
  }
  const Model early = Model::initialize(ModelConfig::desk(Fusion::Early), 3);
  EXPECT_EQ(early.params.at("enc0.conv.w").shape(), (nk::Shape{8, 4, 9}));
}

TEST(ParameterInit, SeededAndBounded) {
  const Model a = Model::initialize(ModelConfig::desk(), 7);
  const Model b = Model::initialize(ModelConfig::desk(), 7);
  const Model c = Model::initialize(ModelConfig::desk(), 8);
  EXPECT_EQ(nk::max_abs_diff(a.params.at("dec1.merge.conv.w"), b.params.at("dec1.merge.conv.w")), 0.0);
  EXPECT_GT(nk::max_abs_diff(a.params.at("dec1.merge.conv.w"), c.params.at("dec1.merge.conv.w")), 0.0);
  const double limit = std::sqrt(3.0 / (22.0 * 9.0));
  for (double v : a.params.at("dec1.merge.conv.w").values()) EXPECT_LE(std::abs(v), limit);
  for (double v : a.params.at("enc2.bn.gamma").values()) EXPECT_EQ(v, 1.0);
}

TEST(Forward, ShapesAndNormalization) {
  Rng rng(1);
  const Model m = Model::initialize(ModelConfig::desk(), 1);
  const Prediction one = predict(m, random_signal(rng, 2, 1), 1);
  EXPECT_EQ(one.probabilities.shape(), (nk::Shape{1, 5}));
  const Prediction hi = predict(m, random_signal(rng, 2, 2), 128);
  EXPECT_EQ(hi.probabilities.shape(), (nk::Shape{256, 5}));
  for (std::size_t r = 0; r < 256; ++r) {
    const auto row = hi.probabilities.row(r);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Forward, EveryResolutionAndVariant) {
  Rng rng(2);
  for (Fusion f : {Fusion::Early, Fusion::Mid, Fusion::Late}) {
    const Model m = Model::initialize(ModelConfig::desk(f), 5);
    const Array x = random_signal(rng, 3, 1);
    for (std::size_t r : kResolutions) {
      const Prediction p = predict(m, x, r);
      ASSERT_EQ(p.probabilities.dim(0), r);
      for (std::size_t i = 0; i < r; ++i) {
        const auto row = p.probabilities.row(i);
        EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-6);
      }
      ASSERT_EQ(p.attention.size(), m.config.attention_modules());
      for (const Array& w : p.attention) {
        EXPECT_EQ(w.size(), 3u);
        EXPECT_NEAR(std::accumulate(w.values().begin(), w.values().end(), 0.0), 1.0, 1e-12);
      }
    }
  }
}

TEST(Forward, RejectsBadResolutionAndAlignment) {
  Rng rng(3);
  const Model m = Model::initialize(ModelConfig::desk(), 1);
  EXPECT_THROW(predict(m, random_signal(rng, 1, 1), 3), ConfigError);
  EXPECT_THROW(predict(m, Array({1, 3000}, 0.0), 1), AlignmentError);
  try {
    predict(m, Array({1, 5000}, 0.0), 1);
  } catch (const AlignmentError& e) {
    EXPECT_EQ(e.required_multiple(), 3840u);
  }
  EXPECT_THROW(predict(m, Array({0, 3840}), 1), DimensionError);
}

TEST(Forward, ResolutionOnePoolsFullRateLogits) {
  Rng rng(4);
  const Model m = Model::initialize(ModelConfig::desk(), 2);
  const Array x = random_signal(rng, 2, 2);
  const Prediction p = predict(m, x, 1, true);
  ASSERT_EQ(p.full_rate_logits.shape(), (nk::Shape{5, 7680}));
  for (std::size_t e = 0; e < 2; ++e) {
    std::array<double, 5> z{};
    for (std::size_t k = 0; k < 5; ++k) {
      for (std::size_t t = 0; t < 3840; ++t) z[k] += p.full_rate_logits.at(k, e * 3840 + t);
      z[k] /= 3840.0;
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (double& v : z) s += (v = std::exp(v - mx));
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(p.probabilities.at(e, k), z[k] / s, 1e-12);
  }
}

TEST(Forward, MidFusionChannelPermutationInvariance) {
  Rng rng(5);
  const Model m = Model::initialize(ModelConfig::desk(), 9);
  const Array x = random_signal(rng, 4, 1);
  const Prediction a = predict(m, x, 32);
  const Prediction b = predict(m, rows_of(x, {2, 0, 3, 1}), 32);
  EXPECT_LT(max_rel_diff(b.probabilities, a.probabilities), 1e-9);
}

TEST(Forward, MidFusionFullReplicationInvariance) {
  Rng rng(6);
  const Model m = Model::initialize(ModelConfig::desk(), 10);
  for (std::size_t c : {1u, 3u}) {
    const Array x = random_signal(rng, c, 1);
    std::vector<std::size_t> twice;
    for (std::size_t rep = 0; rep < 2; ++rep) {
      for (std::size_t i = 0; i < c; ++i) twice.push_back(i);
    }
    const Prediction a = predict(m, x, 8);
    const Prediction b = predict(m, rows_of(x, twice), 8);
    EXPECT_LT(max_rel_diff(b.probabilities, a.probabilities), 1e-9);
  }
}

TEST(Attention, SingleAndDuplicatedChannels) {
  Rng rng(7);
  const Model m = Model::initialize(ModelConfig::desk(), 11);
  Array map({8, 40});
  for (double& v : map.values()) v = rng.normal();
  const Array single[] = {map};
  const AttentionFusion one = attention_fuse(m, 0, single);
  EXPECT_EQ(one.weights[0], 1.0);
  EXPECT_EQ(nk::max_abs_diff(one.fused, map), 0.0);

  const Array pair[] = {map, map};
  const AttentionFusion two = attention_fuse(m, 0, pair);
  EXPECT_NEAR(two.weights[0], 0.5, 1e-15);
  EXPECT_NEAR(two.weights[1], 0.5, 1e-15);
  EXPECT_LT(nk::max_abs_diff(two.fused, map), 1e-15);
  EXPECT_THROW(attention_fuse(m, 0, std::span<const Array>()), DimensionError);
}

TEST(Attention, FusedMapIsConvexCombination) {
  Rng rng(8);
  const Model m = Model::initialize(ModelConfig::desk(), 12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Array> maps;
    const std::size_t c = 2 + rng.below(4);
    for (std::size_t i = 0; i < c; ++i) {
      Array a({11, 16});
      for (double& v : a.values()) v = 3 * rng.normal();
      maps.push_back(a);
    }
    const AttentionFusion f = attention_fuse(m, 1, maps);
    EXPECT_NEAR(std::accumulate(f.weights.values().begin(), f.weights.values().end(), 0.0), 1.0, 1e-12);
    for (std::size_t k = 0; k < f.fused.size(); ++k) {
      double lo = maps[0][k], hi = maps[0][k];
      for (const Array& a : maps) {
        lo = std::min(lo, a[k]);
        hi = std::max(hi, a[k]);
      }
      EXPECT_GE(f.fused[k], lo - 1e-12);
      EXPECT_LE(f.fused[k], hi + 1e-12);
    }
  }
}

TEST(AttentionTraceTest, SingleChannelAndCopies) {
  Rng rng(9);
  const Model m = Model::initialize(ModelConfig::desk(), 13);
  const NamedRecording single{{"C3"}, random_signal(rng, 1, 1)};
  const AttentionTrace t1 = extract_attention_trace(m, std::span(&single, 1));
  ASSERT_EQ(t1.weights.size(), 5u);
  for (const auto& row : t1.weights) EXPECT_EQ(row[0], 1.0);

  const Array base = random_signal(rng, 1, 1);
  std::vector<NamedRecording> recs;
  for (int r = 0; r < 2; ++r) recs.push_back({{"a", "b", "c"}, rows_of(base, {0, 0, 0})});
  const AttentionTrace t3 = extract_attention_trace(m, recs);
  for (const auto& row : t3.weights) {
    for (double w : row) EXPECT_NEAR(w, 1.0 / 3.0, 1e-9);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-6);
  }
  recs.push_back({{"a", "c", "b"}, random_signal(rng, 3, 1)});
  EXPECT_THROW(extract_attention_trace(m, recs), TraceError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(10);
  Model m = Model::initialize(ModelConfig::desk(Fusion::Early), 14);
  m.norms.at("enc1.bn").running_mean[3] = 0.125;
  const auto path = std::filesystem::temp_directory_path() / "anysleep_ckpt_test.bin";
  save_model(path, m, {{"note", "x"}});
  const Model back = load_model(path);
  EXPECT_EQ(back.config.to_json(), m.config.to_json());
  for (std::size_t i = 0; i < m.params.size(); ++i) EXPECT_EQ(nk::max_abs_diff(back.params.value(i), m.params.value(i)), 0.0);
  EXPECT_EQ(back.norms.at("enc1.bn").running_mean[3], 0.125);
  const Array x = random_signal(rng, 2, 1);
  EXPECT_EQ(nk::max_abs_diff(predict(back, x, 4).probabilities, predict(m, x, 4).probabilities), 0.0);
  EXPECT_EQ(read_tensor_file(path).meta.at("note"), "x");

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v = 9;
    f.write(&v, 1);
  }
  EXPECT_THROW(load_model(path), ConfigError);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOTACHECKPOINTFILE..........";
  }
  EXPECT_THROW(load_model(path), ParseError);
  std::filesystem::remove(path);
}

TEST(GradCheck, TinyModelEndToEnd) {
  ModelConfig c = ModelConfig::make(2, 4, Fusion::Mid);
  Model m = Model::initialize(c, 21);
  Rng rng(22);
  const std::vector<Array> batch = {random_signal(rng, 2, 1), random_signal(rng, 3, 1)};
  using L = std::optional<std::size_t>;
  const std::vector<L> labels = {L{1}, L{3}};
  std::vector<Array> point;
  for (std::size_t i = 0; i < m.params.size(); ++i) point.push_back(m.params.value(i));
  const nk::ScalarFunction f = [&](std::span<const nk::Var> vars) {
    const nk::Binding b = nk::Binding::from_vars(m.params, std::vector<nk::Var>(vars.begin(), vars.end()));
    const auto out = forward_batch(m, b, batch, 1, {.mode = nk::NormMode::Train});
    const nk::Var rows[] = {out[0].probabilities, out[1].probabilities};
    return nk::masked_cross_entropy(nk::concat_features(rows), labels);
  };
  const auto report = nk::grad_check(f, point, 1e-5, {.max_coords_per_input = 4, .seed = 1, .skip_branch_changes = true});
  EXPECT_LT(report.max_rel_error, 1e-4) << m.params.name(report.worst_input) << "[" << report.worst_coord << "] "
                                        << report.analytic_at_worst << " vs " << report.numeric_at_worst;
  EXPECT_GT(report.coords_checked, 10 * report.coords_skipped);
}
