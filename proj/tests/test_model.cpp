#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "sigte/encoder.hpp"
#include "sigte/gradcheck.hpp"
#include "sigte/heads.hpp"
#include "sigte/metrics.hpp"

using namespace sigte;

namespace {

SigAttentionConfig small_attention(std::size_t d_model, std::size_t heads, std::size_t d_presig, std::size_t order,
                                   SignatureMode mode = SignatureMode::stream) {
  SigAttentionConfig cfg;
  cfg.d_model = d_model;
  cfg.heads = heads;
  cfg.d_presig = d_presig;
  cfg.sig_order = order;
  cfg.mode = mode;
  return cfg;
}

void zero_out(const Tensor& t) {
  for (double& v : Tensor(t).data()) v = 0.0;
}

void expect_gradcheck(const std::function<Tensor(Tape&)>& fn, std::vector<NamedLeaf> leaves) {
  auto r = check_gradients(fn, std::move(leaves));
  EXPECT_TRUE(r.passed) << "worst " << r.worst_rel_error << " at " << r.worst_leaf << "[" << r.worst_index
                        << "] analytic " << r.analytic << " numeric " << r.numeric;
}

// Zero-initialized biases put the first stream position (whose signature is
// always zero) exactly on a ReLU kink, where finite differences are invalid.
void jitter_biases(const std::vector<Tensor>& params, Rng& rng) {
  for (const auto& p : params)
    if (p.rank() == 1)
      for (double& v : Tensor(p).data()) v += rng.uniform(-0.5, 0.5);
}

std::vector<NamedLeaf> named(const std::vector<Tensor>& params, const std::vector<std::string>& names) {
  std::vector<NamedLeaf> out;
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({names[i], params[i]});
  return out;
}

}  // namespace

TEST(Attention, SinglePositionReturnsValues) {
  Tape tape;
  Rng rng(3);
  Tensor q = oracle::random_tensor({1, 3}, rng), k = oracle::random_tensor({1, 3}, rng);
  Tensor v = oracle::random_tensor({1, 3}, rng);
  EXPECT_EQ(scaled_dot_attention(tape, q, k, v).values(), v.values());
}

TEST(Attention, HandEvaluatedTwoPositions) {
  Tape tape;
  Tensor q = Tensor::matrix(2, 1, {1, 0});
  Tensor k = Tensor::matrix(2, 1, {1, 0});
  Tensor v = Tensor::matrix(2, 1, {2, 4});
  Tensor out = scaled_dot_attention(tape, q, k, v);
  const double e = std::exp(1.0);
  EXPECT_NEAR(out[0], 2.0 * e / (e + 1) + 4.0 / (e + 1), 1e-12);
  EXPECT_NEAR(out[0], 2.5379, 1e-4);
  EXPECT_DOUBLE_EQ(out[1], 3.0);
}

TEST(Attention, EqualKeysAverageValues) {
  Tape tape;
  Rng rng(5);
  Tensor q = oracle::random_tensor({4, 2}, rng);
  Tensor k = Tensor::matrix(4, 2, {1, 2, 1, 2, 1, 2, 1, 2});
  Tensor v = oracle::random_tensor({4, 2}, rng);
  Tensor out = scaled_dot_attention(tape, q, k, v);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < 4; ++r) mean += v.at(r, c) / 4;
    for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(out.at(r, c), mean, 1e-12);
  }
  EXPECT_THROW(scaled_dot_attention(tape, q, Tensor(Shape{3, 2}), v), ContractError);
}

TEST(ReducedSig, SinglePositionIsZeroAndIdentityReduction) {
  Tape tape;
  Rng rng(2);
  Tensor w = oracle::random_tensor({3, 2}, rng);
  Tensor single = reduced_sig(tape, oracle::random_tensor({1, 3}, rng), w, Tensor{}, 2, SignatureMode::pooled);
  for (double v : single.data()) EXPECT_EQ(v, 0.0);

  Tensor x = oracle::random_path(5, 2, rng);
  Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor reduced = reduced_sig(tape, x, eye, Tensor::vector({0, 0}), 3, SignatureMode::stream);
  EXPECT_EQ(reduced.values(), sig::stream_signature(x, 3).values());
}

TEST(ReducedSig, PooledMatchesQuadratureOfMappedPath) {
  Tape tape;
  Rng rng(8);
  Tensor x = oracle::random_tensor({4, 3}, rng);
  Tensor w = oracle::random_tensor({3, 2}, rng);
  Tensor b = oracle::random_tensor({2}, rng);
  Tensor mapped(Shape{4, 2});
  auto m = oracle::naive_matmul(x.values(), w.values(), 4, 3, 2);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 2; ++c) mapped.at(r, c) = m[r * 2 + c] + b[c];
  Tensor out = reduced_sig(tape, x, w, b, 2, SignatureMode::pooled);
  EXPECT_LE(oracle::max_abs_diff(out.data(), oracle::riemann_signature(mapped, 2, 100000)), 1e-3);
}

TEST(ReducedSig, IdentityMapPadsTheReducedPath) {
  Tape tape;
  Rng rng(4);
  Tensor x = oracle::random_tensor({3, 2}, rng);
  Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor stream = reduced_sig(tape, x, eye, Tensor{}, 2, SignatureMode::stream, SignatureMap::identity);
  ASSERT_EQ(stream.shape(), (Shape{3, 6}));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(stream.at(r, 0), x.at(r, 0));
    EXPECT_EQ(stream.at(r, 1), x.at(r, 1));
    for (std::size_t c = 2; c < 6; ++c) EXPECT_EQ(stream.at(r, c), 0.0);
  }
  Tensor pooled = reduced_sig(tape, x, eye, Tensor{}, 2, SignatureMode::pooled, SignatureMap::identity);
  ASSERT_EQ(pooled.shape(), (Shape{6}));
  EXPECT_NEAR(pooled[0], (x.at(0, 0) + x.at(1, 0) + x.at(2, 0)) / 3, 1e-15);
}

TEST(SigAttention, ShapeLawAndSinglePosition) {
  Rng rng(6);
  auto cfg = small_attention(4, 1, 3, 2);
  auto head = HeadParams::init(cfg, rng);
  Tape tape;
  Tensor x = oracle::random_tensor({5, 4}, rng);
  Tensor out = sig_attention(tape, matmul(tape, x, head.wq), matmul(tape, x, head.wk), matmul(tape, x, head.wv),
                             head, cfg);
  EXPECT_EQ(out.shape(), (Shape{5, sig::sig_dim(3, 2)}));
  Tensor one = oracle::random_tensor({1, 4}, rng);
  Tensor single = sig_attention(tape, matmul(tape, one, head.wq), matmul(tape, one, head.wk),
                                matmul(tape, one, head.wv), head, cfg);
  for (double v : single.data()) EXPECT_EQ(v, 0.0);
}

TEST(SigAttention, EqualKeysGiveConstantPathAndZeroLaterIncrements) {
  // With identical keys every attended row is the same vector, so the
  // reduced path is constant and every prefix signature vanishes.
  Rng rng(12);
  auto cfg = small_attention(2, 1, 2, 2);
  auto head = HeadParams::init(cfg, rng);
  Tape tape;
  Tensor q = oracle::random_tensor({4, 2}, rng);
  Tensor k = Tensor::matrix(4, 2, {1, 1, 1, 1, 1, 1, 1, 1});
  Tensor v = oracle::random_tensor({4, 2}, rng);
  Tensor out = sig_attention(tape, q, k, v, head, cfg);
  for (double val : out.data()) EXPECT_NEAR(val, 0.0, 1e-12);
}

TEST(AdditiveMultiHead, ZeroAttentionBranchLeavesInputBranch) {
  Rng rng(9);
  auto cfg = small_attention(4, 1, 2, 2);
  std::vector<HeadParams> heads{HeadParams::init(cfg, rng)};
  zero_out(heads[0].wr);
  zero_out(heads[0].br);
  Tape tape;
  Tensor x = oracle::random_tensor({4, 4}, rng);
  Tensor full = additive_multi_head(tape, x, heads, cfg);
  Tensor input_only = reduced_sig(tape, x, heads[0].wx, Tensor{}, 2, SignatureMode::stream);
  EXPECT_EQ(full.values(), input_only.values());

  // And zeroing the input branch leaves the attention branch.
  auto heads2 = std::vector<HeadParams>{HeadParams::init(cfg, rng)};
  zero_out(heads2[0].wx);
  Tensor attn_only = sig_attention(tape, matmul(tape, x, heads2[0].wq), matmul(tape, x, heads2[0].wk),
                                   matmul(tape, x, heads2[0].wv), heads2[0], cfg);
  EXPECT_EQ(additive_multi_head(tape, x, heads2, cfg).values(), attn_only.values());
}

TEST(AdditiveMultiHead, SwappingHeadsPermutesBlocks) {
  Rng rng(10);
  auto cfg = small_attention(4, 2, 2, 2);
  std::vector<HeadParams> heads{HeadParams::init(cfg, rng), HeadParams::init(cfg, rng)};
  std::vector<HeadParams> swapped{heads[1], heads[0]};
  Tape tape;
  Tensor x = oracle::random_tensor({3, 4}, rng);
  Tensor a = additive_multi_head(tape, x, heads, cfg);
  Tensor b = additive_multi_head(tape, x, swapped, cfg);
  const std::size_t w = cfg.sig_dim();
  ASSERT_EQ(a.shape(), (Shape{3, 2 * w}));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      EXPECT_EQ(a.at(r, c), b.at(r, c + w));
      EXPECT_EQ(a.at(r, c + w), b.at(r, c));
    }
}

TEST(AdditiveMultiHead, DefaultWidthAndPooledShape) {
  SigAttentionConfig defaults;
  EXPECT_EQ(defaults.heads * defaults.sig_dim(), 8448u);
  Rng rng(1);
  auto cfg = small_attention(4, 2, 2, 2, SignatureMode::pooled);
  std::vector<HeadParams> heads{HeadParams::init(cfg, rng), HeadParams::init(cfg, rng)};
  Tape tape;
  EXPECT_EQ(additive_multi_head(tape, oracle::random_tensor({3, 4}, rng), heads, cfg).shape(), (Shape{12}));
}

TEST(AdditiveMultiHead, StreamOutputIsOrderSensitive) {
  Rng rng(13);
  auto cfg = small_attention(4, 2, 2, 2);
  std::vector<HeadParams> heads{HeadParams::init(cfg, rng), HeadParams::init(cfg, rng)};
  Tape tape;
  Tensor x = oracle::random_tensor({4, 4}, rng);
  Tensor perm(Shape{4, 4});
  const std::size_t order[] = {2, 0, 3, 1};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) perm.at(r, c) = x.at(order[r], c);
  Tensor a = additive_multi_head(tape, x, heads, cfg);
  Tensor b = additive_multi_head(tape, perm, heads, cfg);
  EXPECT_GT(oracle::max_abs_diff(a.data(), b.data()), 1e-6);
}

TEST(AdditiveMultiHead, GradientMatchesFiniteDifferences) {
  Rng rng(14);
  for (auto mode : {SignatureMode::stream, SignatureMode::pooled}) {
    auto cfg = small_attention(8, 2, 2, 2, mode);
    std::vector<HeadParams> heads{HeadParams::init(cfg, rng), HeadParams::init(cfg, rng)};
    Tensor x = oracle::random_tensor({4, 8}, rng, 0.5);
    const std::size_t width = 2 * cfg.sig_dim();
    Tensor readout = mode == SignatureMode::stream ? oracle::random_tensor({4, width}, rng)
                                                   : oracle::random_tensor({width}, rng);
    std::vector<NamedLeaf> leaves{{"x", x}};
    for (std::size_t h = 0; h < 2; ++h) {
      auto more = named(heads[h].parameters(), heads[h].parameter_names());
      leaves.insert(leaves.end(), more.begin(), more.end());
    }
    expect_gradcheck([&](Tape& t) { return sum(t, mul(t, additive_multi_head(t, x, heads, cfg), readout)); },
                     leaves);
  }
}

TEST(PositionalEncoding, KnownValuesAndRange) {
  Tensor pe = positional_encoding(6, 8);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(pe.at(0, c), c % 2 == 0 ? 0.0 : 1.0);
  EXPECT_NEAR(pe.at(1, 0), 0.8415, 1e-4);
  EXPECT_EQ(pe.at(1, 0), std::sin(1.0));
  for (double v : pe.data()) {
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, -1.0);
  }
  EXPECT_THROW(positional_encoding(3, 7), ConfigError);
}

TEST(Encoder, ShapeLawAndInferenceDeterminism) {
  auto cfg = STEConfig::toy();
  Rng init(1);
  auto layers = init_encoder(cfg, init);
  Rng rng(2);
  for (std::size_t len : {1u, 2u, 5u}) {
    Tensor x = oracle::random_tensor({len, 8}, rng);
    Tape t1(false), t2(false);
    Rng d1(3), d2(4);
    Tensor a = encoder_forward(t1, x, layers, cfg, false, d1);
    Tensor b = encoder_forward(t2, x, layers, cfg, false, d2);
    EXPECT_EQ(a.shape(), (Shape{len, 8}));
    EXPECT_EQ(a.values(), b.values());
    for (double v : a.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Encoder, ZeroFeedForwardGivesLayerNormOfSecondSublayer) {
  auto cfg = STEConfig::toy();
  Rng init(5);
  auto layer = STELayerParams::init(cfg, init);
  zero_out(layer.w_ff2a);
  zero_out(layer.w_ff2b);
  Rng rng(6);
  Tensor x = oracle::random_tensor({3, 8}, rng);
  Tape tape(false);
  Rng drop(0);
  Tensor out = ste_layer_forward(tape, x, layer, cfg, false, drop);
  Tensor s2 = linear(tape, additive_multi_head(tape, x, layer.heads, cfg.attention), layer.w_ff1, layer.b_ff1);
  Tensor expected = layer_norm(tape, s2, layer.ln_gain, layer.ln_bias, cfg.layer_norm_eps);
  EXPECT_EQ(out.values(), expected.values());
}

TEST(Encoder, LayerNormOutputMeanMatchesBias) {
  auto cfg = STEConfig::toy();
  Rng init(7);
  auto layer = STELayerParams::init(cfg, init);
  Rng rng(8);
  for (double& v : layer.ln_bias.data()) v = rng.uniform(-1, 1);
  const double bias_mean = std::accumulate(layer.ln_bias.data().begin(), layer.ln_bias.data().end(), 0.0) / 8;
  Tape tape(false);
  Tensor out = ste_layer_forward(tape, oracle::random_tensor({4, 8}, rng), layer, cfg, false, rng);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0;
    for (std::size_t c = 0; c < 8; ++c) m += out.at(r, c) / 8;
    EXPECT_NEAR(m, bias_mean, 1e-9);
  }
}

TEST(Encoder, StackingIsNotIdempotent) {
  auto one = STEConfig::toy();
  auto two = one;
  two.n_layers = 2;
  Rng init(11);
  auto layer = STELayerParams::init(one, init);
  Rng rng(12);
  Tensor x = oracle::random_tensor({4, 8}, rng);
  Tape tape(false);
  Tensor a = encoder_forward(tape, x, {layer}, one, false, rng);
  Tensor b = encoder_forward(tape, x, {layer, layer}, two, false, rng);
  EXPECT_GT(oracle::max_abs_diff(a.data(), b.data()), 1e-6);
}

TEST(Encoder, PooledModeRequiresSingleLayer) {
  auto cfg = STEConfig::toy();
  cfg.attention.mode = SignatureMode::pooled;
  Rng rng(1);
  auto layers = init_encoder(cfg, rng);
  Tape tape(false);
  EXPECT_EQ(encoder_forward(tape, oracle::random_tensor({3, 8}, rng), layers, cfg, false, rng).shape(), (Shape{8}));
  cfg.n_layers = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Encoder, AblationTogglesProduceDistinctOutputs) {
  auto base = STEConfig::toy();
  Rng init(21);
  auto layers = init_encoder(base, init);
  Rng rng(22);
  Tensor x = oracle::random_tensor({4, 8}, rng);
  std::vector<std::vector<double>> outs;
  for (bool pe : {true, false})
    for (bool st : {true, false}) {
      auto cfg = base;
      cfg.use_positional_encoding = pe;
      cfg.use_signature = st;
      Tape tape(false);
      outs.push_back(encoder_forward(tape, x, layers, cfg, false, rng).values());
    }
  for (std::size_t i = 0; i < outs.size(); ++i)
    for (std::size_t j = i + 1; j < outs.size(); ++j) EXPECT_NE(outs[i], outs[j]);
}

TEST(Encoder, FullToyGradientMatchesFiniteDifferences) {
  auto cfg = STEConfig::toy();
  Rng init(31);
  auto layers = init_encoder(cfg, init);
  auto heads = HeadsParams::init(cfg.d_model(), init);
  Rng rng(32);
  jitter_biases(layers[0].parameters(), rng);
  jitter_biases(heads.parameters(), rng);
  Tensor x = oracle::random_tensor({3, 8}, rng, 0.5);
  std::vector<NamedLeaf> leaves{{"x", x}};
  auto lp = named(layers[0].parameters(), layers[0].parameter_names());
  leaves.insert(leaves.end(), lp.begin(), lp.end());
  auto hp = named(heads.parameters(), heads.parameter_names());
  leaves.insert(leaves.end(), hp.begin(), hp.end());
  Targets target{2.5, 1, 3};
  // Dropout active with a re-seeded generator per evaluation, so the mask is
  // the same for every finite-difference probe.
  expect_gradcheck(
      [&](Tape& t) {
        Rng drop(77);
        Tensor rep = pool_sequence(t, encoder_forward(t, x, layers, cfg, true, drop), Pooling::mean);
        return multitask_loss(t, heads_forward(t, rep, heads, true, 0.1, drop), target, TaskWeights::uniform());
      },
      leaves);
}

TEST(Heads, ZeroParamsGiveBiases) {
  Rng rng(1);
  auto p = HeadsParams::init(6, rng);
  for (const auto& t : {p.q_w1, p.q_w2, p.tag_w, p.ind_w1, p.ind_w2}) zero_out(t);
  p.q_b2[0] = 0.7;
  for (std::size_t c = 0; c < 5; ++c) {
    p.tag_b[c] = 0.1 * c;
    p.ind_b2[c] = -0.2 * c;
  }
  Tape tape(false);
  auto out = heads_forward(tape, oracle::random_tensor({6}, rng), p, false, 0.1, rng);
  EXPECT_EQ(out.quantity.item(), 0.7);
  EXPECT_EQ(out.tag_logits.values(), p.tag_b.values());
  EXPECT_EQ(out.indication_logits.values(), p.ind_b2.values());
  EXPECT_EQ(out.tag_logits.size(), 5u);
}

TEST(Heads, IndicationParamsDoNotAffectOtherOutputs) {
  Rng rng(2);
  auto p = HeadsParams::init(6, rng);
  Tensor rep = oracle::random_tensor({6}, rng);
  Tape tape(false);
  auto before = heads_forward(tape, rep, p, false, 0.1, rng);
  for (double& v : p.ind_w1.data()) v += 0.5;
  for (double& v : p.ind_b2.data()) v -= 0.3;
  auto after = heads_forward(tape, rep, p, false, 0.1, rng);
  EXPECT_EQ(before.quantity.values(), after.quantity.values());
  EXPECT_EQ(before.tag_logits.values(), after.tag_logits.values());
  EXPECT_NE(before.indication_logits.values(), after.indication_logits.values());
}

TEST(Loss, ArithmeticAndSimplexVertices) {
  EXPECT_NEAR(combine_task_losses(0.5, 1.0, 2.0, {0.5, 0.3, 0.2}), 0.95, 1e-15);
  EXPECT_THROW(combine_task_losses(0.5, 1.0, 2.0, {0.5, 0.3, 0.3}), ConfigError);

  HeadsOutput out{Tensor::vector({1.5}), Tensor::vector({0, 0, 0, 0, 0}), Tensor::vector({0, 0, 0, 0, 0})};
  Tape tape(false);
  Targets target{0.5, 2, 4};
  EXPECT_EQ(multitask_loss(tape, out, target, {1, 0, 0}).item(), 1.0);
  EXPECT_NEAR(multitask_loss(tape, out, target, {0, 1, 0}).item(), std::log(5.0), 1e-9);
  EXPECT_NEAR(multitask_loss(tape, out, target, {0, 0, 1}).item(), std::log(5.0), 1e-9);
  EXPECT_THROW(multitask_loss(tape, out, Targets{0, 5, 0}, {1, 0, 0}), DataError);
}

TEST(Loss, ClassWeightsScaleCrossEntropy) {
  HeadsOutput out{Tensor::vector({0.0}), Tensor::vector({0, 1, 0, 0, 0}), Tensor::vector({0, 0, 0, 0, 0})};
  ClassWeights cw;
  cw.tag[1] = 3.0;
  Tape tape(false);
  const double plain = multitask_loss(tape, out, Targets{0, 1, 0}, {0, 1, 0}).item();
  const double weighted = multitask_loss(tape, out, Targets{0, 1, 0}, {0, 1, 0}, &cw).item();
  EXPECT_NEAR(weighted, 3.0 * plain, 1e-12);
}

TEST(Loss, HeadGradientsMatchFiniteDifferences) {
  Rng rng(3);
  auto p = HeadsParams::init(4, rng);
  Tensor rep = oracle::random_tensor({4}, rng);
  auto leaves = named(p.parameters(), p.parameter_names());
  leaves.push_back({"rep", rep});
  ClassWeights cw;
  cw.indication = {0.5, 1, 2, 1, 1};
  expect_gradcheck(
      [&](Tape& t) {
        Rng drop(5);
        return multitask_loss(t, heads_forward(t, rep, p, true, 0.1, drop), Targets{1.5, 0, 2}, {0.2, 0.5, 0.3},
                              &cw);
      },
      leaves);
}

TEST(Metrics, PerfectAndHandComputed) {
  std::vector<Prediction> labels{{1.0, 0, 1}, {2.0, 1, 2}, {0.5, 2, 3}};
  auto perfect = evaluate_metrics(labels, labels);
  EXPECT_EQ(perfect.quantity_mse, 0.0);
  // Absent classes count as 0 in the 5-class macro average, so check with
  // exactly the classes present.
  std::vector<std::size_t> t{0, 1, 2}, p{0, 1, 2};
  EXPECT_EQ(macro_f1(p, t, 3).macro, 1.0);

  // TP0=1, FN0=1, TP1=2, FP1=1.
  std::vector<std::size_t> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  auto f1 = macro_f1(pred, truth, 2);
  EXPECT_NEAR(f1.per_class[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(f1.per_class[1], 0.8, 1e-15);
  EXPECT_NEAR(f1.macro, 0.7333, 1e-4);
}

TEST(Metrics, SingleClassPredictionsAndEmptySet) {
  std::vector<std::size_t> truth{0, 1, 2, 3, 4, 0}, pred(6, 0);
  auto f1 = macro_f1(pred, truth, 5);
  EXPECT_NEAR(f1.macro, f1.per_class[0] / 5, 1e-15);
  EXPECT_NEAR(f1.per_class[0], 2.0 * 2 / (2 * 2 + 4), 1e-15);
  std::vector<Prediction> none;
  EXPECT_THROW(evaluate_metrics(none, none), DataError);
}

TEST(Metrics, MacroF1InvariantUnderRelabeling) {
  Rng rng(17);
  std::vector<std::size_t> truth(50), pred(50);
  for (std::size_t i = 0; i < 50; ++i) {
    truth[i] = rng.below(5);
    pred[i] = rng.below(5);
  }
  const std::size_t perm[] = {3, 0, 4, 1, 2};
  std::vector<std::size_t> pt(50), pp(50);
  for (std::size_t i = 0; i < 50; ++i) {
    pt[i] = perm[truth[i]];
    pp[i] = perm[pred[i]];
  }
  EXPECT_NEAR(macro_f1(pred, truth, 5).macro, macro_f1(pp, pt, 5).macro, 1e-15);
}

TEST(Metrics, AverageOfOneRunIsThatRun) {
  std::vector<Prediction> labels{{1.0, 0, 1}, {2.0, 1, 2}}, preds{{1.5, 0, 2}, {2.0, 1, 2}};
  auto m = evaluate_metrics(preds, labels);
  std::vector<RunMetrics> runs{m};
  auto avg = average_metrics(runs);
  EXPECT_EQ(avg.quantity_mse, m.quantity_mse);
  EXPECT_EQ(avg.tag_f1, m.tag_f1);
  EXPECT_EQ(avg.indication_macro_f1, m.indication_macro_f1);
}
