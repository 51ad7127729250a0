#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "sennet/checkpoint.hpp"
#include "sennet/trainer.hpp"

using namespace sennet;

namespace {

Corpus small_corpus(std::size_t identities, std::size_t images, std::size_t dim, double offset, double noise,
                    std::uint64_t seed, bool with_ethnicity = true) {
  SyntheticSpec spec;
  spec.identities = identities;
  spec.images_per_identity = images;
  spec.dim = dim;
  spec.attributes = {{"gender", 2, offset, false}};
  if (with_ethnicity) spec.attributes.push_back({"ethnicity", 3, offset, false});
  spec.noise_scale = noise;
  spec.seed = seed;
  return generate_synthetic(spec);
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.n_layers = 1;
  cfg.epochs_per_layer = 8;
  cfg.detector_epochs = 40;
  cfg.batch_size = 64;
  cfg.max_triplets = 600;
  cfg.verification_pairs = 150;
  cfg.seed = seed;
  return cfg;
}

ProjectionNetwork identity_projection() { return ProjectionNetwork{}; }

}  // namespace

TEST(TrainDetector, SeparableAttributeReachesHighAccuracy) {
  const Corpus ds = small_corpus(40, 4, 16, 0.5, 0.05, 3);
  TrainConfig cfg = quick_config(1);
  const DetectorResult det = train_detector("gender", ds, identity_projection(), cfg, 5);
  EXPECT_GE(det.holdout_accuracy, 95.0);
  EXPECT_FALSE(det.degenerate);
}

TEST(TrainDetector, ShuffledLabelsNearChance) {
  Corpus ds = small_corpus(80, 4, 16, 0.5, 0.05, 4);
  Corpus shuffled(ds.schema());
  Rng rng(6);
  std::vector<int> labels;
  for (const auto& [id, idxs] : ds.identity_index()) labels.push_back(ds.record(idxs[0]).attribute("gender"));
  rng.shuffle(labels);
  std::size_t which = 0;
  for (const auto& [id, idxs] : ds.identity_index()) {
    for (std::size_t i : idxs) {
      EmbeddingRecord rec = ds.record(i);
      rec.attributes["gender"] = labels[which];
      shuffled.add(rec);
    }
    ++which;
  }
  TrainConfig cfg = quick_config(2);
  const DetectorResult det = train_detector("gender", shuffled, identity_projection(), cfg, 7);
  EXPECT_NEAR(det.holdout_accuracy, det.chance, 5.0);
}

TEST(TrainDetector, SingleClassFlagsDegenerate) {
  CorpusSchema schema;
  schema.dim = 4;
  schema.attributes = {{"gender", 2}};
  Corpus ds(schema);
  Rng rng(8);
  for (int i = 0; i < 12; ++i) {
    EmbeddingRecord rec;
    rec.record_id = "r" + std::to_string(i);
    rec.identity = "id" + std::to_string(i / 2);
    Vec v(4);
    for (auto& x : v) x = rng.normal();
    rec.vector = l2_normalize(v);
    rec.attributes["gender"] = 0;
    ds.add(rec);
  }
  TrainConfig cfg = quick_config(3);
  const DetectorResult det = train_detector("gender", ds, identity_projection(), cfg, 9);
  EXPECT_TRUE(det.degenerate);
  EXPECT_DOUBLE_EQ(det.holdout_accuracy, 100.0);
  EXPECT_THROW(train_detector("age", ds, identity_projection(), cfg, 9), MissingLabelsError);
}

TEST(Objective, VanishesWhenTargetHitAndMarginSatisfied) {
  // Detector outputs p(class 0) = 0.9 regardless of input; triplet margin
  // strongly satisfied (anchor == positive, negative far).
  const std::size_t d = 4;
  std::vector<Vec> raw = {{1, 0, 0, 0}, {1, 0, 0, 0}, {0, 1, 0, 0}};
  SoftmaxHead detector;
  detector.class_count = 2;
  detector.weights = Matrix(2, d);
  detector.bias = {std::log(9.0), 0.0};

  ProjectionNetwork net;
  Rng rng(4);
  net.layers.push_back(make_layer(d, d, rng, 0.0));  // exact identity

  TrainConfig cfg = quick_config(4);
  const std::vector<Triplet> batch = {{0, 1, 2}};
  const ObjectiveResult obj = sensitivenets_objective(batch, raw, net, detector, 0, cfg, 0);
  EXPECT_NEAR(obj.total, 0.0, 1e-12);
  for (double g : obj.grads[0].dw.data) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(Objective, LambdaOnlyMatchesStraightLineOracle) {
  Rng rng(5);
  const std::size_t d = 5;
  // Anchor == positive and a far negative keep the triplet term hinged to 0.
  std::vector<Vec> raw = {l2_normalize({1, 1, 0, 0, 0}), l2_normalize({1, 1, 0, 0, 0}),
                          l2_normalize({-1, 0.5, -1, 0.2, 0})};
  ProjectionNetwork net;
  net.layers.push_back(make_layer(d, d, rng, 0.05));
  SoftmaxHead detector = SoftmaxHead::make(3, d, rng, 0.6);
  TrainConfig cfg = quick_config(5);
  cfg.alpha = 0.2;

  const std::vector<Triplet> batch = {{0, 1, 2}, {1, 0, 2}};
  const ObjectiveResult obj = sensitivenets_objective(batch, raw, net, detector, 1, cfg, 0);
  EXPECT_NEAR(obj.primary_term, 0.0, 1e-12);

  // Straight-line recomputation of the regularizer sum.
  double expected = 0.0;
  for (const auto& t : batch) {
    for (std::size_t idx : {t.anchor_idx, t.positive_idx, t.negative_idx}) {
      Vec h = raw[idx];
      Vec z(d, 0.0);
      for (std::size_t r = 0; r < d; ++r) {
        z[r] = net.layers[0].bias[r];
        for (std::size_t c = 0; c < d; ++c) z[r] += net.layers[0].weights(r, c) * h[c];
      }
      double len = 0;
      for (double v : z) len += v * v;
      len = std::sqrt(len);
      for (auto& v : z) v /= len;
      Vec logits(3, 0.0);
      for (int r = 0; r < 3; ++r) {
        logits[r] = detector.bias[r];
        for (std::size_t c = 0; c < d; ++c) logits[r] += detector.weights(r, c) * z[c];
      }
      double m = std::max({logits[0], logits[1], logits[2]});
      double sum = 0;
      Vec p(3);
      for (int r = 0; r < 3; ++r) {
        p[r] = std::exp(logits[r] - m);
        sum += p[r];
      }
      for (auto& v : p) v /= sum;
      expected += std::log(1.0 + std::abs(0.9 - p[1]));
    }
  }
  expected /= static_cast<double>(batch.size());
  EXPECT_NEAR(obj.lambda_term, expected, 1e-12);
  EXPECT_NEAR(obj.total, expected, 1e-12);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  const std::size_t d = 6;
  std::vector<Vec> raw;
  for (int i = 0; i < 9; ++i) {
    Vec v(d);
    for (auto& x : v) x = rng.normal();
    raw.push_back(l2_normalize(v));
  }
  ProjectionNetwork net;
  net.layers.push_back(make_layer(5, d, rng, 0.3));
  net.layers.push_back(make_layer(5, 5, rng, 0.3));
  SoftmaxHead detector = SoftmaxHead::make(2, 5, rng, 0.7);
  TrainConfig cfg = quick_config(6);

  const std::vector<Triplet> batch = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}};
  for (std::size_t first_trainable : {0u, 1u}) {
    const ObjectiveResult obj = sensitivenets_objective(batch, raw, net, detector, 0, cfg, first_trainable);
    const double h = 1e-5;
    double max_rel = 0.0;
    for (std::size_t j = first_trainable; j < net.layers.size(); ++j) {
      auto check = [&](double& param, double analytic) {
        const double keep = param;
        param = keep + h;
        const double up = sensitivenets_objective_value(batch, raw, net, detector, 0, cfg);
        param = keep - h;
        const double down = sensitivenets_objective_value(batch, raw, net, detector, 0, cfg);
        param = keep;
        const double fd = (up - down) / (2 * h);
        max_rel = std::max(max_rel, std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-6}));
      };
      for (std::size_t i = 0; i < net.layers[j].weights.data.size(); ++i)
        check(net.layers[j].weights.data[i], obj.grads[j].dw.data[i]);
      for (std::size_t i = 0; i < net.layers[j].bias.size(); ++i) check(net.layers[j].bias[i], obj.grads[j].db[i]);
    }
    EXPECT_LT(max_rel, 1e-4) << "first_trainable=" << first_trainable;
  }
}

TEST(AlternationSchedule, TwoAttributesSplitEvenBatchesExactly) {
  const std::vector<std::string> attrs = {"gender", "ethnicity"};
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batches = 2 * (1 + rng.uniform_index(50));
    std::map<std::string, std::size_t> active;
    for (std::size_t k = 0; k < batches; ++k) ++active[active_attribute(attrs, k)];
    EXPECT_EQ(active["gender"], batches / 2);
    EXPECT_EQ(active["ethnicity"], batches / 2);
  }
  const std::vector<std::string> single = {"gender"};
  for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(active_attribute(single, k), "gender");
}

TEST(TrainLayer, FrozenLayersAreBitwiseUntouched) {
  const Corpus corpus = small_corpus(30, 4, 12, 0.45, 0.12, 10, false);
  const SplitSpec split = make_split(corpus, 8, 8, 1);
  TrainConfig cfg = quick_config(11);
  cfg.epochs_per_layer = 3;

  const Corpus dp = corpus.subset_by_identities(split.primary_ids);
  const Corpus ds = corpus.subset_by_identities(split.sensitive_ids);
  const std::vector<std::string> attrs = {"gender"};
  const std::vector<Vec> dp_raw = dp.vectors();
  const TripletList triplets = mine_triplets(dp, dp_raw, cfg.alpha, cfg.max_triplets, 3);

  TrainState state;
  Rng init_rng(12);
  state.projection.layers.push_back(make_layer(12, 12, init_rng, 0.01));
  state.projection.layers.push_back(make_layer(12, 12, init_rng, 0.01));
  detail::retrain_detectors(state, attrs, ds, cfg, "detector/test", nullptr);

  const DenseLayer frozen = state.projection.layers[0];
  train_layer(state, 1, triplets, dp_raw, {}, dp, ds, attrs, cfg);
  EXPECT_EQ(state.projection.layers[0].weights.data, frozen.weights.data);
  EXPECT_EQ(state.projection.layers[0].bias, frozen.bias);
  EXPECT_NE(state.projection.layers[1].weights.data, frozen.weights.data);
}

TEST(TrainLayer, ZeroEpochsLeaveStateAtInitialization) {
  const Corpus corpus = small_corpus(20, 3, 10, 0.45, 0.12, 13, false);
  const SplitSpec split = make_split(corpus, 6, 6, 2);
  TrainConfig cfg = quick_config(14);
  cfg.epochs_per_layer = 0;
  cfg.n_layers = 2;
  const TrainResult result = train_sensitivenets(corpus, split, cfg);
  EXPECT_EQ(result.state.projection.layers.size(), 2u);
  EXPECT_TRUE(result.state.history.empty());
  // Layers carry their seeded initialization, untouched by any update.
  Rng expect_rng(cfg.seed, "init/layer0");
  const DenseLayer expected = make_layer(10, 10, expect_rng, cfg.init_noise);
  EXPECT_EQ(result.state.projection.layers[0].weights.data, expected.weights.data);
}

TEST(TrainLayer, SingleAttributeHasNoAlternation) {
  const Corpus corpus = small_corpus(30, 4, 12, 0.45, 0.12, 15, false);
  const SplitSpec split = make_split(corpus, 8, 8, 3);
  TrainConfig cfg = quick_config(16);
  cfg.epochs_per_layer = 2;
  const TrainResult result = train_sensitivenets(corpus, split, cfg);
  for (const auto& entry : result.state.history) {
    ASSERT_EQ(entry.lambda_loss.size(), 1u);
    EXPECT_TRUE(entry.lambda_loss.count("gender"));
  }
}

TEST(TrainLayer, LossHistoryFiniteAndNonNegative) {
  const Corpus corpus = small_corpus(40, 4, 12, 0.45, 0.12, 17);
  const SplitSpec split = make_split(corpus, 10, 10, 4);
  TrainConfig cfg = quick_config(18);
  cfg.epochs_per_layer = 3;
  const TrainResult result = train_sensitivenets(corpus, split, cfg);
  ASSERT_FALSE(result.state.history.empty());
  for (const auto& e : result.state.history) {
    EXPECT_TRUE(std::isfinite(e.primary_loss));
    EXPECT_GE(e.primary_loss, 0.0);
    for (const auto& [attr, v] : e.lambda_loss) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0);
    }
  }
}

TEST(TrainSensitiveNets, DetectorAccuracyDropsAfterTrainingLayerOne) {
  const Corpus corpus = small_corpus(60, 4, 16, 0.45, 0.12, 19, false);
  const SplitSpec split = make_split(corpus, 16, 16, 5);
  TrainConfig cfg = quick_config(20);
  cfg.epochs_per_layer = 8;

  const Corpus ds = corpus.subset_by_identities(split.sensitive_ids);
  const DetectorResult before = train_detector("gender", ds, identity_projection(), cfg, stream_seed(cfg.seed, "pre"));
  const TrainResult result = train_sensitivenets(corpus, split, cfg);
  const double after = result.state.history.back().detector_acc.at("gender");
  EXPECT_LT(after, before.holdout_accuracy);
}

TEST(TrainSensitiveNets, DeterministicAcrossRuns) {
  const Corpus corpus = small_corpus(30, 3, 10, 0.45, 0.12, 21);
  const SplitSpec split = make_split(corpus, 8, 8, 6);
  TrainConfig cfg = quick_config(22);
  cfg.epochs_per_layer = 2;
  const TrainResult a = train_sensitivenets(corpus, split, cfg);
  const TrainResult b = train_sensitivenets(corpus, split, cfg);

  const std::string ckpt_a = checkpoint_to_json({a.state.projection, a.state.detectors}).dump();
  const std::string ckpt_b = checkpoint_to_json({b.state.projection, b.state.detectors}).dump();
  EXPECT_EQ(ckpt_a, ckpt_b);
  EXPECT_EQ(*a.report.verification_before, *b.report.verification_before);
  EXPECT_EQ(*a.report.verification_after, *b.report.verification_after);
  ASSERT_EQ(a.report.probes.size(), b.report.probes.size());
  for (std::size_t i = 0; i < a.report.probes.size(); ++i)
    EXPECT_EQ(a.report.probes[i].test_accuracy, b.report.probes[i].test_accuracy);
  EXPECT_EQ(a.triplets.triplets, b.triplets.triplets);
}

TEST(TrainSensitiveNets, DetectorsNeverSeeEvalIdentities) {
  Rng rng(23);
  for (int trial = 0; trial < 3; ++trial) {
    const Corpus corpus = small_corpus(24 + 4 * trial, 3, 10, 0.45, 0.12, 24 + trial);
    const SplitSpec split = make_split(corpus, 6, 6, 7 + trial);
    TrainConfig cfg = quick_config(25 + trial);
    cfg.epochs_per_layer = 1;
    const TrainResult result = train_sensitivenets(corpus, split, cfg);
    for (const auto& id : result.state.detector_train_identities) {
      EXPECT_FALSE(split.eval_ids.count(id)) << "detector saw eval identity " << id;
      EXPECT_TRUE(split.sensitive_ids.count(id));
    }
  }
}

TEST(TrainSensitiveNets, ConfigValidation) {
  const Corpus corpus = small_corpus(12, 3, 10, 0.45, 0.12, 30);
  const SplitSpec split = make_split(corpus, 4, 4, 8);
  TrainConfig cfg = quick_config(31);
  cfg.n_layers = 0;
  EXPECT_THROW(train_sensitivenets(corpus, split, cfg), ConfigError);
  cfg = quick_config(31);
  cfg.primary_mode = "bce";
  EXPECT_THROW(validate_config(cfg), ConfigError);  // missing target_attribute
  cfg.primary_mode = "nonsense";
  EXPECT_THROW(validate_config(cfg), ConfigError);
}

TEST(TrainConfigJson, RoundTripAndStrictKeys) {
  TrainConfig cfg;
  cfg.n_layers = 4;
  cfg.sensitive_attributes = {"gender"};
  cfg.fixed_class = {{"gender", 1}};
  cfg.seed = 99;
  cfg.primary_mode = "bce";
  cfg.target_attribute = "smiling";
  const nlohmann::json j = to_json(cfg);
  const TrainConfig back = train_config_from_json(j);
  EXPECT_EQ(back.n_layers, 4);
  EXPECT_EQ(back.fixed_class.at("gender"), 1);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.target_attribute, "smiling");
  EXPECT_EQ(to_json(back).dump(), j.dump());

  nlohmann::json bad = j;
  bad["learning_rte"] = 0.01;
  EXPECT_THROW(train_config_from_json(bad), ConfigError);
}

TEST(Checkpoint, RoundTripsBitwise) {
  Rng rng(33);
  Checkpoint ckpt;
  ckpt.projection.layers.push_back(make_layer(6, 8, rng, 0.4));
  ckpt.projection.layers.push_back(make_layer(6, 6, rng, 0.4));
  ckpt.projection.trained_depth = 2;
  ckpt.heads["gender"] = SoftmaxHead::make(2, 6, rng, 0.5);
  ckpt.heads["primary"] = SoftmaxHead::make(2, 6, rng, 0.5);

  const auto path = (std::filesystem::temp_directory_path() / "sennet_ckpt.json").string();
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.projection.layers.size(), 2u);
  EXPECT_EQ(back.projection.layers[0].weights.data, ckpt.projection.layers[0].weights.data);
  EXPECT_EQ(back.projection.layers[1].bias, ckpt.projection.layers[1].bias);
  EXPECT_EQ(back.heads.at("gender").weights.data, ckpt.heads.at("gender").weights.data);
  EXPECT_EQ(checkpoint_to_json(back).dump(), checkpoint_to_json(ckpt).dump());
}

TEST(BceObjective, GradientMatchesFiniteDifferences) {
  Rng rng(35);
  const std::size_t d = 6;
  std::vector<Vec> raw;
  std::vector<int> targets;
  for (int i = 0; i < 8; ++i) {
    Vec v(d);
    for (auto& x : v) x = rng.normal();
    raw.push_back(l2_normalize(v));
    targets.push_back(static_cast<int>(rng.uniform_index(2)));
  }
  ProjectionNetwork net;
  net.layers.push_back(make_layer(d, d, rng, 0.3));
  SoftmaxHead primary = SoftmaxHead::make(2, d, rng, 0.6);
  SoftmaxHead detector = SoftmaxHead::make(2, d, rng, 0.6);
  TrainConfig cfg = quick_config(36);
  cfg.primary_mode = "bce";
  cfg.target_attribute = "smiling";

  std::vector<std::size_t> batch = {0, 1, 2, 3, 4, 5, 6, 7};
  const ObjectiveResult obj = bce_objective(batch, raw, targets, net, primary, detector, 0, cfg, 0);
  const double h = 1e-5;
  double max_rel = 0.0;
  auto check = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = bce_objective_value(batch, raw, targets, net, primary, detector, 0, cfg);
    param = keep - h;
    const double down = bce_objective_value(batch, raw, targets, net, primary, detector, 0, cfg);
    param = keep;
    const double fd = (up - down) / (2 * h);
    max_rel = std::max(max_rel, std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-6}));
  };
  for (std::size_t i = 0; i < net.layers[0].weights.data.size(); ++i)
    check(net.layers[0].weights.data[i], obj.grads[0].dw.data[i]);
  for (std::size_t i = 0; i < net.layers[0].bias.size(); ++i) check(net.layers[0].bias[i], obj.grads[0].db[i]);
  EXPECT_LT(max_rel, 1e-4);
}

TEST(TrainBceVariant, ZeroEpochsKeepInitialRepresentation) {
  SyntheticSpec spec;
  spec.identities = 40;
  spec.images_per_identity = 4;
  spec.dim = 12;
  spec.attributes = {{"gender", 2, 0.5, false}, {"smiling", 2, 0.3, true}};
  spec.noise_scale = 0.1;
  spec.seed = 40;
  const Corpus corpus = generate_synthetic(spec);

  TrainConfig cfg = quick_config(41);
  cfg.primary_mode = "bce";
  cfg.target_attribute = "smiling";
  cfg.sensitive_attributes = {"gender"};
  cfg.epochs_per_layer = 0;
  cfg.init_noise = 0.0;  // exact identity layers
  const TrainResult result = train_bce_variant(corpus, cfg);
  ASSERT_EQ(result.state.projection.layers.size(), static_cast<std::size_t>(cfg.n_layers));
  for (const auto& rec : corpus.records()) {
    const Vec phi = result.state.projection.forward(rec.vector);
    for (std::size_t k = 0; k < phi.size(); ++k) EXPECT_NEAR(phi[k], rec.vector[k], 1e-12);
  }
  EXPECT_TRUE(result.state.primary_head.has_value());
}

TEST(TrainBceVariant, NonBinaryTargetRejected) {
  const Corpus corpus = small_corpus(12, 3, 10, 0.45, 0.12, 42);  // ethnicity has 3 classes
  TrainConfig cfg = quick_config(43);
  cfg.primary_mode = "bce";
  cfg.target_attribute = "ethnicity";
  cfg.sensitive_attributes = {"gender"};
  EXPECT_THROW(train_bce_variant(corpus, cfg), NonBinaryLabelsError);
}
