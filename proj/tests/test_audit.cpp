#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "sennet/audit.hpp"
#include "sennet/embeddings.hpp"

using namespace sennet;

namespace {

Corpus probe_corpus(std::size_t identities, std::size_t images, std::size_t dim, double offset, double noise,
                    std::uint64_t seed) {
  SyntheticSpec spec;
  spec.identities = identities;
  spec.images_per_identity = images;
  spec.dim = dim;
  spec.attributes = {{"gender", 2, offset, false}};
  spec.noise_scale = noise;
  spec.seed = seed;
  return generate_synthetic(spec);
}

// Corpus carrying a per-record binary target next to an identity-level group.
Corpus bce_corpus(std::size_t identities, std::size_t images, std::size_t dim, double group_offset,
                  double target_offset, double noise, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.identities = identities;
  spec.images_per_identity = images;
  spec.dim = dim;
  spec.attributes = {{"gender", 2, group_offset, false}, {"smiling", 2, target_offset, true}};
  spec.noise_scale = noise;
  spec.seed = seed;
  return generate_synthetic(spec);
}

}  // namespace

TEST(TrainProbe, SeparableAttributeIsLearned) {
  const Corpus corpus = probe_corpus(40, 4, 16, 0.5, 0.05, 3);
  for (ProbeKind kind : {ProbeKind::Softmax, ProbeKind::LinearSvm}) {
    const auto result = train_probe(corpus, "gender", corpus.vectors(), kind, 5, "raw");
    EXPECT_GE(result.report.test_accuracy, 99.0) << to_string(kind);
    EXPECT_DOUBLE_EQ(result.report.chance_accuracy, 50.0);
  }
}

TEST(TrainProbe, PermutedLabelsNearChance) {
  Corpus corpus = probe_corpus(60, 4, 12, 0.5, 0.05, 4);
  // Rebuild with shuffled gender labels (identity-level shuffle).
  Corpus shuffled(corpus.schema());
  Rng rng(11);
  std::vector<int> labels;
  for (const auto& [id, idxs] : corpus.identity_index()) labels.push_back(corpus.record(idxs[0]).attribute("gender"));
  rng.shuffle(labels);
  std::size_t which = 0;
  for (const auto& [id, idxs] : corpus.identity_index()) {
    for (std::size_t i : idxs) {
      EmbeddingRecord rec = corpus.record(i);
      rec.attributes["gender"] = labels[which];
      shuffled.add(rec);
    }
    ++which;
  }
  const auto result = train_probe(shuffled, "gender", shuffled.vectors(), ProbeKind::LinearSvm, 6, "raw");
  EXPECT_NEAR(result.report.test_accuracy, result.report.chance_accuracy, 5.0);
}

TEST(ChanceAccuracy, MajorityClassFrequency) {
  EXPECT_DOUBLE_EQ(chance_accuracy({0, 0, 0, 1}), 75.0);
  EXPECT_DOUBLE_EQ(chance_accuracy({0, 1, 2}), 100.0 / 3.0);
}

TEST(EvalVerification, ZeroNoiseCorpusIsPerfect) {
  SyntheticSpec spec;
  spec.identities = 12;
  spec.images_per_identity = 3;
  spec.dim = 10;
  spec.attributes = {{"gender", 2, 0.3, false}};
  spec.noise_scale = 0.0;
  spec.seed = 5;
  const Corpus corpus = generate_synthetic(spec);
  const VerificationReport report = eval_verification(corpus, corpus.vectors(), 200, 1);
  EXPECT_DOUBLE_EQ(report.accuracy, 100.0);
  EXPECT_GT(report.positive_pairs, 0u);
  EXPECT_EQ(report.positive_pairs, report.negative_pairs);
}

TEST(EvalVerification, NotEnoughIdentities) {
  CorpusSchema schema;
  schema.dim = 3;
  Corpus corpus(schema);
  EmbeddingRecord rec;
  rec.record_id = "a0";
  rec.identity = "a";
  rec.vector = {1, 0, 0};
  corpus.add(rec);
  EXPECT_THROW(eval_verification(corpus, corpus.vectors(), 10, 1), NotEnoughIdentitiesError);
}

// Exhaustive oracle: the chosen threshold achieves the maximum accuracy over
// all midpoints, computed independently.
TEST(EvalVerification, ThresholdSweepMatchesBruteForce) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> genuine, impostor;
    const std::size_t n = 20 + rng.uniform_index(230);
    for (std::size_t i = 0; i < n; ++i) {
      genuine.push_back(std::abs(rng.normal(0.8, 0.4)));
      impostor.push_back(std::abs(rng.normal(1.4, 0.4)));
    }
    const auto [thr, acc] = detail::best_threshold(genuine, impostor);

    std::vector<double> all = genuine;
    all.insert(all.end(), impostor.begin(), impostor.end());
    std::sort(all.begin(), all.end());
    std::vector<double> candidates = {all.front() - 1.0, all.back() + 1.0};
    for (std::size_t i = 0; i + 1 < all.size(); ++i)
      if (all[i + 1] > all[i]) candidates.push_back(0.5 * (all[i] + all[i + 1]));
    double best = -1.0;
    for (double t : candidates) {
      std::size_t correct = 0;
      for (double d : genuine) correct += d < t;
      for (double d : impostor) correct += !(d < t);
      best = std::max(best, 100.0 * static_cast<double>(correct) / static_cast<double>(2 * n));
    }
    EXPECT_NEAR(acc, best, 1e-9);
    // And the reported threshold actually attains that accuracy.
    std::size_t correct = 0;
    for (double d : genuine) correct += d < thr;
    for (double d : impostor) correct += !(d < thr);
    EXPECT_NEAR(100.0 * static_cast<double>(correct) / static_cast<double>(2 * n), best, 1e-9);
  }
}

TEST(EvalVerification, ThresholdChoiceInvariantUnderMonotoneTransform) {
  Rng rng(8);
  std::vector<double> genuine, impostor;
  for (int i = 0; i < 150; ++i) {
    genuine.push_back(std::abs(rng.normal(0.7, 0.3)));
    impostor.push_back(std::abs(rng.normal(1.3, 0.3)));
  }
  const auto [thr, acc] = detail::best_threshold(genuine, impostor);
  auto monotone = [](double d) { return d * d * d + 2.0 * d; };
  std::vector<double> tg, ti;
  for (double d : genuine) tg.push_back(monotone(d));
  for (double d : impostor) ti.push_back(monotone(d));
  const auto [thr2, acc2] = detail::best_threshold(tg, ti);
  (void)thr;
  (void)thr2;
  EXPECT_NEAR(acc, acc2, 1e-9);
}

TEST(LeakageReduction, TableRowsReproduce) {
  struct Row {
    double before, after, random, printed;
  };
  const Row rows[] = {
      {98.4, 95.8, 50.0, 5.4},  {97.7, 58.8, 50.0, 81.5}, {98.8, 55.1, 33.0, 66.4}, {96.2, 56.3, 50.0, 86.4},
      {98.2, 54.1, 33.0, 67.6}, {95.1, 54.6, 50.0, 89.8}, {97.3, 53.5, 33.0, 68.1},
  };
  for (const auto& row : rows)
    EXPECT_NEAR(leakage_reduction(row.before, row.after, row.random), row.printed, 0.05);
}

TEST(LeakageReduction, EdgeCases) {
  EXPECT_DOUBLE_EQ(leakage_reduction(80.0, 80.0, 50.0), 0.0);
  EXPECT_THROW(leakage_reduction(50.0, 40.0, 50.0), DegenerateBaselineError);
}

TEST(FeatureAblation, FractionZeroMatchesFullProbe) {
  const Corpus corpus = probe_corpus(40, 4, 16, 0.5, 0.05, 9);
  const auto reps = corpus.vectors();
  const auto full = train_probe(corpus, "gender", reps, ProbeKind::LinearSvm, 77, "raw");
  const auto points = feature_ablation(corpus, "gender", reps, {0.0}, ProbeKind::LinearSvm, 77);
  ASSERT_EQ(points.size(), 1u);
  EXPECT_DOUBLE_EQ(points[0].accuracy, full.report.test_accuracy);
  EXPECT_DOUBLE_EQ(points[0].fraction_removed, 0.0);
}

TEST(FeatureAblation, HeavyRemovalKeepsSignalAndOneFeatureApproachesChance) {
  const Corpus corpus = probe_corpus(80, 4, 64, 0.5, 0.05, 10);
  const auto reps = corpus.vectors();
  const auto points =
      feature_ablation(corpus, "gender", reps, {0.0, 0.9, 63.0 / 64.0}, ProbeKind::LinearSvm, 13);
  ASSERT_EQ(points.size(), 3u);
  const double chance = 50.0;
  EXPECT_GE(points[0].accuracy, 95.0);
  EXPECT_GE(points[1].accuracy, chance + 20.0);  // 10% of features still leak the attribute
  EXPECT_LE(points[2].accuracy, chance + 25.0);  // a single feature is close to chance
  EXPECT_LE(points[2].accuracy, points[0].accuracy - 20.0);
}

TEST(FeatureAblation, RejectsBadFraction) {
  const Corpus corpus = probe_corpus(10, 2, 8, 0.5, 0.05, 11);
  EXPECT_THROW(feature_ablation(corpus, "gender", corpus.vectors(), {1.0}, ProbeKind::LinearSvm, 1), BadSpecError);
}

TEST(BuildBiasedSplit, ExactCellCounts) {
  const Corpus corpus = bce_corpus(400, 6, 24, 0.5, 0.25, 0.1, 12);
  const BiasedSplit split = build_biased_split(corpus, "smiling", "gender", 0.7, 300, 100, 3);
  EXPECT_EQ(split.train_count[1][1], 210u);
  EXPECT_EQ(split.train_count[1][0], 90u);
  EXPECT_EQ(split.train_count[0][1], 90u);
  EXPECT_EQ(split.train_count[0][0], 210u);
  EXPECT_EQ(split.train.size(), 600u);
  EXPECT_EQ(split.eval.size(), 400u);

  // Verify actual composition matches the requested cells.
  std::size_t seen[2][2] = {{0, 0}, {0, 0}};
  for (const auto& rec : split.train.records()) ++seen[rec.attribute("smiling")][rec.attribute("gender")];
  for (int t = 0; t < 2; ++t)
    for (int g = 0; g < 2; ++g) EXPECT_EQ(seen[t][g], split.train_count[t][g]);

  // Identity-disjoint.
  std::set<std::string> train_ids;
  for (const auto& rec : split.train.records()) train_ids.insert(rec.identity);
  for (const auto& rec : split.eval.records()) EXPECT_FALSE(train_ids.count(rec.identity));
}

TEST(BuildBiasedSplit, FloorArithmetic) {
  const Corpus corpus = bce_corpus(400, 6, 24, 0.5, 0.25, 0.1, 12);
  const BiasedSplit split = build_biased_split(corpus, "smiling", "gender", 0.7, 15, 20, 3);
  EXPECT_EQ(split.train_count[1][1], 10u);  // floor(0.7 * 15)
  EXPECT_EQ(split.train_count[1][0], 4u);   // floor(0.3 * 15)
}

TEST(BuildBiasedSplit, InsufficientCellNamesTheCell) {
  const Corpus corpus = bce_corpus(30, 3, 16, 0.5, 0.25, 0.1, 13);
  try {
    build_biased_split(corpus, "smiling", "gender", 0.7, 5000, 5, 3);
    FAIL() << "expected InsufficientCellError";
  } catch (const InsufficientCellError& e) {
    EXPECT_NE(std::string(e.what()).find("cell"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("target="), std::string::npos);
  }
}

TEST(BuildBiasedSplit, UnbiasedRatioGivesSymmetricOpportunity) {
  const Corpus corpus = bce_corpus(400, 6, 32, 0.5, 0.3, 0.1, 14);
  const BiasedSplit split = build_biased_split(corpus, "smiling", "gender", 0.5, 300, 150, 4);
  const EqOppAudit audit = eqopp_probe_audit(split.train, split.train.vectors(), split.eval, split.eval.vectors(),
                                             "smiling", "gender", 9);
  ASSERT_TRUE(audit.report.abs_eq_opp.has_value());
  EXPECT_LE(*audit.report.abs_eq_opp, 5.0);
}

namespace {

// Builds an eval corpus plus scores realizing exact per-group TPRs
// (counts out of 1000 positives per group; negatives split evenly).
std::pair<Corpus, std::vector<double>> tpr_fixture(int tp_group1, int tp_group0) {
  CorpusSchema schema;
  schema.dim = 2;
  schema.attributes = {{"target", 2}, {"group", 2}};
  Corpus corpus(schema);
  std::vector<double> scores;
  int counter = 0;
  auto add = [&](int target, int group, double score) {
    EmbeddingRecord rec;
    rec.record_id = "r" + std::to_string(counter);
    rec.identity = "i" + std::to_string(counter++);
    rec.attributes = {{"target", target}, {"group", group}};
    rec.vector = {1.0, 0.0};
    corpus.add(rec);
    scores.push_back(score);
  };
  for (int g = 0; g < 2; ++g) {
    const int tp = g == 1 ? tp_group1 : tp_group0;
    for (int i = 0; i < 1000; ++i) add(1, g, i < tp ? 1.0 : -1.0);
    for (int i = 0; i < 100; ++i) add(0, g, -1.0);
  }
  return {std::move(corpus), std::move(scores)};
}

}  // namespace

TEST(EqualOpportunity, TableRowsFromExactTprs) {
  struct Row {
    int tp_f, tp_m;
    double printed;
    double tol;
  };
  const Row rows[] = {
      {852, 614, 23.8, 0.15},  // Fair, attractiveness
      {811, 683, 12.8, 0.15},  // LnL, attractiveness
      {924, 835, 8.8, 0.15},   // LnL, smiling
      {909, 849, 6.0, 0.05},   // SN, smiling
  };
  for (const auto& row : rows) {
    const auto [corpus, scores] = tpr_fixture(row.tp_f, row.tp_m);
    const EqOppReport report = eval_equal_opportunity(corpus, scores, "target", "group", 0.0);
    ASSERT_TRUE(report.eq_opp.has_value());
    EXPECT_NEAR(*report.eq_opp, row.printed, row.tol);
  }
}

TEST(EqualOpportunity, EqualTprsGiveZero) {
  const auto [corpus, scores] = tpr_fixture(700, 700);
  const EqOppReport report = eval_equal_opportunity(corpus, scores, "target", "group", 0.0);
  EXPECT_DOUBLE_EQ(*report.eq_opp, 0.0);
}

TEST(EqualOpportunity, AntisymmetricUnderGroupSwap) {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const int tp_f = static_cast<int>(rng.uniform_index(1001));
    const int tp_m = static_cast<int>(rng.uniform_index(1001));
    const auto [corpus, scores] = tpr_fixture(tp_f, tp_m);

    Corpus swapped(corpus.schema());
    for (const auto& rec : corpus.records()) {
      EmbeddingRecord copy = rec;
      copy.attributes["group"] = 1 - copy.attributes["group"];
      swapped.add(copy);
    }
    const EqOppReport a = eval_equal_opportunity(corpus, scores, "target", "group", 0.0);
    const EqOppReport b = eval_equal_opportunity(swapped, scores, "target", "group", 0.0);
    ASSERT_TRUE(a.eq_opp && b.eq_opp);
    EXPECT_DOUBLE_EQ(*a.eq_opp, -*b.eq_opp);
  }
}

TEST(EqualOpportunity, NoPositivesMarksGroupUndefined) {
  CorpusSchema schema;
  schema.dim = 2;
  schema.attributes = {{"target", 2}, {"group", 2}};
  Corpus corpus(schema);
  std::vector<double> scores;
  for (int i = 0; i < 4; ++i) {
    EmbeddingRecord rec;
    rec.record_id = "r" + std::to_string(i);
    rec.identity = "i" + std::to_string(i);
    rec.attributes = {{"target", i < 2 ? 1 : 0}, {"group", i < 2 ? 0 : 1}};  // group 1 has no positives
    rec.vector = {1.0, 0.0};
    corpus.add(rec);
    scores.push_back(1.0);
  }
  const EqOppReport report = eval_equal_opportunity(corpus, scores, "target", "group", 0.0);
  EXPECT_TRUE(report.tpr_by_group.at(0).has_value());
  EXPECT_FALSE(report.tpr_by_group.at(1).has_value());
  EXPECT_FALSE(report.eq_opp.has_value());
}
