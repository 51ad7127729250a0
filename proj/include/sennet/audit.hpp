#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sennet/embeddings.hpp"
#include "sennet/errors.hpp"
#include "sennet/nn.hpp"
#include "sennet/rng.hpp"

namespace sennet {

// ---------------------------------------------------------------------------
// Linear scorers: a trained softmax head or a one-vs-rest linear SVM, reduced
// to the common "argmax of affine scores" shape probes and classifiers need.
// ---------------------------------------------------------------------------

struct LinearScorer {
  Matrix weights;
  Vec bias;

  Vec scores(const Vec& x) const { return affine(weights, bias, x); }

  int predict(const Vec& x) const {
    const Vec s = scores(x);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < s.size(); ++c)
      if (s[c] > s[arg]) arg = c;
    return static_cast<int>(arg);
  }

  // Decision margin for binary problems: score(class 1) - score(class 0).
  double binary_score(const Vec& x) const {
    const Vec s = scores(x);
    return s[1] - s[0];
  }
};

struct SvmConfig {
  double l2 = 1e-4;
  int epochs = 100;
  double learning_rate = 0.01;  // decays as lr / epoch
};

// One-vs-rest linear SVM trained by subgradient descent on the L2-regularized
// hinge loss.
inline LinearScorer train_linear_svm(const std::vector<Vec>& xs, const std::vector<int>& ys, int classes,
                                     const SvmConfig& cfg, Rng& rng) {
  if (xs.empty()) throw MissingLabelsError("train_linear_svm: no samples");
  const std::size_t d = xs[0].size();
  LinearScorer scorer{Matrix(classes, d), Vec(classes, 0.0)};
  const std::size_t n = xs.size();
  for (int c = 0; c < classes; ++c) {
    Vec w(d, 0.0);
    double b = 0.0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      const double lr = cfg.learning_rate / epoch;
      const std::vector<std::size_t> order = rng.permutation(n);
      for (std::size_t i : order) {
        const double t = ys[i] == c ? 1.0 : -1.0;
        const double f = dot(w, xs[i]) + b;
        for (std::size_t k = 0; k < d; ++k) w[k] -= lr * cfg.l2 * w[k];
        if (t * f < 1.0) {
          axpy(lr * t, xs[i], w);
          b += lr * t;
        }
      }
    }
    for (std::size_t k = 0; k < d; ++k) scorer.weights(c, k) = w[k];
    scorer.bias[c] = b;
  }
  return scorer;
}

// ---------------------------------------------------------------------------
// Probes
// ---------------------------------------------------------------------------

enum class ProbeKind { Softmax, LinearSvm };

inline const char* to_string(ProbeKind k) { return k == ProbeKind::Softmax ? "softmax" : "linear_svm"; }

struct ProbeHyper {
  HeadTrainConfig softmax;  // paper-style defaults: 150 epochs, Adam 1e-3, batch 128
  SvmConfig svm;
};

struct ProbeReport {
  std::string attribute;
  std::string probe_kind;
  std::string representation;  // "raw" or "projected"
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double chance_accuracy = 0.0;
};

struct ProbeResult {
  ProbeReport report;
  LinearScorer scorer;
};

// Majority-class frequency, in percent. The floor against which leakage is
// measured on fresh corpora.
inline double chance_accuracy(const std::vector<int>& ys) {
  std::map<int, std::size_t> counts;
  for (int y : ys) ++counts[y];
  std::size_t best = 0;
  for (const auto& [_, c] : counts) best = std::max(best, c);
  return ys.empty() ? 0.0 : 100.0 * static_cast<double>(best) / static_cast<double>(ys.size());
}

inline double scorer_accuracy(const LinearScorer& scorer, const std::vector<Vec>& xs, const std::vector<int>& ys) {
  if (xs.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (scorer.predict(xs[i]) == ys[i]) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(xs.size());
}

// Identity-disjoint split of record indices, seeded and stratified by
// identity-level attribute cells so both sides stay label-balanced.
// train_fraction picks how many identities land on the training side.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> identity_split(const Corpus& corpus,
                                                                                    std::uint64_t seed,
                                                                                    double train_fraction = 0.5) {
  Rng rng(seed, "probe/split");
  std::set<std::string> train_ids;
  std::map<std::string, std::vector<std::string>> cells = identity_cells(corpus);
  double budget = 0.0;
  for (auto& [_, members] : cells) {
    rng.shuffle(members);
    for (const auto& id : members) {
      budget += train_fraction;
      if (budget >= 1.0 - 1e-12) {
        train_ids.insert(id);
        budget -= 1.0;
      }
    }
  }
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (train_ids.count(corpus.record(i).identity) ? train_idx : test_idx).push_back(i);
  return {train_idx, test_idx};
}

// Trains a post-hoc attribute classifier on frozen representations and
// reports train/test accuracy plus the chance floor. Train/test identity
// splitting happens inside, seeded.
inline ProbeResult train_probe(const Corpus& corpus, const std::string& attribute, const std::vector<Vec>& reps,
                               ProbeKind kind, std::uint64_t seed, const std::string& representation_tag,
                               const ProbeHyper& hyper = {}) {
  if (!corpus.schema().find(attribute)) throw MissingLabelsError("train_probe: unknown attribute " + attribute);
  const int classes = corpus.schema().class_count(attribute);
  const auto [train_idx, test_idx] = identity_split(corpus, seed);
  if (train_idx.empty() || test_idx.empty()) throw MissingLabelsError("train_probe: split produced an empty side");

  std::vector<Vec> xtr, xte;
  std::vector<int> ytr, yte;
  for (std::size_t i : train_idx) {
    xtr.push_back(reps[i]);
    ytr.push_back(corpus.record(i).attribute(attribute));
  }
  for (std::size_t i : test_idx) {
    xte.push_back(reps[i]);
    yte.push_back(corpus.record(i).attribute(attribute));
  }

  Rng rng(seed, "probe/train");
  LinearScorer scorer;
  if (kind == ProbeKind::Softmax) {
    const SoftmaxHead head = train_softmax_head(xtr, ytr, classes, hyper.softmax, rng);
    scorer.weights = head.weights;
    scorer.bias = head.bias;
  } else {
    scorer = train_linear_svm(xtr, ytr, classes, hyper.svm, rng);
  }

  ProbeResult result;
  result.scorer = scorer;
  result.report.attribute = attribute;
  result.report.probe_kind = to_string(kind);
  result.report.representation = representation_tag;
  result.report.train_accuracy = scorer_accuracy(scorer, xtr, ytr);
  result.report.test_accuracy = scorer_accuracy(scorer, xte, yte);
  result.report.chance_accuracy = chance_accuracy(ytr);
  return result;
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

struct VerificationReport {
  double accuracy = 0.0;   // on the held-out pair half
  double threshold = 0.0;  // chosen on the development half
  std::size_t positive_pairs = 0;
  std::size_t negative_pairs = 0;
};

namespace detail {

struct PairSet {
  std::vector<double> genuine;   // distances of same-identity pairs
  std::vector<double> impostor;  // distances of different-identity pairs
};

inline PairSet build_pairs(const Corpus& corpus, const std::vector<Vec>& reps,
                           const std::vector<std::string>& identities, std::size_t budget, Rng& rng) {
  PairSet out;
  std::vector<std::pair<std::size_t, std::size_t>> genuine;
  std::vector<std::size_t> members;
  for (const auto& id : identities) {
    const auto& idxs = corpus.identity_index().at(id);
    for (std::size_t a = 0; a < idxs.size(); ++a)
      for (std::size_t b = a + 1; b < idxs.size(); ++b) genuine.push_back({idxs[a], idxs[b]});
    members.insert(members.end(), idxs.begin(), idxs.end());
  }
  rng.shuffle(genuine);
  const std::size_t take = std::min(budget, genuine.size());
  for (std::size_t i = 0; i < take; ++i)
    out.genuine.push_back(std::sqrt(squared_distance(reps[genuine[i].first], reps[genuine[i].second])));

  // Balanced impostor count, sampled without replacement.
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::size_t guard = 0;
  while (out.impostor.size() < take && guard < 100 * budget + 1000) {
    ++guard;
    const std::size_t a = members[rng.uniform_index(members.size())];
    const std::size_t b = members[rng.uniform_index(members.size())];
    if (corpus.record(a).identity == corpus.record(b).identity) continue;
    const auto key = std::minmax(a, b);
    if (!seen.insert({key.first, key.second}).second) continue;
    out.impostor.push_back(std::sqrt(squared_distance(reps[a], reps[b])));
  }
  return out;
}

// Accuracy-maximizing threshold over all midpoints of the sorted distances.
// Genuine pairs must fall strictly below the threshold. Smallest maximizing
// threshold wins ties.
inline std::pair<double, double> best_threshold(const std::vector<double>& genuine,
                                                const std::vector<double>& impostor) {
  struct Entry {
    double d;
    bool genuine;
  };
  std::vector<Entry> all;
  for (double d : genuine) all.push_back({d, true});
  for (double d : impostor) all.push_back({d, false});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.d < b.d; });
  const double total = static_cast<double>(all.size());

  // Candidate thresholds: below everything, midpoints, above everything.
  double best_acc = -1.0, best_thr = 0.0;
  auto consider = [&](double thr) {
    std::size_t correct = 0;
    for (const auto& e : all) correct += e.genuine == (e.d < thr);
    const double acc = 100.0 * static_cast<double>(correct) / total;
    if (acc > best_acc + 1e-12) {
      best_acc = acc;
      best_thr = thr;
    }
  };
  consider(all.empty() ? 0.0 : all.front().d - 1.0);
  for (std::size_t i = 0; i + 1 < all.size(); ++i)
    if (all[i + 1].d > all[i].d) consider(0.5 * (all[i].d + all[i + 1].d));
  if (!all.empty()) consider(all.back().d + 1.0);
  return {best_thr, best_acc};
}

inline double pair_accuracy(const PairSet& pairs, double threshold) {
  std::size_t correct = 0;
  for (double d : pairs.genuine) correct += d < threshold;
  for (double d : pairs.impostor) correct += !(d < threshold);
  const std::size_t total = pairs.genuine.size() + pairs.impostor.size();
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace detail

// Pair-based verification: balanced genuine/impostor pair sets are built from
// a seeded identity split; the distance threshold is picked on the
// development half and accuracy is reported on the held-out half.
inline VerificationReport eval_verification(const Corpus& corpus, const std::vector<Vec>& reps,
                                            std::size_t pair_budget, std::uint64_t seed) {
  std::vector<std::string> multi;
  for (const auto& [id, idxs] : corpus.identity_index())
    if (idxs.size() >= 2) multi.push_back(id);
  if (multi.size() < 2)
    throw NotEnoughIdentitiesError("eval_verification: need >= 2 identities with >= 2 records");

  Rng rng(seed, "verify/pairs");
  rng.shuffle(multi);
  const std::size_t half = multi.size() / 2;
  std::vector<std::string> dev_ids(multi.begin(), multi.begin() + static_cast<long>(half));
  std::vector<std::string> test_ids(multi.begin() + static_cast<long>(half), multi.end());

  const detail::PairSet dev = detail::build_pairs(corpus, reps, dev_ids, pair_budget, rng);
  const detail::PairSet test = detail::build_pairs(corpus, reps, test_ids, pair_budget, rng);
  const auto [threshold, dev_acc] = detail::best_threshold(dev.genuine, dev.impostor);
  (void)dev_acc;

  VerificationReport report;
  report.threshold = threshold;
  report.accuracy = detail::pair_accuracy(test, threshold);
  report.positive_pairs = test.genuine.size();
  report.negative_pairs = test.impostor.size();
  return report;
}

// ---------------------------------------------------------------------------
// Leakage reduction
// ---------------------------------------------------------------------------

// (Before - After) / (Before - Random), in percent. Normalizes the accuracy
// drop by the gap between the baseline and chance.
inline double leakage_reduction(double before, double after, double random) {
  if (before == random)
    throw DegenerateBaselineError("leakage_reduction: before equals random baseline (" + std::to_string(before) +
                                  ")");
  return 100.0 * (before - after) / (before - random);
}

struct ReductionRow {
  std::string task;
  double before = 0.0;
  double after = 0.0;
  double random = 0.0;
  double reduction = 0.0;
};

// ---------------------------------------------------------------------------
// Feature ablation
// ---------------------------------------------------------------------------

struct AblationPoint {
  double fraction_removed = 0.0;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
};

// For each fraction, removes a seeded random feature subset and retrains the
// probe from scratch. Fraction 0 reproduces the full-feature probe exactly
// (same probe seed, no features touched).
inline std::vector<AblationPoint> feature_ablation(const Corpus& corpus, const std::string& attribute,
                                                   const std::vector<Vec>& reps, const std::vector<double>& fractions,
                                                   ProbeKind kind, std::uint64_t seed,
                                                   const ProbeHyper& hyper = {}) {
  const std::size_t d = reps.empty() ? 0 : reps[0].size();
  std::vector<AblationPoint> points;
  for (std::size_t pi = 0; pi < fractions.size(); ++pi) {
    const double f = fractions[pi];
    if (f < 0.0 || f >= 1.0) throw BadSpecError("feature_ablation: fraction must be in [0, 1)");
    const std::size_t remove = std::min(d - 1, static_cast<std::size_t>(std::llround(f * static_cast<double>(d))));
    Rng rng(seed, "ablate/features/" + std::to_string(pi));
    std::vector<std::size_t> keep_order = rng.permutation(d);
    std::vector<std::size_t> keep(keep_order.begin(), keep_order.begin() + static_cast<long>(d - remove));
    std::sort(keep.begin(), keep.end());

    std::vector<Vec> masked;
    if (remove == 0) {
      masked = reps;
    } else {
      masked.reserve(reps.size());
      for (const auto& r : reps) {
        Vec m(keep.size());
        for (std::size_t k = 0; k < keep.size(); ++k) m[k] = r[keep[k]];
        masked.push_back(std::move(m));
      }
    }
    const ProbeResult probe = train_probe(corpus, attribute, masked, kind, seed, "ablated", hyper);
    points.push_back({f, probe.report.test_accuracy, seed});
  }
  return points;
}

// ---------------------------------------------------------------------------
// Biased split construction
// ---------------------------------------------------------------------------

struct BiasedSplit {
  Corpus train;
  Corpus eval;
  // train cell counts, indexed [target][group]
  std::size_t train_count[2][2] = {{0, 0}, {0, 0}};
  std::size_t eval_per_cell = 0;
};

// Builds a gender-style biased training set: among positives a `ratio` share
// belongs to group 1 and the rest to group 0; negatives get the opposite
// bias. The evaluation set is balanced per cell and identity-disjoint from
// training. Counts are exact (floor arithmetic).
inline BiasedSplit build_biased_split(const Corpus& corpus, const std::string& target_attribute,
                                      const std::string& protected_attribute, double positive_ratio,
                                      std::size_t train_per_class, std::size_t eval_per_cell, std::uint64_t seed) {
  if (corpus.schema().class_count(target_attribute) != 2)
    throw NonBinaryLabelsError("build_biased_split: target attribute must be binary");
  if (corpus.schema().class_count(protected_attribute) != 2)
    throw NonBinaryLabelsError("build_biased_split: protected attribute must be binary");
  if (positive_ratio <= 0.0 || positive_ratio >= 1.0)
    throw BadSpecError("build_biased_split: ratio must be in (0, 1)");

  auto cell_of = [&](const EmbeddingRecord& r) {
    return std::pair<int, int>{r.attribute(target_attribute), r.attribute(protected_attribute)};
  };

  // Requested training cell counts: floor of ratio * class size, with a tiny
  // nudge so exact products like 0.7 * 1000 do not land one below.
  auto floor_share = [](double ratio, std::size_t total) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total) + 1e-9));
  };
  std::size_t want[2][2];
  want[1][1] = floor_share(positive_ratio, train_per_class);
  want[1][0] = floor_share(1.0 - positive_ratio, train_per_class);
  want[0][1] = floor_share(1.0 - positive_ratio, train_per_class);
  want[0][0] = floor_share(positive_ratio, train_per_class);

  // Identity-disjoint pools: walk shuffled identities, filling the eval pool
  // until every cell can reach eval_per_cell, then send the rest to train.
  std::vector<std::string> ids = corpus.identities();
  Rng rng(seed, "biased/identities");
  rng.shuffle(ids);

  std::size_t eval_cell_avail[2][2] = {{0, 0}, {0, 0}};
  std::set<std::string> eval_ids;
  auto eval_filled = [&] {
    for (int t = 0; t < 2; ++t)
      for (int g = 0; g < 2; ++g)
        if (eval_cell_avail[t][g] < eval_per_cell) return false;
    return true;
  };
  for (const auto& id : ids) {
    if (eval_filled()) break;
    eval_ids.insert(id);
    for (std::size_t i : corpus.identity_index().at(id)) {
      const auto [t, g] = cell_of(corpus.record(i));
      ++eval_cell_avail[t][g];
    }
  }
  if (!eval_filled()) {
    for (int t = 0; t < 2; ++t)
      for (int g = 0; g < 2; ++g)
        if (eval_cell_avail[t][g] < eval_per_cell)
          throw InsufficientCellError("build_biased_split: evaluation cell (target=" + std::to_string(t) +
                                      ", group=" + std::to_string(g) + ") has " +
                                      std::to_string(eval_cell_avail[t][g]) + " records, need " +
                                      std::to_string(eval_per_cell));
  }

  std::vector<std::size_t> train_pool[2][2], eval_pool[2][2];
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto [t, g] = cell_of(corpus.record(i));
    (eval_ids.count(corpus.record(i).identity) ? eval_pool : train_pool)[t][g].push_back(i);
  }

  Rng pick_rng(seed, "biased/records");
  std::vector<std::size_t> train_sel, eval_sel;
  for (int t = 0; t < 2; ++t)
    for (int g = 0; g < 2; ++g) {
      if (train_pool[t][g].size() < want[t][g])
        throw InsufficientCellError("build_biased_split: training cell (target=" + std::to_string(t) +
                                    ", group=" + std::to_string(g) + ") has " +
                                    std::to_string(train_pool[t][g].size()) + " records, need " +
                                    std::to_string(want[t][g]));
      pick_rng.shuffle(train_pool[t][g]);
      train_sel.insert(train_sel.end(), train_pool[t][g].begin(),
                       train_pool[t][g].begin() + static_cast<long>(want[t][g]));
      pick_rng.shuffle(eval_pool[t][g]);
      eval_sel.insert(eval_sel.end(), eval_pool[t][g].begin(),
                      eval_pool[t][g].begin() + static_cast<long>(std::min(eval_per_cell, eval_pool[t][g].size())));
    }
  std::sort(train_sel.begin(), train_sel.end());
  std::sort(eval_sel.begin(), eval_sel.end());

  BiasedSplit split;
  split.train = corpus.subset_by_indices(train_sel);
  split.eval = corpus.subset_by_indices(eval_sel);
  for (int t = 0; t < 2; ++t)
    for (int g = 0; g < 2; ++g) split.train_count[t][g] = want[t][g];
  split.eval_per_cell = eval_per_cell;
  return split;
}

// ---------------------------------------------------------------------------
// Equality of opportunity
// ---------------------------------------------------------------------------

struct EqOppReport {
  double overall_accuracy = 0.0;
  std::map<int, std::optional<double>> tpr_by_group;      // percent; nullopt = no positives in group
  std::optional<double> eq_opp;                           // TPR(group 1) - TPR(group 0), signed
  std::optional<double> abs_eq_opp;
};

// TPR per protected group at the classifier's operating threshold
// (predicted positive when score >= threshold).
inline EqOppReport eval_equal_opportunity(const Corpus& corpus, const std::vector<double>& scores,
                                          const std::string& target_attribute,
                                          const std::string& protected_attribute, double threshold = 0.0) {
  if (scores.size() != corpus.size())
    throw ShapeMismatchError("eval_equal_opportunity: score count != corpus size");
  if (corpus.schema().class_count(target_attribute) != 2)
    throw NonBinaryLabelsError("eval_equal_opportunity: target attribute must be binary");
  const int groups = corpus.schema().class_count(protected_attribute);
  if (groups != 2) throw NonBinaryLabelsError("eval_equal_opportunity: protected attribute must be binary");

  std::size_t correct = 0;
  std::map<int, std::size_t> positives, true_positives;
  for (int g = 0; g < groups; ++g) positives[g] = true_positives[g] = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const int target = corpus.record(i).attribute(target_attribute);
    const int group = corpus.record(i).attribute(protected_attribute);
    const int predicted = scores[i] >= threshold ? 1 : 0;
    correct += predicted == target;
    if (target == 1) {
      ++positives[group];
      if (predicted == 1) ++true_positives[group];
    }
  }

  EqOppReport report;
  report.overall_accuracy = corpus.empty() ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(corpus.size());
  for (int g = 0; g < groups; ++g) {
    if (positives[g] == 0)
      report.tpr_by_group[g] = std::nullopt;
    else
      report.tpr_by_group[g] =
          100.0 * static_cast<double>(true_positives[g]) / static_cast<double>(positives[g]);
  }
  if (report.tpr_by_group[0] && report.tpr_by_group[1]) {
    report.eq_opp = *report.tpr_by_group[1] - *report.tpr_by_group[0];
    report.abs_eq_opp = std::abs(*report.eq_opp);
  }
  return report;
}

// Trains a binary SVM classifier on (possibly projected) training
// representations and evaluates equality of opportunity on the eval corpus.
// This is the measurement protocol around the BCE-variant training.
struct EqOppAudit {
  EqOppReport report;
  LinearScorer classifier;
};

inline EqOppAudit eqopp_probe_audit(const Corpus& train_corpus, const std::vector<Vec>& train_reps,
                                    const Corpus& eval_corpus, const std::vector<Vec>& eval_reps,
                                    const std::string& target_attribute, const std::string& protected_attribute,
                                    std::uint64_t seed, const SvmConfig& svm = {}) {
  Rng rng(seed, "eqopp/svm");
  EqOppAudit audit;
  audit.classifier = train_linear_svm(train_reps, train_corpus.labels(target_attribute), 2, svm, rng);
  std::vector<double> scores;
  scores.reserve(eval_reps.size());
  for (const auto& x : eval_reps) scores.push_back(audit.classifier.binary_score(x));
  audit.report = eval_equal_opportunity(eval_corpus, scores, target_attribute, protected_attribute, 0.0);
  return audit;
}

// ---------------------------------------------------------------------------
// Aggregate audit report + JSON
// ---------------------------------------------------------------------------

struct AuditReport {
  std::optional<double> verification_before;
  std::optional<double> verification_after;
  std::vector<ProbeReport> probes;
  std::vector<ReductionRow> reductions;
  std::optional<EqOppReport> eqopp_before;
  std::optional<EqOppReport> eqopp_after;
  std::vector<AblationPoint> ablation;
};

inline nlohmann::json to_json(const ProbeReport& p) {
  return {{"attribute", p.attribute},       {"probe_kind", p.probe_kind}, {"representation", p.representation},
          {"train_accuracy", p.train_accuracy}, {"test_accuracy", p.test_accuracy}, {"chance_accuracy", p.chance_accuracy}};
}

inline nlohmann::json to_json(const EqOppReport& r) {
  nlohmann::json j;
  j["overall_accuracy"] = r.overall_accuracy;
  nlohmann::json tpr = nlohmann::json::object();
  for (const auto& [g, v] : r.tpr_by_group) {
    if (v)
      tpr[std::to_string(g)] = *v;
    else
      tpr[std::to_string(g)] = nullptr;
  }
  j["tpr_by_group"] = tpr;
  j["eq_opp"] = r.eq_opp ? nlohmann::json(*r.eq_opp) : nlohmann::json(nullptr);
  j["abs_eq_opp"] = r.abs_eq_opp ? nlohmann::json(*r.abs_eq_opp) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const AuditReport& report, const std::string& tool_version, int format_version) {
  nlohmann::json j;
  j["tool_version"] = tool_version;
  j["format_version"] = format_version;
  nlohmann::json verification = nlohmann::json::object();
  if (report.verification_before) verification["before"] = *report.verification_before;
  if (report.verification_after) verification["after"] = *report.verification_after;
  j["verification"] = verification;
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : report.probes) probes.push_back(to_json(p));
  j["probes"] = probes;
  nlohmann::json reductions = nlohmann::json::array();
  for (const auto& r : report.reductions)
    reductions.push_back({{"task", r.task},
                          {"before", r.before},
                          {"after", r.after},
                          {"random", r.random},
                          {"reduction", r.reduction}});
  j["reductions"] = reductions;
  nlohmann::json eqopp = nlohmann::json::object();
  if (report.eqopp_before) eqopp["before"] = to_json(*report.eqopp_before);
  if (report.eqopp_after) eqopp["after"] = to_json(*report.eqopp_after);
  j["eqopp"] = eqopp;
  nlohmann::json ablation = nlohmann::json::array();
  for (const auto& a : report.ablation)
    ablation.push_back({{"fraction_removed", a.fraction_removed}, {"accuracy", a.accuracy}, {"seed", a.seed}});
  j["ablation"] = ablation;
  return j;
}

}  // namespace sennet
