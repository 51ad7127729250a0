#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "sennet/embeddings.hpp"
#include "sennet/errors.hpp"
#include "sennet/linalg.hpp"
#include "sennet/rng.hpp"

namespace sennet {

// Anchor and Positive share an identity; Negative has a different one.
struct Triplet {
  std::size_t anchor_idx = 0;
  std::size_t positive_idx = 0;
  std::size_t negative_idx = 0;

  bool operator==(const Triplet&) const = default;
  bool operator<(const Triplet& o) const {
    if (anchor_idx != o.anchor_idx) return anchor_idx < o.anchor_idx;
    if (positive_idx != o.positive_idx) return positive_idx < o.positive_idx;
    return negative_idx < o.negative_idx;
  }
};

// Hard triplets: ||x_A - x_N||^2 - ||x_A - x_P||^2 < alpha at mining time.
struct TripletList {
  std::vector<Triplet> triplets;
  double alpha = 0.2;
  std::uint64_t seed = 0;
  std::uint64_t corpus_fingerprint = 0;

  std::size_t size() const { return triplets.size(); }
  bool empty() const { return triplets.empty(); }
};

inline bool is_hard_triplet(const std::vector<Vec>& reps, const Triplet& t, double alpha) {
  return squared_distance(reps[t.anchor_idx], reps[t.negative_idx]) -
             squared_distance(reps[t.anchor_idx], reps[t.positive_idx]) <
         alpha;
}

namespace detail {

struct MiningIndex {
  // Records eligible as anchors (identity has >= 2 records).
  std::vector<std::size_t> anchors;
  // Cumulative combination weight per anchor: (c_a - 1) * (n - c_a).
  std::vector<double> cum_weight;
  double total_weight = 0.0;
};

inline MiningIndex build_mining_index(const Corpus& corpus) {
  MiningIndex index;
  const std::size_t n = corpus.size();
  for (const auto& [identity, idxs] : corpus.identity_index()) {
    if (idxs.size() < 2) continue;  // cannot form Anchor/Positive
    const double w = static_cast<double>(idxs.size() - 1) * static_cast<double>(n - idxs.size());
    if (w <= 0) continue;
    for (std::size_t i : idxs) {
      index.anchors.push_back(i);
      index.total_weight += w;
      index.cum_weight.push_back(index.total_weight);
    }
  }
  return index;
}

// Maps k in [0, n - own.size()) to the k-th record index not in `own`
// (own is sorted ascending).
inline std::size_t complement_index(std::size_t k, const std::vector<std::size_t>& own) {
  std::size_t idx = k;
  for (std::size_t o : own) {
    if (o <= idx)
      ++idx;
    else
      break;
  }
  return idx;
}

}  // namespace detail

constexpr std::size_t kUnlimitedTriplets = 0;
constexpr std::size_t kMiningBudgetFactor = 50;

// Mines hard triplets under the given representation (raw x or a current
// projection). max_count = kUnlimitedTriplets enumerates every valid
// combination deterministically; a finite max_count draws candidate
// combinations uniformly (seeded) until enough hard ones are found or the
// scan budget (kMiningBudgetFactor * max_count draws) is exhausted.
inline TripletList mine_triplets(const Corpus& corpus, const std::vector<Vec>& reps, double alpha,
                                 std::size_t max_count, std::uint64_t seed) {
  if (alpha <= 0) throw BadSpecError("mine_triplets: alpha must be > 0");
  if (reps.size() != corpus.size()) throw ShapeMismatchError("mine_triplets: representation count != corpus size");
  std::size_t mineable_identities = 0;
  for (const auto& [_, idxs] : corpus.identity_index())
    if (idxs.size() >= 2) ++mineable_identities;
  if (mineable_identities < 2)
    throw NotEnoughIdentitiesError("mine_triplets: need >= 2 identities with >= 2 records each, have " +
                                   std::to_string(mineable_identities));

  TripletList list;
  list.alpha = alpha;
  list.seed = seed;
  list.corpus_fingerprint = corpus.fingerprint();

  const std::size_t n = corpus.size();
  if (max_count == kUnlimitedTriplets) {
    // Exhaustive scan in record order; one distance row per anchor.
    for (const auto& [identity, own] : corpus.identity_index()) {
      if (own.size() < 2) continue;
      for (std::size_t a : own) {
        Vec dist_sq(n);
        for (std::size_t j = 0; j < n; ++j) dist_sq[j] = squared_distance(reps[a], reps[j]);
        for (std::size_t p : own) {
          if (p == a) continue;
          const double pos_d = dist_sq[p];
          for (std::size_t neg = 0; neg < n; ++neg) {
            if (corpus.record(neg).identity == identity) continue;
            if (dist_sq[neg] - pos_d < alpha) list.triplets.push_back({a, p, neg});
          }
        }
      }
    }
    std::sort(list.triplets.begin(), list.triplets.end());
  } else {
    const detail::MiningIndex index = detail::build_mining_index(corpus);
    Rng rng(seed);
    std::unordered_set<std::uint64_t> seen;
    const std::size_t budget = kMiningBudgetFactor * max_count;
    for (std::size_t draw = 0; draw < budget && list.triplets.size() < max_count; ++draw) {
      // Anchor weighted by its combination count keeps (A,P,N) draws uniform
      // over the full valid-combination space.
      const double u = rng.uniform_real() * index.total_weight;
      const auto it = std::lower_bound(index.cum_weight.begin(), index.cum_weight.end(), u);
      const std::size_t a = index.anchors[static_cast<std::size_t>(it - index.cum_weight.begin())];
      const auto& own = corpus.identity_index().at(corpus.record(a).identity);

      std::size_t p_slot = rng.uniform_index(own.size() - 1);
      std::size_t p = own[p_slot];
      if (p == a) p = own[own.size() - 1];

      const std::size_t neg = detail::complement_index(rng.uniform_index(n - own.size()), own);

      Triplet t{a, p, neg};
      if (!is_hard_triplet(reps, t, alpha)) continue;
      const std::uint64_t key = (static_cast<std::uint64_t>(a) * n + p) * n + neg;
      if (seen.insert(key).second) list.triplets.push_back(t);
    }
  }

  if (list.triplets.empty())
    throw EmptyResultError("mine_triplets: no triplet satisfies the margin condition (corpus trivially separated)");
  return list;
}

inline TripletList mine_triplets(const Corpus& corpus, double alpha, std::size_t max_count, std::uint64_t seed) {
  return mine_triplets(corpus, corpus.vectors(), alpha, max_count, seed);
}

// Uniform without-replacement batch: a seeded partial Fisher-Yates draw.
inline std::vector<Triplet> sample_batch(const TripletList& list, std::size_t batch_size, Rng& rng) {
  if (list.empty()) throw EmptyResultError("sample_batch: empty triplet list");
  std::vector<std::size_t> order = rng.permutation(list.size());
  const std::size_t take = std::min(batch_size, list.size());
  std::vector<Triplet> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(list.triplets[order[i]]);
  return out;
}

// One training epoch: a seeded permutation of the list, consumed in
// batch_size chunks (every triplet appears exactly once per epoch).
class EpochSampler {
 public:
  EpochSampler(const TripletList& list, std::size_t batch_size, Rng& rng)
      : list_(list), batch_size_(std::max<std::size_t>(1, batch_size)), order_(rng.permutation(list.size())) {}

  bool has_next() const { return cursor_ < order_.size(); }

  std::vector<Triplet> next_batch() {
    std::vector<Triplet> out;
    const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
    out.reserve(end - cursor_);
    for (; cursor_ < end; ++cursor_) out.push_back(list_.triplets[order_[cursor_]]);
    return out;
  }

  std::size_t batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

 private:
  const TripletList& list_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Serialization: CSV of indices plus a JSON sidecar pinning the mining run.
// ---------------------------------------------------------------------------

inline void save_triplets(const TripletList& list, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path);
  out << "anchor_idx,positive_idx,negative_idx\n";
  for (const auto& t : list.triplets) out << t.anchor_idx << "," << t.positive_idx << "," << t.negative_idx << "\n";
  nlohmann::json j;
  j["alpha"] = list.alpha;
  j["seed"] = list.seed;
  j["corpus_fingerprint"] = list.corpus_fingerprint;
  std::ofstream side(metadata_path_for(csv_path));
  if (!side) throw IoError("cannot write sidecar for " + csv_path);
  side << j.dump(2) << "\n";
}

inline TripletList load_triplets(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot read " + csv_path);
  TripletList list;
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) !=
                                     std::vector<std::string>{"anchor_idx", "positive_idx", "negative_idx"})
    throw SchemaMismatchError(csv_path + ": bad triplet header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 3) throw SchemaMismatchError(csv_path + ": bad triplet row: " + line);
    list.triplets.push_back({std::stoull(cells[0]), std::stoull(cells[1]), std::stoull(cells[2])});
  }
  std::ifstream side(metadata_path_for(csv_path));
  if (side) {
    nlohmann::json j;
    side >> j;
    list.alpha = j.value("alpha", 0.2);
    list.seed = j.value("seed", std::uint64_t{0});
    list.corpus_fingerprint = j.value("corpus_fingerprint", std::uint64_t{0});
  }
  return list;
}

}  // namespace sennet
