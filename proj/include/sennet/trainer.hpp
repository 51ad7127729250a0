#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sennet/audit.hpp"
#include "sennet/embeddings.hpp"
#include "sennet/errors.hpp"
#include "sennet/nn.hpp"
#include "sennet/rng.hpp"
#include "sennet/triplets.hpp"
#include "sennet/version.hpp"

namespace sennet {

struct SplitParams {
  std::size_t sensitive_identities = 0;  // 0 = 15% of identities
  std::size_t eval_identities = 0;       // 0 = 15% of identities
};

struct BiasParams {
  double ratio = 0.7;
  std::size_t train_per_class = 0;
  std::size_t eval_per_cell = 0;
};

struct TrainConfig {
  int n_layers = 3;
  std::size_t layer_width = 0;  // 0 = embedding dimension
  double alpha = 0.2;
  double target_prob = 0.9;
  std::vector<std::string> sensitive_attributes;  // empty = all schema attributes
  std::map<std::string, int> fixed_class;         // per-attribute fixed class D, default 0
  int epochs_per_layer = 30;
  int detector_epochs = 50;
  double detector_l2 = 0.0;
  double detector_train_fraction = 0.5;
  std::string alternation = "batch";  // "batch" | "epoch" | "layer" attribute alternation
  std::size_t batch_size = 128;
  AdamParams adam;  // lr 0.001, beta1 0.9, beta2 0.999
  std::uint64_t seed = 0;
  std::string primary_mode = "triplet";  // "triplet" | "bce"
  std::size_t max_triplets = 10000;      // 0 = unlimited (exhaustive mining)
  bool remine_per_layer = false;
  bool hinge_triplet = true;
  double regularizer_weight = 1.0;
  double init_noise = 0.01;
  std::size_t verification_pairs = 500;
  std::string target_attribute;  // bce mode primary label
  SplitParams split;
  BiasParams bias;

  int fixed_class_of(const std::string& attr) const {
    auto it = fixed_class.find(attr);
    return it == fixed_class.end() ? 0 : it->second;
  }
};

struct EpochLogEntry {
  int layer = 0;
  int epoch = 0;
  double primary_loss = 0.0;
  std::map<std::string, double> lambda_loss;
  std::map<std::string, double> detector_acc;
};

struct TrainState {
  ProjectionNetwork projection;
  std::map<std::string, SoftmaxHead> detectors;
  std::optional<SoftmaxHead> primary_head;
  std::vector<EpochLogEntry> history;
  int current_layer = 0;
  // Instrumentation: identities ever used for detector training and the
  // agnostic flag per attribute (held-out detector accuracy near chance).
  std::set<std::string> detector_train_identities;
  std::map<std::string, bool> agnostic;
};

struct TrainResult {
  TrainState state;
  AuditReport report;
  TripletList triplets;
};

// ---------------------------------------------------------------------------
// Config JSON (strict keys, defaults written back resolved)
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["n_layers"] = c.n_layers;
  j["layer_width"] = c.layer_width;
  j["alpha"] = c.alpha;
  j["target_prob"] = c.target_prob;
  j["sensitive_attributes"] = c.sensitive_attributes;
  j["fixed_class"] = c.fixed_class;
  j["epochs_per_layer"] = c.epochs_per_layer;
  j["detector_epochs"] = c.detector_epochs;
  j["detector_l2"] = c.detector_l2;
  j["detector_train_fraction"] = c.detector_train_fraction;
  j["alternation"] = c.alternation;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.adam.learning_rate;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["epsilon"] = c.adam.epsilon;
  j["seed"] = c.seed;
  j["primary_mode"] = c.primary_mode;
  j["max_triplets"] = c.max_triplets;
  j["remine_per_layer"] = c.remine_per_layer;
  j["hinge_triplet"] = c.hinge_triplet;
  j["regularizer_weight"] = c.regularizer_weight;
  j["init_noise"] = c.init_noise;
  j["verification_pairs"] = c.verification_pairs;
  j["target_attribute"] = c.target_attribute;
  j["split"] = {{"sensitive_identities", c.split.sensitive_identities}, {"eval_identities", c.split.eval_identities}};
  j["bias"] = {{"ratio", c.bias.ratio},
               {"train_per_class", c.bias.train_per_class},
               {"eval_per_cell", c.bias.eval_per_cell}};
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "format_version", "n_layers", "layer_width", "alpha", "target_prob", "sensitive_attributes",
      "fixed_class", "epochs_per_layer", "detector_epochs", "detector_l2", "detector_train_fraction",
      "alternation", "batch_size", "learning_rate", "beta1",
      "beta2", "epsilon", "seed", "primary_mode", "max_triplets", "remine_per_layer", "hinge_triplet",
      "regularizer_weight", "init_noise", "verification_pairs", "target_attribute", "split", "bias"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown config key: " + it.key());
  TrainConfig c;
  try {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.layer_width = j.value("layer_width", c.layer_width);
    c.alpha = j.value("alpha", c.alpha);
    c.target_prob = j.value("target_prob", c.target_prob);
    c.sensitive_attributes = j.value("sensitive_attributes", c.sensitive_attributes);
    if (j.contains("fixed_class")) c.fixed_class = j.at("fixed_class").get<std::map<std::string, int>>();
    c.epochs_per_layer = j.value("epochs_per_layer", c.epochs_per_layer);
    c.detector_epochs = j.value("detector_epochs", c.detector_epochs);
    c.detector_l2 = j.value("detector_l2", c.detector_l2);
    c.detector_train_fraction = j.value("detector_train_fraction", c.detector_train_fraction);
    c.alternation = j.value("alternation", c.alternation);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.epsilon = j.value("epsilon", c.adam.epsilon);
    c.seed = j.value("seed", c.seed);
    c.primary_mode = j.value("primary_mode", c.primary_mode);
    c.max_triplets = j.value("max_triplets", c.max_triplets);
    c.remine_per_layer = j.value("remine_per_layer", c.remine_per_layer);
    c.hinge_triplet = j.value("hinge_triplet", c.hinge_triplet);
    c.regularizer_weight = j.value("regularizer_weight", c.regularizer_weight);
    c.init_noise = j.value("init_noise", c.init_noise);
    c.verification_pairs = j.value("verification_pairs", c.verification_pairs);
    c.target_attribute = j.value("target_attribute", c.target_attribute);
    if (j.contains("split")) {
      c.split.sensitive_identities = j.at("split").value("sensitive_identities", c.split.sensitive_identities);
      c.split.eval_identities = j.at("split").value("eval_identities", c.split.eval_identities);
    }
    if (j.contains("bias")) {
      c.bias.ratio = j.at("bias").value("ratio", c.bias.ratio);
      c.bias.train_per_class = j.at("bias").value("train_per_class", c.bias.train_per_class);
      c.bias.eval_per_cell = j.at("bias").value("eval_per_cell", c.bias.eval_per_cell);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

inline void validate_config(const TrainConfig& c) {
  if (c.n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (c.alpha <= 0) throw ConfigError("alpha must be > 0");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.epochs_per_layer < 0 || c.detector_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (c.adam.learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
  if (c.target_prob < 0 || c.target_prob > 1) throw ConfigError("target_prob must be in [0, 1]");
  if (c.primary_mode != "triplet" && c.primary_mode != "bce")
    throw ConfigError("primary_mode must be 'triplet' or 'bce'");
  if (c.primary_mode == "bce" && c.target_attribute.empty())
    throw ConfigError("bce mode requires target_attribute");
  if (c.alternation != "batch" && c.alternation != "layer" && c.alternation != "epoch" &&
      !(c.alternation.rfind("epoch:", 0) == 0 && std::atoi(c.alternation.c_str() + 6) > 0))
    throw ConfigError("alternation must be 'batch', 'epoch', 'epoch:N', or 'layer'");
}

// ---------------------------------------------------------------------------
// Detector training
// ---------------------------------------------------------------------------

struct DetectorResult {
  SoftmaxHead head;
  double holdout_accuracy = 0.0;
  double chance = 0.0;
  bool degenerate = false;  // single-class training labels
};

// Trains a fresh sensitivity detector on phi(x) over the sensitive corpus
// with the projection frozen, and reports held-out accuracy on an
// identity-disjoint slice.
inline DetectorResult train_detector(const std::string& attribute, const Corpus& ds,
                                     const ProjectionNetwork& projection, const TrainConfig& cfg,
                                     std::uint64_t seed) {
  if (!ds.schema().find(attribute)) throw MissingLabelsError("train_detector: unknown attribute " + attribute);
  const int classes = ds.schema().class_count(attribute);
  // The adversary gets most of the sensitive corpus; the held-out slice only
  // feeds the reported accuracy.
  const auto [train_idx, test_idx] = identity_split(ds, seed, cfg.detector_train_fraction);
  if (train_idx.empty()) throw MissingLabelsError("train_detector: empty training side");

  std::vector<Vec> xtr, xte;
  std::vector<int> ytr, yte;
  for (std::size_t i : train_idx) {
    xtr.push_back(projection.forward(ds.record(i).vector));
    ytr.push_back(ds.record(i).attribute(attribute));
  }
  for (std::size_t i : test_idx) {
    xte.push_back(projection.forward(ds.record(i).vector));
    yte.push_back(ds.record(i).attribute(attribute));
  }

  HeadTrainConfig head_cfg;
  head_cfg.epochs = cfg.detector_epochs;
  head_cfg.batch_size = cfg.batch_size;
  head_cfg.adam = cfg.adam;
  head_cfg.l2 = cfg.detector_l2;
  Rng rng(seed, "detector/train");
  DetectorResult result;
  result.head = train_softmax_head(xtr, ytr, classes, head_cfg, rng);
  result.holdout_accuracy = xte.empty() ? head_accuracy(result.head, xtr, ytr) : head_accuracy(result.head, xte, yte);
  result.chance = chance_accuracy(ytr);
  result.degenerate = std::set<int>(ytr.begin(), ytr.end()).size() < 2;
  return result;
}

// ---------------------------------------------------------------------------
// Objective (value + gradients w.r.t. the layer under training)
// ---------------------------------------------------------------------------

struct ObjectiveResult {
  double total = 0.0;         // mean L_SN over the batch
  double primary_term = 0.0;  // mean triplet (or BCE) term
  double lambda_term = 0.0;   // mean summed regularizer term
  std::vector<LayerGrads> grads;
};

namespace detail {

// Adds the regularizer's contribution for one sample: value and dL/dphi
// through the frozen detector head.
inline double regularizer_pull(const SoftmaxHead& detector, const Vec& phi, int fixed_class, double target,
                               double weight, Vec& dphi) {
  const Vec p = detector.forward(phi);
  const double pd = p[static_cast<std::size_t>(fixed_class)];
  const double value = sensitive_regularizer(pd, target);
  const double dldp = weight * sensitive_regularizer_grad(pd, target);
  if (dldp != 0.0) {
    Vec g(p.size(), 0.0);
    g[static_cast<std::size_t>(fixed_class)] = dldp;
    const Vec dlogits = softmax_vjp(p, g);
    detector.backward_into(phi, dlogits, 1.0, nullptr, &dphi);
  }
  return value;
}

}  // namespace detail

// Eq-style batch objective in triplet mode:
//   mean_i [ tripletloss(phiA, phiP, phiN) + w (Lam_A + Lam_P + Lam_N) ]
// with the regularizer evaluated through the frozen detector of the batch's
// active attribute. Gradients cover layers >= first_trainable only; earlier
// layers stay frozen per the sequential scheme.
inline ObjectiveResult sensitivenets_objective(const std::vector<Triplet>& batch, const std::vector<Vec>& raw,
                                               const ProjectionNetwork& projection, const SoftmaxHead& detector,
                                               int fixed_class, const TrainConfig& cfg,
                                               std::size_t first_trainable) {
  ObjectiveResult result;
  result.grads = projection.make_grad_accumulators(first_trainable);
  if (batch.empty()) return result;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& t : batch) {
    const ForwardTrace ta = projection.forward_trace(raw[t.anchor_idx]);
    const ForwardTrace tp = projection.forward_trace(raw[t.positive_idx]);
    const ForwardTrace tn = projection.forward_trace(raw[t.negative_idx]);

    const TripletGrad tg = triplet_loss_grad(ta.output, tp.output, tn.output, cfg.alpha, cfg.hinge_triplet);
    result.primary_term += tg.loss * inv;

    Vec da = tg.da, dp = tg.dp, dn = tg.dn;
    double lam = 0.0;
    lam += detail::regularizer_pull(detector, ta.output, fixed_class, cfg.target_prob, cfg.regularizer_weight, da);
    lam += detail::regularizer_pull(detector, tp.output, fixed_class, cfg.target_prob, cfg.regularizer_weight, dp);
    lam += detail::regularizer_pull(detector, tn.output, fixed_class, cfg.target_prob, cfg.regularizer_weight, dn);
    result.lambda_term += cfg.regularizer_weight * lam * inv;

    projection.backward_into(ta, da, first_trainable, inv, result.grads);
    projection.backward_into(tp, dp, first_trainable, inv, result.grads);
    projection.backward_into(tn, dn, first_trainable, inv, result.grads);
  }
  result.total = result.primary_term + result.lambda_term;
  return result;
}

// BCE-variant batch objective: mean_r [ BCE(p1(phi_r), t_r) + w Lam(phi_r) ]
// with a frozen jointly-trained binary head providing p1.
inline ObjectiveResult bce_objective(const std::vector<std::size_t>& batch, const std::vector<Vec>& raw,
                                     const std::vector<int>& targets, const ProjectionNetwork& projection,
                                     const SoftmaxHead& primary_head, const SoftmaxHead& detector, int fixed_class,
                                     const TrainConfig& cfg, std::size_t first_trainable) {
  ObjectiveResult result;
  result.grads = projection.make_grad_accumulators(first_trainable);
  if (batch.empty()) return result;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t idx : batch) {
    const ForwardTrace trace = projection.forward_trace(raw[idx]);
    const Vec p = primary_head.forward(trace.output);
    const int target = targets[idx];
    result.primary_term += bce_loss(p[1], target) * inv;

    Vec dphi(trace.output.size(), 0.0);
    const double dldp1 = bce_grad_p(p[1], target);
    if (dldp1 != 0.0) {
      Vec g(p.size(), 0.0);
      g[1] = dldp1;
      const Vec dlogits = softmax_vjp(p, g);
      primary_head.backward_into(trace.output, dlogits, 1.0, nullptr, &dphi);
    }
    const double lam =
        detail::regularizer_pull(detector, trace.output, fixed_class, cfg.target_prob, cfg.regularizer_weight, dphi);
    result.lambda_term += cfg.regularizer_weight * lam * inv;
    projection.backward_into(trace, dphi, first_trainable, inv, result.grads);
  }
  result.total = result.primary_term + result.lambda_term;
  return result;
}

// Value-only evaluations (used by finite-difference checks).
inline double sensitivenets_objective_value(const std::vector<Triplet>& batch, const std::vector<Vec>& raw,
                                            const ProjectionNetwork& projection, const SoftmaxHead& detector,
                                            int fixed_class, const TrainConfig& cfg) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : batch) {
    const Vec a = projection.forward(raw[t.anchor_idx]);
    const Vec p = projection.forward(raw[t.positive_idx]);
    const Vec n = projection.forward(raw[t.negative_idx]);
    total += triplet_loss(a, p, n, cfg.alpha, cfg.hinge_triplet);
    for (const Vec* phi : {&a, &p, &n}) {
      const double pd = detector.forward(*phi)[static_cast<std::size_t>(fixed_class)];
      total += cfg.regularizer_weight * sensitive_regularizer(pd, cfg.target_prob);
    }
  }
  return total / static_cast<double>(batch.size());
}

inline double bce_objective_value(const std::vector<std::size_t>& batch, const std::vector<Vec>& raw,
                                  const std::vector<int>& targets, const ProjectionNetwork& projection,
                                  const SoftmaxHead& primary_head, const SoftmaxHead& detector, int fixed_class,
                                  const TrainConfig& cfg) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t idx : batch) {
    const Vec phi = projection.forward(raw[idx]);
    total += bce_loss(primary_head.forward(phi)[1], targets[idx]);
    const double pd = detector.forward(phi)[static_cast<std::size_t>(fixed_class)];
    total += cfg.regularizer_weight * sensitive_regularizer(pd, cfg.target_prob);
  }
  return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> resolve_attributes(const CorpusSchema& schema, const TrainConfig& cfg) {
  std::vector<std::string> attrs = cfg.sensitive_attributes;
  if (attrs.empty()) {
    for (const auto& a : schema.attributes)
      if (a.name != cfg.target_attribute) attrs.push_back(a.name);
  }
  if (attrs.empty()) throw ConfigError("no sensitive attributes to remove");
  for (const auto& a : attrs) {
    if (!schema.find(a)) throw MissingLabelsError("sensitive attribute not in schema: " + a);
    const int fixed = cfg.fixed_class_of(a);
    if (fixed < 0 || fixed >= schema.class_count(a))
      throw ConfigError("fixed_class for " + a + " out of range");
  }
  return attrs;
}

inline void retrain_detectors(TrainState& state, const std::vector<std::string>& attrs, const Corpus& ds,
                              const TrainConfig& cfg, const std::string& stream,
                              std::map<std::string, double>* accs) {
  for (const auto& attr : attrs) {
    const DetectorResult det =
        train_detector(attr, ds, state.projection, cfg, stream_seed(cfg.seed, stream + "/" + attr));
    state.detectors[attr] = det.head;
    state.agnostic[attr] = det.holdout_accuracy <= det.chance + 5.0;
    if (accs) (*accs)[attr] = det.holdout_accuracy;
  }
  for (const auto& id : ds.identities()) state.detector_train_identities.insert(id);
}

inline void retrain_primary_head(TrainState& state, const Corpus& dp, const std::vector<int>& targets,
                                 const TrainConfig& cfg, const std::string& stream) {
  std::vector<Vec> phis;
  phis.reserve(dp.size());
  for (const auto& rec : dp.records()) phis.push_back(state.projection.forward(rec.vector));
  HeadTrainConfig head_cfg;
  head_cfg.epochs = cfg.detector_epochs;
  head_cfg.batch_size = cfg.batch_size;
  head_cfg.adam = cfg.adam;
  Rng rng(cfg.seed, stream);
  state.primary_head = train_softmax_head(phis, targets, 2, head_cfg, rng);
}

}  // namespace detail

// Per-batch alternation schedule: with two attributes, even batches use the
// first and odd batches the second.
inline const std::string& active_attribute(const std::vector<std::string>& attrs, std::size_t batch_index) {
  return attrs[batch_index % attrs.size()];
}

// Trains one freshly-appended layer. Earlier layers are frozen; batches
// alternate the active sensitive attribute; detectors are retrained fresh at
// every epoch end on phi over the sensitive corpus.
inline void train_layer(TrainState& state, int layer_index, const TripletList& triplets,
                        const std::vector<Vec>& dp_raw, const std::vector<int>& bce_targets, const Corpus& dp,
                        const Corpus& ds, const std::vector<std::string>& attrs, const TrainConfig& cfg) {
  const std::size_t j = static_cast<std::size_t>(layer_index);
  if (j >= state.projection.layers.size()) throw ConfigError("train_layer: layer not appended yet");
  state.current_layer = layer_index;
  DenseLayer& layer = state.projection.layers[j];
  AdamState adam_w(layer.weights.data.size(), cfg.adam);
  AdamState adam_b(layer.bias.size(), cfg.adam);
  Rng batch_rng(cfg.seed, "batch/layer" + std::to_string(layer_index));
  const bool bce = cfg.primary_mode == "bce";
  if (bce && !state.primary_head) throw ConfigError("train_layer: bce mode requires a trained primary head");

  for (int epoch = 1; epoch <= cfg.epochs_per_layer; ++epoch) {
    double primary_sum = 0.0;
    std::map<std::string, double> lambda_sum, lambda_batches;
    std::size_t batches = 0;

    auto run_batch = [&](const std::vector<Triplet>& tbatch, const std::vector<std::size_t>& rbatch) {
      std::size_t slot = batches;
      if (cfg.alternation == "layer")
        slot = static_cast<std::size_t>(layer_index);
      else if (cfg.alternation == "epoch")
        slot = static_cast<std::size_t>(epoch - 1);
      else if (cfg.alternation.rfind("epoch:", 0) == 0)
        slot = static_cast<std::size_t>(epoch - 1) / static_cast<std::size_t>(std::atoi(cfg.alternation.c_str() + 6));
      const std::string& attr = active_attribute(attrs, slot);
      const SoftmaxHead& detector = state.detectors.at(attr);
      const int fixed = cfg.fixed_class_of(attr);
      ObjectiveResult obj;
      if (bce)
        obj = bce_objective(rbatch, dp_raw, bce_targets, state.projection, *state.primary_head, detector, fixed,
                            cfg, j);
      else
        obj = sensitivenets_objective(tbatch, dp_raw, state.projection, detector, fixed, cfg, j);
      adam_step(adam_w, layer.weights, obj.grads[j].dw);
      adam_step(adam_b, layer.bias, obj.grads[j].db);
      primary_sum += obj.primary_term;
      lambda_sum[attr] += obj.lambda_term;
      lambda_batches[attr] += 1.0;
      ++batches;
    };

    if (bce) {
      const std::vector<std::size_t> order = batch_rng.permutation(dp.size());
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        run_batch({}, std::vector<std::size_t>(order.begin() + static_cast<long>(start),
                                               order.begin() + static_cast<long>(end)));
      }
    } else {
      EpochSampler sampler(triplets, cfg.batch_size, batch_rng);
      while (sampler.has_next()) run_batch(sampler.next_batch(), {});
    }

    EpochLogEntry entry;
    entry.layer = layer_index;
    entry.epoch = epoch;
    entry.primary_loss = batches ? primary_sum / static_cast<double>(batches) : 0.0;
    for (const auto& [attr, sum] : lambda_sum)
      entry.lambda_loss[attr] = lambda_batches[attr] > 0 ? sum / lambda_batches[attr] : 0.0;

    detail::retrain_detectors(state, attrs, ds, cfg,
                              "detector/layer" + std::to_string(layer_index) + "/epoch" + std::to_string(epoch),
                              &entry.detector_acc);
    if (bce)
      detail::retrain_primary_head(state, dp, bce_targets, cfg,
                                   "primary/layer" + std::to_string(layer_index) + "/epoch" + std::to_string(epoch));
    state.history.push_back(std::move(entry));
  }
}

namespace detail {

struct AuditSide {
  double verification = 0.0;
  std::vector<ProbeReport> probes;  // softmax + linear_svm per attribute
};

inline AuditSide run_audit_side(const Corpus& eval, const std::vector<Vec>& reps,
                                const std::vector<std::string>& attrs, const TrainConfig& cfg,
                                const std::string& tag) {
  AuditSide side;
  side.verification = eval_verification(eval, reps, cfg.verification_pairs, stream_seed(cfg.seed, "audit/pairs")).accuracy;
  for (const auto& attr : attrs) {
    for (ProbeKind kind : {ProbeKind::Softmax, ProbeKind::LinearSvm}) {
      side.probes.push_back(
          train_probe(eval, attr, reps, kind, stream_seed(cfg.seed, "audit/probe/" + attr + "/" + to_string(kind)),
                      tag)
              .report);
    }
  }
  return side;
}

}  // namespace detail

// The full procedure: mine hard triplets from raw embeddings, train n layers
// sequentially with per-batch attribute alternation and per-epoch detector
// retraining, and audit the evaluation split before and after.
inline TrainResult train_sensitivenets(const Corpus& corpus, const SplitSpec& split, const TrainConfig& cfg) {
  validate_config(cfg);
  if (!split.disjoint()) throw BadSpecError("train_sensitivenets: split identity sets overlap");
  const std::vector<std::string> attrs = detail::resolve_attributes(corpus.schema(), cfg);

  const Corpus dp = corpus.subset_by_identities(split.primary_ids);
  const Corpus ds = corpus.subset_by_identities(split.sensitive_ids);
  const Corpus de = corpus.subset_by_identities(split.eval_ids);
  if (dp.empty() || ds.empty() || de.empty())
    throw NotEnoughIdentitiesError("train_sensitivenets: a split subset is empty");

  TrainResult result;
  TrainState& state = result.state;

  const std::vector<Vec> dp_raw = dp.vectors();
  result.triplets = mine_triplets(dp, dp_raw, cfg.alpha, cfg.max_triplets, stream_seed(cfg.seed, "mining"));

  const std::vector<Vec> de_raw = de.vectors();
  const detail::AuditSide before = detail::run_audit_side(de, de_raw, attrs, cfg, "raw");

  detail::retrain_detectors(state, attrs, ds, cfg, "detector/init", nullptr);

  const std::size_t d = corpus.dim();
  const std::size_t width = cfg.layer_width == 0 ? d : cfg.layer_width;
  TripletList triplets = result.triplets;
  for (int j = 0; j < cfg.n_layers; ++j) {
    const std::size_t in_dim = state.projection.output_dim(d);
    Rng init_rng(cfg.seed, "init/layer" + std::to_string(j));
    state.projection.layers.push_back(make_layer(width, in_dim, init_rng, cfg.init_noise));
    if (width != in_dim)
      detail::retrain_detectors(state, attrs, ds, cfg, "detector/layer" + std::to_string(j) + "/resize", nullptr);
    if (cfg.remine_per_layer && j > 0) {
      std::vector<Vec> current;
      current.reserve(dp_raw.size());
      for (const auto& x : dp_raw) current.push_back(state.projection.forward(x));
      triplets = mine_triplets(dp, current, cfg.alpha, cfg.max_triplets,
                               stream_seed(cfg.seed, "mining/layer" + std::to_string(j)));
    }
    train_layer(state, j, triplets, dp_raw, {}, dp, ds, attrs, cfg);
    detail::retrain_detectors(state, attrs, ds, cfg, "detector/layer" + std::to_string(j) + "/final", nullptr);
    state.projection.trained_depth = static_cast<std::size_t>(j + 1);
  }

  std::vector<Vec> de_projected;
  de_projected.reserve(de.size());
  for (const auto& x : de_raw) de_projected.push_back(state.projection.forward(x));
  const detail::AuditSide after = detail::run_audit_side(de, de_projected, attrs, cfg, "projected");

  AuditReport& report = result.report;
  report.verification_before = before.verification;
  report.verification_after = after.verification;
  report.probes = before.probes;
  report.probes.insert(report.probes.end(), after.probes.begin(), after.probes.end());
  report.reductions.push_back({"recognition", before.verification, after.verification, 50.0,
                               leakage_reduction(before.verification, after.verification, 50.0)});
  for (std::size_t i = 0; i < before.probes.size(); ++i) {
    const auto& b = before.probes[i];
    const auto& a = after.probes[i];
    if (b.test_accuracy == b.chance_accuracy) continue;  // degenerate baseline, no reduction row
    report.reductions.push_back({b.attribute + "/" + b.probe_kind, b.test_accuracy, a.test_accuracy,
                                 b.chance_accuracy,
                                 leakage_reduction(b.test_accuracy, a.test_accuracy, b.chance_accuracy)});
  }
  return result;
}

// BCE variant: same sequential loop, with the triplet term replaced by
// binary cross-entropy from a jointly-trained binary head on phi(x). The
// train corpus doubles as the sensitive-task corpus (it carries both the
// binary target and the protected attribute).
inline TrainResult train_bce_variant(const Corpus& train_corpus, const TrainConfig& cfg) {
  validate_config(cfg);
  if (cfg.primary_mode != "bce") throw ConfigError("train_bce_variant requires primary_mode = bce");
  if (train_corpus.schema().class_count(cfg.target_attribute) != 2)
    throw NonBinaryLabelsError("train_bce_variant: target attribute must be binary");
  const std::vector<std::string> attrs = detail::resolve_attributes(train_corpus.schema(), cfg);

  TrainResult result;
  TrainState& state = result.state;
  const Corpus& dp = train_corpus;
  const Corpus& ds = train_corpus;
  const std::vector<Vec> dp_raw = dp.vectors();
  const std::vector<int> targets = dp.labels(cfg.target_attribute);

  detail::retrain_detectors(state, attrs, ds, cfg, "detector/init", nullptr);
  detail::retrain_primary_head(state, dp, targets, cfg, "primary/init");

  const std::size_t d = train_corpus.dim();
  const std::size_t width = cfg.layer_width == 0 ? d : cfg.layer_width;
  for (int j = 0; j < cfg.n_layers; ++j) {
    const std::size_t in_dim = state.projection.output_dim(d);
    Rng init_rng(cfg.seed, "init/layer" + std::to_string(j));
    state.projection.layers.push_back(make_layer(width, in_dim, init_rng, cfg.init_noise));
    if (width != in_dim) {
      detail::retrain_detectors(state, attrs, ds, cfg, "detector/layer" + std::to_string(j) + "/resize", nullptr);
      detail::retrain_primary_head(state, dp, targets, cfg, "primary/layer" + std::to_string(j) + "/resize");
    }
    train_layer(state, j, {}, dp_raw, targets, dp, ds, attrs, cfg);
    detail::retrain_detectors(state, attrs, ds, cfg, "detector/layer" + std::to_string(j) + "/final", nullptr);
    state.projection.trained_depth = static_cast<std::size_t>(j + 1);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training log (JSON lines, one record per epoch)
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const EpochLogEntry& e) {
  return {{"layer", e.layer},
          {"epoch", e.epoch},
          {"primary_loss", e.primary_loss},
          {"lambda_loss", e.lambda_loss},
          {"detector_acc", e.detector_acc}};
}

inline void save_train_log(const std::vector<EpochLogEntry>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& e : history) out << to_json(e).dump() << "\n";
}

}  // namespace sennet
