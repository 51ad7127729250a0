// sennet: learn attribute-agnostic projections of embedding vectors and audit
// what they leak. Subcommands cover corpus synthesis, training, audits, plot
// exports, and manifest-based reruns.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sennet/audit.hpp"
#include "sennet/checkpoint.hpp"
#include "sennet/embeddings.hpp"
#include "sennet/manifest.hpp"
#include "sennet/pca.hpp"
#include "sennet/trainer.hpp"
#include "sennet/triplets.hpp"
#include "sennet/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sennet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitMismatch = 4;

std::string manifest_path_for(const std::string& out_path) {
  const fs::path p(out_path);
  fs::path q = p;
  q.replace_extension();
  return q.string() + ".manifest.json";
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": bad JSON: " + e.what());
  }
  return j;
}

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

Corpus load_corpus_checked(const std::string& path) {
  if (!fs::exists(path)) throw IoError("corpus file not found: " + path);
  if (!fs::exists(metadata_path_for(path))) throw IoError("corpus metadata not found: " + metadata_path_for(path));
  return load_corpus(path);
}

// Representation vectors for an audit: raw corpus vectors or the checkpoint
// projection applied to them. A checkpoint whose input dimension disagrees
// with the corpus is a hard mismatch.
std::vector<Vec> representation_vectors(const Corpus& corpus, const std::string& checkpoint_path,
                                        const std::string& representation) {
  if (representation == "raw") return corpus.vectors();
  if (representation != "projected") throw ConfigError("representation must be raw or projected");
  if (checkpoint_path.empty()) throw ConfigError("projected representation requires --checkpoint");
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.projection.input_dim(corpus.dim()) != corpus.dim())
    throw DimMismatchError("checkpoint input dim " + std::to_string(ckpt.projection.input_dim(corpus.dim())) +
                           " != corpus dim " + std::to_string(corpus.dim()));
  return apply_projection(ckpt.projection, corpus.vectors());
}

ProbeKind parse_probe_kind(const std::string& s) {
  if (s == "softmax") return ProbeKind::Softmax;
  if (s == "linear_svm") return ProbeKind::LinearSvm;
  throw ConfigError("unknown probe kind: " + s + " (use softmax or linear_svm)");
}

// ---------------------------------------------------------------------------
// Command handlers. Each takes the resolved parameter object that also lands
// in the manifest, so a rerun goes through exactly the same code path.
// ---------------------------------------------------------------------------

void run_gen(const json& params) {
  SyntheticSpec spec;
  spec.identities = params.at("identities").get<std::size_t>();
  spec.images_per_identity = params.at("images").get<std::size_t>();
  spec.dim = params.at("dim").get<std::size_t>();
  spec.noise_scale = params.at("noise").get<double>();
  spec.seed = params.at("seed").get<std::uint64_t>();
  for (const auto& a : params.at("attributes")) {
    SyntheticAttribute attr;
    attr.name = a.at("name").get<std::string>();
    attr.class_count = a.at("classes").get<int>();
    attr.offset_scale = a.at("offset").get<double>();
    attr.per_record = a.at("per_record").get<bool>();
    spec.attributes.push_back(attr);
  }
  const std::string out = params.at("out").get<std::string>();

  RunManifest manifest;
  manifest.command = "gen";
  manifest.config = params;
  manifest.seed = spec.seed;
  manifest.outputs = {out, metadata_path_for(out)};
  ensure_parent_dir(out);
  write_manifest(manifest, manifest_path_for(out));

  const Corpus corpus = generate_synthetic(spec);
  save_csv(corpus, out);
  std::cout << "wrote " << corpus.size() << " records to " << out << "\n";
}

json gen_params_from_flags(const std::string& out, std::size_t identities, std::size_t images, std::size_t dim,
                           double noise, std::uint64_t seed, const std::vector<std::string>& attr_flags) {
  json attrs = json::array();
  if (attr_flags.empty()) {
    attrs.push_back({{"name", "gender"}, {"classes", 2}, {"offset", 0.35}, {"per_record", false}});
    attrs.push_back({{"name", "ethnicity"}, {"classes", 3}, {"offset", 0.35}, {"per_record", false}});
  }
  for (const auto& flag : attr_flags) {
    // name:classes[:offset[:record]]
    std::vector<std::string> parts;
    std::string cur;
    for (char c : flag) {
      if (c == ':') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    parts.push_back(cur);
    if (parts.size() < 2) throw ConfigError("bad --attr spec: " + flag + " (want name:classes[:offset[:record]])");
    json a;
    a["name"] = parts[0];
    a["classes"] = std::stoi(parts[1]);
    a["offset"] = parts.size() > 2 ? std::stod(parts[2]) : 0.35;
    a["per_record"] = parts.size() > 3 && parts[3] == "record";
    attrs.push_back(a);
  }
  return json{{"out", out},     {"identities", identities}, {"images", images}, {"dim", dim},
              {"noise", noise}, {"seed", seed},             {"attributes", attrs}};
}

void run_train(const json& params) {
  const std::string corpus_path = params.at("corpus").get<std::string>();
  const std::string out_dir = params.at("out_dir").get<std::string>();
  const bool dry_run = params.value("dry_run", false);
  TrainConfig cfg = train_config_from_json(params.at("config"));
  validate_config(cfg);

  const Corpus corpus = load_corpus_checked(corpus_path);

  // Resolve split defaults against this corpus so the manifest pins them.
  json resolved = params;
  if (cfg.primary_mode == "triplet") {
    const std::size_t ids = corpus.identities().size();
    if (cfg.split.sensitive_identities == 0)
      cfg.split.sensitive_identities = std::max<std::size_t>(2, ids * 15 / 100);
    if (cfg.split.eval_identities == 0) cfg.split.eval_identities = std::max<std::size_t>(2, ids * 15 / 100);
  } else {
    if (cfg.bias.train_per_class == 0 || cfg.bias.eval_per_cell == 0)
      throw ConfigError("bce mode requires bias.train_per_class and bias.eval_per_cell");
  }
  resolved["config"] = to_json(cfg);
  resolved["dry_run"] = dry_run;

  fs::create_directories(out_dir);
  const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.json").string();
  const std::string log_path = (fs::path(out_dir) / "log.jsonl").string();
  const std::string audit_path = (fs::path(out_dir) / "audit.json").string();
  const std::string triplets_path = (fs::path(out_dir) / "triplets.csv").string();

  RunManifest manifest;
  manifest.command = "train";
  manifest.config = resolved;
  manifest.seed = cfg.seed;
  manifest.inputs[corpus_path] = file_fingerprint(corpus_path);
  manifest.inputs[metadata_path_for(corpus_path)] = file_fingerprint(metadata_path_for(corpus_path));
  manifest.outputs = {ckpt_path, log_path, audit_path};
  if (cfg.primary_mode == "triplet") manifest.outputs.push_back(triplets_path);
  write_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
  if (dry_run) {
    std::cout << "dry run: config valid, manifest written\n";
    return;
  }

  TrainResult result;
  AuditReport report;
  if (cfg.primary_mode == "triplet") {
    const SplitSpec split =
        make_split(corpus, cfg.split.sensitive_identities, cfg.split.eval_identities, cfg.seed);
    result = train_sensitivenets(corpus, split, cfg);
    report = result.report;
    save_triplets(result.triplets, triplets_path);
  } else {
    const std::string protected_attr = detail::resolve_attributes(corpus.schema(), cfg).front();
    const BiasedSplit split = build_biased_split(corpus, cfg.target_attribute, protected_attr, cfg.bias.ratio,
                                                 cfg.bias.train_per_class, cfg.bias.eval_per_cell, cfg.seed);
    result = train_bce_variant(split.train, cfg);
    const EqOppAudit before =
        eqopp_probe_audit(split.train, split.train.vectors(), split.eval, split.eval.vectors(),
                          cfg.target_attribute, protected_attr, stream_seed(cfg.seed, "audit/eqopp"));
    const auto train_proj = apply_projection(result.state.projection, split.train.vectors());
    const auto eval_proj = apply_projection(result.state.projection, split.eval.vectors());
    const EqOppAudit after = eqopp_probe_audit(split.train, train_proj, split.eval, eval_proj,
                                               cfg.target_attribute, protected_attr,
                                               stream_seed(cfg.seed, "audit/eqopp"));
    report.eqopp_before = before.report;
    report.eqopp_after = after.report;
  }

  Checkpoint ckpt{result.state.projection, result.state.detectors};
  if (result.state.primary_head) ckpt.heads["primary"] = *result.state.primary_head;
  save_checkpoint(ckpt, ckpt_path);
  save_train_log(result.state.history, log_path);
  write_json_file(to_json(report, kToolVersion, kFormatVersion), audit_path);
  std::cout << "training complete; outputs in " << out_dir << "\n";
}

void run_audit_probe(const json& params) {
  const Corpus corpus = load_corpus_checked(params.at("corpus").get<std::string>());
  const std::string representation = params.at("representation").get<std::string>();
  const auto reps = representation_vectors(corpus, params.value("checkpoint", ""), representation);
  const ProbeResult probe =
      train_probe(corpus, params.at("attribute").get<std::string>(), reps,
                  parse_probe_kind(params.at("kind").get<std::string>()), params.at("seed").get<std::uint64_t>(),
                  representation);
  json out = to_json(probe.report);
  out["tool_version"] = kToolVersion;
  out["format_version"] = kFormatVersion;
  write_json_file(out, params.at("out").get<std::string>());
  std::printf("%s %s probe on %s: test accuracy %.2f%% (chance %.2f%%)\n", probe.report.attribute.c_str(),
              probe.report.probe_kind.c_str(), representation.c_str(), probe.report.test_accuracy,
              probe.report.chance_accuracy);
}

void run_audit_verify(const json& params) {
  const Corpus corpus = load_corpus_checked(params.at("corpus").get<std::string>());
  const std::string representation = params.at("representation").get<std::string>();
  const auto reps = representation_vectors(corpus, params.value("checkpoint", ""), representation);
  const VerificationReport report =
      eval_verification(corpus, reps, params.at("pairs").get<std::size_t>(), params.at("seed").get<std::uint64_t>());
  json out = {{"tool_version", kToolVersion},
              {"format_version", kFormatVersion},
              {"accuracy", report.accuracy},
              {"threshold", report.threshold},
              {"positive_pairs", report.positive_pairs},
              {"negative_pairs", report.negative_pairs}};
  write_json_file(out, params.at("out").get<std::string>());
  std::printf("verification (%s): %.2f%% at threshold %.6f\n", representation.c_str(), report.accuracy,
              report.threshold);
}

void run_audit_reduce(const json& params) {
  const double value = leakage_reduction(params.at("before").get<double>(), params.at("after").get<double>(),
                                         params.at("random").get<double>());
  if (params.contains("out") && !params.at("out").get<std::string>().empty()) {
    write_json_file(json{{"tool_version", kToolVersion},
                         {"format_version", kFormatVersion},
                         {"before", params.at("before")},
                         {"after", params.at("after")},
                         {"random", params.at("random")},
                         {"reduction", value}},
                    params.at("out").get<std::string>());
  }
  std::printf("%.6g\n", value);
}

void run_audit_eqopp(const json& params) {
  const Corpus corpus = load_corpus_checked(params.at("corpus").get<std::string>());
  // scores CSV: record_id,score
  const std::string scores_path = params.at("scores").get<std::string>();
  std::ifstream in(scores_path);
  if (!in) throw IoError("cannot read " + scores_path);
  std::map<std::string, double> by_id;
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) != std::vector<std::string>{"record_id", "score"})
    throw SchemaMismatchError(scores_path + ": want header record_id,score");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 2) throw SchemaMismatchError(scores_path + ": bad row: " + line);
    by_id[cells[0]] = std::stod(cells[1]);
  }
  std::vector<double> scores;
  for (const auto& rec : corpus.records()) {
    auto it = by_id.find(rec.record_id);
    if (it == by_id.end()) throw SchemaMismatchError("no score for record " + rec.record_id);
    scores.push_back(it->second);
  }
  const EqOppReport report =
      eval_equal_opportunity(corpus, scores, params.at("target").get<std::string>(),
                             params.at("protected").get<std::string>(), params.at("threshold").get<double>());
  json out = to_json(report);
  out["tool_version"] = kToolVersion;
  out["format_version"] = kFormatVersion;
  write_json_file(out, params.at("out").get<std::string>());
  if (report.eq_opp)
    std::printf("%.6g\n", *report.eq_opp);
  else
    std::printf("undefined (a group has no positives)\n");
}

void run_audit_ablate(const json& params) {
  const Corpus corpus = load_corpus_checked(params.at("corpus").get<std::string>());
  const std::string representation = params.at("representation").get<std::string>();
  const auto reps = representation_vectors(corpus, params.value("checkpoint", ""), representation);
  const auto points = feature_ablation(corpus, params.at("attribute").get<std::string>(), reps,
                                       params.at("fractions").get<std::vector<double>>(),
                                       parse_probe_kind(params.at("kind").get<std::string>()),
                                       params.at("seed").get<std::uint64_t>());
  const std::string out_path = params.at("out").get<std::string>();
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);
  out << "fraction_removed,accuracy,seed\n";
  for (const auto& p : points)
    out << detail::format_double(p.fraction_removed) << "," << detail::format_double(p.accuracy) << "," << p.seed
        << "\n";
  std::printf("wrote %zu ablation points to %s\n", points.size(), out_path.c_str());
}

void run_audit_project2d(const json& params) {
  const Corpus corpus = load_corpus_checked(params.at("corpus").get<std::string>());
  const std::string representation = params.at("representation").get<std::string>();
  const auto reps = representation_vectors(corpus, params.value("checkpoint", ""), representation);
  const auto points = project_2d(corpus, reps);
  save_projection_csv(corpus, points, params.at("out").get<std::string>());
  const std::string svg = params.value("svg", "");
  if (!svg.empty()) {
    std::string color = params.value("color_attr", "");
    if (color.empty() && !corpus.schema().attributes.empty()) color = corpus.schema().attributes.front().name;
    if (color.empty()) throw ConfigError("--svg needs an attribute to color by");
    save_projection_svg(corpus, points, color, svg);
  }
  std::printf("wrote %zu projected points\n", points.size());
}

// Single-output audit commands share the manifest bookkeeping.
void run_audit_command(const std::string& name, const json& params, const std::vector<std::string>& input_keys,
                       void (*handler)(const json&)) {
  RunManifest manifest;
  manifest.command = name;
  manifest.config = params;
  manifest.seed = params.value("seed", std::uint64_t{0});
  for (const auto& key : input_keys) {
    if (!params.contains(key)) continue;
    const std::string path = params.at(key).get<std::string>();
    if (path.empty()) continue;
    manifest.inputs[path] = file_fingerprint(path);
    if (key == "corpus") manifest.inputs[metadata_path_for(path)] = file_fingerprint(metadata_path_for(path));
  }
  if (params.contains("out") && !params.at("out").get<std::string>().empty()) {
    manifest.outputs.push_back(params.at("out").get<std::string>());
    ensure_parent_dir(params.at("out").get<std::string>());
    write_manifest(manifest, manifest_path_for(params.at("out").get<std::string>()));
  }
  handler(params);
}

void dispatch(const std::string& command, const json& params);

void run_rerun(const std::string& manifest_path, const std::string& out_dir) {
  const RunManifest manifest = load_manifest(manifest_path);
  for (const auto& [path, fp] : manifest.inputs) {
    if (!fs::exists(path)) throw IoError("rerun: input missing: " + path);
    if (file_fingerprint(path) != fp) throw IoError("rerun: input changed since manifest: " + path);
  }
  json params = manifest.config;
  if (!out_dir.empty()) {
    // Redirect outputs into the new directory, keeping file names.
    fs::create_directories(out_dir);
    auto redirect = [&](const char* key) {
      if (params.contains(key))
        params[key] = (fs::path(out_dir) / fs::path(params.at(key).get<std::string>()).filename()).string();
    };
    if (params.contains("out_dir"))
      params["out_dir"] = out_dir;
    else {
      redirect("out");
      redirect("svg");
    }
  }
  dispatch(manifest.command, params);
}

void dispatch(const std::string& command, const json& params) {
  if (command == "gen")
    run_gen(params);
  else if (command == "train")
    run_train(params);
  else if (command == "audit probe")
    run_audit_command(command, params, {"corpus", "checkpoint"}, run_audit_probe);
  else if (command == "audit verify")
    run_audit_command(command, params, {"corpus", "checkpoint"}, run_audit_verify);
  else if (command == "audit reduce")
    run_audit_command(command, params, {}, run_audit_reduce);
  else if (command == "audit eqopp")
    run_audit_command(command, params, {"corpus", "scores"}, run_audit_eqopp);
  else if (command == "audit ablate")
    run_audit_command(command, params, {"corpus", "checkpoint"}, run_audit_ablate);
  else if (command == "audit project2d")
    run_audit_command(command, params, {"corpus", "checkpoint"}, run_audit_project2d);
  else
    throw ConfigError("unknown command in manifest: " + command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agnostic embedding projections: corpus tools, adversarial training, leakage audits"};
  app.require_subcommand(1);

  // --- gen ---
  auto* gen = app.add_subcommand("gen", "synthesize a labeled embedding corpus");
  std::string gen_out;
  std::size_t gen_identities = 600, gen_images = 6, gen_dim = 64;
  double gen_noise = 0.125;
  std::uint64_t gen_seed = 0;
  std::vector<std::string> gen_attrs;
  gen->add_option("--out", gen_out, "output CSV path")->required();
  gen->add_option("--identities", gen_identities, "number of identities");
  gen->add_option("--images", gen_images, "images per identity");
  gen->add_option("--dim", gen_dim, "embedding dimension");
  gen->add_option("--noise", gen_noise, "per-coordinate Gaussian noise scale");
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--attr", gen_attrs, "attribute spec name:classes[:offset[:record]] (repeatable)");

  // --- train ---
  auto* train = app.add_subcommand("train", "run projection training from a config file");
  std::string train_config, train_corpus, train_out_dir;
  bool train_dry = false;
  train->add_option("--config", train_config, "training config JSON")->required();
  train->add_option("--corpus", train_corpus, "corpus CSV")->required();
  train->add_option("--out-dir", train_out_dir, "output directory")->required();
  train->add_flag("--dry-run", train_dry, "validate config and write manifest only");

  // --- audit ---
  auto* audit = app.add_subcommand("audit", "leakage / utility / fairness reports");
  audit->require_subcommand(1);
  std::string a_corpus, a_checkpoint, a_repr = "raw", a_attribute, a_kind = "softmax", a_out, a_scores, a_target,
              a_protected, a_svg, a_color;
  std::uint64_t a_seed = 0;
  std::size_t a_pairs = 500;
  double a_before = 0, a_after = 0, a_random = 0, a_threshold = 0;
  std::vector<double> a_fractions;

  auto add_common = [&](CLI::App* sub, bool with_checkpoint = true) {
    sub->add_option("--corpus", a_corpus, "corpus CSV")->required();
    if (with_checkpoint) {
      sub->add_option("--checkpoint", a_checkpoint, "projection checkpoint JSON");
      sub->add_option("--representation", a_repr, "raw or projected");
    }
    sub->add_option("--seed", a_seed, "seed");
  };

  auto* probe = audit->add_subcommand("probe", "train an attribute probe and report accuracy");
  add_common(probe);
  probe->add_option("--attribute", a_attribute, "attribute to probe")->required();
  probe->add_option("--kind", a_kind, "softmax or linear_svm");
  probe->add_option("--out", a_out, "report JSON path")->required();

  auto* verify = audit->add_subcommand("verify", "pair verification accuracy");
  add_common(verify);
  verify->add_option("--pairs", a_pairs, "pair budget per split half");
  verify->add_option("--out", a_out, "report JSON path")->required();

  auto* reduce = audit->add_subcommand("reduce", "leakage reduction from before/after/random accuracies");
  reduce->add_option("--before", a_before, "accuracy before projection (%)")->required();
  reduce->add_option("--after", a_after, "accuracy after projection (%)")->required();
  reduce->add_option("--random", a_random, "chance accuracy (%)")->required();
  reduce->add_option("--out", a_out, "optional report JSON path");

  auto* eqopp = audit->add_subcommand("eqopp", "equality of opportunity from classifier scores");
  eqopp->add_option("--corpus", a_corpus, "evaluation corpus CSV")->required();
  eqopp->add_option("--scores", a_scores, "scores CSV (record_id,score)")->required();
  eqopp->add_option("--target", a_target, "binary target attribute")->required();
  eqopp->add_option("--protected", a_protected, "binary protected attribute")->required();
  eqopp->add_option("--threshold", a_threshold, "decision threshold on scores");
  eqopp->add_option("--out", a_out, "report JSON path")->required();

  auto* ablate = audit->add_subcommand("ablate", "probe accuracy vs fraction of features removed");
  add_common(ablate);
  ablate->add_option("--attribute", a_attribute, "attribute to probe")->required();
  ablate->add_option("--kind", a_kind, "softmax or linear_svm");
  ablate->add_option("--fractions", a_fractions, "fractions in [0,1) (repeatable)")->required();
  ablate->add_option("--out", a_out, "points CSV path")->required();

  auto* project2d = audit->add_subcommand("project2d", "2-D principal-component export for plotting");
  add_common(project2d);
  project2d->add_option("--out", a_out, "coordinates CSV path")->required();
  project2d->add_option("--svg", a_svg, "optional SVG scatter path");
  project2d->add_option("--color-attr", a_color, "attribute to color the SVG by");

  // --- rerun ---
  auto* rerun = app.add_subcommand("rerun", "re-execute a command from its manifest");
  std::string rerun_manifest, rerun_out_dir;
  rerun->add_option("manifest", rerun_manifest, "manifest JSON path")->required();
  rerun->add_option("--out-dir", rerun_out_dir, "redirect outputs into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      run_gen(gen_params_from_flags(gen_out, gen_identities, gen_images, gen_dim, gen_noise, gen_seed, gen_attrs));
    } else if (train->parsed()) {
      json params;
      params["corpus"] = train_corpus;
      params["out_dir"] = train_out_dir;
      params["dry_run"] = train_dry;
      params["config"] = load_json_file(train_config);
      params["config_file"] = train_config;
      run_train(params);
    } else if (audit->parsed()) {
      json params;
      params["seed"] = a_seed;
      if (probe->parsed()) {
        params["corpus"] = a_corpus;
        params["checkpoint"] = a_checkpoint;
        params["representation"] = a_repr;
        params["attribute"] = a_attribute;
        params["kind"] = a_kind;
        params["out"] = a_out;
        dispatch("audit probe", params);
      } else if (verify->parsed()) {
        params["corpus"] = a_corpus;
        params["checkpoint"] = a_checkpoint;
        params["representation"] = a_repr;
        params["pairs"] = a_pairs;
        params["out"] = a_out;
        dispatch("audit verify", params);
      } else if (reduce->parsed()) {
        params["before"] = a_before;
        params["after"] = a_after;
        params["random"] = a_random;
        params["out"] = a_out;
        dispatch("audit reduce", params);
      } else if (eqopp->parsed()) {
        params["corpus"] = a_corpus;
        params["scores"] = a_scores;
        params["target"] = a_target;
        params["protected"] = a_protected;
        params["threshold"] = a_threshold;
        params["out"] = a_out;
        dispatch("audit eqopp", params);
      } else if (ablate->parsed()) {
        params["corpus"] = a_corpus;
        params["checkpoint"] = a_checkpoint;
        params["representation"] = a_repr;
        params["attribute"] = a_attribute;
        params["kind"] = a_kind;
        params["fractions"] = a_fractions;
        params["out"] = a_out;
        dispatch("audit ablate", params);
      } else if (project2d->parsed()) {
        params["corpus"] = a_corpus;
        params["checkpoint"] = a_checkpoint;
        params["representation"] = a_repr;
        params["out"] = a_out;
        params["svg"] = a_svg;
        params["color_attr"] = a_color;
        dispatch("audit project2d", params);
      }
    } else if (rerun->parsed()) {
      run_rerun(rerun_manifest, rerun_out_dir);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Config:
        return kExitConfig;
      case ErrorKind::Data:
        return kExitData;
      case ErrorKind::Mismatch:
        return kExitMismatch;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
