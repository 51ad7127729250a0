#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sennet/errors.hpp"
#include "sennet/linalg.hpp"
#include "sennet/rng.hpp"

namespace sennet {

struct AttributeDef {
  std::string name;
  int class_count = 0;

  bool operator==(const AttributeDef&) const = default;
};

// Declared attribute layout of a corpus. Attribute order matters: it fixes
// CSV column order and the default alternation order during training.
struct CorpusSchema {
  std::size_t dim = 0;
  std::vector<AttributeDef> attributes;

  bool operator==(const CorpusSchema&) const = default;

  const AttributeDef* find(const std::string& name) const {
    for (const auto& a : attributes)
      if (a.name == name) return &a;
    return nullptr;
  }

  int class_count(const std::string& name) const {
    const AttributeDef* a = find(name);
    if (!a) throw MissingLabelsError("attribute not in schema: " + name);
    return a->class_count;
  }
};

// One l2-normalized embedding with identity and sensitive-attribute labels.
struct EmbeddingRecord {
  std::string record_id;
  std::string identity;
  std::map<std::string, int> attributes;
  Vec vector;

  bool operator==(const EmbeddingRecord&) const = default;

  int attribute(const std::string& name) const {
    auto it = attributes.find(name);
    if (it == attributes.end()) throw MissingLabelsError("record " + record_id + " lacks attribute " + name);
    return it->second;
  }
};

namespace detail {

// Normalizes unless the vector is already unit within the storage tolerance.
// Skipping the division when the norm is already 1 keeps serialize/ingest
// round-trips bit-identical.
inline Vec normalize_for_storage(const Vec& v, const std::string& where) {
  if (!all_finite(v)) throw SchemaMismatchError(where + ": non-finite vector entry");
  const double n = norm2(v);
  if (!(n >= kZeroVectorNorm)) throw ZeroVectorError(where + ": zero vector");
  if (std::abs(n - 1.0) <= 1e-12) return v;
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(CorpusSchema schema) : schema_(std::move(schema)) {}

  const CorpusSchema& schema() const { return schema_; }
  std::size_t dim() const { return schema_.dim; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const EmbeddingRecord& record(std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // identity -> indices into records(), ascending. std::map keeps iteration
  // order deterministic, which seeded sampling relies on.
  const std::map<std::string, std::vector<std::size_t>>& identity_index() const { return identity_index_; }

  void add(EmbeddingRecord rec, const std::string& where = "record") {
    if (rec.vector.size() != schema_.dim)
      throw SchemaMismatchError(where + ": vector dimension " + std::to_string(rec.vector.size()) +
                                " != corpus dim " + std::to_string(schema_.dim));
    for (const auto& attr : schema_.attributes) {
      auto it = rec.attributes.find(attr.name);
      if (it == rec.attributes.end()) throw SchemaMismatchError(where + ": missing attribute " + attr.name);
      if (it->second < 0 || it->second >= attr.class_count)
        throw SchemaMismatchError(where + ": attribute " + attr.name + " class " + std::to_string(it->second) +
                                  " out of range [0, " + std::to_string(attr.class_count) + ")");
    }
    rec.vector = detail::normalize_for_storage(rec.vector, where);
    identity_index_[rec.identity].push_back(records_.size());
    records_.push_back(std::move(rec));
  }

  std::vector<std::string> identities() const {
    std::vector<std::string> out;
    out.reserve(identity_index_.size());
    for (const auto& [id, _] : identity_index_) out.push_back(id);
    return out;
  }

  Corpus subset_by_identities(const std::set<std::string>& keep) const {
    Corpus out(schema_);
    for (const auto& rec : records_)
      if (keep.count(rec.identity)) out.add(rec);
    return out;
  }

  Corpus subset_by_indices(const std::vector<std::size_t>& keep) const {
    Corpus out(schema_);
    for (std::size_t i : keep) out.add(records_[i]);
    return out;
  }

  std::vector<Vec> vectors() const {
    std::vector<Vec> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.vector);
    return out;
  }

  std::vector<int> labels(const std::string& attribute) const {
    std::vector<int> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.attribute(attribute));
    return out;
  }

  // Content hash covering schema and every record field. Used to pin inputs
  // in manifests and triplet-list sidecars.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_u64 = [&h](std::uint64_t x) { h = fnv1a64(&x, sizeof(x), h); };
    auto mix_str = [&h](const std::string& s) { h = fnv1a64(s.data(), s.size(), h); };
    mix_u64(schema_.dim);
    for (const auto& a : schema_.attributes) {
      mix_str(a.name);
      mix_u64(static_cast<std::uint64_t>(a.class_count));
    }
    for (const auto& r : records_) {
      mix_str(r.record_id);
      mix_str(r.identity);
      for (const auto& [k, v] : r.attributes) {
        mix_str(k);
        mix_u64(static_cast<std::uint64_t>(v));
      }
      for (double x : r.vector) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof(bits));
        mix_u64(bits);
      }
    }
    return h;
  }

  bool operator==(const Corpus& o) const { return schema_ == o.schema_ && records_ == o.records_; }

  // Invariant check used by tests: index is consistent with records.
  bool index_consistent() const {
    std::size_t total = 0;
    for (const auto& [id, idxs] : identity_index_) {
      total += idxs.size();
      for (std::size_t i : idxs) {
        if (i >= records_.size() || records_[i].identity != id) return false;
      }
    }
    return total == records_.size();
  }

 private:
  CorpusSchema schema_;
  std::vector<EmbeddingRecord> records_;
  std::map<std::string, std::vector<std::size_t>> identity_index_;
};

// ---------------------------------------------------------------------------
// CSV + metadata sidecar I/O
//
// CSV (UTF-8, header required):
//   record_id,identity,<attr1>,...,e0,e1,...,e{d-1}
// Sidecar JSON: {"dim": d, "attributes": {"name": class_count, ...}}
// ---------------------------------------------------------------------------

inline std::string metadata_path_for(const std::string& csv_path) {
  if (csv_path.size() > 4 && csv_path.substr(csv_path.size() - 4) == ".csv")
    return csv_path.substr(0, csv_path.size() - 4) + ".meta.json";
  return csv_path + ".meta.json";
}

inline void save_schema(const CorpusSchema& schema, const std::string& path) {
  nlohmann::json j;
  j["dim"] = schema.dim;
  nlohmann::json attrs = nlohmann::json::object();
  for (const auto& a : schema.attributes) attrs[a.name] = a.class_count;
  j["attributes"] = attrs;
  // Sidecar also records column order; JSON objects alone cannot.
  nlohmann::json order = nlohmann::json::array();
  for (const auto& a : schema.attributes) order.push_back(a.name);
  j["attribute_order"] = order;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline CorpusSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatchError(path + ": bad JSON: " + e.what());
  }
  CorpusSchema schema;
  schema.dim = j.at("dim").get<std::size_t>();
  std::vector<std::string> order;
  if (j.contains("attribute_order")) {
    order = j.at("attribute_order").get<std::vector<std::string>>();
  } else {
    for (auto it = j.at("attributes").begin(); it != j.at("attributes").end(); ++it) order.push_back(it.key());
  }
  for (const auto& name : order)
    schema.attributes.push_back({name, j.at("attributes").at(name).get<int>()});
  return schema;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline Corpus ingest_csv(const std::string& path, const CorpusSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatchError(path + ": empty file");

  std::vector<std::string> header = detail::split_csv_line(line);
  const std::size_t n_attrs = schema.attributes.size();
  const std::size_t expected_cols = 2 + n_attrs + schema.dim;
  if (header.size() != expected_cols)
    throw SchemaMismatchError(path + ": header has " + std::to_string(header.size()) + " columns, expected " +
                              std::to_string(expected_cols));
  if (header[0] != "record_id" || header[1] != "identity")
    throw SchemaMismatchError(path + ": header must start with record_id,identity");
  for (std::size_t a = 0; a < n_attrs; ++a)
    if (header[2 + a] != schema.attributes[a].name)
      throw SchemaMismatchError(path + ": header attribute column " + header[2 + a] + " != schema attribute " +
                                schema.attributes[a].name);

  Corpus corpus(schema);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    const std::string where = path + " row " + std::to_string(row);
    if (cells.size() != expected_cols)
      throw SchemaMismatchError(where + ": has " + std::to_string(cells.size()) + " columns, expected " +
                                std::to_string(expected_cols));
    EmbeddingRecord rec;
    rec.record_id = cells[0];
    rec.identity = cells[1];
    for (std::size_t a = 0; a < n_attrs; ++a) {
      char* end = nullptr;
      const long v = std::strtol(cells[2 + a].c_str(), &end, 10);
      if (end == cells[2 + a].c_str() || *end != '\0' || v < 0)
        throw SchemaMismatchError(where + ": attribute " + schema.attributes[a].name +
                                  " is not a non-negative integer: " + cells[2 + a]);
      rec.attributes[schema.attributes[a].name] = static_cast<int>(v);
    }
    rec.vector.resize(schema.dim);
    for (std::size_t i = 0; i < schema.dim; ++i) {
      char* end = nullptr;
      rec.vector[i] = std::strtod(cells[2 + n_attrs + i].c_str(), &end);
      if (end == cells[2 + n_attrs + i].c_str() || *end != '\0')
        throw SchemaMismatchError(where + ": bad vector entry: " + cells[2 + n_attrs + i]);
    }
    corpus.add(std::move(rec), where);
  }
  return corpus;
}

inline void save_csv(const Corpus& corpus, const std::string& path, bool write_sidecar = true) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "record_id,identity";
  for (const auto& a : corpus.schema().attributes) out << "," << a.name;
  for (std::size_t i = 0; i < corpus.dim(); ++i) out << ",e" << i;
  out << "\n";
  for (const auto& rec : corpus.records()) {
    out << rec.record_id << "," << rec.identity;
    for (const auto& a : corpus.schema().attributes) out << "," << rec.attributes.at(a.name);
    for (double x : rec.vector) out << "," << detail::format_double(x);
    out << "\n";
  }
  if (write_sidecar) save_schema(corpus.schema(), metadata_path_for(path));
}

inline Corpus load_corpus(const std::string& csv_path) {
  return ingest_csv(csv_path, load_schema(metadata_path_for(csv_path)));
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

struct SyntheticAttribute {
  std::string name;
  int class_count = 2;
  double offset_scale = 0.35;  // diameter of the class-offset layout
  bool per_record = false;     // false: class fixed per identity
  // Angular spread of classes 1..C-1 around the antipode of class 0.
  // 1.0 keeps the regular simplex; smaller values pull the non-primary
  // classes together while every offset keeps the same length.
  double class_spread = 1.0;
};

struct SyntheticSpec {
  std::size_t identities = 0;
  std::size_t images_per_identity = 0;
  std::size_t dim = 0;
  std::vector<SyntheticAttribute> attributes;
  double noise_scale = 0.125;
  std::uint64_t seed = 0;
};

namespace detail {

// Seeded random orthonormal directions via Gram-Schmidt.
inline std::vector<Vec> orthonormal_directions(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<Vec> dirs;
  while (dirs.size() < count) {
    Vec v(dim);
    for (auto& x : v) x = rng.normal();
    for (const auto& u : dirs) axpy(-dot(u, v), u, v);
    const double n = norm2(v);
    if (n < 1e-6) continue;
    for (auto& x : v) x /= n;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

// Unit-norm class layout: C points at the vertices of a regular simplex in
// C-1 dimensions. Every class offset has the same length, so the l2
// normalization cannot leak class identity through the vector norm. For two
// classes this is the familiar +/-1 on one axis.
inline std::vector<Vec> simplex_vertices(int classes) {
  const int c = classes;
  std::vector<Vec> raw(c, Vec(c, -1.0 / c));
  for (int k = 0; k < c; ++k) {
    raw[k][k] += 1.0;
    raw[k] = l2_normalize(raw[k]);
  }
  // Orthonormal basis of the subspace the vertices span, then coordinates.
  std::vector<Vec> basis;
  for (int k = 0; k < c && static_cast<int>(basis.size()) < c - 1; ++k) {
    Vec v = raw[k];
    for (const auto& b : basis) axpy(-dot(b, v), b, v);
    const double n = norm2(v);
    if (n < 1e-9) continue;
    for (auto& x : v) x /= n;
    basis.push_back(std::move(v));
  }
  std::vector<Vec> coords(c, Vec(basis.size()));
  for (int k = 0; k < c; ++k)
    for (std::size_t j = 0; j < basis.size(); ++j) coords[k][j] = dot(raw[k], basis[j]);
  return coords;
}

// Interpolates classes 1..C-1 toward the antipode of class 0 (spherical-ish
// blend, renormalized). spread = 1 keeps the regular simplex.
inline std::vector<Vec> spread_vertices(std::vector<Vec> vertices, double spread) {
  if (spread >= 1.0 || vertices.size() < 3) return vertices;
  const Vec& v0 = vertices[0];
  for (std::size_t k = 1; k < vertices.size(); ++k) {
    Vec blended(v0.size());
    for (std::size_t j = 0; j < v0.size(); ++j)
      blended[j] = (1.0 - spread) * (-v0[j]) + spread * vertices[k][j];
    vertices[k] = l2_normalize(blended);
  }
  return vertices;
}

}  // namespace detail

// Builds a labeled corpus with known structure: each identity gets a random
// unit center orthogonal to every attribute subspace, each attribute shifts
// the vector by an equal-length class-dependent offset inside its own
// orthogonal subspace (simplex layout), and Gaussian noise is added per
// image. Attributes are therefore linearly decodable before any removal, and
// identities are separable when the noise is small relative to center
// distances.
inline Corpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.identities < 2) throw BadSpecError("generate_synthetic: need >= 2 identities");
  if (spec.images_per_identity < 2)
    throw BadSpecError("generate_synthetic: need >= 2 images per identity (mining needs a Positive)");
  if (spec.noise_scale < 0) throw BadSpecError("generate_synthetic: noise_scale must be >= 0");
  std::size_t direction_count = 0;
  for (const auto& a : spec.attributes) {
    if (a.class_count < 2) throw BadSpecError("generate_synthetic: attribute " + a.name + " needs >= 2 classes");
    direction_count += static_cast<std::size_t>(a.class_count - 1);
  }
  if (spec.dim < direction_count + 2)
    throw BadSpecError("generate_synthetic: dim must leave >= 2 dimensions beyond the attribute subspaces");

  CorpusSchema schema;
  schema.dim = spec.dim;
  for (const auto& a : spec.attributes) schema.attributes.push_back({a.name, a.class_count});
  Corpus corpus(schema);

  Rng dir_rng(spec.seed, "synthetic/directions");
  Rng center_rng(spec.seed, "synthetic/centers");
  Rng label_rng(spec.seed, "synthetic/labels");
  Rng noise_rng(spec.seed, "synthetic/noise");

  const std::vector<Vec> dirs = detail::orthonormal_directions(direction_count, spec.dim, dir_rng);
  std::vector<std::vector<Vec>> class_coords;  // per attribute, per class
  std::vector<std::size_t> dir_offset;         // first direction index per attribute
  std::size_t next_dir = 0;
  for (const auto& a : spec.attributes) {
    class_coords.push_back(detail::spread_vertices(detail::simplex_vertices(a.class_count), a.class_spread));
    dir_offset.push_back(next_dir);
    next_dir += static_cast<std::size_t>(a.class_count - 1);
  }

  // Identity-level attributes are assigned round-robin over the cross product
  // of their classes, so cells come out balanced (e.g. 6-way for 2x3).
  std::vector<std::size_t> identity_cells;
  std::size_t cell_product = 1;
  for (const auto& a : spec.attributes)
    if (!a.per_record) cell_product *= static_cast<std::size_t>(a.class_count);

  const int id_width = spec.identities > 1 ? static_cast<int>(std::to_string(spec.identities - 1).size()) : 1;
  for (std::size_t id = 0; id < spec.identities; ++id) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "id%0*zu", id_width, id);
    const std::string identity = id_buf;

    Vec center(spec.dim);
    for (auto& x : center) x = center_rng.normal();
    for (const auto& u : dirs) axpy(-dot(u, center), u, center);
    center = l2_normalize(center);

    std::map<std::string, int> id_classes;
    std::size_t cell = id % cell_product;
    for (const auto& a : spec.attributes) {
      if (a.per_record) continue;
      id_classes[a.name] = static_cast<int>(cell % a.class_count);
      cell /= a.class_count;
    }

    for (std::size_t img = 0; img < spec.images_per_identity; ++img) {
      EmbeddingRecord rec;
      rec.record_id = identity + "_" + std::to_string(img);
      rec.identity = identity;
      Vec v = center;
      for (std::size_t a = 0; a < spec.attributes.size(); ++a) {
        const auto& attr = spec.attributes[a];
        const int cls = attr.per_record ? static_cast<int>(label_rng.uniform_index(attr.class_count))
                                        : id_classes[attr.name];
        rec.attributes[attr.name] = cls;
        const Vec& coords = class_coords[a][cls];
        for (std::size_t j = 0; j < coords.size(); ++j)
          axpy(0.5 * attr.offset_scale * coords[j], dirs[dir_offset[a] + j], v);
      }
      if (spec.noise_scale > 0)
        for (auto& x : v) x += noise_rng.normal(0.0, spec.noise_scale);
      rec.vector = l2_normalize(v);
      corpus.add(std::move(rec));
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Identity splits
// ---------------------------------------------------------------------------

// Disjoint identity sets for the primary task, the sensitivity detectors,
// and evaluation. Keeping these identity-disjoint prevents leakage between
// training and the audit.
struct SplitSpec {
  std::set<std::string> primary_ids;
  std::set<std::string> sensitive_ids;
  std::set<std::string> eval_ids;
  std::uint64_t seed = 0;

  bool disjoint() const {
    for (const auto& id : sensitive_ids)
      if (primary_ids.count(id) || eval_ids.count(id)) return false;
    for (const auto& id : eval_ids)
      if (primary_ids.count(id)) return false;
    return true;
  }
};

// Cell key of an identity: values of attributes constant across its records.
// Record-level attributes show up as "*" and do not split cells.
inline std::string identity_cell_key(const Corpus& corpus, const std::string& identity) {
  const auto& idxs = corpus.identity_index().at(identity);
  std::string key;
  for (const auto& attr : corpus.schema().attributes) {
    const int first = corpus.record(idxs[0]).attribute(attr.name);
    bool constant = true;
    for (std::size_t i : idxs)
      if (corpus.record(i).attribute(attr.name) != first) {
        constant = false;
        break;
      }
    key += attr.name + "=" + (constant ? std::to_string(first) : std::string("*")) + ";";
  }
  return key;
}

inline std::map<std::string, std::vector<std::string>> identity_cells(const Corpus& corpus) {
  std::map<std::string, std::vector<std::string>> cells;
  for (const auto& id : corpus.identities()) cells[identity_cell_key(corpus, id)].push_back(id);
  return cells;
}

// Picks the sensitive and eval sets balanced across identity-level attribute
// cells (round-robin across cells), and leaves the rest for the primary task.
inline SplitSpec make_split(const Corpus& corpus, std::size_t n_sensitive, std::size_t n_eval,
                            std::uint64_t seed) {
  const auto ids = corpus.identities();
  if (n_sensitive + n_eval > ids.size())
    throw BadSpecError("make_split: sensitive + eval identity counts exceed corpus identities");

  Rng rng(seed, "split");
  std::map<std::string, std::vector<std::string>> cells = identity_cells(corpus);
  for (auto& [_, members] : cells) rng.shuffle(members);

  SplitSpec split;
  split.seed = seed;
  // Round-robin over cells: sensitive fills first, then eval, so both come
  // out balanced; everything left is primary.
  std::vector<std::vector<std::string>*> cell_lists;
  for (auto& [_, members] : cells) cell_lists.push_back(&members);
  std::size_t taken = 0;
  for (std::size_t round = 0; taken < n_sensitive + n_eval; ++round) {
    bool any = false;
    for (auto* members : cell_lists) {
      if (round < members->size() && taken < n_sensitive + n_eval) {
        (taken < n_sensitive ? split.sensitive_ids : split.eval_ids).insert((*members)[round]);
        ++taken;
        any = true;
      }
    }
    if (!any) break;
  }
  for (const auto& id : ids)
    if (!split.sensitive_ids.count(id) && !split.eval_ids.count(id)) split.primary_ids.insert(id);
  return split;
}

}  // namespace sennet
