#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "idal/errors.hpp"
#include "idal/tensor.hpp"

namespace idal {

enum class Domain { kSource, kTarget };

inline std::string to_string(Domain d) {
  return d == Domain::kSource ? "source" : "target";
}

// Synthetic multi-modal shift: K Gaussian class clusters; the target domain
// sees the class centers rotated (first two dims), scaled, and offset by a
// fixed style vector, with its own noise level.
struct ShiftSpec {
  std::size_t num_classes = 4;
  std::size_t dim = 8;
  std::size_t n_source = 2000;
  std::size_t n_target = 2000;
  double class_separation = 4.0;
  double rotation_angle = 0.0;
  double scale_factor = 1.0;
  double style_offset_magnitude = 0.0;
  double noise_sigma_source = 0.5;
  double noise_sigma_target = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2) throw ConfigError("shift spec: need K >= 2");
    if (dim < 2) throw ConfigError("shift spec: need d >= 2");
    if (n_source == 0 || n_target == 0) throw ConfigError("shift spec: empty domain");
    if (!(class_separation > 0.0)) throw ConfigError("shift spec: separation must be > 0");
    if (!(scale_factor > 0.0)) throw ConfigError("shift spec: scale must be > 0");
    if (style_offset_magnitude < 0.0 || noise_sigma_source < 0.0 ||
        noise_sigma_target < 0.0) {
      throw ConfigError("shift spec: offsets and noise sigmas must be >= 0");
    }
  }

  std::string fingerprint() const {
    std::ostringstream os;
    os << num_classes << "," << dim << "," << n_source << "," << n_target << ","
       << class_separation << "," << rotation_angle << "," << scale_factor << ","
       << style_offset_magnitude << "," << noise_sigma_source << ","
       << noise_sigma_target << "," << seed;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016zx", std::hash<std::string>{}(os.str()));
    return buf;
  }
};

struct Dataset {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // n x dim, row-major
  std::vector<int> labels;       // training view; -1 means unlabeled
  std::vector<int> eval_labels;  // sealed ground-truth channel, scoring only
  Domain domain = Domain::kSource;
  std::string spec_fingerprint;

  double feature(std::size_t i, std::size_t j) const { return features[i * dim + j]; }
};

// Relative weight of the in-plane (rotated) component versus the per-class
// axis component of each class direction. The axis part keeps the class
// identity recoverable under rotation so alignment losses are not ambiguous;
// the in-plane part carries the actual shift.
constexpr double kCenterAxisWeight = 0.2;

// In-plane angles advance by the golden angle rather than 2pi/K. Uniform
// spacing makes a rotation of half the class gap exactly permutation
// ambiguous; irrational spacing keeps the correct assignment the unique
// nearest one under any rotation.
constexpr double kGoldenAngle = 2.3999632297286533;

// Unit direction for class k, scaled by class_separation.
inline std::vector<double> class_center(const ShiftSpec& spec, std::size_t k) {
  const double theta = kGoldenAngle * static_cast<double>(k);
  std::vector<double> u(spec.dim, 0.0);
  u[0] = std::cos(theta);
  u[1] = std::sin(theta);
  if (spec.dim > 2) u[2 + (k % (spec.dim - 2))] += kCenterAxisWeight;
  double norm = 0.0;
  for (double v : u) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : u) v *= spec.class_separation / norm;
  return u;
}

// Target-domain class center: rotation in the first two dims, then scale,
// then the style offset.
inline std::vector<double> shifted_center(const ShiftSpec& spec, std::size_t k,
                                          const std::vector<double>& style_offset) {
  std::vector<double> c = class_center(spec, k);
  const double c0 = c[0], c1 = c[1];
  const double cos_r = std::cos(spec.rotation_angle);
  const double sin_r = std::sin(spec.rotation_angle);
  c[0] = cos_r * c0 - sin_r * c1;
  c[1] = sin_r * c0 + cos_r * c1;
  for (double& v : c) v *= spec.scale_factor;
  for (std::size_t j = 0; j < spec.dim; ++j) c[j] += style_offset[j];
  return c;
}

namespace detail {

inline std::vector<double> sample_style_offset(const ShiftSpec& spec,
                                               std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> dir(spec.dim);
  double norm = 0.0;
  for (double& v : dir) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) norm = 1.0;
  for (double& v : dir) v *= spec.style_offset_magnitude / norm;
  return dir;
}

}  // namespace detail

struct ShiftPair {
  Dataset source;
  Dataset target;
  std::vector<double> style_offset;
};

// Deterministic in the spec (including seed). Classes are assigned round-robin
// so per-class counts differ by at most one.
inline ShiftPair generate_shift_pair(const ShiftSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  ShiftPair pair;
  pair.style_offset = detail::sample_style_offset(spec, rng);

  std::vector<std::vector<double>> source_centers, target_centers;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    source_centers.push_back(class_center(spec, k));
    target_centers.push_back(shifted_center(spec, k, pair.style_offset));
  }

  auto fill = [&](Dataset& ds, std::size_t n, Domain domain,
                  const std::vector<std::vector<double>>& centers, double sigma) {
    ds.n = n;
    ds.dim = spec.dim;
    ds.num_classes = spec.num_classes;
    ds.domain = domain;
    ds.spec_fingerprint = spec.fingerprint();
    ds.features.resize(n * spec.dim);
    ds.labels.resize(n);
    ds.eval_labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = i % spec.num_classes;
      ds.eval_labels[i] = static_cast<int>(k);
      ds.labels[i] = domain == Domain::kSource ? static_cast<int>(k) : -1;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        ds.features[i * spec.dim + j] = centers[k][j] + sigma * normal(rng);
      }
    }
  };
  fill(pair.source, spec.n_source, Domain::kSource, source_centers,
       spec.noise_sigma_source);
  fill(pair.target, spec.n_target, Domain::kTarget, target_centers,
       spec.noise_sigma_target);
  return pair;
}

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------
// Line 1: idal-dataset,v1,n=<n>,d=<d>,k=<K>,domain=<source|target>
// Then per row: f0,...,f{d-1},label,eval_label  (label is -1 for target rows;
// eval_label is the sealed scoring channel).

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_csv: cannot open " + path + " for writing");
  out << "idal-dataset,v1,n=" << ds.n << ",d=" << ds.dim << ",k=" << ds.num_classes
      << ",domain=" << to_string(ds.domain) << "\n";
  char buf[64];
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.dim; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.feature(i, j));
      out << buf << ",";
    }
    out << ds.labels[i] << "," << ds.eval_labels[i] << "\n";
  }
  if (!out) throw IoError("save_csv: write failed for " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

inline std::size_t parse_header_size(const std::string& field, const std::string& key,
                                     const std::string& path) {
  if (field.rfind(key + "=", 0) != 0) {
    throw IoError("load_csv: " + path + ": malformed header field '" + field +
                  "', expected " + key + "=<value>");
  }
  return static_cast<std::size_t>(std::stoull(field.substr(key.size() + 1)));
}

}  // namespace detail

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("load_csv: " + path + ": empty file");
  auto header = detail::split_csv_line(line);
  if (header.size() != 6 || header[0] != "idal-dataset" || header[1] != "v1") {
    throw IoError("load_csv: " + path + ": header mismatch at line 1, expected "
                  "'idal-dataset,v1,n=...,d=...,k=...,domain=...'");
  }
  Dataset ds;
  ds.n = detail::parse_header_size(header[2], "n", path);
  ds.dim = detail::parse_header_size(header[3], "d", path);
  ds.num_classes = detail::parse_header_size(header[4], "k", path);
  if (header[5] == "domain=source") {
    ds.domain = Domain::kSource;
  } else if (header[5] == "domain=target") {
    ds.domain = Domain::kTarget;
  } else {
    throw IoError("load_csv: " + path + ": bad domain field '" + header[5] + "'");
  }
  ds.features.resize(ds.n * ds.dim);
  ds.labels.resize(ds.n);
  ds.eval_labels.resize(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const std::size_t line_no = i + 2;
    if (!std::getline(in, line)) {
      throw IoError("load_csv: " + path + ": unexpected end of file at line " +
                    std::to_string(line_no));
    }
    auto fields = detail::split_csv_line(line);
    if (fields.size() != ds.dim + 2) {
      throw IoError("load_csv: " + path + ": line " + std::to_string(line_no) +
                    " has " + std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(ds.dim + 2));
    }
    for (std::size_t j = 0; j < ds.dim + 2; ++j) {
      std::size_t consumed = 0;
      double value = 0.0;
      try {
        value = std::stod(fields[j], &consumed);
      } catch (const std::exception&) {
        consumed = 0;
      }
      if (consumed != fields[j].size() || fields[j].empty()) {
        throw IoError("load_csv: " + path + ": non-numeric cell '" + fields[j] +
                      "' at line " + std::to_string(line_no));
      }
      if (j < ds.dim) {
        ds.features[i * ds.dim + j] = value;
      } else if (j == ds.dim) {
        ds.labels[i] = static_cast<int>(value);
      } else {
        ds.eval_labels[i] = static_cast<int>(value);
      }
    }
    if (ds.labels[i] < -1 || ds.labels[i] >= static_cast<int>(ds.num_classes)) {
      throw IoError("load_csv: " + path + ": label out of range at line " +
                    std::to_string(line_no));
    }
  }
  if (ds.domain == Domain::kSource) {
    for (std::size_t i = 0; i < ds.n; ++i) {
      if (ds.labels[i] < 0) {
        throw IoError("load_csv: " + path + ": source dataset contains unlabeled row " +
                      std::to_string(i + 2));
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
  Tensor features;                  // b x d
  std::vector<int> labels;          // training view (-1 for target)
  std::vector<std::size_t> indices; // positions in the dataset
};

inline Tensor features_tensor(const Dataset& ds,
                              const std::vector<std::size_t>& indices) {
  std::vector<double> v(indices.size() * ds.dim);
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (std::size_t j = 0; j < ds.dim; ++j) v[i * ds.dim + j] = ds.feature(indices[i], j);
  return Tensor({indices.size(), ds.dim}, std::move(v));
}

// Deterministic shuffled partition per (seed, epoch); the last short batch is
// kept.
inline std::vector<Batch> make_batches(const Dataset& ds, std::size_t batch_size,
                                       std::uint64_t seed, std::size_t epoch) {
  if (ds.n == 0) throw ShapeError("make_batches: empty dataset");
  if (batch_size == 0) throw ConfigError("make_batches: batch size must be >= 1");
  std::vector<std::size_t> perm(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < ds.n; start += batch_size) {
    const std::size_t end = std::min(start + batch_size, ds.n);
    Batch batch;
    batch.indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
    batch.features = features_tensor(ds, batch.indices);
    batch.labels.reserve(batch.indices.size());
    for (std::size_t idx : batch.indices) batch.labels.push_back(ds.labels[idx]);
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace idal
