#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "strkm/errors.hpp"
#include "strkm/linalg.hpp"
#include "strkm/rng.hpp"

namespace strkm {

/// N samples of dimension D, every entry in [0, 1].
struct Dataset {
  Matrix X;
  std::string name;
  std::vector<std::string> tags;  // empty, or one per sample

  std::size_t size() const noexcept { return X.rows(); }
  std::size_t dim() const noexcept { return X.cols(); }

  void validate() const {
    if (X.rows() == 0 || X.cols() == 0) throw ValidationError("dataset '" + name + "' is empty");
    if (!tags.empty() && tags.size() != X.rows()) {
      throw ValidationError("dataset '" + name + "': tag count does not match sample count");
    }
    for (std::size_t i = 0; i < X.rows(); ++i) {
      for (std::size_t j = 0; j < X.cols(); ++j) {
        const double v = X(i, j);
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
          throw ValidationError("dataset '" + name + "': entry (" + std::to_string(i) + ", " +
                                std::to_string(j) + ") = " + std::to_string(v) +
                                " is outside [0, 1]");
        }
      }
    }
  }
};

struct NumericTable {
  std::vector<std::string> header;
  Matrix values;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos
                                                                         : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& f : out) {
    if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = trim(f.substr(1, f.size() - 2));
  }
  return out;
}

inline double parse_cell(std::string_view cell, const std::string& where) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw FormatError(where + ": non-numeric cell '" + std::string(cell) + "'");
  }
  if (!std::isfinite(v)) throw FormatError(where + ": non-finite value");
  return v;
}

}  // namespace detail

/// Rectangular numeric CSV (comma separated, optional double quotes around
/// cells, blank lines ignored).
inline NumericTable read_numeric_csv(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  NumericTable table;
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t lineno = 0;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (header_pending) {
      for (auto f : fields) table.header.emplace_back(f);
      cols = fields.size();
      header_pending = false;
      continue;
    }
    const std::string where = path + ":" + std::to_string(lineno);
    if (cols == 0) cols = fields.size();
    if (fields.size() != cols) {
      throw FormatError(where + ": expected " + std::to_string(cols) + " fields, found " +
                        std::to_string(fields.size()));
    }
    for (auto f : fields) values.push_back(detail::parse_cell(f, where));
    ++rows;
  }
  table.values = Matrix(rows, cols, std::move(values));
  return table;
}

inline void write_numeric_csv(const std::string& path, const std::vector<std::string>& header,
                              const Matrix& values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.precision(17);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  if (!header.empty()) out << '\n';
  for (std::size_t i = 0; i < values.rows(); ++i) {
    for (std::size_t j = 0; j < values.cols(); ++j) out << (j ? "," : "") << values(i, j);
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline Dataset load_csv(const std::string& path, bool has_header) {
  auto table = read_numeric_csv(path, has_header);
  Dataset ds{std::move(table.values), path, {}};
  if (ds.size() == 0) throw FormatError(path + ": no data rows");
  ds.validate();
  return ds;
}

inline void save_csv(const std::string& path, const Dataset& ds) {
  write_numeric_csv(path, {}, ds.X);
}

/// IDX file holding a 3-D unsigned-byte tensor (magic 0x00000803, big-endian
/// dimensions N, H, W). Pixels are scaled by 1/255 and images flattened
/// row-major to D = H * W.
inline Dataset load_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  auto read_u32 = [&](std::size_t offset) -> std::uint32_t {
    if (offset + 4 > bytes.size()) {
      throw FormatError(path + ": truncated header at offset " + std::to_string(offset));
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
  };
  const std::uint32_t magic = read_u32(0);
  if (magic != 0x00000803u) {
    std::ostringstream msg;
    msg << path << ": bad magic 0x" << std::hex << magic << " at offset 0 (expected 0x803)";
    throw FormatError(msg.str());
  }
  const std::size_t n = read_u32(4);
  const std::size_t h = read_u32(8);
  const std::size_t w = read_u32(12);
  const std::size_t d = h * w;
  const std::size_t expected = 16 + n * d;
  if (bytes.size() < expected) {
    throw FormatError(path + ": truncated payload at offset " + std::to_string(bytes.size()) +
                      ", header promises " + std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    throw FormatError(path + ": trailing data at offset " + std::to_string(expected) +
                      ", header dims do not match payload length");
  }
  if (n == 0 || d == 0) throw FormatError(path + ": empty tensor");
  Matrix X(n, d);
  for (std::size_t k = 0; k < n * d; ++k) X.values()[k] = bytes[16 + k] / 255.0;
  return Dataset{std::move(X), path, {}};
}

/// Gaussian blobs: sample i comes from centers[i % k] plus isotropic noise
/// with standard deviation `spread`, clipped to [0, 1].
inline Dataset gen_blobs(std::size_t n, const std::vector<Vector>& centers, double spread,
                         Rng& rng) {
  if (n == 0) throw ValidationError("gen_blobs: n must be >= 1");
  if (centers.empty()) throw ValidationError("gen_blobs: need at least one center");
  if (!(spread >= 0.0) || !std::isfinite(spread)) throw ValidationError("gen_blobs: bad spread");
  const std::size_t d = centers.front().size();
  if (d == 0) throw ValidationError("gen_blobs: zero-dimensional center");
  for (const auto& c : centers)
    if (c.size() != d) throw ValidationError("gen_blobs: centers differ in dimension");
  Matrix X(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = centers[i % centers.size()];
    for (std::size_t j = 0; j < d; ++j) X(i, j) = std::clamp(c[j] + spread * rng.normal(), 0.0, 1.0);
  }
  return Dataset{std::move(X), "blobs", {}};
}

/// Maps ring coordinates (centered at the origin) into the unit square:
/// p -> 0.5 + p / (2 (radius + thickness)).
inline Vector ring_squeeze(std::span<const double> p, double radius, double thickness) {
  const double s = 0.5 / (radius + thickness);
  return {0.5 + s * p[0], 0.5 + s * p[1]};
}

/// 2-D annulus: angle ~ U(0, 2 pi), distance ~ U(radius - thickness,
/// radius + thickness), then ring_squeeze into [0, 1]^2.
inline Dataset gen_ring(std::size_t n, double radius, double thickness, Rng& rng) {
  if (n == 0) throw ValidationError("gen_ring: n must be >= 1");
  if (!(radius > 0.0) || !(thickness >= 0.0) || thickness > radius) {
    throw ValidationError("gen_ring: need radius > 0 and 0 <= thickness <= radius");
  }
  Matrix X(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double r = rng.uniform(radius - thickness, radius + thickness);
    const double p[2] = {r * std::cos(angle), r * std::sin(angle)};
    const Vector q = ring_squeeze(p, radius, thickness);
    X(i, 0) = std::clamp(q[0], 0.0, 1.0);
    X(i, 1) = std::clamp(q[1], 0.0, 1.0);
  }
  return Dataset{std::move(X), "ring", {}};
}

inline constexpr std::size_t kEcgLength = 140;

/// Synthetic heartbeat-like sequences of 140 samples in [0, 1].
///
/// Normal beats: a slow baseline wave plus a sharp R peak near t = 60 and a
/// T wave near t = 100, with small amplitude/phase jitter and noise (sd 0.01).
/// Anomalous beats draw one defect: a flattened R peak, a shifted R peak, or
/// an inverted T wave.
inline Dataset gen_ecg_like(std::size_t n, bool anomaly, Rng& rng) {
  if (n == 0) throw ValidationError("gen_ecg_like: n must be >= 1");
  Matrix X(n, kEcgLength);
  std::vector<std::string> tags;
  tags.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double r_amp = 0.45 * (1.0 + 0.05 * rng.normal());
    double r_pos = 60.0 + 1.5 * rng.normal();
    double t_amp = 0.12 * (1.0 + 0.05 * rng.normal());
    const double phase = 0.1 * rng.normal();
    std::string tag = "normal";
    if (anomaly) {
      switch (rng.below(3)) {
        case 0:
          r_amp *= rng.uniform(0.2, 0.5);
          tag = "flat_r";
          break;
        case 1:
          r_pos += (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(15.0, 30.0);
          tag = "shifted_r";
          break;
        default:
          t_amp = -t_amp * rng.uniform(1.0, 2.0);
          tag = "inverted_t";
          break;
      }
    }
    for (std::size_t t = 0; t < kEcgLength; ++t) {
      const double ts = static_cast<double>(t);
      const double base =
          0.35 + 0.05 * std::sin(2.0 * std::numbers::pi * ts / kEcgLength + phase);
      const double r = r_amp * std::exp(-0.5 * std::pow((ts - r_pos) / 2.5, 2));
      const double tw = t_amp * std::exp(-0.5 * std::pow((ts - r_pos - 40.0) / 8.0, 2));
      X(i, t) = std::clamp(base + r + tw + 0.01 * rng.normal(), 0.0, 1.0);
    }
    tags.push_back(std::move(tag));
  }
  return Dataset{std::move(X), anomaly ? "ecg_anomaly" : "ecg", std::move(tags)};
}

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> rows, std::string name) {
  Matrix X(rows.size(), ds.dim());
  std::vector<std::string> tags;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::copy(ds.X.row(rows[k]).begin(), ds.X.row(rows[k]).end(), X.row(k).begin());
    if (!ds.tags.empty()) tags.push_back(ds.tags[rows[k]]);
  }
  return Dataset{std::move(X), std::move(name), std::move(tags)};
}

/// Fisher-Yates permutation of 0..n-1 driven by `rng`.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

/// Seeded shuffle, then the first round(fraction * N) samples form the first part.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ValidationError("split: fraction must lie in (0, 1)");
  }
  const std::size_t n = ds.size();
  const auto first = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (first == 0 || first == n) {
    throw ValidationError("split: fraction " + std::to_string(fraction) + " of " +
                          std::to_string(n) + " samples leaves one side empty");
  }
  const auto idx = shuffled_indices(n, rng);
  const std::span<const std::size_t> all(idx);
  return {subset(ds, all.first(first), ds.name + ".a"),
          subset(ds, all.subspan(first), ds.name + ".b")};
}

}  // namespace strkm
