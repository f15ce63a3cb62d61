#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <unistd.h>

#include "oracles/oracles.hpp"
#include "repdisp/cli.hpp"
#include "repdisp/matrix.hpp"
#include "repdisp/tensor_io.hpp"

namespace testsupport {

namespace fs = std::filesystem;

/// Deletes itself on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("repdisp_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

/// Rows rounded through f32 so library (f32 storage) and oracle (f64) see
/// the same numbers.
inline oracle::Rows float_rows(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  auto x = oracle::random_rows(rng, n, d);
  for (auto& r : x) {
    for (double& v : r) v = static_cast<double>(static_cast<float>(v));
  }
  return x;
}

inline repdisp::EmbeddingMatrix to_embedding(const oracle::Rows& x) {
  std::vector<float> data;
  for (const auto& r : x) {
    for (double v : r) data.push_back(static_cast<float>(v));
  }
  return repdisp::EmbeddingMatrix(x.size(), x.front().size(), std::move(data));
}

inline repdisp::Matrix64 to_matrix(const oracle::Rows& x) {
  repdisp::Matrix64 m(x.size(), x.front().size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t k = 0; k < x[i].size(); ++k) m(i, k) = x[i][k];
  }
  return m;
}

inline oracle::Rows to_rows(const repdisp::Matrix64& m) {
  oracle::Rows x(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t k = 0; k < m.cols(); ++k) x[i][k] = m(i, k);
  }
  return x;
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = repdisp::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

inline void write_meta(const fs::path& p, const std::vector<nlohmann::json>& lines) {
  std::ofstream out(p);
  for (const auto& j : lines) out << j.dump() << "\n";
}

/// Bin-structured embeddings whose dispersion falls linearly with
/// perplexity. Bin g holds `per_bin` rows scattered around a bin axis with
/// a spread that shrinks as g (and the assigned perplexity) grows.
struct SyntheticBins {
  repdisp::EmbeddingMatrix matrix;
  std::vector<nlohmann::json> meta;
};

inline SyntheticBins synthetic_bins(std::size_t bins, std::size_t per_bin, std::size_t dim,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<float> data;
  std::vector<nlohmann::json> meta;
  std::size_t row = 0;
  for (std::size_t g = 0; g < bins; ++g) {
    // Target dispersion falls linearly from 0.9 to 0.1 across bins.
    const double target = 0.9 - 0.8 * static_cast<double>(g) / static_cast<double>(bins - 1);
    // Rows are axis + r * (orthogonal unit noise); a spread of r gives
    // mean pairwise cosine distance about r^2 / (1 + r^2).
    const double r = std::sqrt(target / (1.0 - target));
    std::vector<double> axis(dim, 0.0);
    axis[g % dim] = 1.0;
    const double ppl = 10.0 + 5.0 * static_cast<double>(g);
    for (std::size_t i = 0; i < per_bin; ++i) {
      std::vector<double> v(dim);
      double ss = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        v[k] = k == g % dim ? 0.0 : noise(rng);
        ss += v[k] * v[k];
      }
      const double s = r / std::sqrt(ss);
      for (std::size_t k = 0; k < dim; ++k) data.push_back(static_cast<float>(axis[k] + s * v[k]));
      meta.push_back({{"row_index", row},
                      {"segment_id", "seg" + std::to_string(row)},
                      {"perplexity", ppl + 0.01 * static_cast<double>(i)}});
      ++row;
    }
  }
  return {repdisp::EmbeddingMatrix(row, dim, std::move(data)), std::move(meta)};
}

/// Orthogonal mixture pool: `incorrect` rows equal to e_0 and `correct`
/// rows e_1, e_2, ... (each orthogonal to e_0 and to each other).
inline SyntheticBins orthogonal_pool(std::size_t correct, std::size_t incorrect) {
  const std::size_t dim = correct + 1;
  std::vector<float> data;
  std::vector<nlohmann::json> meta;
  std::size_t row = 0;
  for (std::size_t i = 0; i < correct; ++i) {
    for (std::size_t k = 0; k < dim; ++k) data.push_back(k == i + 1 ? 1.0F : 0.0F);
    meta.push_back({{"row_index", row}, {"segment_id", "c" + std::to_string(i)}, {"correct", true}});
    ++row;
  }
  for (std::size_t i = 0; i < incorrect; ++i) {
    for (std::size_t k = 0; k < dim; ++k) data.push_back(k == 0 ? 1.0F : 0.0F);
    meta.push_back({{"row_index", row}, {"segment_id", "w" + std::to_string(i)}, {"correct", false}});
    ++row;
  }
  return {repdisp::EmbeddingMatrix(row, dim, std::move(data)), std::move(meta)};
}

struct RawTensor {
  std::string name;
  std::string dtype;  // "F32", "F16", "BF16", ...
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> bytes;
};

/// Minimal safetensors writer: u64-LE header length, JSON header (padded
/// with spaces to a multiple of 8), then the concatenated payloads.
inline void write_safetensors(const fs::path& p, const std::vector<RawTensor>& tensors,
                              bool with_metadata = true) {
  nlohmann::json header = nlohmann::json::object();
  if (with_metadata) header["__metadata__"] = {{"format", "pt"}};
  std::vector<std::uint8_t> payload;
  for (const auto& t : tensors) {
    const std::uint64_t begin = payload.size();
    payload.insert(payload.end(), t.bytes.begin(), t.bytes.end());
    header[t.name] = {{"dtype", t.dtype}, {"shape", t.shape}, {"data_offsets", {begin, payload.size()}}};
  }
  std::string h = header.dump();
  while (h.size() % 8 != 0) h.push_back(' ');
  std::string file;
  const std::uint64_t len = h.size();
  for (int i = 0; i < 8; ++i) file.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
  file += h;
  file.append(payload.begin(), payload.end());
  spit(p, file);
}

template <typename U>
std::vector<std::uint8_t> le_bytes(const std::vector<U>& words) {
  std::vector<std::uint8_t> out;
  for (U w : words) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(w >> (8 * i)));
  }
  return out;
}

}  // namespace testsupport
