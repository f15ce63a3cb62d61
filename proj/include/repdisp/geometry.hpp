#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "repdisp/matrix.hpp"

namespace repdisp {

enum class Metric { cosine, euclidean };
enum class Method { exact, closed_form, pair_subsample };

const char* to_string(Metric m) noexcept;
const char* to_string(Method m) noexcept;
Metric parse_metric(const std::string& s);
Method parse_method(const std::string& s);

/// Rows whose L2 norm falls below this are rejected wherever a direction
/// is needed.
inline constexpr double kMinNorm = 1e-12;

/// Pair budget used for Euclidean dispersion when C(N,2) exceeds it.
inline constexpr std::uint64_t kDefaultPairBudget = 2'000'000;

struct DispersionReport {
  Metric metric = Metric::cosine;
  Method method = Method::exact;
  std::size_t n_rows = 0;
  double value = 0.0;
  std::optional<double> std_across_seeds;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> pair_budget;
};

/// cluster id -> row indices. Ordered so every statistic iterates clusters
/// in a fixed order.
using ClusterSet = std::map<std::string, std::vector<std::size_t>>;

/// How a centroid is formed before its cosine distances are taken.
/// `raw` averages the rows as stored; `normalized` averages unit rows.
enum class CentroidMode { raw, normalized };

template <typename T>
Matrix64 normalize_rows(const RowSet<T>& rows);

/// Mean pairwise cosine distance. `exact` enumerates all i<j pairs;
/// `closed_form` uses 1 - (|s|^2 - N) / (N(N-1)) with s the sum of unit rows.
template <typename T>
DispersionReport mean_pairwise_cosine_distance(const RowSet<T>& rows,
                                               Method method = Method::closed_form);

/// Mean pairwise Euclidean distance. When `pair_budget` is nullopt or at
/// least C(N,2) every pair is used; otherwise `pair_budget` distinct pairs
/// are drawn from a SeededSampler(seed).
template <typename T>
DispersionReport mean_pairwise_euclidean_distance(
    const RowSet<T>& rows, std::optional<std::uint64_t> pair_budget,
    std::uint64_t seed);

template <typename T>
std::vector<double> centroid(const RowSet<T>& rows,
                             CentroidMode mode = CentroidMode::raw);

template <typename T>
double within_cluster_distance(const RowSet<T>& cluster,
                               CentroidMode mode = CentroidMode::raw);

/// Centroid of every cluster, one row each, in ClusterSet order.
Matrix64 cluster_centroids(const EmbeddingMatrix& matrix, const ClusterSet& clusters,
                           CentroidMode mode = CentroidMode::raw);

/// Mean pairwise cosine distance among the cluster centroids (exact).
double between_cluster_distance(const EmbeddingMatrix& matrix, const ClusterSet& clusters,
                                CentroidMode mode = CentroidMode::raw);

template <typename T>
double set_to_set_mean_distance(const RowSet<T>& a, const RowSet<T>& b, Metric metric);

/// Checks indices are in range and no index belongs to two clusters.
void validate_clusters(const ClusterSet& clusters, std::size_t n_rows);

struct DispersionOptions {
  Metric metric = Metric::cosine;
  Method method = Method::closed_form;
  std::optional<std::uint64_t> pair_budget = kDefaultPairBudget;
  std::uint64_t seed = 0;
};

/// Dispatches to the cosine or Euclidean kernel.
template <typename T>
DispersionReport measure_dispersion(const RowSet<T>& rows, const DispersionOptions& options);

double cosine_distance(std::span<const double> a, std::span<const double> b);

// Convenience overloads on whole matrices.
inline DispersionReport mean_pairwise_cosine_distance(const EmbeddingMatrix& m,
                                                      Method method = Method::closed_form) {
  return mean_pairwise_cosine_distance(RowSet<float>(m), method);
}
inline DispersionReport mean_pairwise_cosine_distance(const Matrix64& m,
                                                      Method method = Method::closed_form) {
  return mean_pairwise_cosine_distance(RowSet<double>(m), method);
}
inline Matrix64 normalize_rows(const EmbeddingMatrix& m) {
  return normalize_rows(RowSet<float>(m));
}
inline std::vector<double> centroid(const EmbeddingMatrix& m,
                                    std::span<const std::size_t> rows,
                                    CentroidMode mode = CentroidMode::raw) {
  return centroid(RowSet<float>(m).subset(rows), mode);
}
inline double within_cluster_distance(const EmbeddingMatrix& m,
                                      std::span<const std::size_t> cluster,
                                      CentroidMode mode = CentroidMode::raw) {
  return within_cluster_distance(RowSet<float>(m).subset(cluster), mode);
}
inline double set_to_set_mean_distance(const EmbeddingMatrix& a, const EmbeddingMatrix& b,
                                       Metric metric) {
  return set_to_set_mean_distance(RowSet<float>(a), RowSet<float>(b), metric);
}

}  // namespace repdisp
