#include "repdisp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "repdisp/parallel.hpp"
#include "repdisp/sampler.hpp"

namespace repdisp {
namespace {

// Pairs per task when summing sampled Euclidean distances.
constexpr std::size_t kPairChunk = 4096;

template <typename A, typename B>
double dot(std::span<const A> a, std::span<const B> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    s += static_cast<double>(a[k]) * static_cast<double>(b[k]);
  }
  return s;
}

template <typename A, typename B>
double euclidean(std::span<const A> a, std::span<const B> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

template <typename T>
double norm(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

template <typename T>
std::vector<double> checked_norms(const RowSet<T>& rows) {
  std::vector<double> norms(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    norms[k] = norm(rows[k]);
    if (!(norms[k] >= kMinNorm)) {
      fail(Errc::degenerate, "row " + std::to_string(rows.source_index(k)) +
                                 " has near-zero norm");
    }
  }
  return norms;
}

double clamp_cosine_distance(double v) { return std::clamp(v, 0.0, 2.0); }

double pair_count(std::size_t n) {
  return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
}

// Number of pairs (i, j), i < j, whose first index is below i.
std::uint64_t pairs_before(std::uint64_t i, std::uint64_t n) {
  return i * (2 * n - i - 1) / 2;
}

std::pair<std::size_t, std::size_t> unrank_pair(std::uint64_t p, std::uint64_t n) {
  std::uint64_t lo = 0;
  std::uint64_t hi = n - 2;
  while (lo < hi) {
    std::uint64_t mid = lo + (hi - lo + 1) / 2;
    if (pairs_before(mid, n) <= p) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  const std::uint64_t j = lo + 1 + (p - pairs_before(lo, n));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(j)};
}

}  // namespace

const char* to_string(Metric m) noexcept {
  return m == Metric::cosine ? "cosine" : "euclidean";
}

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::exact: return "exact";
    case Method::closed_form: return "closed_form";
    case Method::pair_subsample: return "pair_subsample";
  }
  return "unknown";
}

Metric parse_metric(const std::string& s) {
  if (s == "cosine") return Metric::cosine;
  if (s == "euclidean") return Metric::euclidean;
  fail(Errc::invalid_argument, "unknown metric '" + s + "' (expected cosine or euclidean)");
}

Method parse_method(const std::string& s) {
  if (s == "exact") return Method::exact;
  if (s == "closed_form") return Method::closed_form;
  if (s == "pair_subsample") return Method::pair_subsample;
  fail(Errc::invalid_argument,
       "unknown method '" + s + "' (expected exact, closed_form or pair_subsample)");
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na >= kMinNorm) || !(nb >= kMinNorm)) {
    fail(Errc::degenerate, "cosine distance of a near-zero vector");
  }
  return 1.0 - dot(a, b) / (na * nb);
}

template <typename T>
Matrix64 normalize_rows(const RowSet<T>& rows) {
  const auto norms = checked_norms(rows);
  Matrix64 out(rows.size(), rows.dim());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto src = rows[k];
    auto dst = out.row(k);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = static_cast<double>(src[c]) / norms[k];
  }
  return out;
}

template <typename T>
DispersionReport mean_pairwise_cosine_distance(const RowSet<T>& rows, Method method) {
  const std::size_t n = rows.size();
  if (n < 2) fail(Errc::invalid_argument, "dispersion needs at least 2 rows");
  const auto norms = checked_norms(rows);

  DispersionReport r;
  r.metric = Metric::cosine;
  r.method = method;
  r.n_rows = n;

  if (method == Method::exact) {
    const double total = ordered_sum(n, [&](std::size_t i) {
      double s = 0.0;
      const auto ri = rows[i];
      for (std::size_t j = i + 1; j < n; ++j) {
        s += 1.0 - dot(ri, rows[j]) / (norms[i] * norms[j]);
      }
      return s;
    });
    r.value = clamp_cosine_distance(total / pair_count(n));
  } else if (method == Method::closed_form) {
    std::vector<double> resultant(rows.dim(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ri = rows[i];
      const double inv = 1.0 / norms[i];
      for (std::size_t c = 0; c < ri.size(); ++c) resultant[c] += static_cast<double>(ri[c]) * inv;
    }
    const double s2 = dot(std::span<const double>(resultant), std::span<const double>(resultant));
    const double nd = static_cast<double>(n);
    r.value = clamp_cosine_distance(1.0 - (s2 - nd) / (nd * (nd - 1.0)));
  } else {
    fail(Errc::invalid_argument, "cosine dispersion supports exact or closed_form");
  }
  return r;
}

template <typename T>
DispersionReport mean_pairwise_euclidean_distance(const RowSet<T>& rows,
                                                  std::optional<std::uint64_t> pair_budget,
                                                  std::uint64_t seed) {
  const std::size_t n = rows.size();
  if (n < 2) fail(Errc::invalid_argument, "dispersion needs at least 2 rows");
  if (pair_budget && *pair_budget == 0) fail(Errc::invalid_argument, "pair_budget must be > 0");

  DispersionReport r;
  r.metric = Metric::euclidean;
  r.n_rows = n;
  const std::uint64_t total_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;

  if (!pair_budget || *pair_budget >= total_pairs) {
    r.method = Method::exact;
    const double total = ordered_sum(n, [&](std::size_t i) {
      double s = 0.0;
      const auto ri = rows[i];
      for (std::size_t j = i + 1; j < n; ++j) s += euclidean(ri, rows[j]);
      return s;
    });
    r.value = total / pair_count(n);
    return r;
  }

  r.method = Method::pair_subsample;
  r.seed = seed;
  r.pair_budget = *pair_budget;
  SeededSampler sampler(seed);
  const auto picks = sample_indices(sampler, static_cast<std::size_t>(total_pairs),
                                    static_cast<std::size_t>(*pair_budget));
  const std::size_t chunks = (picks.size() + kPairChunk - 1) / kPairChunk;
  const double total = ordered_sum(chunks, [&](std::size_t c) {
    double s = 0.0;
    const std::size_t end = std::min(picks.size(), (c + 1) * kPairChunk);
    for (std::size_t k = c * kPairChunk; k < end; ++k) {
      const auto [i, j] = unrank_pair(picks[k], n);
      s += euclidean(rows[i], rows[j]);
    }
    return s;
  });
  r.value = total / static_cast<double>(picks.size());
  return r;
}

template <typename T>
std::vector<double> centroid(const RowSet<T>& rows, CentroidMode mode) {
  if (rows.size() == 0) fail(Errc::invalid_argument, "centroid of an empty row list");
  std::vector<double> c(rows.dim(), 0.0);
  std::vector<double> norms;
  if (mode == CentroidMode::normalized) norms = checked_norms(rows);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto rk = rows[k];
    const double scale = mode == CentroidMode::normalized ? 1.0 / norms[k] : 1.0;
    for (std::size_t d = 0; d < rk.size(); ++d) c[d] += static_cast<double>(rk[d]) * scale;
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& v : c) v *= inv;
  return c;
}

template <typename T>
double within_cluster_distance(const RowSet<T>& cluster, CentroidMode mode) {
  if (cluster.size() < 2) fail(Errc::invalid_argument, "within-cluster distance needs >= 2 rows");
  const auto c = centroid(cluster, mode);
  const double cn = norm(std::span<const double>(c));
  if (!(cn >= kMinNorm)) fail(Errc::degenerate, "cluster centroid has near-zero norm");
  const auto norms = checked_norms(cluster);
  double s = 0.0;
  for (std::size_t k = 0; k < cluster.size(); ++k) {
    s += 1.0 - dot(cluster[k], std::span<const double>(c)) / (norms[k] * cn);
  }
  return s / static_cast<double>(cluster.size());
}

void validate_clusters(const ClusterSet& clusters, std::size_t n_rows) {
  std::set<std::size_t> seen;
  for (const auto& [id, rows] : clusters) {
    for (std::size_t r : rows) {
      if (r >= n_rows) {
        fail(Errc::out_of_bounds, "cluster '" + id + "' references row " + std::to_string(r) +
                                      " of " + std::to_string(n_rows));
      }
      if (!seen.insert(r).second) {
        fail(Errc::duplicate_index, "row " + std::to_string(r) + " appears in more than one cluster");
      }
    }
  }
}

Matrix64 cluster_centroids(const EmbeddingMatrix& matrix, const ClusterSet& clusters,
                           CentroidMode mode) {
  validate_clusters(clusters, matrix.n_rows());
  Matrix64 out(clusters.size(), matrix.dim());
  std::size_t k = 0;
  for (const auto& [id, rows] : clusters) {
    if (rows.empty()) fail(Errc::invalid_argument, "cluster '" + id + "' is empty");
    const auto c = centroid(RowSet<float>(matrix).subset(rows), mode);
    if (!(norm(std::span<const double>(c)) >= kMinNorm)) {
      fail(Errc::degenerate, "cluster '" + id + "' has a near-zero centroid");
    }
    std::copy(c.begin(), c.end(), out.row(k).begin());
    ++k;
  }
  return out;
}

double between_cluster_distance(const EmbeddingMatrix& matrix, const ClusterSet& clusters,
                                CentroidMode mode) {
  if (clusters.size() < 2) fail(Errc::invalid_argument, "between-cluster distance needs >= 2 clusters");
  const Matrix64 centroids = cluster_centroids(matrix, clusters, mode);
  return mean_pairwise_cosine_distance(RowSet<double>(centroids), Method::exact).value;
}

template <typename T>
double set_to_set_mean_distance(const RowSet<T>& a, const RowSet<T>& b, Metric metric) {
  if (a.size() == 0 || b.size() == 0) fail(Errc::invalid_argument, "set distance of an empty set");
  if (a.dim() != b.dim()) fail(Errc::mismatch, "set distance between different dimensions");
  double total = 0.0;
  if (metric == Metric::cosine) {
    const auto na = checked_norms(a);
    const auto nb = checked_norms(b);
    total = ordered_sum(a.size(), [&](std::size_t i) {
      double s = 0.0;
      for (std::size_t j = 0; j < b.size(); ++j) s += 1.0 - dot(a[i], b[j]) / (na[i] * nb[j]);
      return s;
    });
  } else {
    total = ordered_sum(a.size(), [&](std::size_t i) {
      double s = 0.0;
      for (std::size_t j = 0; j < b.size(); ++j) s += euclidean(a[i], b[j]);
      return s;
    });
  }
  return total / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

template <typename T>
DispersionReport measure_dispersion(const RowSet<T>& rows, const DispersionOptions& options) {
  if (options.metric == Metric::cosine) {
    return mean_pairwise_cosine_distance(rows, options.method);
  }
  switch (options.method) {
    case Method::exact:
      return mean_pairwise_euclidean_distance(rows, std::nullopt, options.seed);
    case Method::pair_subsample:
      return mean_pairwise_euclidean_distance(rows, options.pair_budget, options.seed);
    case Method::closed_form:
      break;
  }
  fail(Errc::invalid_argument, "closed_form is only valid for the cosine metric");
}

#define REPDISP_INSTANTIATE(T)                                                              \
  template Matrix64 normalize_rows(const RowSet<T>&);                                      \
  template DispersionReport mean_pairwise_cosine_distance(const RowSet<T>&, Method);       \
  template DispersionReport mean_pairwise_euclidean_distance(                              \
      const RowSet<T>&, std::optional<std::uint64_t>, std::uint64_t);                      \
  template std::vector<double> centroid(const RowSet<T>&, CentroidMode);                   \
  template double within_cluster_distance(const RowSet<T>&, CentroidMode);                 \
  template double set_to_set_mean_distance(const RowSet<T>&, const RowSet<T>&, Metric);    \
  template DispersionReport measure_dispersion(const RowSet<T>&, const DispersionOptions&);

REPDISP_INSTANTIATE(float)
REPDISP_INSTANTIATE(double)

#undef REPDISP_INSTANTIATE

}  // namespace repdisp
