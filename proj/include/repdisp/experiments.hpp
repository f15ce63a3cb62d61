#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "repdisp/geometry.hpp"
#include "repdisp/sampler.hpp"
#include "repdisp/tensor_io.hpp"

namespace repdisp {

// ---------------------------------------------------------------------------
// Sublayer profiling

struct SublayerInput {
  std::string model_tag;
  std::string sublayer_tag;  // "attention", "feedforward", or any label
  std::reference_wrapper<const EmbeddingMatrix> matrix;
};

struct SublayerProfile {
  std::string model_tag;
  std::string sublayer_tag;
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> std;  // sample std over repeats; needs repeats >= 2
  std::size_t repeats = 0;
  std::uint64_t base_seed = 0;
};

/// For every model, sample size N and repeat r, one index set is drawn with
/// SeededSampler(base_seed + r) and applied to every sublayer of that model,
/// so differences between sublayers never come from the sample. Dispersion
/// is the exact mean pairwise cosine distance.
///
/// Output order: models in first-appearance order, then `ns` order, then
/// sublayers in input order.
std::vector<SublayerProfile> profile_sublayers(std::span<const SublayerInput> inputs,
                                               std::span<const std::size_t> ns,
                                               std::size_t repeats, std::uint64_t base_seed);

// ---------------------------------------------------------------------------
// Accuracy mixture

inline constexpr std::size_t kDefaultMixtureSize = 100;
inline constexpr std::size_t kDefaultMixtureSeeds = 10;

/// 0.0, 0.1, ..., 1.0
std::vector<double> default_mixture_levels();

struct MixturePoint {
  double level = 0.0;
  double mean_distance = 0.0;
  double std_error = 0.0;  // sample std / sqrt(seeds); 0 for a single seed
  std::size_t seeds = 0;
};

/// Number of correct rows drawn at `level` (round half up). Throws if
/// level * n is not integral within 1e-9.
std::size_t mixture_correct_count(double level, std::size_t n_per_level);

/// For every level and seed s, draws round(level * n) correct rows and the
/// rest incorrect rows without replacement using SeededSampler(base_seed + s)
/// (correct pool first, then incorrect), and takes the exact mean pairwise
/// cosine distance of the mixed set.
std::vector<MixturePoint> accuracy_mixture_curve(const EmbeddingMatrix& matrix,
                                                 std::span<const SegmentMeta> metas,
                                                 std::span<const double> levels,
                                                 std::size_t n_per_level, std::size_t seeds,
                                                 std::uint64_t base_seed);

// ---------------------------------------------------------------------------
// Cluster tracking across checkpoints

struct CheckpointInput {
  std::string checkpoint_tag;
  std::reference_wrapper<const EmbeddingMatrix> matrix;
  ClusterSet clusters;
  std::optional<double> loss;
};

struct CheckpointClusterSeries {
  std::string checkpoint_tag;
  double within = 0.0;
  double between = 0.0;
  std::optional<double> loss;
};

std::vector<CheckpointClusterSeries> checkpoint_cluster_tracking(
    std::span<const CheckpointInput> series, CentroidMode mode = CentroidMode::raw);

/// Groups metadata rows by cluster_id; rows without one are ignored.
ClusterSet clusters_from_meta(std::span<const SegmentMeta> metas);

}  // namespace repdisp
