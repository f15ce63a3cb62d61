#include "repdisp/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "repdisp/parallel.hpp"

namespace repdisp {
namespace {

struct MeanStd {
  double mean = 0.0;
  std::optional<double> std;
};

MeanStd mean_and_sample_std(std::span<const double> v) {
  MeanStd out;
  const double n = static_cast<double>(v.size());
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) {
    out.mean = v.front();
    if (v.size() >= 2) out.std = 0.0;
  } else if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

}  // namespace

std::vector<SublayerProfile> profile_sublayers(std::span<const SublayerInput> inputs,
                                               std::span<const std::size_t> ns,
                                               std::size_t repeats, std::uint64_t base_seed) {
  if (inputs.empty()) fail(Errc::invalid_argument, "no sublayer inputs");
  if (ns.empty()) fail(Errc::invalid_argument, "no sample sizes");
  if (repeats == 0) fail(Errc::invalid_argument, "repeats must be >= 1");

  // model tag -> input positions, in first-appearance order
  std::vector<std::string> models;
  std::map<std::string, std::vector<std::size_t>> by_model;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto [it, fresh] = by_model.try_emplace(inputs[i].model_tag);
    if (fresh) models.push_back(inputs[i].model_tag);
    it->second.push_back(i);
  }
  for (const auto& model : models) {
    const auto& members = by_model[model];
    const std::size_t rows = inputs[members.front()].matrix.get().n_rows();
    for (std::size_t m : members) {
      if (inputs[m].matrix.get().n_rows() != rows) {
        fail(Errc::mismatch, "sublayers of model '" + model + "' differ in row count (" +
                                 std::to_string(rows) + " vs " +
                                 std::to_string(inputs[m].matrix.get().n_rows()) + ")");
      }
    }
    for (std::size_t n : ns) {
      if (n > rows) {
        fail(Errc::invalid_argument, "N = " + std::to_string(n) + " exceeds the " +
                                         std::to_string(rows) + " rows of model '" + model + "'");
      }
      if (n < 2) fail(Errc::invalid_argument, "N must be >= 2");
    }
  }

  // One cell per (model, N, repeat); each cell owns its sampler.
  struct Cell {
    std::size_t model;
    std::size_t n_pos;
    std::size_t repeat;
  };
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::size_t p = 0; p < ns.size(); ++p) {
      for (std::size_t r = 0; r < repeats; ++r) cells.push_back({m, p, r});
    }
  }
  // values[cell][member]
  std::vector<std::vector<double>> values(cells.size());
  parallel_for(cells.size(), [&](std::size_t c) {
    const Cell& cell = cells[c];
    const auto& members = by_model.at(models[cell.model]);
    const std::size_t rows = inputs[members.front()].matrix.get().n_rows();
    SeededSampler sampler(base_seed + cell.repeat);
    const auto idx = sample_indices(sampler, rows, ns[cell.n_pos]);
    std::vector<double> out;
    for (std::size_t m : members) {
      const RowSet<float> all(inputs[m].matrix.get());
      out.push_back(mean_pairwise_cosine_distance(all.subset(idx), Method::exact).value);
    }
    values[c] = std::move(out);
  });

  std::vector<SublayerProfile> profiles;
  std::size_t c = 0;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& members = by_model.at(models[m]);
    for (std::size_t p = 0; p < ns.size(); ++p) {
      for (std::size_t k = 0; k < members.size(); ++k) {
        std::vector<double> reps(repeats);
        for (std::size_t r = 0; r < repeats; ++r) reps[r] = values[c + r][k];
        const auto stats = mean_and_sample_std(reps);
        SublayerProfile prof;
        prof.model_tag = models[m];
        prof.sublayer_tag = inputs[members[k]].sublayer_tag;
        prof.n = ns[p];
        prof.mean = stats.mean;
        prof.std = stats.std;
        prof.repeats = repeats;
        prof.base_seed = base_seed;
        profiles.push_back(std::move(prof));
      }
      c += repeats;
    }
  }
  return profiles;
}

std::vector<double> default_mixture_levels() {
  std::vector<double> levels;
  for (int i = 0; i <= 10; ++i) levels.push_back(static_cast<double>(i) / 10.0);
  return levels;
}

std::size_t mixture_correct_count(double level, std::size_t n_per_level) {
  if (!(level >= 0.0 && level <= 1.0)) {
    fail(Errc::invalid_argument, "mixture level must lie in [0, 1]");
  }
  const double exact = level * static_cast<double>(n_per_level);
  const double rounded = std::floor(exact + 0.5);
  if (std::abs(exact - rounded) > 1e-9) {
    fail(Errc::invalid_argument, "level " + std::to_string(level) + " times n = " +
                                     std::to_string(n_per_level) + " is not an integer count");
  }
  return static_cast<std::size_t>(rounded);
}

std::vector<MixturePoint> accuracy_mixture_curve(const EmbeddingMatrix& matrix,
                                                 std::span<const SegmentMeta> metas,
                                                 std::span<const double> levels,
                                                 std::size_t n_per_level, std::size_t seeds,
                                                 std::uint64_t base_seed) {
  if (n_per_level < 2) fail(Errc::invalid_argument, "n_per_level must be >= 2");
  if (seeds == 0) fail(Errc::invalid_argument, "seeds must be >= 1");
  validate_meta(metas, matrix);

  std::vector<std::size_t> correct_pool;
  std::vector<std::size_t> incorrect_pool;
  for (const auto& m : metas) {
    if (!m.correct) continue;
    (*m.correct ? correct_pool : incorrect_pool).push_back(m.row_index);
  }
  std::sort(correct_pool.begin(), correct_pool.end());
  std::sort(incorrect_pool.begin(), incorrect_pool.end());

  std::vector<std::size_t> n_correct(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    n_correct[l] = mixture_correct_count(levels[l], n_per_level);
    const std::size_t n_incorrect = n_per_level - n_correct[l];
    if (n_correct[l] > correct_pool.size() || n_incorrect > incorrect_pool.size()) {
      fail(Errc::insufficient_pool,
           "level " + std::to_string(levels[l]) + " needs " + std::to_string(n_correct[l]) +
               " correct and " + std::to_string(n_incorrect) + " incorrect rows; pools hold " +
               std::to_string(correct_pool.size()) + " and " +
               std::to_string(incorrect_pool.size()));
    }
  }

  const RowSet<float> all(matrix);
  std::vector<double> values(levels.size() * seeds);
  parallel_for(values.size(), [&](std::size_t cell) {
    const std::size_t l = cell / seeds;
    const std::size_t s = cell % seeds;
    SeededSampler sampler(base_seed + s);
    std::vector<std::size_t> rows;
    rows.reserve(n_per_level);
    for (std::size_t k : sample_indices(sampler, correct_pool.size(), n_correct[l])) {
      rows.push_back(correct_pool[k]);
    }
    for (std::size_t k : sample_indices(sampler, incorrect_pool.size(), n_per_level - n_correct[l])) {
      rows.push_back(incorrect_pool[k]);
    }
    std::sort(rows.begin(), rows.end());
    values[cell] = mean_pairwise_cosine_distance(all.subset(rows), Method::exact).value;
  });

  std::vector<MixturePoint> out;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto stats = mean_and_sample_std(std::span<const double>(values).subspan(l * seeds, seeds));
    MixturePoint p;
    p.level = levels[l];
    p.mean_distance = stats.mean;
    p.std_error = stats.std ? *stats.std / std::sqrt(static_cast<double>(seeds)) : 0.0;
    p.seeds = seeds;
    out.push_back(p);
  }
  return out;
}

std::vector<CheckpointClusterSeries> checkpoint_cluster_tracking(
    std::span<const CheckpointInput> series, CentroidMode mode) {
  if (series.empty()) fail(Errc::invalid_argument, "no checkpoints");
  const ClusterSet& first = series.front().clusters;
  std::vector<CheckpointClusterSeries> out;
  for (const auto& cp : series) {
    if (cp.clusters.size() != first.size() ||
        !std::equal(cp.clusters.begin(), cp.clusters.end(), first.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; })) {
      fail(Errc::mismatch, "checkpoint '" + cp.checkpoint_tag +
                               "' has a different cluster id set than '" +
                               series.front().checkpoint_tag + "'");
    }
    const EmbeddingMatrix& m = cp.matrix.get();
    validate_clusters(cp.clusters, m.n_rows());
    double within = 0.0;
    for (const auto& [id, rows] : cp.clusters) {
      if (rows.size() < 2) {
        fail(Errc::invalid_argument, "cluster '" + id + "' in checkpoint '" + cp.checkpoint_tag +
                                         "' has fewer than 2 rows");
      }
      within += within_cluster_distance(RowSet<float>(m).subset(rows), mode);
    }
    CheckpointClusterSeries s;
    s.checkpoint_tag = cp.checkpoint_tag;
    s.within = within / static_cast<double>(cp.clusters.size());
    s.between = between_cluster_distance(m, cp.clusters, mode);
    s.loss = cp.loss;
    out.push_back(std::move(s));
  }
  return out;
}

ClusterSet clusters_from_meta(std::span<const SegmentMeta> metas) {
  ClusterSet clusters;
  for (const auto& m : metas) {
    if (m.cluster_id) clusters[*m.cluster_id].push_back(m.row_index);
  }
  for (auto& [id, rows] : clusters) std::sort(rows.begin(), rows.end());
  return clusters;
}

}  // namespace repdisp
