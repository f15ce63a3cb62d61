#include "repdisp/pplbin.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "repdisp/parallel.hpp"

namespace repdisp {

double perplexity_from_logprobs(double logprob_sum, std::uint64_t token_count) {
  if (token_count == 0) fail(Errc::invalid_argument, "token_count must be >= 1");
  if (!std::isfinite(logprob_sum)) fail(Errc::invalid_argument, "logprob_sum must be finite");
  if (logprob_sum > 0.0) {
    fail(Errc::invalid_argument, "positive logprob_sum implies probability above 1");
  }
  return std::exp(-logprob_sum / static_cast<double>(token_count));
}

double resolve_perplexity(const SegmentMeta& meta) {
  if (meta.perplexity) return *meta.perplexity;
  if (meta.logprob_sum && meta.token_count) {
    return perplexity_from_logprobs(*meta.logprob_sum, *meta.token_count);
  }
  fail(Errc::invalid_argument, "segment at row " + std::to_string(meta.row_index) +
                                   " has neither perplexity nor (logprob_sum, token_count)");
}

std::vector<PerplexityBin> sort_and_bin(std::span<const SegmentMeta> metas, std::size_t bin_size) {
  if (bin_size == 0) fail(Errc::invalid_argument, "bin_size must be >= 1");

  struct Keyed {
    double ppl;
    const SegmentMeta* meta;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(metas.size());
  for (const auto& m : metas) keyed.push_back({resolve_perplexity(m), &m});
  std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.ppl != b.ppl) return a.ppl < b.ppl;
    if (a.meta->segment_id != b.meta->segment_id) return a.meta->segment_id < b.meta->segment_id;
    return a.meta->row_index < b.meta->row_index;
  });

  std::vector<PerplexityBin> bins;
  for (std::size_t start = 0; start < keyed.size(); start += bin_size) {
    const std::size_t end = std::min(keyed.size(), start + bin_size);
    PerplexityBin bin;
    bin.bin_id = bins.size();
    double sum = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      bin.row_indices.push_back(keyed[i].meta->row_index);
      sum += keyed[i].ppl;
    }
    bin.mean_ppl = sum / static_cast<double>(end - start);
    bins.push_back(std::move(bin));
  }
  return bins;
}

std::vector<std::size_t> uniform_ppl_select(std::span<const PerplexityBin> bins, std::size_t k) {
  const std::size_t g = bins.size();
  if (k < 2) fail(Errc::invalid_argument, "K must be >= 2 (got " + std::to_string(k) + ")");
  if (k > g) {
    fail(Errc::invalid_argument, "K = " + std::to_string(k) + " exceeds the number of bins G = " +
                                     std::to_string(g));
  }
  std::vector<double> means(g);
  for (std::size_t j = 0; j < g; ++j) {
    means[j] = bins[j].mean_ppl;
    if (j > 0 && means[j] < means[j - 1]) {
      fail(Errc::invalid_argument, "bins are not sorted by mean perplexity");
    }
  }

  const double m_min = means.front();
  const double m_max = means.back();
  std::vector<bool> chosen(g, false);

  for (std::size_t t = 0; t < k; ++t) {
    const double target = m_min + static_cast<double>(t) / static_cast<double>(k - 1) * (m_max - m_min);
    // Nearest mean on a sorted array: compare the first mean >= target with
    // its predecessor, then walk to the first bin of an equal-mean run.
    auto hi = std::lower_bound(means.begin(), means.end(), target);
    std::size_t pick;
    if (hi == means.end()) {
      pick = g - 1;
    } else if (hi == means.begin()) {
      pick = 0;
    } else {
      const std::size_t h = static_cast<std::size_t>(hi - means.begin());
      const double d_hi = means[h] - target;
      const double d_lo = target - means[h - 1];
      pick = d_lo <= d_hi ? h - 1 : h;
    }
    pick = static_cast<std::size_t>(
        std::lower_bound(means.begin(), means.end(), means[pick]) - means.begin());
    chosen[pick] = true;
  }

  std::size_t count = static_cast<std::size_t>(std::count(chosen.begin(), chosen.end(), true));
  for (std::size_t j = 0; j < g && count < k; ++j) {
    if (!chosen[j]) {
      chosen[j] = true;
      ++count;
    }
  }

  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t j = 0; j < g; ++j) {
    if (chosen[j]) out.push_back(bins[j].bin_id);
  }
  return out;
}

std::vector<CurvePoint> bin_dispersion_curve(const EmbeddingMatrix& matrix,
                                             std::span<const PerplexityBin> bins,
                                             const DispersionOptions& options) {
  for (const auto& b : bins) {
    if (b.row_indices.size() < 2) {
      fail(Errc::invalid_argument, "bin " + std::to_string(b.bin_id) + " has " +
                                       std::to_string(b.row_indices.size()) +
                                       " row(s); dispersion needs >= 2");
    }
  }
  std::vector<CurvePoint> points(bins.size());
  const RowSet<float> all(matrix);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto& b = bins[i];
    CurvePoint& p = points[i];
    p.bin_id = b.bin_id;
    p.x = b.mean_ppl;
    p.n = b.row_indices.size();
    p.report = measure_dispersion(all.subset(b.row_indices), options);
    p.y = p.report.value;
  }
  return points;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> xs, std::span<const double> ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) fail(Errc::degenerate, "correlation input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

bool all_equal(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

double correlation(std::span<const double> xs, std::span<const double> ys, CorrelationKind kind) {
  if (xs.size() != ys.size()) {
    fail(Errc::mismatch, "correlation inputs differ in length (" + std::to_string(xs.size()) +
                             " vs " + std::to_string(ys.size()) + ")");
  }
  if (xs.size() < 3) fail(Errc::invalid_argument, "correlation needs at least 3 points");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      fail(Errc::non_finite, "correlation input contains a non-finite value");
    }
  }
  if (all_equal(xs) || all_equal(ys)) fail(Errc::degenerate, "correlation input has zero variance");
  if (kind == CorrelationKind::pearson) return pearson(xs, ys);
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

}  // namespace repdisp
