#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "repdisp/geometry.hpp"
#include "repdisp/tensor_io.hpp"

namespace repdisp {

inline constexpr std::size_t kDefaultBinSize = 100;

/// exp(-logprob_sum / token_count), natural log.
double perplexity_from_logprobs(double logprob_sum, std::uint64_t token_count);

/// Stored perplexity if present, else derived from (logprob_sum, token_count).
double resolve_perplexity(const SegmentMeta& meta);

struct PerplexityBin {
  std::size_t bin_id = 0;
  std::vector<std::size_t> row_indices;
  double mean_ppl = 0.0;
  std::optional<DispersionReport> dispersion;
};

/// Sorts segments ascending by perplexity (ties: segment_id, then
/// row_index) and chunks them into consecutive bins of `bin_size`; the last
/// bin keeps the remainder.
std::vector<PerplexityBin> sort_and_bin(std::span<const SegmentMeta> metas,
                                        std::size_t bin_size = kDefaultBinSize);

/// Picks `k` bins spread uniformly over the perplexity range.
///
/// Targets are t_k = m_min + (k-1)/(K-1) * (m_max - m_min). Each target takes
/// the bin with the nearest mean (ties to the lower bin_id). When several
/// targets land on the same bin, unselected bins are added in ascending
/// bin_id order until exactly K are chosen. Returns bin ids, ascending.
std::vector<std::size_t> uniform_ppl_select(std::span<const PerplexityBin> bins, std::size_t k);

struct CurvePoint {
  std::size_t bin_id = 0;
  double x = 0.0;  // mean perplexity of the bin
  double y = 0.0;  // dispersion of the bin's rows
  std::size_t n = 0;
  DispersionReport report;
};

std::vector<CurvePoint> bin_dispersion_curve(const EmbeddingMatrix& matrix,
                                             std::span<const PerplexityBin> bins,
                                             const DispersionOptions& options = {});

enum class CorrelationKind { pearson, spearman };

/// 1-based ranks; tied values share the average of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

double correlation(std::span<const double> xs, std::span<const double> ys, CorrelationKind kind);

}  // namespace repdisp
