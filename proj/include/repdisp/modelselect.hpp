#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "repdisp/geometry.hpp"

namespace repdisp {

/// A named list of vocabulary rows (domain tokens or reference tokens).
struct TokenSetSpec {
  std::string name;
  std::vector<std::size_t> token_ids;
};

/// Parses {"name": string, "token_ids": [int, ...]}.
TokenSetSpec parse_token_set(const nlohmann::json& j);
TokenSetSpec read_token_set(const std::filesystem::path& path);

/// Dispersion gap of one checkpoint under one metric:
/// gap = within_T + between_T_Tbar. within_Tbar is reported alongside but
/// does not enter the gap.
struct GapReport {
  std::string model_tag;
  Metric metric = Metric::cosine;
  double within_T = 0.0;
  double within_Tbar = 0.0;
  double between_T_Tbar = 0.0;
  double gap = 0.0;
  std::optional<double> accuracy;
};

/// Builds a report from already-measured components.
GapReport make_gap_report(std::string model_tag, Metric metric, double within_T,
                          double within_Tbar, double between_T_Tbar,
                          std::optional<double> accuracy = std::nullopt);

GapReport dispersion_gap(const EmbeddingMatrix& embeddings, const TokenSetSpec& domain,
                         const TokenSetSpec& reference, Metric metric,
                         std::string model_tag = {});

/// Model tags by descending gap; equal gaps fall back to lexicographic tag order.
std::vector<std::string> rank_models(std::span<const GapReport> reports);

/// Spearman correlation between gap and accuracy.
double rank_agreement(std::span<const GapReport> reports);

}  // namespace repdisp
