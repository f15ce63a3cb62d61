#include "repdisp/modelselect.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "repdisp/pplbin.hpp"

namespace repdisp {
using json = nlohmann::json;

TokenSetSpec parse_token_set(const json& j) {
  TokenSetSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    for (const auto& id : j.at("token_ids")) {
      if (!id.is_number_integer() || id.get<std::int64_t>() < 0) {
        fail(Errc::parse, "token set '" + spec.name + "' has a non-integer or negative id");
      }
      spec.token_ids.push_back(id.get<std::size_t>());
    }
    if (spec.token_ids.empty()) fail(Errc::parse, "token set '" + spec.name + "' has no ids");
  } catch (const json::exception& e) {
    fail(Errc::parse, std::string("malformed token set: ") + e.what());
  }
  return spec;
}

TokenSetSpec read_token_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "failed to open: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::parse, path.string() + ": " + e.what());
  }
  return parse_token_set(j);
}

GapReport make_gap_report(std::string model_tag, Metric metric, double within_T,
                          double within_Tbar, double between_T_Tbar,
                          std::optional<double> accuracy) {
  GapReport r;
  r.model_tag = std::move(model_tag);
  r.metric = metric;
  r.within_T = within_T;
  r.within_Tbar = within_Tbar;
  r.between_T_Tbar = between_T_Tbar;
  r.gap = within_T + between_T_Tbar;
  r.accuracy = accuracy;
  return r;
}

namespace {

void check_token_set(const TokenSetSpec& s, std::size_t vocab) {
  if (s.token_ids.size() < 2) {
    fail(Errc::invalid_argument, "token set '" + s.name + "' needs at least 2 ids");
  }
  std::set<std::size_t> seen;
  for (std::size_t id : s.token_ids) {
    if (id >= vocab) {
      fail(Errc::out_of_bounds, "token set '" + s.name + "' id " + std::to_string(id) +
                                    " >= vocabulary rows " + std::to_string(vocab));
    }
    if (!seen.insert(id).second) {
      fail(Errc::duplicate_index, "token set '" + s.name + "' repeats id " + std::to_string(id));
    }
  }
}

double within_distance(const RowSet<float>& rows, Metric metric) {
  if (metric == Metric::cosine) return mean_pairwise_cosine_distance(rows, Method::exact).value;
  return mean_pairwise_euclidean_distance(rows, std::nullopt, 0).value;
}

}  // namespace

GapReport dispersion_gap(const EmbeddingMatrix& embeddings, const TokenSetSpec& domain,
                         const TokenSetSpec& reference, Metric metric, std::string model_tag) {
  check_token_set(domain, embeddings.n_rows());
  check_token_set(reference, embeddings.n_rows());
  const std::set<std::size_t> d(domain.token_ids.begin(), domain.token_ids.end());
  for (std::size_t id : reference.token_ids) {
    if (d.count(id)) {
      fail(Errc::invalid_argument, "token id " + std::to_string(id) + " is in both '" +
                                       domain.name + "' and '" + reference.name + "'");
    }
  }
  const RowSet<float> all(embeddings);
  const auto t_rows = all.subset(domain.token_ids);
  const auto tbar_rows = all.subset(reference.token_ids);
  return make_gap_report(std::move(model_tag), metric, within_distance(t_rows, metric),
                         within_distance(tbar_rows, metric),
                         set_to_set_mean_distance(t_rows, tbar_rows, metric));
}

std::vector<std::string> rank_models(std::span<const GapReport> reports) {
  if (reports.size() < 2) fail(Errc::invalid_argument, "ranking needs at least 2 reports");
  for (const auto& r : reports) {
    if (r.metric != reports.front().metric) {
      fail(Errc::mismatch, "cannot rank reports computed with different metrics");
    }
  }
  std::vector<const GapReport*> order;
  for (const auto& r : reports) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const GapReport* a, const GapReport* b) {
    if (a->gap != b->gap) return a->gap > b->gap;
    return a->model_tag < b->model_tag;
  });
  std::vector<std::string> out;
  for (const auto* r : order) out.push_back(r->model_tag);
  return out;
}

double rank_agreement(std::span<const GapReport> reports) {
  if (reports.size() < 3) fail(Errc::invalid_argument, "rank agreement needs at least 3 reports");
  std::vector<double> gaps;
  std::vector<double> acc;
  for (const auto& r : reports) {
    if (!r.accuracy) fail(Errc::invalid_argument, "report '" + r.model_tag + "' has no accuracy");
    gaps.push_back(r.gap);
    acc.push_back(*r.accuracy);
  }
  return correlation(gaps, acc, CorrelationKind::spearman);
}

}  // namespace repdisp
