#include "repdisp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "repdisp/auxloss.hpp"
#include "repdisp/experiments.hpp"
#include "repdisp/geometry.hpp"
#include "repdisp/modelselect.hpp"
#include "repdisp/pplbin.hpp"
#include "repdisp/report_io.hpp"
#include "repdisp/sampler.hpp"
#include "repdisp/svg_plot.hpp"
#include "repdisp/tensor_io.hpp"
#include "repdisp/version.hpp"

namespace repdisp {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Bad flags, missing inputs, out-of-range parameters: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] void usage(const std::string& msg) { throw UsageError(msg); }

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) usage(flag + " is required");
  if (!fs::is_regular_file(path)) usage(flag + ": no such file '" + path + "'");
}

/// JSON number carrying exactly the 12-significant-digit value written to CSV.
json rounded(double v) { return std::stod(format_number(v)); }

json rounded(const std::optional<double>& v) { return v ? rounded(*v) : json(nullptr); }

/// Merges a JSON config object into a parsed subcommand. Keys map to long
/// flags (underscores become dashes); flags given on the command line win.
void apply_json_config(CLI::App& sub, const std::string& path) {
  if (path.empty()) return;
  require_file(path, "--config");
  json j;
  try {
    std::ifstream in(path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    usage("--config " + path + ": " + e.what());
  }
  if (!j.is_object()) usage("--config must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = sub.get_option_no_throw("--" + name);
    if (opt == nullptr || name == "config") usage("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    auto add = [&](const json& v) {
      opt->add_result(v.is_string() ? v.get<std::string>() : v.dump());
    };
    if (value.is_array()) {
      for (const auto& e : value) add(e);
    } else {
      add(value);
    }
    try {
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      usage("config key '" + key + "': " + e.what());
    }
  }
}

std::vector<std::string> preamble(const std::string& command, const json& config) {
  return {"repdisp " + std::string(kVersion), "command: " + command, "config: " + config.dump()};
}

void emit_csv(const CsvTable& table, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << table.to_string();
  } else {
    write_file_atomic(out_path, table.to_string());
  }
}

EmbeddingMatrix load_matrix(const std::string& path, const std::string& tensor) {
  if (fs::path(path).extension() == ".safetensors") {
    if (tensor.empty()) usage("--tensor is required for safetensors input " + path);
    return read_safetensors_matrix(path, tensor);
  }
  return read_edf(path);
}

std::optional<std::uint64_t> parse_budget(const std::string& s) {
  if (s == "all") return std::nullopt;
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size() || v <= 0) throw std::invalid_argument(s);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    usage("--pair-budget must be a positive integer or 'all' (got '" + s + "')");
  }
}

Metric metric_arg(const std::string& s) {
  try {
    return parse_metric(s);
  } catch (const Error& e) {
    usage(e.what());
  }
}

DispersionOptions dispersion_options(const std::string& metric, const std::string& method,
                                     const std::string& budget, std::uint64_t seed) {
  DispersionOptions o;
  o.metric = metric_arg(metric);
  if (method == "auto") {
    o.method = o.metric == Metric::cosine ? Method::closed_form : Method::pair_subsample;
  } else {
    try {
      o.method = parse_method(method);
    } catch (const Error& e) {
      usage(e.what());
    }
  }
  if (o.metric == Metric::cosine && o.method == Method::pair_subsample) {
    usage("pair_subsample applies to the euclidean metric only");
  }
  if (o.metric == Metric::euclidean && o.method == Method::closed_form) {
    usage("closed_form applies to the cosine metric only");
  }
  o.pair_budget = parse_budget(budget);
  o.seed = seed;
  return o;
}

std::string label_for(const std::vector<std::string>& labels, std::size_t i, const std::string& path) {
  return i < labels.size() ? labels[i] : fs::path(path).stem().string();
}

fs::path suffixed(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return p.parent_path() / (p.stem().string() + "_" + suffix + p.extension().string());
}

void write_svg(const std::string& path, const PlotSeries& series, PlotKind kind, const std::string& title) {
  write_file_atomic(path, render_svg(series, kind, title));
}

std::string fmt_corr(const std::optional<double>& v) { return v ? format_number(*v) : "n/a"; }

// ---------------------------------------------------------------------------
// dispersion

struct DispersionArgs {
  std::string config;
  std::vector<std::string> edf;
  std::vector<std::string> labels;
  std::string metric = "cosine";
  std::string method = "auto";
  std::string pair_budget = std::to_string(kDefaultPairBudget);
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  std::string out;
};

int cmd_dispersion(const DispersionArgs& a, std::ostream& out) {
  if (a.edf.empty()) usage("--edf is required");
  for (const auto& p : a.edf) require_file(p, "--edf");
  if (a.repeats == 0) usage("--repeats must be >= 1");
  const auto opts = dispersion_options(a.metric, a.method, a.pair_budget, a.seed);

  json config = {{"edf", a.edf},       {"labels", a.labels},   {"metric", a.metric},
                 {"method", a.method}, {"pair_budget", a.pair_budget}, {"seed", a.seed},
                 {"repeats", a.repeats}};
  CsvTable t;
  t.preamble = preamble("dispersion", config);
  t.header = {"source", "metric", "method", "n_rows", "value", "std_across_seeds", "seed", "pair_budget"};
  json reports = json::array();

  for (std::size_t i = 0; i < a.edf.size(); ++i) {
    const auto m = read_edf(a.edf[i]);
    DispersionReport r = measure_dispersion(RowSet<float>(m), opts);
    if (r.method == Method::pair_subsample && a.repeats > 1) {
      std::vector<double> vals{r.value};
      for (std::size_t k = 1; k < a.repeats; ++k) {
        auto o = opts;
        o.seed = opts.seed + k;
        vals.push_back(measure_dispersion(RowSet<float>(m), o).value);
      }
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      r.value = mean;
      r.std_across_seeds = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    }
    const std::string source = label_for(a.labels, i, a.edf[i]);
    t.rows.push_back({source, to_string(r.metric), to_string(r.method), std::to_string(r.n_rows),
                      format_number(r.value), format_optional(r.std_across_seeds),
                      r.seed ? std::to_string(*r.seed) : "",
                      r.pair_budget ? std::to_string(*r.pair_budget) : ""});
    json jr = {{"source", source},
               {"metric", to_string(r.metric)},
               {"method", to_string(r.method)},
               {"n_rows", r.n_rows},
               {"value", rounded(r.value)},
               {"std_across_seeds", rounded(r.std_across_seeds)},
               {"seed", r.seed ? json(*r.seed) : json(nullptr)},
               {"pair_budget", r.pair_budget ? json(*r.pair_budget) : json(nullptr)}};
    reports.push_back(jr);
  }
  if (!a.out.empty()) write_file_atomic(a.out, t.to_string());
  json doc = {{"version", kVersion}, {"command", "dispersion"}, {"config", config}, {"reports", reports}};
  out << doc.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bins

struct BinsArgs {
  std::string config;
  std::vector<std::string> edf;
  std::vector<std::string> layers;
  std::string meta;
  std::size_t bin_size = kDefaultBinSize;
  std::size_t k = 0;  // 0: every bin
  std::string metric = "cosine";
  std::string method = "auto";
  std::string pair_budget = std::to_string(kDefaultPairBudget);
  std::uint64_t seed = 0;
  std::string out;
  std::string corr_out;
  std::string svg;
};

int cmd_bins(const BinsArgs& a, std::ostream& out) {
  if (a.edf.empty()) usage("--edf is required");
  for (const auto& p : a.edf) require_file(p, "--edf");
  require_file(a.meta, "--meta");
  if (a.bin_size == 0) usage("--bin-size must be >= 1");
  if (a.k == 1) usage("--k must be >= 2");
  const auto opts = dispersion_options(a.metric, a.method, a.pair_budget, a.seed);

  const auto metas = read_meta_jsonl(a.meta);
  if (metas.empty()) usage("--meta holds no segments");
  const auto bins = sort_and_bin(metas, a.bin_size);
  std::vector<std::size_t> selected;
  if (a.k == 0) {
    for (const auto& b : bins) selected.push_back(b.bin_id);
  } else {
    selected = uniform_ppl_select(bins, a.k);
  }
  std::vector<PerplexityBin> chosen;
  for (std::size_t id : selected) chosen.push_back(bins[id]);

  json config = {{"edf", a.edf},       {"layers", a.layers},   {"meta", a.meta},
                 {"bin_size", a.bin_size}, {"k", a.k},         {"metric", a.metric},
                 {"method", a.method}, {"pair_budget", a.pair_budget}, {"seed", a.seed}};

  CsvTable corr;
  corr.preamble = preamble("bins", config);
  corr.header = {"layer", "pearson", "spearman", "points"};
  out << "bins: " << bins.size() << " total, " << chosen.size() << " selected\n";

  for (std::size_t li = 0; li < a.edf.size(); ++li) {
    const std::string layer = label_for(a.layers, li, a.edf[li]);
    const auto m = read_edf(a.edf[li]);
    validate_meta(metas, m);

    std::vector<PerplexityBin> measurable;
    for (const auto& b : chosen) {
      if (b.row_indices.size() >= 2) measurable.push_back(b);
    }
    const auto points = bin_dispersion_curve(m, measurable, opts);
    std::map<std::size_t, const CurvePoint*> by_bin;
    for (const auto& p : points) by_bin[p.bin_id] = &p;

    CsvTable curve;
    curve.preamble = preamble("bins", config);
    curve.preamble.push_back("layer: " + layer);
    curve.header = {"bin_id", "mean_ppl", "dispersion", "n", "metric", "method"};
    std::vector<double> xs, ys;
    for (const auto& b : chosen) {
      auto it = by_bin.find(b.bin_id);
      if (it == by_bin.end()) {
        curve.rows.push_back({std::to_string(b.bin_id), format_number(b.mean_ppl), "",
                              std::to_string(b.row_indices.size()), to_string(opts.metric), ""});
        continue;
      }
      const CurvePoint& p = *it->second;
      xs.push_back(p.x);
      ys.push_back(p.y);
      curve.rows.push_back({std::to_string(p.bin_id), format_number(p.x), format_number(p.y),
                            std::to_string(p.n), to_string(p.report.metric), to_string(p.report.method)});
    }

    std::optional<double> pearson, spearman;
    try {
      pearson = correlation(xs, ys, CorrelationKind::pearson);
      spearman = correlation(xs, ys, CorrelationKind::spearman);
    } catch (const Error&) {
      // fewer than 3 measured bins or zero variance
    }
    out << "layer=" << layer << " points=" << xs.size() << " pearson=" << fmt_corr(pearson)
        << " spearman=" << fmt_corr(spearman) << "\n";
    corr.rows.push_back({layer, pearson ? format_number(*pearson) : "",
                         spearman ? format_number(*spearman) : "", std::to_string(xs.size())});

    const bool multi = a.edf.size() > 1;
    if (multi && a.out.empty()) usage("--out is required with more than one --edf");
    emit_csv(curve, a.out.empty() ? "" : (multi ? suffixed(a.out, layer).string() : a.out), out);
    if (!a.svg.empty() && !xs.empty()) {
      PlotSeries s{"mean perplexity", std::string("dispersion (") + to_string(opts.metric) + ")", xs, ys, std::nullopt};
      write_svg(multi ? suffixed(a.svg, layer).string() : a.svg, s, PlotKind::scatter, layer);
    }
  }
  if (!a.corr_out.empty()) write_file_atomic(a.corr_out, corr.to_string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// layers

struct LayersArgs {
  std::string config;
  std::vector<std::string> inputs;  // model:sublayer:path
  std::vector<std::size_t> ns{10, 50, 100};
  std::size_t repeats = 10;
  std::uint64_t base_seed = 0;
  std::string out;
};

int cmd_layers(const LayersArgs& a, std::ostream& out) {
  if (a.inputs.empty()) usage("--input is required");
  if (a.repeats == 0) usage("--repeats must be >= 1");
  std::vector<std::tuple<std::string, std::string, std::string>> parsed;
  for (const auto& spec : a.inputs) {
    const auto c1 = spec.find(':');
    const auto c2 = c1 == std::string::npos ? c1 : spec.find(':', c1 + 1);
    if (c2 == std::string::npos) usage("--input expects MODEL:SUBLAYER:PATH (got '" + spec + "')");
    parsed.emplace_back(spec.substr(0, c1), spec.substr(c1 + 1, c2 - c1 - 1), spec.substr(c2 + 1));
    require_file(std::get<2>(parsed.back()), "--input");
  }
  std::vector<EmbeddingMatrix> matrices;
  matrices.reserve(parsed.size());
  for (const auto& p : parsed) matrices.push_back(read_edf(std::get<2>(p)));
  std::vector<SublayerInput> inputs;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    inputs.push_back({std::get<0>(parsed[i]), std::get<1>(parsed[i]), std::cref(matrices[i])});
  }
  const auto profiles = profile_sublayers(inputs, a.ns, a.repeats, a.base_seed);

  json config = {{"input", a.inputs}, {"n", a.ns}, {"repeats", a.repeats}, {"base_seed", a.base_seed}};
  CsvTable t;
  t.preamble = preamble("layers", config);
  t.header = {"model_tag", "sublayer_tag", "N", "mean", "std", "repeats", "base_seed"};
  for (const auto& p : profiles) {
    t.rows.push_back({p.model_tag, p.sublayer_tag, std::to_string(p.n), format_number(p.mean),
                      format_optional(p.std), std::to_string(p.repeats), std::to_string(p.base_seed)});
  }
  emit_csv(t, a.out, out);

  // Highest-dispersion sublayer per (model, N).
  std::map<std::pair<std::string, std::size_t>, const SublayerProfile*> best;
  std::vector<std::pair<std::string, std::size_t>> order;
  for (const auto& p : profiles) {
    auto key = std::make_pair(p.model_tag, p.n);
    auto [it, fresh] = best.try_emplace(key, &p);
    if (fresh) order.push_back(key);
    else if (p.mean > it->second->mean) it->second = &p;
  }
  if (!a.out.empty()) {
    for (const auto& key : order) {
      out << "model=" << key.first << " N=" << key.second
          << " most_dispersed=" << best[key]->sublayer_tag << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// mixture

struct MixtureArgs {
  std::string config;
  std::string edf;
  std::string meta;
  std::vector<double> levels = default_mixture_levels();
  std::size_t n_per_level = kDefaultMixtureSize;
  std::size_t seeds = kDefaultMixtureSeeds;
  std::uint64_t base_seed = 0;
  std::string out;
  std::string svg;
};

int cmd_mixture(const MixtureArgs& a, std::ostream& out) {
  require_file(a.edf, "--edf");
  require_file(a.meta, "--meta");
  if (a.levels.empty()) usage("--levels must not be empty");
  const auto m = read_edf(a.edf);
  const auto metas = read_meta_jsonl(a.meta);
  const auto points = accuracy_mixture_curve(m, metas, a.levels, a.n_per_level, a.seeds, a.base_seed);

  json config = {{"edf", a.edf},           {"meta", a.meta},   {"levels", a.levels},
                 {"n_per_level", a.n_per_level}, {"seeds", a.seeds}, {"base_seed", a.base_seed}};
  CsvTable t;
  t.preamble = preamble("mixture", config);
  t.header = {"level", "mean_distance", "stderr", "seeds"};
  std::vector<double> xs, ys, es;
  for (const auto& p : points) {
    t.rows.push_back({format_number(p.level), format_number(p.mean_distance), format_number(p.std_error),
                      std::to_string(p.seeds)});
    xs.push_back(p.level);
    ys.push_back(p.mean_distance);
    es.push_back(p.std_error);
  }
  emit_csv(t, a.out, out);
  if (!a.out.empty()) {
    std::optional<double> rho;
    try {
      rho = correlation(xs, ys, CorrelationKind::spearman);
    } catch (const Error&) {
    }
    out << "spearman(level, mean_distance)=" << fmt_corr(rho) << "\n";
  }
  if (!a.svg.empty()) {
    write_svg(a.svg, PlotSeries{"fraction correct", "mean pairwise cosine distance", xs, ys, es},
              PlotKind::line, "");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// clusters

struct ClustersArgs {
  std::string config;
  std::vector<std::string> tags;
  std::vector<std::string> edf;
  std::vector<std::string> meta;
  std::vector<double> loss;
  std::string centroids = "raw";
  std::string out;
};

int cmd_clusters(const ClustersArgs& a, std::ostream& out) {
  if (a.edf.empty()) usage("--edf is required");
  if (!a.tags.empty() && a.tags.size() != a.edf.size()) usage("--tag count must match --edf count");
  if (a.meta.size() != 1 && a.meta.size() != a.edf.size()) {
    usage("--meta must be given once or once per --edf");
  }
  if (!a.loss.empty() && a.loss.size() != a.edf.size()) usage("--loss count must match --edf count");
  for (const auto& p : a.edf) require_file(p, "--edf");
  for (const auto& p : a.meta) require_file(p, "--meta");
  CentroidMode mode;
  if (a.centroids == "raw") mode = CentroidMode::raw;
  else if (a.centroids == "normalized") mode = CentroidMode::normalized;
  else usage("--centroids must be raw or normalized");

  std::vector<EmbeddingMatrix> matrices;
  matrices.reserve(a.edf.size());
  std::vector<CheckpointInput> series;
  for (std::size_t i = 0; i < a.edf.size(); ++i) matrices.push_back(read_edf(a.edf[i]));
  for (std::size_t i = 0; i < a.edf.size(); ++i) {
    const auto metas = read_meta_jsonl(a.meta.size() == 1 ? a.meta[0] : a.meta[i]);
    validate_meta(metas, matrices[i]);
    series.push_back({label_for(a.tags, i, a.edf[i]), std::cref(matrices[i]), clusters_from_meta(metas),
                      a.loss.empty() ? std::nullopt : std::optional<double>(a.loss[i])});
  }
  const auto rows = checkpoint_cluster_tracking(series, mode);

  json config = {{"tag", a.tags}, {"edf", a.edf}, {"meta", a.meta}, {"loss", a.loss}, {"centroids", a.centroids}};
  CsvTable t;
  t.preamble = preamble("clusters", config);
  t.header = {"checkpoint_tag", "within", "between", "loss"};
  for (const auto& r : rows) {
    t.rows.push_back({r.checkpoint_tag, format_number(r.within), format_number(r.between), format_optional(r.loss)});
  }
  emit_csv(t, a.out, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gap

struct GapArgs {
  std::string config;
  std::vector<std::string> models;  // TAG=PATH
  std::string tensor;
  std::string domain_set;
  std::string reference_set;
  std::string metric = "both";
  std::vector<std::string> accuracy;  // TAG=VALUE
  std::string components;
  std::string out;
};

std::pair<std::string, std::string> split_assignment(const std::string& s, const std::string& flag) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) usage(flag + " expects TAG=VALUE (got '" + s + "')");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

struct GapRow {
  GapReport report;
  std::string group;
};

std::vector<GapRow> gap_rows_from_components(const std::string& path) {
  const auto t = read_csv(path);
  std::vector<GapRow> rows;
  for (const char* col : {"model_tag", "metric", "within_T", "within_Tbar", "between"}) {
    if (!t.column(col)) fail(Errc::parse, path + ": missing column '" + col + "'");
  }
  const auto c_acc = t.column("accuracy");
  const auto c_group = t.column("group");
  for (const auto& r : t.rows) {
    std::optional<double> acc;
    if (c_acc && !r[*c_acc].empty()) acc = parse_number(r[*c_acc], "accuracy");
    GapRow g;
    g.report = make_gap_report(r[*t.column("model_tag")], parse_metric(r[*t.column("metric")]),
                               parse_number(r[*t.column("within_T")], "within_T"),
                               parse_number(r[*t.column("within_Tbar")], "within_Tbar"),
                               parse_number(r[*t.column("between")], "between"), acc);
    g.group = c_group ? r[*c_group] : "";
    rows.push_back(std::move(g));
  }
  return rows;
}

void print_ranking(std::ostream& out, const std::string& scope, std::span<const GapReport> reports) {
  if (reports.size() < 2) return;
  const auto order = rank_models(reports);
  out << "ranking[" << scope << "]:";
  for (const auto& tag : order) out << " " << tag;
  out << "\n";
  const bool all_acc = std::all_of(reports.begin(), reports.end(), [](const GapReport& r) { return r.accuracy.has_value(); });
  if (all_acc && reports.size() >= 3) {
    std::optional<double> rho;
    try {
      rho = rank_agreement(reports);
    } catch (const Error&) {
    }
    out << "spearman[" << scope << "]=" << fmt_corr(rho) << "\n";
  }
}

int cmd_gap(const GapArgs& a, std::ostream& out) {
  std::vector<GapRow> rows;
  json config = {{"model", a.models},       {"tensor", a.tensor}, {"domain_set", a.domain_set},
                 {"reference_set", a.reference_set}, {"metric", a.metric}, {"accuracy", a.accuracy},
                 {"components", a.components}};
  if (!a.components.empty()) {
    if (!a.models.empty()) usage("--components and --model are mutually exclusive");
    require_file(a.components, "--components");
    rows = gap_rows_from_components(a.components);
  } else {
    if (a.models.empty()) usage("--model or --components is required");
    require_file(a.domain_set, "--domain-set");
    require_file(a.reference_set, "--reference-set");
    std::vector<Metric> metrics;
    if (a.metric == "both") metrics = {Metric::cosine, Metric::euclidean};
    else metrics = {metric_arg(a.metric)};
    std::map<std::string, double> acc;
    for (const auto& s : a.accuracy) {
      auto [tag, v] = split_assignment(s, "--accuracy");
      try {
        acc[tag] = parse_number(v, "--accuracy");
      } catch (const Error& e) {
        usage(e.what());
      }
    }
    const auto domain = read_token_set(a.domain_set);
    const auto reference = read_token_set(a.reference_set);
    for (const auto& spec : a.models) {
      auto [tag, path] = split_assignment(spec, "--model");
      require_file(path, "--model");
      const auto emb = load_matrix(path, a.tensor);
      for (Metric m : metrics) {
        GapRow g;
        g.report = dispersion_gap(emb, domain, reference, m, tag);
        if (auto it = acc.find(tag); it != acc.end()) g.report.accuracy = it->second;
        rows.push_back(std::move(g));
      }
    }
  }

  CsvTable t;
  t.preamble = preamble("gap", config);
  t.header = {"model_tag", "metric", "within_T", "within_Tbar", "between", "gap", "accuracy"};
  for (const auto& g : rows) {
    const auto& r = g.report;
    t.rows.push_back({r.model_tag, to_string(r.metric), format_number(r.within_T), format_number(r.within_Tbar),
                      format_number(r.between_T_Tbar), format_number(r.gap), format_optional(r.accuracy)});
  }
  emit_csv(t, a.out, out);

  if (!a.out.empty()) {
    for (Metric m : {Metric::cosine, Metric::euclidean}) {
      std::vector<GapReport> all;
      std::vector<std::pair<std::string, std::vector<GapReport>>> groups;
      for (const auto& g : rows) {
        if (g.report.metric != m) continue;
        all.push_back(g.report);
        if (g.group.empty()) continue;
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& e) { return e.first == g.group; });
        if (it == groups.end()) it = groups.insert(groups.end(), {g.group, {}});
        it->second.push_back(g.report);
      }
      print_ranking(out, to_string(m), all);
      for (const auto& [group, reports] : groups) {
        print_ranking(out, std::string(to_string(m)) + "/" + group, reports);
      }
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// auxloss-check

struct AuxArgs {
  std::string config;
  std::size_t instances = 100;
  std::uint64_t seed = 0;
  std::size_t max_b = 16;
  std::size_t max_d = 32;
  double eps = 1e-5;
  double rtol = 1e-6;
  double atol = 1e-9;
  std::string out;
};

double unit_uniform(SeededSampler& s) {
  return static_cast<double>(s.next_u64() >> 11) * 0x1.0p-53;
}

// Rows with entries in [-1, 1); rows shorter than 0.1 are redrawn so the
// finite-difference step stays far below the row scale.
Matrix64 random_rows(SeededSampler& s, std::size_t rows, std::size_t dim) {
  Matrix64 m(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = m.row(i);
    double ss = 0.0;
    do {
      ss = 0.0;
      for (double& v : r) {
        v = 2.0 * unit_uniform(s) - 1.0;
        ss += v * v;
      }
    } while (ss < 0.01);
  }
  return m;
}

int cmd_auxloss_check(const AuxArgs& a, std::ostream& out) {
  if (a.instances == 0) usage("--instances must be >= 1");
  if (a.max_b < 2 || a.max_d < 1) usage("--max-b must be >= 2 and --max-d >= 1");
  if (!(a.eps > 0) || !(a.rtol > 0) || !(a.atol >= 0)) usage("--eps and --rtol must be > 0, --atol >= 0");

  json config = {{"instances", a.instances}, {"seed", a.seed}, {"max_b", a.max_b}, {"max_d", a.max_d},
                 {"eps", a.eps},             {"rtol", a.rtol}, {"atol", a.atol}};
  CsvTable t;
  t.preamble = preamble("auxloss-check", config);
  t.header = {"kind", "instance", "seed", "rows_a", "rows_b", "dim", "value", "max_rel_error", "passed"};
  std::size_t failures = 0;

  for (std::size_t i = 0; i < a.instances; ++i) {
    const std::uint64_t seed = a.seed + i;
    SeededSampler s(seed);
    const std::size_t b = 2 + s.uniform_below(a.max_b - 1);
    const std::size_t d = 1 + s.uniform_below(a.max_d);
    const Matrix64 h = random_rows(s, b, d);
    const auto eval = aux_single_domain(h);
    const auto chk = check_gradient([](const Matrix64& x) { return aux_single_domain(x).value; }, h,
                                    eval.gradient, a.eps, a.rtol, a.atol);
    failures += chk.passed ? 0 : 1;
    t.rows.push_back({"single", std::to_string(i), std::to_string(seed), std::to_string(b), "", std::to_string(d),
                      format_number(eval.value), format_number(chk.max_rel_error), chk.passed ? "1" : "0"});

    const std::size_t na = 1 + s.uniform_below(a.max_b);
    const std::size_t nb = 1 + s.uniform_below(a.max_b);
    const Matrix64 ha = random_rows(s, na, d);
    const Matrix64 hb = random_rows(s, nb, d);
    const auto cross = aux_cross_domain(ha, hb);
    const auto ca = check_gradient([&](const Matrix64& x) { return aux_cross_domain(x, hb).value; }, ha,
                                   cross.gradient_a, a.eps, a.rtol, a.atol);
    const auto cb = check_gradient([&](const Matrix64& x) { return aux_cross_domain(ha, x).value; }, hb,
                                   cross.gradient_b, a.eps, a.rtol, a.atol);
    const bool ok = ca.passed && cb.passed;
    failures += ok ? 0 : 1;
    t.rows.push_back({"cross", std::to_string(i), std::to_string(seed), std::to_string(na), std::to_string(nb),
                      std::to_string(d), format_number(cross.value),
                      format_number(std::max(ca.max_rel_error, cb.max_rel_error)), ok ? "1" : "0"});

    // total loss is affine in lambda with slope -d
    const double ce = 1.0 + unit_uniform(s);
    bool linear = true;
    double worst = 0.0;
    for (double lambda : lambda_grid()) {
      const double total = total_loss({ce, lambda, aux_from_dispersion(eval.value)});
      const double dev = std::abs(total - (ce - lambda * eval.value));
      worst = std::max(worst, dev);
      linear = linear && dev <= 1e-12;
    }
    failures += linear ? 0 : 1;
    t.rows.push_back({"lambda_grid", std::to_string(i), std::to_string(seed), std::to_string(b), "",
                      std::to_string(d), format_number(eval.value), format_number(worst), linear ? "1" : "0"});
  }
  emit_csv(t, a.out, out);
  if (!a.out.empty()) {
    out << "auxloss-check: " << (3 * a.instances - failures) << "/" << 3 * a.instances << " checks passed\n";
  }
  return failures == 0 ? kExitOk : kExitComputation;
}

// ---------------------------------------------------------------------------
// plot

struct PlotArgs {
  std::string config;
  std::string csv;
  std::string kind = "scatter";
  std::string x;
  std::string y;
  std::string err;
  std::string title;
  std::string out;
};

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  require_file(a.csv, "--csv");
  if (a.out.empty()) usage("--out is required");
  PlotKind kind;
  try {
    kind = parse_plot_kind(a.kind);
  } catch (const Error& e) {
    usage(e.what());
  }
  const auto t = read_csv(a.csv);
  if (t.header.size() < 2) fail(Errc::parse, a.csv + ": need at least two columns");
  auto col = [&](const std::string& name, std::size_t fallback) -> std::size_t {
    if (name.empty()) return fallback;
    auto c = t.column(name);
    if (!c) fail(Errc::parse, a.csv + ": no column named '" + name + "'");
    return *c;
  };
  const std::size_t cx = col(a.x, 0);
  const std::size_t cy = col(a.y, 1);
  std::optional<std::size_t> ce;
  if (!a.err.empty()) ce = col(a.err, 0);
  else if (a.x.empty() && a.y.empty() && t.header.size() == 3) ce = 2;

  PlotSeries s;
  s.x_label = t.header[cx];
  s.y_label = t.header[cy];
  if (ce) s.err.emplace();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (r[cx].empty() || r[cy].empty()) continue;  // unmeasured rows
    const std::string where = a.csv + " row " + std::to_string(i + 1);
    s.x.push_back(parse_number(r[cx], where));
    s.y.push_back(parse_number(r[cy], where));
    if (ce) s.err->push_back(parse_number(r[*ce], where));
  }
  if (s.x.empty()) fail(Errc::parse, a.csv + ": no numeric rows");
  write_svg(a.out, s, kind, a.title);
  out << "wrote " << a.out << " (" << s.x.size() << " points)\n";
  return kExitOk;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"repdisp: representation dispersion diagnostics"};
  app.name("repdisp");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  DispersionArgs disp;
  auto* s_disp = app.add_subcommand("dispersion", "Mean pairwise distance of one or more EDF dumps");
  s_disp->add_option("--config", disp.config, "JSON config file (flags override)");
  s_disp->add_option("--edf", disp.edf, "EDF dump(s)");
  s_disp->add_option("--label", disp.labels, "Label per --edf (default: file stem)");
  s_disp->add_option("--metric", disp.metric, "cosine | euclidean");
  s_disp->add_option("--method", disp.method, "auto | exact | closed_form | pair_subsample");
  s_disp->add_option("--pair-budget", disp.pair_budget, "Euclidean pair budget or 'all'");
  s_disp->add_option("--seed", disp.seed, "Pair-sampling seed");
  s_disp->add_option("--repeats", disp.repeats, "Pair-sampling repeats (seed, seed+1, ...)");
  s_disp->add_option("--out", disp.out, "CSV report path");

  BinsArgs bins;
  auto* s_bins = app.add_subcommand("bins", "Perplexity-binned dispersion curve and correlations");
  s_bins->add_option("--config", bins.config, "JSON config file (flags override)");
  s_bins->add_option("--edf", bins.edf, "EDF dump(s), one per layer");
  s_bins->add_option("--layer", bins.layers, "Layer label per --edf");
  s_bins->add_option("--meta", bins.meta, "JSONL metadata with perplexities");
  s_bins->add_option("--bin-size", bins.bin_size, "Segments per bin");
  s_bins->add_option("--k", bins.k, "Bins to select uniformly in perplexity (0 = all)");
  s_bins->add_option("--metric", bins.metric, "cosine | euclidean");
  s_bins->add_option("--method", bins.method, "auto | exact | closed_form | pair_subsample");
  s_bins->add_option("--pair-budget", bins.pair_budget, "Euclidean pair budget or 'all'");
  s_bins->add_option("--seed", bins.seed, "Pair-sampling seed");
  s_bins->add_option("--out", bins.out, "Curve CSV path (suffixed per layer when several)");
  s_bins->add_option("--corr-out", bins.corr_out, "Per-layer correlation CSV path");
  s_bins->add_option("--svg", bins.svg, "Optional scatter plot");

  LayersArgs layers;
  auto* s_layers = app.add_subcommand("layers", "Sublayer dispersion profiles with shared sampled rows");
  s_layers->add_option("--config", layers.config, "JSON config file (flags override)");
  s_layers->add_option("--input", layers.inputs, "MODEL:SUBLAYER:EDF (repeatable)");
  s_layers->add_option("--n", layers.ns, "Sample sizes")->delimiter(',');
  s_layers->add_option("--repeats", layers.repeats, "Repeats per sample size");
  s_layers->add_option("--base-seed", layers.base_seed, "Repeat r uses base_seed + r");
  s_layers->add_option("--out", layers.out, "CSV report path");

  MixtureArgs mix;
  auto* s_mix = app.add_subcommand("mixture", "Dispersion vs. fraction of correct rows");
  s_mix->add_option("--config", mix.config, "JSON config file (flags override)");
  s_mix->add_option("--edf", mix.edf, "EDF dump of query embeddings");
  s_mix->add_option("--meta", mix.meta, "JSONL metadata with 'correct' flags");
  s_mix->add_option("--levels", mix.levels, "Fractions correct")->delimiter(',');
  s_mix->add_option("--n-per-level", mix.n_per_level, "Rows per mixture");
  s_mix->add_option("--seeds", mix.seeds, "Seeds per level");
  s_mix->add_option("--base-seed", mix.base_seed, "Seed s uses base_seed + s");
  s_mix->add_option("--out", mix.out, "CSV report path");
  s_mix->add_option("--svg", mix.svg, "Optional line plot with error bars");

  ClustersArgs cl;
  auto* s_cl = app.add_subcommand("clusters", "Within/between-cluster distances across checkpoints");
  s_cl->add_option("--config", cl.config, "JSON config file (flags override)");
  s_cl->add_option("--tag", cl.tags, "Checkpoint tag per --edf (ordered)");
  s_cl->add_option("--edf", cl.edf, "EDF dump per checkpoint (ordered)");
  s_cl->add_option("--meta", cl.meta, "JSONL with cluster_id (once, or once per --edf)");
  s_cl->add_option("--loss", cl.loss, "Training loss per checkpoint (passed through)");
  s_cl->add_option("--centroids", cl.centroids, "raw | normalized");
  s_cl->add_option("--out", cl.out, "CSV report path");

  GapArgs gap;
  auto* s_gap = app.add_subcommand("gap", "Dispersion gap of output embeddings for model selection");
  s_gap->add_option("--config", gap.config, "JSON config file (flags override)");
  s_gap->add_option("--model", gap.models, "TAG=PATH to an EDF or .safetensors file (repeatable)");
  s_gap->add_option("--tensor", gap.tensor, "Tensor name inside safetensors files");
  s_gap->add_option("--domain-set", gap.domain_set, "Domain token set JSON");
  s_gap->add_option("--reference-set", gap.reference_set, "Reference token set JSON");
  s_gap->add_option("--metric", gap.metric, "cosine | euclidean | both");
  s_gap->add_option("--accuracy", gap.accuracy, "TAG=VALUE task score (repeatable)");
  s_gap->add_option("--components", gap.components, "CSV of precomputed gap components");
  s_gap->add_option("--out", gap.out, "CSV report path");

  AuxArgs aux;
  auto* s_aux = app.add_subcommand("auxloss-check", "Finite-difference check of the spread-out loss gradients");
  s_aux->add_option("--config", aux.config, "JSON config file (flags override)");
  s_aux->add_option("--instances", aux.instances, "Random instances");
  s_aux->add_option("--seed", aux.seed, "Instance i uses seed + i");
  s_aux->add_option("--max-b", aux.max_b, "Largest row count");
  s_aux->add_option("--max-d", aux.max_d, "Largest width");
  s_aux->add_option("--eps", aux.eps, "Central-difference step");
  s_aux->add_option("--rtol", aux.rtol, "Relative tolerance");
  s_aux->add_option("--atol", aux.atol, "Absolute floor");
  s_aux->add_option("--out", aux.out, "CSV report path");

  PlotArgs plot;
  auto* s_plot = app.add_subcommand("plot", "Render a CSV as a standalone SVG");
  s_plot->add_option("--config", plot.config, "JSON config file (flags override)");
  s_plot->add_option("--csv", plot.csv, "Input CSV");
  s_plot->add_option("--kind", plot.kind, "scatter | line");
  s_plot->add_option("--x", plot.x, "x column (default: first)");
  s_plot->add_option("--y", plot.y, "y column (default: second)");
  s_plot->add_option("--err", plot.err, "Error-bar column (default: third, if exactly three)");
  s_plot->add_option("--title", plot.title, "Plot title");
  s_plot->add_option("--out", plot.out, "SVG output path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (s_disp->parsed()) {
      apply_json_config(*s_disp, disp.config);
      return cmd_dispersion(disp, out);
    }
    if (s_bins->parsed()) {
      apply_json_config(*s_bins, bins.config);
      return cmd_bins(bins, out);
    }
    if (s_layers->parsed()) {
      apply_json_config(*s_layers, layers.config);
      return cmd_layers(layers, out);
    }
    if (s_mix->parsed()) {
      apply_json_config(*s_mix, mix.config);
      return cmd_mixture(mix, out);
    }
    if (s_cl->parsed()) {
      apply_json_config(*s_cl, cl.config);
      return cmd_clusters(cl, out);
    }
    if (s_gap->parsed()) {
      apply_json_config(*s_gap, gap.config);
      return cmd_gap(gap, out);
    }
    if (s_aux->parsed()) {
      apply_json_config(*s_aux, aux.config);
      return cmd_auxloss_check(aux, out);
    }
    if (s_plot->parsed()) {
      apply_json_config(*s_plot, plot.config);
      return cmd_plot(plot, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return kExitComputation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitComputation;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace repdisp
