#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "repdisp/auxloss.hpp"
#include "repdisp/error.hpp"
#include "repdisp/geometry.hpp"
#include "repdisp/modelselect.hpp"
#include "repdisp/pplbin.hpp"
#include "repdisp/tensor_io.hpp"
#include "repdisp/version.hpp"

namespace py = pybind11;
using namespace repdisp;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

EmbeddingMatrix to_embedding(const F32Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  const auto n = static_cast<std::size_t>(a.shape(0));
  const auto d = static_cast<std::size_t>(a.shape(1));
  return EmbeddingMatrix(n, d, std::vector<float>(a.data(), a.data() + n * d));
}

Matrix64 to_matrix(const F64Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  Matrix64 m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

F32Array from_embedding(const EmbeddingMatrix& m) {
  F32Array out({m.n_rows(), m.dim()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

F64Array from_matrix(const Matrix64& m) {
  F64Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::dict report_dict(const DispersionReport& r) {
  py::dict d;
  d["metric"] = to_string(r.metric);
  d["method"] = to_string(r.method);
  d["n_rows"] = r.n_rows;
  d["value"] = r.value;
  d["std_across_seeds"] = r.std_across_seeds;
  d["seed"] = r.seed;
  d["pair_budget"] = r.pair_budget;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Representation dispersion diagnostics";
  m.attr("__version__") = kVersion;

  static py::exception<Error> error_type(m, "RepdispError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type.ptr(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def("read_edf", [](const std::filesystem::path& path) { return from_embedding(read_edf(path)); },
        py::arg("path"));
  m.def("write_edf", [](const F32Array& a, const std::filesystem::path& path) { write_edf(to_embedding(a), path); },
        py::arg("matrix"), py::arg("path"));
  m.def("read_safetensors",
        [](const std::filesystem::path& path, const std::string& tensor) {
          return from_embedding(read_safetensors_matrix(path, tensor));
        },
        py::arg("path"), py::arg("tensor"));

  m.def("dispersion",
        [](const F32Array& a, const std::string& metric, const std::string& method,
           std::optional<std::uint64_t> pair_budget, std::uint64_t seed) {
          DispersionOptions o;
          o.metric = parse_metric(metric);
          o.method = method == "auto" ? (o.metric == Metric::cosine ? Method::closed_form : Method::pair_subsample)
                                      : parse_method(method);
          o.pair_budget = pair_budget;
          o.seed = seed;
          const auto emb = to_embedding(a);
          return report_dict(measure_dispersion(RowSet<float>(emb), o));
        },
        py::arg("matrix"), py::arg("metric") = "cosine", py::arg("method") = "auto",
        py::arg("pair_budget") = py::int_(kDefaultPairBudget), py::arg("seed") = 0,
        "Mean pairwise distance. pair_budget=None enumerates every pair.");

  m.def("dispersion_gap",
        [](const F32Array& a, const std::vector<std::size_t>& domain, const std::vector<std::size_t>& reference,
           const std::string& metric) {
          const auto r = dispersion_gap(to_embedding(a), TokenSetSpec{"T", domain}, TokenSetSpec{"Tbar", reference},
                                        parse_metric(metric));
          py::dict d;
          d["within_T"] = r.within_T;
          d["within_Tbar"] = r.within_Tbar;
          d["between"] = r.between_T_Tbar;
          d["gap"] = r.gap;
          return d;
        },
        py::arg("embeddings"), py::arg("domain_ids"), py::arg("reference_ids"), py::arg("metric") = "cosine");

  m.def("uniform_ppl_select",
        [](const std::vector<double>& means, std::size_t k) {
          std::vector<PerplexityBin> bins(means.size());
          for (std::size_t i = 0; i < means.size(); ++i) {
            bins[i].bin_id = i;
            bins[i].mean_ppl = means[i];
          }
          return uniform_ppl_select(bins, k);
        },
        py::arg("bin_means"), py::arg("k"), "Selects k bin ids from bins sorted by mean perplexity.");

  m.def("correlation",
        [](const std::vector<double>& x, const std::vector<double>& y, const std::string& kind) {
          if (kind != "pearson" && kind != "spearman") throw py::value_error("kind must be pearson or spearman");
          return correlation(x, y, kind == "pearson" ? CorrelationKind::pearson : CorrelationKind::spearman);
        },
        py::arg("x"), py::arg("y"), py::arg("kind") = "pearson");

  m.def("aux_single_domain",
        [](const F64Array& h) {
          const auto r = aux_single_domain(to_matrix(h));
          return py::make_tuple(r.value, from_matrix(r.gradient));
        },
        py::arg("h"), "Returns (mean pairwise cosine distance, gradient w.r.t. the raw rows).");
  m.def("aux_cross_domain",
        [](const F64Array& a, const F64Array& b) {
          const auto r = aux_cross_domain(to_matrix(a), to_matrix(b));
          return py::make_tuple(r.value, from_matrix(r.gradient_a), from_matrix(r.gradient_b));
        },
        py::arg("a"), py::arg("b"));
}
