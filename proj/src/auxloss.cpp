#include "repdisp/auxloss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "repdisp/geometry.hpp"

namespace repdisp {
namespace {

struct UnitRows {
  Matrix64 unit;
  std::vector<double> norms;
  std::vector<double> resultant;
};

UnitRows unit_rows(const Matrix64& h, const char* what) {
  UnitRows u{Matrix64(h.rows(), h.cols()), std::vector<double>(h.rows()),
             std::vector<double>(h.cols(), 0.0)};
  for (std::size_t i = 0; i < h.rows(); ++i) {
    const auto row = h.row(i);
    double ss = 0.0;
    for (double v : row) {
      if (!std::isfinite(v)) fail(Errc::non_finite, std::string(what) + " contains a non-finite value");
      ss += v * v;
    }
    const double n = std::sqrt(ss);
    if (!(n >= kMinNorm)) {
      fail(Errc::degenerate, std::string(what) + " row " + std::to_string(i) + " has near-zero norm");
    }
    u.norms[i] = n;
    auto dst = u.unit.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) {
      dst[c] = row[c] / n;
      u.resultant[c] += dst[c];
    }
  }
  return u;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// grad_i = coeff / |h_i| * (g - (g . u_i) u_i), with g the gradient wrt u_i
// before the projection, scaled by `coeff`.
void project_into(Matrix64& grad, const UnitRows& u, std::span<const double> g, double coeff,
                  bool subtract_self) {
  std::vector<double> gi(g.size());
  for (std::size_t i = 0; i < u.unit.rows(); ++i) {
    const auto ui = u.unit.row(i);
    for (std::size_t c = 0; c < gi.size(); ++c) gi[c] = g[c] - (subtract_self ? ui[c] : 0.0);
    const double along = dot(gi, ui);
    auto out = grad.row(i);
    const double scale = coeff / u.norms[i];
    for (std::size_t c = 0; c < gi.size(); ++c) out[c] = scale * (gi[c] - along * ui[c]);
  }
}

}  // namespace

LossEval aux_single_domain(const Matrix64& h) {
  const std::size_t b = h.rows();
  if (b < 2) fail(Errc::invalid_argument, "single-domain loss needs B >= 2 rows");
  const auto u = unit_rows(h, "hidden states");
  const double bd = static_cast<double>(b);
  const double pairs = bd * (bd - 1.0);
  const double s2 = dot(u.resultant, u.resultant);

  LossEval out;
  out.value = std::clamp(1.0 - (s2 - bd) / pairs, 0.0, 2.0);
  out.gradient = Matrix64(b, h.cols());
  // (s - u_i) has the same tangential component as s; subtracting u_i keeps
  // the intermediate small when all rows coincide.
  project_into(out.gradient, u, u.resultant, -2.0 / pairs, true);
  return out;
}

CrossLossEval aux_cross_domain(const Matrix64& a, const Matrix64& b) {
  if (a.rows() == 0 || b.rows() == 0) fail(Errc::invalid_argument, "cross-domain loss needs both blocks nonempty");
  if (a.cols() != b.cols()) fail(Errc::mismatch, "cross-domain blocks differ in width");
  const auto ua = unit_rows(a, "block A");
  const auto ub = unit_rows(b, "block B");
  const double denom = static_cast<double>(a.rows()) * static_cast<double>(b.rows());

  CrossLossEval out;
  out.value = std::clamp(1.0 - dot(ua.resultant, ub.resultant) / denom, 0.0, 2.0);
  out.gradient_a = Matrix64(a.rows(), a.cols());
  out.gradient_b = Matrix64(b.rows(), b.cols());
  project_into(out.gradient_a, ua, ub.resultant, -1.0 / denom, false);
  project_into(out.gradient_b, ub, ua.resultant, -1.0 / denom, false);
  return out;
}

double total_loss(const TotalLossSpec& spec) {
  if (!std::isfinite(spec.ce) || !std::isfinite(spec.lambda) || !std::isfinite(spec.aux)) {
    fail(Errc::non_finite, "total loss inputs must be finite");
  }
  if (spec.ce < 0.0) fail(Errc::invalid_argument, "cross-entropy must be >= 0");
  if (spec.lambda < 0.0) fail(Errc::invalid_argument, "lambda must be >= 0");
  return spec.ce + spec.lambda * spec.aux;
}

std::vector<double> lambda_grid() {
  return {0.5, 0.2, 0.1, 0.07, 0.05, 0.02, 0.01, 0.007, 0.005, 0.002, 0.001};
}

std::vector<double> gradient_descent_spread_demo(Matrix64 h, std::size_t steps, double step_size) {
  if (!(step_size > 0.0)) fail(Errc::invalid_argument, "step_size must be > 0");
  std::vector<double> trajectory;
  trajectory.reserve(steps + 1);
  for (std::size_t step = 0;; ++step) {
    LossEval eval;
    try {
      eval = aux_single_domain(h);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate) throw;
      fail(Errc::degenerate, "step " + std::to_string(step) + ": " + e.what());
    }
    trajectory.push_back(eval.value);
    if (step == steps) break;
    auto data = h.data();
    const auto g = eval.gradient.data();
    for (std::size_t k = 0; k < data.size(); ++k) data[k] += step_size * g[k];
  }
  return trajectory;
}

GradientCheck check_gradient(const std::function<double(const Matrix64&)>& f, const Matrix64& x,
                             const Matrix64& analytic, double eps, double rtol, double atol) {
  if (analytic.rows() != x.rows() || analytic.cols() != x.cols()) {
    fail(Errc::mismatch, "gradient shape differs from input shape");
  }
  GradientCheck out;
  Matrix64 probe = x;
  auto p = probe.data();
  const double floor = atol / rtol;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double orig = p[k];
    p[k] = orig + eps;
    const double up = f(probe);
    p[k] = orig - eps;
    const double down = f(probe);
    p[k] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.data()[k];
    const double diff = std::abs(a - numeric);
    const double err = diff / std::max({std::abs(a), std::abs(numeric), floor});
    if (err > out.max_rel_error) {
      out.max_rel_error = err;
      out.worst_entry = k;
    }
  }
  out.passed = out.max_rel_error <= rtol;
  return out;
}

}  // namespace repdisp
