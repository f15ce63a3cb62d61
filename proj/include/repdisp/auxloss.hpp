#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "repdisp/matrix.hpp"

namespace repdisp {

/// Value of a spread-out objective and its gradient with respect to every
/// raw (unnormalized) input row.
struct LossEval {
  double value = 0.0;
  Matrix64 gradient;
};

struct CrossLossEval {
  double value = 0.0;
  Matrix64 gradient_a;
  Matrix64 gradient_b;
};

/// d_avg = 1/(B(B-1)) * sum_{i != j} (1 - h~_i . h~_j) over unit rows.
///
/// The ordered-pair sum over B(B-1) equals the unordered pair mean. With
/// s = sum_j h~_j the gradient is
///   dd/dh_i = -2/(B(B-1) |h_i|) * (s - (s . h~_i) h~_i).
LossEval aux_single_domain(const Matrix64& h);

/// d = 1/(|A||B|) * sum_{i in A, j in B} (1 - h~a_i . h~b_j).
/// dd/da_i = -1/(|A||B| |a_i|) * (sB - (sB . a~_i) a~_i), symmetric for B.
CrossLossEval aux_cross_domain(const Matrix64& a, const Matrix64& b);

/// L_total = ce + lambda * aux, with aux = -d.
struct TotalLossSpec {
  double ce = 0.0;
  double lambda = 0.0;
  double aux = 0.0;
};

inline double aux_from_dispersion(double d) { return -d; }

double total_loss(const TotalLossSpec& spec);

/// Auxiliary-loss weights swept for the spread-out objective.
std::vector<double> lambda_grid();

/// Plain gradient ascent on d_avg. Returns d_avg before the first step and
/// after each step (steps + 1 values).
std::vector<double> gradient_descent_spread_demo(Matrix64 h0, std::size_t steps, double step_size);

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t worst_entry = 0;
  bool passed = true;
};

/// Central finite differences of `f` at `x`, compared entrywise with
/// `analytic`. An entry passes if |a - n| <= max(rtol * max(|a|, |n|), atol);
/// the reported error is |a - n| / max(|a|, |n|, atol / rtol).
GradientCheck check_gradient(const std::function<double(const Matrix64&)>& f, const Matrix64& x,
                             const Matrix64& analytic, double eps = 1e-5, double rtol = 1e-6,
                             double atol = 1e-9);

}  // namespace repdisp
