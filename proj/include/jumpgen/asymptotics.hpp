#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "jumpgen/grid.hpp"
#include "jumpgen/kernels.hpp"
#include "jumpgen/resolvent.hpp"

namespace jumpgen {

// A named pass/fail verdict carrying the measured value and its bound.
template <typename Scalar = double>
struct Check {
  std::string name;
  Scalar measured = 0;
  Scalar bound = 0;
  bool pass = false;
};

enum class TailModel { polynomial, exponential };

// Log-linear tail fit: log g = log(amplitude) - fitted * t with t = log(1+r)
// (polynomial model) or t = r (exponential model).
template <typename Scalar = double>
struct TailReport {
  TailModel model = TailModel::polynomial;
  Scalar fitted = 0;
  Scalar amplitude = 0;
  std::pair<Scalar, Scalar> window{0, 0};
  Scalar rms_residual = 0;
  std::vector<Check<Scalar>> verdicts;
};

namespace detail {

template <typename Scalar>
struct LineFit {
  Scalar intercept = 0;
  Scalar slope = 0;
  Scalar rms = 0;
};

// Weighted least squares y ~ intercept + slope * x via the 2x2 normal equations.
template <typename Scalar>
LineFit<Scalar> weighted_line_fit(const std::vector<Scalar>& x, const std::vector<Scalar>& y,
                                  const std::vector<Scalar>& w) {
  Scalar sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
    sxx += w[i] * x[i] * x[i];
    sxy += w[i] * x[i] * y[i];
  }
  Scalar det = sw * sxx - sx * sx;
  require(det > 0, "line fit: degenerate abscissae");
  LineFit<Scalar> out;
  out.slope = (sw * sxy - sx * sy) / det;
  out.intercept = (sy - out.slope * sx) / sw;
  Scalar ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Scalar r = y[i] - out.intercept - out.slope * x[i];
    ss += w[i] * r * r;
  }
  out.rms = std::sqrt(ss / sw);
  return out;
}

// Radial profile of a field restricted to r_min <= |x| <= r_max. Node values in
// [-1e-10, 0) are clamped to 0 before use. In d=2 values are averaged over
// radial shells of width h and weighted by shell population (inverse variance).
template <typename Scalar>
void radial_profile(const Field<Scalar>& f, Scalar r_min, Scalar r_max,
                    std::vector<Scalar>& radius, std::vector<Scalar>& value,
                    std::vector<Scalar>& weight, Eigen::Index& node_count) {
  const Grid<Scalar>& g = f.grid;
  node_count = 0;
  if (g.dim == 1) {
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      Scalar r = node_radius(g, j);
      if (r < r_min || r > r_max) continue;
      Scalar v = f.values[j];
      if (v < 0 && v >= Scalar(-1e-10)) v = 0;
      radius.push_back(r);
      value.push_back(v);
      weight.push_back(1);
      ++node_count;
    }
    return;
  }
  Scalar h = g.spacing();
  std::size_t shells = (std::size_t)std::ceil(r_max / h) + 1;
  std::vector<Scalar> sum_r(shells, 0), sum_v(shells, 0);
  std::vector<Eigen::Index> count(shells, 0);
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    Scalar r = node_radius(g, j);
    if (r < r_min || r > r_max) continue;
    Scalar v = f.values[j];
    if (v < 0 && v >= Scalar(-1e-10)) v = 0;
    std::size_t s = (std::size_t)(r / h);
    sum_r[s] += r;
    sum_v[s] += v;
    ++count[s];
    ++node_count;
  }
  for (std::size_t s = 0; s < shells; ++s) {
    if (count[s] == 0) continue;
    radius.push_back(sum_r[s] / count[s]);
    value.push_back(sum_v[s] / count[s]);
    weight.push_back(Scalar(count[s]));
  }
}

template <typename Scalar>
TailReport<Scalar> fit_tail(const Field<Scalar>& g, std::pair<Scalar, Scalar> window,
                            TailModel model) {
  require(window.first >= 0 && window.first < window.second,
          "tail fit: window must satisfy 0 <= r_min < r_max");
  require(window.second <= g.grid.extent / 4,
          "tail fit: window must stay within the interior r <= L/4");
  std::vector<Scalar> radius, value, weight;
  Eigen::Index nodes = 0;
  detail::radial_profile(g, window.first, window.second, radius, value, weight, nodes);
  require(nodes >= 16, "tail fit: fewer than 16 nodes in the window");
  std::vector<Scalar> t(radius.size()), y(radius.size());
  for (std::size_t i = 0; i < radius.size(); ++i) {
    require(value[i] > 0, "tail fit: non-positive values in the window");
    t[i] = model == TailModel::polynomial ? std::log1p(radius[i]) : radius[i];
    y[i] = std::log(value[i]);
  }
  LineFit<Scalar> fit = weighted_line_fit(t, y, weight);
  TailReport<Scalar> out;
  out.model = model;
  out.fitted = -fit.slope;
  out.amplitude = std::exp(fit.intercept);
  out.window = window;
  out.rms_residual = fit.rms;
  out.verdicts.push_back(
      {"model_match", fit.rms, Scalar(0.1), fit.rms <= Scalar(0.1)});
  return out;
}

}  // namespace detail

template <typename Scalar>
TailReport<Scalar> fit_polynomial_tail(const Field<Scalar>& g,
                                       std::pair<Scalar, Scalar> window) {
  return detail::fit_tail(g, window, TailModel::polynomial);
}

template <typename Scalar>
TailReport<Scalar> fit_exponential_tail(const Field<Scalar>& g,
                                        std::pair<Scalar, Scalar> window) {
  return detail::fit_tail(g, window, TailModel::exponential);
}

// Default interior fit window.
template <typename Scalar>
std::pair<Scalar, Scalar> default_fit_window(const Grid<Scalar>& g) {
  return {g.extent / 8, g.extent / 4};
}

// --- decay-rate equation M(q) = 1 + lambda ----------------------------------

enum class DecayCase { pure_imaginary_root, no_root_below_c, heavy_tail };

template <typename Scalar = double>
struct DecayRateResult {
  DecayCase kind = DecayCase::heavy_tail;
  Scalar lambda = 0;
  // MGF log-rate: finite for exponential-class kernels, +inf when the MGF is
  // entire, 0 when it diverges for every positive argument (heavy tails).
  Scalar c = 0;
  Scalar q = 0;  // root location, meaningful only for pure_imaginary_root
};

// Solves M(q) = 1 + lambda on (0, c) by bisection. M is continuous and strictly
// increasing from M(0) = 1, so the root is unique whenever sup M exceeds the
// target; otherwise the kernel decays too slowly for a sharp exponential rate.
template <typename Scalar>
DecayRateResult<Scalar> solve_decay_rate(const KernelSpec<Scalar>& spec, Scalar lambda) {
  require(spec.dim == 1, "solve_decay_rate: defined for dim = 1 only");
  require(lambda > 0, "solve_decay_rate: lambda must be positive");
  DecayRateResult<Scalar> out;
  out.lambda = lambda;
  TailClass<Scalar> tc = tail_class(spec);
  if (tc.kind == TailKind::polynomial) {
    out.kind = DecayCase::heavy_tail;
    out.c = 0;
    return out;
  }
  out.c = tc.kind == TailKind::exponential ? tc.rate
                                           : std::numeric_limits<Scalar>::infinity();
  const Scalar target = 1 + lambda;
  Scalar hi = 0, m_hi = 0;
  if (std::isfinite(out.c)) {
    // back away from c until the MGF quadrature is trustworthy
    bool found = false;
    for (Scalar eps : {Scalar(1e-9), Scalar(1e-6), Scalar(1e-3), Scalar(1e-2),
                       Scalar(5e-2), Scalar(1e-1)}) {
      hi = out.c * (1 - eps);
      try {
        m_hi = mgf(spec, hi);
        found = true;
        break;
      } catch (const Error&) {
      }
    }
    require(found, "solve_decay_rate: MGF not evaluable anywhere near its log-rate");
    if (m_hi <= target) {
      out.kind = DecayCase::no_root_below_c;
      return out;
    }
  } else {
    hi = 1;
    int guard = 0;
    while (mgf(spec, hi) <= target) {
      hi *= 2;
      require(++guard < 60, "solve_decay_rate: bracketing failed");
    }
  }
  Scalar lo = 0;
  for (int it = 0; it < 200 && hi - lo > Scalar(1e-12); ++it) {
    Scalar mid = (lo + hi) / 2;
    (mgf(spec, mid) > target ? hi : lo) = mid;
  }
  out.q = (lo + hi) / 2;
  require(std::abs(mgf(spec, out.q) - target) <= Scalar(1e-10) * target,
          "solve_decay_rate: root certificate violated");
  require(out.q > 0 && out.q < out.c, "solve_decay_rate: root escaped (0, c)");
  out.kind = DecayCase::pure_imaginary_root;
  return out;
}

// --- theorem-level sweep reports ---------------------------------------------

template <typename Scalar = double>
struct TheoremReport {
  std::vector<Check<Scalar>> checks;
  std::pair<Scalar, Scalar> window{0, 0};
  std::vector<Scalar> lambda_grid;
  std::vector<std::string> notes;
};

template <typename Scalar>
bool report_pass(const TheoremReport<Scalar>& rep) {
  for (const auto& c : rep.checks)
    if (!c.pass) return false;
  return true;
}

namespace detail {

template <typename Scalar>
void check_lambda_list(const std::vector<Scalar>& lambdas, bool descending) {
  require(!lambdas.empty(), "theorem sweep: empty lambda list");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    require(lambdas[i] >= Scalar(0.02) && lambdas[i] <= Scalar(2),
            "theorem sweep: lambda outside [0.02, 2]");
    if (descending && i > 0)
      require(lambdas[i] < lambdas[i - 1], "theorem sweep: lambdas must descend");
  }
}

template <typename Scalar>
std::string lambda_tag(Scalar lam) {
  std::ostringstream os;
  os << lam;
  return os.str();
}

}  // namespace detail

// Sweep check of the polynomial-tail bounds: the compensated amplitudes
//   P+(lambda) = max_window G_lambda(x) (1+|x|)^{d+alpha}
//   P-(lambda) = min_window lambda G_lambda(x) (1+|x|)^{d+alpha}
// must satisfy a O(lambda^{-(2+d+alpha)}) growth cap for P+ and lambda-uniform
// positivity within a factor 2 for P-.
template <typename Scalar>
TheoremReport<Scalar> verify_polynomial_theorem(const KernelSpec<Scalar>& spec,
                                                const Grid<Scalar>& grid,
                                                const std::vector<Scalar>& lambdas) {
  require(spec.family == Family::polynomial,
          "verify_polynomial_theorem: polynomial-family kernel required");
  detail::check_lambda_list(lambdas, /*descending=*/true);
  const Scalar dpa = Scalar(grid.dim) + spec.alpha;
  const Scalar lam_min = lambdas.back();
  // The asymptotic window starts at 0.1 * lambda^{-(alpha+1)/alpha}; taking the
  // smallest lambda keeps one window that is valid uniformly over the sweep.
  Scalar w_lo = std::max(20 * grid.spacing(),
                         Scalar(0.1) * std::pow(lam_min, -(spec.alpha + 1) / spec.alpha));
  Scalar w_hi = grid.extent / 4;
  require(w_lo < w_hi, "verify_polynomial_theorem: interior window infeasible on this grid");

  Field<Scalar> a = sample_kernel(spec, grid).field;
  std::vector<Scalar> p_plus, p_minus;
  Scalar worst_span = 0;
  for (Scalar lam : lambdas) {
    ResolventResult<Scalar> res = resolvent_kernel_spectral(a, lam);
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    Scalar mn = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index j = 0; j < grid.size(); ++j) {
      Scalar r = node_radius(grid, j);
      if (r < w_lo || r > w_hi) continue;
      Scalar v = res.g.values[j];
      if (v < 0 && v >= Scalar(-1e-10)) v = 0;
      Scalar comp = v * std::pow(1 + r, dpa);
      mx = std::max(mx, comp);
      mn = std::min(mn, comp);
    }
    p_plus.push_back(mx);
    p_minus.push_back(lam * mn);
    if (mn > 0) worst_span = std::max(worst_span, mx / mn);
  }

  TheoremReport<Scalar> rep;
  rep.window = {w_lo, w_hi};
  rep.lambda_grid = lambdas;
  rep.notes.push_back("window start fixed by the smallest lambda (uniform over the sweep)");
  rep.notes.push_back("both bounds compensated by (1+|x|)^(d+alpha)");
  Scalar pm_min = *std::min_element(p_minus.begin(), p_minus.end());
  Scalar pm_max = *std::max_element(p_minus.begin(), p_minus.end());
  rep.checks.push_back({"lower_bound_positive", pm_min, 0, pm_min > 0});
  // flatness of the compensated profile within the window, worst case over the
  // sweep: the two-sided bound pins G to (1+|x|)^{-(d+alpha)} at each lambda
  rep.checks.push_back(
      {"compensated_span_per_lambda", worst_span, 2, worst_span < 2});
  if (lambdas.size() >= 2) {
    rep.checks.push_back(
        {"lower_bound_uniform", pm_max / pm_min, 2, pm_max <= 2 * pm_min});
    std::vector<Scalar> lx(lambdas.size()), ly(lambdas.size()), w(lambdas.size(), 1);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      lx[i] = std::log(lambdas[i]);
      ly[i] = std::log(p_plus[i]);
    }
    detail::LineFit<Scalar> fit = detail::weighted_line_fit(lx, ly, w);
    Scalar bound = -(2 + dpa) - Scalar(0.25);
    rep.checks.push_back({"upper_amplitude_slope", fit.slope, bound, fit.slope >= bound});
  } else {
    rep.checks.push_back(
        {"scaling_checks_skipped_single_lambda", Scalar(lambdas.size()), 2, true});
    rep.notes.push_back("single lambda: slope and uniformity checks skipped");
  }
  return rep;
}

// Sweep check of the exponential rate law: fitted decay rates of G_lambda must
// track the MGF-equation roots q(lambda), and q must follow the sqrt(lambda)
// law for small lambda.
template <typename Scalar>
TheoremReport<Scalar> verify_exponential_theorem(
    const KernelSpec<Scalar>& spec, const Grid<Scalar>& grid,
    const std::vector<Scalar>& lambdas,
    std::pair<Scalar, Scalar> window = {0, 0}) {
  require(spec.dim == 1 && grid.dim == 1, "verify_exponential_theorem: dim = 1 only");
  require(tail_class(spec).kind == TailKind::exponential,
          "verify_exponential_theorem: exponential-class kernel required");
  detail::check_lambda_list(lambdas, /*descending=*/false);
  if (window.second <= window.first) window = default_fit_window(grid);

  Field<Scalar> a = sample_kernel(spec, grid).field;
  TheoremReport<Scalar> rep;
  rep.window = window;
  rep.lambda_grid = lambdas;
  std::vector<Scalar> lx, ly;
  for (Scalar lam : lambdas) {
    ResolventResult<Scalar> res = resolvent_kernel_spectral(a, lam);
    TailReport<Scalar> fit = fit_exponential_tail(res.g, window);
    DecayRateResult<Scalar> root = solve_decay_rate(spec, lam);
    require(root.kind == DecayCase::pure_imaginary_root,
            "verify_exponential_theorem: no MGF root; rate comparison undefined");
    Scalar rel = std::abs(fit.fitted / root.q - 1);
    rep.checks.push_back({"rate_match_lambda_" + detail::lambda_tag(lam), rel,
                          Scalar(0.03), rel <= Scalar(0.03)});
    if (lam <= Scalar(0.2) + Scalar(1e-12)) {
      lx.push_back(std::log(lam));
      ly.push_back(std::log(root.q));
    }
  }
  if (lx.size() >= 2) {
    std::vector<Scalar> w(lx.size(), 1);
    detail::LineFit<Scalar> fit = detail::weighted_line_fit(lx, ly, w);
    bool ok = std::abs(fit.slope - Scalar(0.5)) <= Scalar(0.05);
    rep.checks.push_back({"sqrt_lambda_slope", fit.slope, Scalar(0.05), ok});
  } else {
    rep.checks.push_back({"slope_check_skipped", Scalar(lx.size()), 2, true});
    rep.notes.push_back("fewer than two lambdas at or below 0.2: slope check skipped");
  }
  return rep;
}

// --- serialization -----------------------------------------------------------

template <typename Scalar>
nlohmann::ordered_json checks_to_json(const std::vector<Check<Scalar>>& checks) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : checks)
    arr.push_back({{"name", c.name},
                   {"measured", c.measured},
                   {"bound", c.bound},
                   {"pass", c.pass}});
  return arr;
}

template <typename Scalar>
nlohmann::ordered_json report_to_json(const TheoremReport<Scalar>& rep) {
  nlohmann::ordered_json j;
  j["checks"] = checks_to_json(rep.checks);
  j["window"] = {rep.window.first, rep.window.second};
  j["lambda_grid"] = rep.lambda_grid;
  if (!rep.notes.empty()) j["notes"] = rep.notes;
  return j;
}

template <typename Scalar>
nlohmann::ordered_json tail_report_to_json(const TailReport<Scalar>& rep) {
  nlohmann::ordered_json j;
  j["model"] = rep.model == TailModel::polynomial ? "polynomial" : "exponential";
  j["fitted"] = rep.fitted;
  j["amplitude"] = rep.amplitude;
  j["rms_residual"] = rep.rms_residual;
  j["window"] = {rep.window.first, rep.window.second};
  j["checks"] = checks_to_json(rep.verdicts);
  return j;
}

}  // namespace jumpgen
