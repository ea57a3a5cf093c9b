#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <json.hpp>

#include "jumpgen/grid.hpp"

namespace jumpgen {

enum class Family { laplace, gaussian, polynomial, tabulated };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::laplace: return "laplace";
    case Family::gaussian: return "gaussian";
    case Family::polynomial: return "polynomial";
    case Family::tabulated: return "tabulated";
  }
  return "?";
}

// Dispersal-kernel description: an analytic family with its parameter, or a
// tabulated sample on a grid. Analytic densities (unit mass on R^d):
//   laplace    d=1: (delta/2) e^{-delta|x|}        d=2: (delta^2/2pi) e^{-delta|x|}
//   gaussian   d=1: (2 pi sigma^2)^{-1/2} e^{-x^2/2sigma^2}, d=2 product form
//   polynomial d=1: (alpha/2)(1+|x|)^{-(1+alpha)}  d=2: normalizer by radial quadrature
template <typename Scalar = double>
struct KernelSpec {
  Family family = Family::laplace;
  int dim = 1;
  Scalar delta = 1;   // laplace rate
  Scalar sigma = 1;   // gaussian width
  Scalar alpha = 1;   // polynomial tail index
  std::optional<Field<Scalar>> table;  // tabulated only

  static KernelSpec laplace_kernel(Scalar delta, int dim = 1) {
    require(delta > 0, "laplace kernel: delta must be positive");
    KernelSpec s; s.family = Family::laplace; s.dim = dim; s.delta = delta; return s;
  }
  static KernelSpec gaussian_kernel(Scalar sigma, int dim = 1) {
    require(sigma > 0, "gaussian kernel: sigma must be positive");
    KernelSpec s; s.family = Family::gaussian; s.dim = dim; s.sigma = sigma; return s;
  }
  static KernelSpec polynomial_kernel(Scalar alpha, int dim = 1) {
    require(alpha > 0, "polynomial kernel: alpha must be positive");
    KernelSpec s; s.family = Family::polynomial; s.dim = dim; s.alpha = alpha; return s;
  }
  static KernelSpec tabulated_kernel(Field<Scalar> values) {
    KernelSpec s; s.family = Family::tabulated; s.dim = values.grid.dim;
    s.table = std::move(values); return s;
  }
};

enum class TailKind { polynomial, exponential, super_exponential, unclassified };

template <typename Scalar = double>
struct TailClass {
  TailKind kind = TailKind::unclassified;
  Scalar alpha = 0;  // polynomial tail index (kind == polynomial)
  Scalar rate = 0;   // log-rate c (kind == exponential)
};

namespace detail {

// Normalizer for the d=2 polynomial density c(1+|x|)^{-(2+alpha)}: computed by
// radial quadrature (composite Simpson after r = t/(1-t)) and cached per alpha.
template <typename Scalar>
Scalar polynomial2_normalizer(Scalar alpha) {
  static thread_local Scalar cached_alpha = Scalar(-1);
  static thread_local Scalar cached_value = Scalar(0);
  if (cached_alpha == alpha) return cached_value;
  // Panel count chosen for the worst case: non-integer alpha leaves a
  // (1-t)^(alpha-1) endpoint factor, so the composite error is O(n^-(1+alpha)).
  const int n = 1 << 16;
  long double acc = 0;
  auto f = [&](long double t) -> long double {
    long double r = t / (1 - t);
    long double w = 1 / ((1 - t) * (1 - t));  // dr/dt
    return r * std::pow(1 + r, -(2 + (long double)alpha)) * w;
  };
  long double dt = 1.0L / n;
  for (int i = 0; i < n; ++i) {
    long double t0 = i * dt, t1 = (i + 1) * dt;
    if (i == n - 1) t1 -= dt * 1e-12L;  // avoid the t=1 pole; integrand -> 0 there
    acc += (t1 - t0) / 6 * (f(t0) + 4 * f((t0 + t1) / 2) + f(t1));
  }
  long double integral = 2 * (long double)EIGEN_PI * acc;  // angular factor
  cached_alpha = alpha;
  cached_value = Scalar(1 / integral);
  return cached_value;
}

template <typename Scalar>
Scalar density_at(const KernelSpec<Scalar>& spec, Scalar r) {
  switch (spec.family) {
    case Family::laplace: {
      Scalar c = spec.dim == 1 ? spec.delta / 2
                               : spec.delta * spec.delta / (2 * Scalar(EIGEN_PI));
      return c * std::exp(-spec.delta * r);
    }
    case Family::gaussian: {
      Scalar c = std::pow(2 * Scalar(EIGEN_PI) * spec.sigma * spec.sigma,
                          -Scalar(spec.dim) / 2);
      return c * std::exp(-r * r / (2 * spec.sigma * spec.sigma));
    }
    case Family::polynomial: {
      Scalar c = spec.dim == 1 ? spec.alpha / 2 : polynomial2_normalizer(spec.alpha);
      return c * std::pow(1 + r, -(Scalar(spec.dim) + spec.alpha));
    }
    case Family::tabulated:
      throw Error("density_at: tabulated kernels have no closed-form density");
  }
  return 0;
}

}  // namespace detail

template <typename Scalar = double>
struct SampledKernel {
  Field<Scalar> field;
  Scalar rescale = 1;  // discrete renormalization factor applied
};

// Samples the density at the nodes, then rescales so integrate(...) = 1 exactly.
// The rescale factor must stay within [0.9, 1.1]; outside that band the grid is
// too coarse or too small for the kernel.
template <typename Scalar>
SampledKernel<Scalar> sample_kernel(const KernelSpec<Scalar>& spec, const Grid<Scalar>& grid) {
  require(grid.dim == spec.dim, "sample_kernel: grid dimension != kernel dimension");
  Field<Scalar> a = make_field(grid);
  if (spec.family == Family::tabulated) {
    check_same_grid(spec.table->grid, grid, "sample_kernel");
    a.values = spec.table->values;
    require((a.values >= Scalar(0)).all(), "sample_kernel: tabulated kernel has negative values");
    Eigen::Index n = grid.points_per_axis;
    auto mirror = [n](Eigen::Index j) { return (n - j) % n; };
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      Eigen::Index m = grid.dim == 1 ? mirror(i) : mirror(i / n) * n + mirror(i % n);
      require(a.values[i] == a.values[m],
              "sample_kernel: tabulated kernel is not even on the grid");
    }
  } else {
    for (Eigen::Index i = 0; i < grid.size(); ++i)
      a.values[i] = detail::density_at(spec, node_radius(grid, i));
  }
  Scalar mass = integrate(a);
  require(mass > 0, "sample_kernel: zero mass");
  Scalar rescale = Scalar(1) / mass;
  require(rescale >= Scalar(0.9) && rescale <= Scalar(1.1),
          "sample_kernel: rescale factor " + std::to_string(double(rescale)) +
              " outside [0.9,1.1]; grid too coarse or too small for this kernel");
  a.values *= rescale;
  return SampledKernel<Scalar>{std::move(a), rescale};
}

// Fourier symbol atilde(p) on the dual grid: closed forms for the analytic
// laplace/gaussian families, transform of the sample for polynomial/tabulated.
template <typename Scalar>
SpectralField<Scalar> symbol(const KernelSpec<Scalar>& spec, const Grid<Scalar>& grid) {
  require(grid.dim == spec.dim, "symbol: grid dimension != kernel dimension");
  if (spec.family == Family::polynomial || spec.family == Family::tabulated)
    return transform(sample_kernel(spec, grid).field);
  SpectralField<Scalar> F{grid, Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1>::Zero(grid.size())};
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    Scalar p2 = 0;
    for (int ax = 0; ax < grid.dim; ++ax) {
      Scalar p = dual_coordinate(grid, i, ax);
      p2 += p * p;
    }
    Scalar v;
    if (spec.family == Family::laplace) {
      Scalar d2 = spec.delta * spec.delta;
      v = spec.dim == 1 ? d2 / (d2 + p2)
                        : spec.delta * d2 / std::pow(d2 + p2, Scalar(1.5));
    } else {
      v = std::exp(-spec.sigma * spec.sigma * p2 / 2);
    }
    F.values[i] = v;
  }
  return F;
}

// Two-sided moment generating function M(q) = int a(x) e^{qx} dx = atilde(iq), d=1.
// Returns +inf where the integral diverges.
template <typename Scalar>
Scalar mgf(const KernelSpec<Scalar>& spec, Scalar q) {
  require(spec.dim == 1, "mgf: defined for d=1 only");
  require(q >= 0, "mgf: q must be nonnegative");
  constexpr Scalar inf = std::numeric_limits<Scalar>::infinity();
  switch (spec.family) {
    case Family::laplace:
      return q < spec.delta
                 ? spec.delta * spec.delta / (spec.delta * spec.delta - q * q)
                 : inf;
    case Family::gaussian:
      return std::exp(q * q * spec.sigma * spec.sigma / 2);
    case Family::polynomial:
      return q == Scalar(0) ? Scalar(1) : inf;
    case Family::tabulated: {
      const Field<Scalar>& a = *spec.table;
      const Grid<Scalar>& g = a.grid;
      Scalar total = integrate(a);
      Scalar acc = 0, peak = 0, edge = 0, edge_r = 0;
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        Scalar x = node_coordinate(g, i, 0);
        Scalar v = a.values[i] / total * std::cosh(q * x);
        acc += v;
        peak = std::max(peak, v);
        Scalar r = std::abs(x);
        if (r > edge_r) { edge_r = r; edge = v; }
      }
      require(peak == 0 || edge < Scalar(1e-8) * peak,
              "mgf: MGF unreliable at this q (integrand does not decay at the box edge)");
      return acc * g.spacing();
    }
  }
  return inf;
}

// Tail classification. Analytic families classify by construction; tabulated
// kernels by regressing their own samples: log a vs log(1+|x|) and log a vs |x|
// on [L/8, L/4], smaller RMS wins, residual must be < 0.1 to classify at all.
template <typename Scalar>
TailClass<Scalar> tail_class(const KernelSpec<Scalar>& spec) {
  TailClass<Scalar> tc;
  switch (spec.family) {
    case Family::laplace:
      tc.kind = TailKind::exponential; tc.rate = spec.delta; return tc;
    case Family::gaussian:
      tc.kind = TailKind::super_exponential; return tc;
    case Family::polynomial:
      tc.kind = TailKind::polynomial; tc.alpha = spec.alpha; return tc;
    case Family::tabulated: break;
  }
  const Field<Scalar>& a = *spec.table;
  const Grid<Scalar>& g = a.grid;
  Scalar r_min = g.extent / 8, r_max = g.extent / 4;
  // weighted least squares of log a against each model's abscissa
  auto fit_rms = [&](bool loglog, Scalar& slope) {
    Scalar sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      Scalar r = node_radius(g, i);
      if (r < r_min || r > r_max || a.values[i] <= 0) continue;
      Scalar x = loglog ? std::log1p(r) : r;
      Scalar y = std::log(a.values[i]);
      sw += 1; sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    if (sw < 4) return std::numeric_limits<Scalar>::infinity();
    Scalar denom = sw * sxx - sx * sx;
    Scalar b = (sw * sxy - sx * sy) / denom;
    Scalar c0 = (sy - b * sx) / sw;
    Scalar ss = 0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      Scalar r = node_radius(g, i);
      if (r < r_min || r > r_max || a.values[i] <= 0) continue;
      Scalar x = loglog ? std::log1p(r) : r;
      Scalar res = std::log(a.values[i]) - (c0 + b * x);
      ss += res * res;
    }
    slope = -b;
    return std::sqrt(ss / sw);
  };
  Scalar s_poly = 0, s_exp = 0;
  Scalar rms_poly = fit_rms(true, s_poly);
  Scalar rms_exp = fit_rms(false, s_exp);
  if (std::min(rms_poly, rms_exp) >= Scalar(0.1)) return tc;  // unclassified
  if (rms_poly <= rms_exp) {
    tc.kind = TailKind::polynomial;
    tc.alpha = s_poly - Scalar(spec.dim);  // fitted exponent is d + alpha
  } else {
    tc.kind = TailKind::exponential;
    tc.rate = s_exp;
  }
  return tc;
}

// ---- JSON serialization: {"family":"laplace","delta":1.0,"dim":1}, etc.
// Tabulated kernels reference a CSV field file and carry their grid.

template <typename Scalar>
nlohmann::ordered_json kernel_to_json(const KernelSpec<Scalar>& spec,
                                      const std::string& table_path = "") {
  nlohmann::ordered_json j;
  j["family"] = family_name(spec.family);
  switch (spec.family) {
    case Family::laplace: j["delta"] = spec.delta; break;
    case Family::gaussian: j["sigma"] = spec.sigma; break;
    case Family::polynomial: j["alpha"] = spec.alpha; break;
    case Family::tabulated:
      j["values"] = table_path;
      j["grid"] = {{"dim", spec.table->grid.dim},
                   {"extent", spec.table->grid.extent},
                   {"points_per_axis", spec.table->grid.points_per_axis}};
      break;
  }
  j["dim"] = spec.dim;
  return j;
}

template <typename Scalar>
KernelSpec<Scalar> kernel_from_json(const nlohmann::json& j,
                                    const std::string& base_dir = ".") {
  require(j.contains("family"), "kernel: missing \"family\"");
  std::string fam = j.at("family").get<std::string>();
  int dim = j.value("dim", 1);
  if (fam == "laplace")
    return KernelSpec<Scalar>::laplace_kernel(j.at("delta").template get<Scalar>(), dim);
  if (fam == "gaussian")
    return KernelSpec<Scalar>::gaussian_kernel(j.at("sigma").template get<Scalar>(), dim);
  if (fam == "polynomial")
    return KernelSpec<Scalar>::polynomial_kernel(j.at("alpha").template get<Scalar>(), dim);
  if (fam == "tabulated") {
    require(j.contains("values") && j.contains("grid"),
            "kernel: tabulated needs \"values\" (CSV path) and \"grid\"");
    const auto& gj = j.at("grid");
    Grid<Scalar> g = make_grid<Scalar>(gj.at("dim").template get<int>(),
                                       gj.at("extent").template get<Scalar>(),
                                       gj.at("points_per_axis").template get<Eigen::Index>());
    std::string path = j.at("values").get<std::string>();
    if (!path.empty() && path[0] != '/') path = base_dir + "/" + path;
    return KernelSpec<Scalar>::tabulated_kernel(read_field_csv(g, path));
  }
  throw Error("kernel: unknown family \"" + fam + "\"");
}

}  // namespace jumpgen
