#pragma once

#include <cmath>
#include <string>
#include <utility>

#include <json.hpp>

#include "jumpgen/grid.hpp"

namespace jumpgen {

// --- convolution algebra -----------------------------------------------------

// Periodic convolution with the integrate() weight: (a*u)(x_j) = h^d sum_m a_{j-m} u_m.
// Computed spectrally; transform(a*u) = transform(a)*transform(u) holds exactly.
template <typename Scalar>
Field<Scalar> convolve(const Field<Scalar>& a, const Field<Scalar>& u) {
  require(a.grid == u.grid, "convolve: fields live on different grids");
  SpectralField<Scalar> ta = transform(a);
  SpectralField<Scalar> tu = transform(u);
  ta.values *= tu.values;
  return inverse_transform(ta);
}

// L0 u = a*u - u for a unit-mass jump kernel a.
template <typename Scalar>
Field<Scalar> apply_generator(const Field<Scalar>& a, const Field<Scalar>& u) {
  require(a.grid == u.grid, "apply_generator: fields live on different grids");
  Field<Scalar> out = convolve(a, u);
  out.values -= u.values;
  return out;
}

// k-fold self-convolution a^{*k}, via the k-th power of the symbol
// (binary exponentiation keeps the elementwise products at O(log k)).
template <typename Scalar>
Field<Scalar> kernel_power(const Field<Scalar>& a, Eigen::Index k) {
  require(k >= 1, "kernel_power: k must be >= 1");
  SpectralField<Scalar> ta = transform(a);
  Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1> acc =
      Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1>::Ones(ta.values.size());
  Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1> base = ta.values;
  for (Eigen::Index e = k; e > 0; e >>= 1) {
    if (e & 1) acc *= base;
    if (e > 1) base *= base;
  }
  ta.values = acc;
  return inverse_transform(ta);
}

// --- resolvent kernel --------------------------------------------------------

enum class ResolventMethod { spectral, neumann };

template <typename Scalar = double>
struct ResolventResult {
  Scalar lambda = 0;
  Field<Scalar> g;
  ResolventMethod method = ResolventMethod::spectral;
  Eigen::Index neumann_terms = 0;     // K (0 for the spectral route)
  Scalar truncation_bound = 0;        // sup-norm bound on the dropped tail
};

namespace detail {

// Shared postconditions: positivity up to roundoff and the mass identity
// integrate(G_lambda) = 1/lambda (geometric series at zero frequency).
template <typename Scalar>
void validate_resolvent(const ResolventResult<Scalar>& r) {
  Scalar low = r.g.values.minCoeff();
  require(low >= Scalar(-1e-10),
          "resolvent: negative values beyond roundoff tolerance (min " +
              std::to_string((double)low) + ")");
  Scalar vol = std::pow(r.g.grid.extent, Scalar(r.g.grid.dim));
  Scalar slack = std::max(Scalar(1e-8), r.truncation_bound * vol);
  Scalar mass = integrate(r.g);
  require(std::abs(mass - 1 / r.lambda) <= slack,
          "resolvent: mass identity integrate(g) = 1/lambda violated");
}

}  // namespace detail

// Exact resummation of the series: G_hat(p) = a_hat(p) / (1 + lambda - a_hat(p)).
// The denominator is bounded below by lambda since sup |a_hat| <= 1.
template <typename Scalar>
ResolventResult<Scalar> resolvent_kernel_spectral(const Field<Scalar>& a, Scalar lambda) {
  require(lambda > 0, "resolvent_kernel_spectral: lambda must be positive");
  SpectralField<Scalar> ta = transform(a);
  ta.values = ta.values / (Scalar(1) + lambda - ta.values);
  ResolventResult<Scalar> out;
  out.lambda = lambda;
  out.g = inverse_transform(ta);
  out.method = ResolventMethod::spectral;
  detail::validate_resolvent(out);
  return out;
}

// Truncated Neumann series sum_{k=1..K} a^{*k} (1+lambda)^{-k}, with K chosen so
// the sup-norm tail bound ||a||_inf (1+lambda)^{-K} / lambda falls below tol.
// The partial sum accumulates in the spectral domain (one product per term, a
// single inverse transform at the end).
template <typename Scalar>
ResolventResult<Scalar> resolvent_kernel_neumann(const Field<Scalar>& a, Scalar lambda,
                                                 Scalar tol) {
  require(lambda > 0, "resolvent_kernel_neumann: lambda must be positive");
  require(tol > 0, "resolvent_kernel_neumann: tol must be positive");
  Scalar sup = a.values.abs().maxCoeff();
  Scalar k_real = std::ceil(std::log(sup / (tol * lambda)) / std::log1p(lambda));
  if (!(k_real <= Scalar(1e6)))
    throw Error("resolvent_kernel_neumann: lambda too small for requested tol");
  Eigen::Index K = std::max<Eigen::Index>(1, (Eigen::Index)k_real);

  SpectralField<Scalar> ta = transform(a);
  Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1> step =
      ta.values / (Scalar(1) + lambda);
  Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1> term = step;
  Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1> acc = term;
  for (Eigen::Index k = 2; k <= K; ++k) {
    term *= step;
    acc += term;
  }
  ta.values = acc;

  ResolventResult<Scalar> out;
  out.lambda = lambda;
  out.g = inverse_transform(ta);
  out.method = ResolventMethod::neumann;
  out.neumann_terms = K;
  out.truncation_bound = sup * std::pow(Scalar(1) + lambda, Scalar(-K)) / lambda;
  detail::validate_resolvent(out);
  return out;
}

// --- serialization -----------------------------------------------------------

// Field CSV plus a JSON sidecar describing how it was produced.
template <typename Scalar>
void write_resolvent(const ResolventResult<Scalar>& r, const std::string& csv_path) {
  write_field_csv(r.g, csv_path);
  nlohmann::ordered_json j;
  j["lambda"] = r.lambda;
  j["method"] = r.method == ResolventMethod::spectral ? "spectral" : "neumann";
  j["K"] = r.neumann_terms;
  j["truncation_bound"] = r.truncation_bound;
  std::ofstream out(sidecar_path(csv_path));
  require(out.good(), "write_resolvent: cannot open " + sidecar_path(csv_path));
  out << j.dump(2) << "\n";
}

}  // namespace jumpgen
