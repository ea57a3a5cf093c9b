#pragma once

// Sourced linear evolution du/dt = a*u - u - m u + f on the torus, u(.,0) = 0:
// exact Fourier-domain propagator, explicit 4th-order stepper, the stationary
// limit (m - L0)^{-1} f, and structural comparisons between all three.

#include <jumpgen/asymptotics.hpp>
#include <jumpgen/resolvent.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace jumpgen {

// A time series of fields u(., t_k) produced by the stepper, together with the
// problem data (mortality m, source f) and the step size used.
template <typename Scalar = double>
struct EvolutionTrace {
  std::vector<Scalar> times;
  std::vector<Field<Scalar>> snapshots;
  Scalar m = 0;
  Field<Scalar> f;
  Scalar dt = 0;
};

// Large-time limit u_hat = (m - L0)^{-1} f, computed spectrally as
// fhat / (1 + m - ahat) and cross-checked against the resolvent formula
// (f + G_m * f) / (1 + m); the two routes must agree to 1e-9 in sup norm.
template <typename Scalar>
Field<Scalar> stationary_solution(const Field<Scalar>& a, Scalar m, const Field<Scalar>& f) {
  require(m > 0, "stationary_solution: m must be positive");
  require(a.grid == f.grid, "stationary_solution: fields live on different grids");
  require(f.values.minCoeff() >= Scalar(0), "stationary_solution: source must be nonnegative");

  SpectralField<Scalar> ta = transform(a);
  SpectralField<Scalar> tf = transform(f);
  ta.values = tf.values / (Scalar(1) + m - ta.values);
  Field<Scalar> u = inverse_transform(ta);

  ResolventResult<Scalar> res = resolvent_kernel_spectral(a, m);
  Field<Scalar> alt = convolve(res.g, f);
  alt.values = (f.values + alt.values) / (Scalar(1) + m);
  Scalar defect = (u.values - alt.values).abs().maxCoeff();
  require(defect <= Scalar(1e-9),
          "stationary_solution: spectral and resolvent routes disagree");
  return u;
}

// Exact solution at time t: every Fourier mode solves a scalar linear ODE, so
// uhat(p,t) = fhat(p) (1 - exp(-r t)) / r with r = 1 + m - ahat(p) >= m > 0.
template <typename Scalar>
Field<Scalar> evolve_exact(const Field<Scalar>& a, Scalar m, const Field<Scalar>& f, Scalar t) {
  require(m > 0, "evolve_exact: m must be positive");
  require(a.grid == f.grid, "evolve_exact: fields live on different grids");
  require(t >= 0, "evolve_exact: time must be nonnegative");

  SpectralField<Scalar> ta = transform(a);
  SpectralField<Scalar> tf = transform(f);
  auto r = (Scalar(1) + m - ta.values).eval();
  ta.values = tf.values * (Scalar(1) - (-r * t).exp()) / r;
  return inverse_transform(ta);
}

// Classical 4th-order Runge-Kutta on the semidiscrete system, with snapshots
// at geometrically spaced times t_end * 2^{-k} (rounded to whole steps) so the
// trace resolves both the transient and the saturated regime.
template <typename Scalar>
EvolutionTrace<Scalar> evolve_stepped(const Field<Scalar>& a, Scalar m, const Field<Scalar>& f,
                                      Scalar t_end, Scalar dt) {
  require(m > 0, "evolve_stepped: m must be positive");
  require(a.grid == f.grid, "evolve_stepped: fields live on different grids");
  require(dt > 0, "evolve_stepped: dt must be positive");
  require(dt * (Scalar(2) + m) <= Scalar(0.5),
          "evolve_stepped: dt too large for the explicit scheme (need dt*(2+m) <= 0.5)");
  require(t_end >= 0, "evolve_stepped: t_end must be nonnegative");

  const long long n_end = std::llround(double(t_end / dt));
  std::set<long long> marks{0, n_end};
  for (int k = 1; k < 63; ++k) {
    long long n = std::llround(double(t_end / dt) * std::pow(2.0, -k));
    if (n < 1) break;
    marks.insert(n);
  }

  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  SpectralField<Scalar> ta = transform(a);
  auto rhs = [&](const Array& u) {
    SpectralField<Scalar> tu = transform(Field<Scalar>{a.grid, u});
    tu.values *= ta.values;
    return (inverse_transform(tu).values - (Scalar(1) + m) * u + f.values).eval();
  };

  EvolutionTrace<Scalar> trace;
  trace.m = m;
  trace.f = f;
  trace.dt = dt;

  Array u = Array::Zero(a.grid.size());
  auto record = [&](long long step) {
    trace.times.push_back(Scalar(step) * dt);
    trace.snapshots.push_back(Field<Scalar>{a.grid, u});
    require(u.minCoeff() >= Scalar(-1e-10), "evolve_stepped: snapshot lost positivity");
  };

  record(0);
  for (long long step = 1; step <= n_end; ++step) {
    Array k1 = rhs(u);
    Array k2 = rhs((u + dt / 2 * k1).eval());
    Array k3 = rhs((u + dt / 2 * k2).eval());
    Array k4 = rhs((u + dt * k3).eval());
    u += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (marks.count(step)) record(step);
  }
  return trace;
}

// Structural verdicts for a trace against its stationary limit:
//   (i) 0 <= u(x,t) <= u_hat(x) at every node and time,
//  (ii) u(x,t) is nondecreasing in t,
// (iii) sup|u(.,t) - u_hat| stays inside the envelope exp(-m t) ||f||_inf / m.
template <typename Scalar = double>
struct ComparisonReport {
  std::vector<Check<Scalar>> verdicts;
};

template <typename Scalar>
ComparisonReport<Scalar> comparison_report(const EvolutionTrace<Scalar>& trace,
                                           const Field<Scalar>& u_hat) {
  require(!trace.snapshots.empty(), "comparison_report: trace has no snapshots");
  require(trace.times.size() == trace.snapshots.size(),
          "comparison_report: times and snapshots differ in length");
  require(trace.m > 0, "comparison_report: trace must carry a positive m");
  require(trace.times.front() == Scalar(0), "comparison_report: times must start at 0");
  for (std::size_t k = 0; k < trace.snapshots.size(); ++k) {
    require(trace.snapshots[k].grid == u_hat.grid, "comparison_report: grid mismatch");
    if (k > 0)
      require(trace.times[k] > trace.times[k - 1],
              "comparison_report: times must be strictly increasing");
  }
  require(trace.f.grid == u_hat.grid, "comparison_report: grid mismatch");

  const Scalar tol = Scalar(1e-9);
  ComparisonReport<Scalar> rep;

  Scalar worst_bound = std::numeric_limits<Scalar>::lowest();
  for (const auto& s : trace.snapshots) {
    worst_bound = std::max(worst_bound, (s.values - u_hat.values).maxCoeff());
    worst_bound = std::max(worst_bound, (-s.values).maxCoeff());
  }
  rep.verdicts.push_back({"bounded_by_stationary", worst_bound, tol, worst_bound <= tol});

  Scalar worst_mono = std::numeric_limits<Scalar>::lowest();
  for (std::size_t i = 0; i < trace.snapshots.size(); ++i)
    for (std::size_t j = i + 1; j < trace.snapshots.size(); ++j)
      worst_mono = std::max(
          worst_mono, (trace.snapshots[i].values - trace.snapshots[j].values).maxCoeff());
  rep.verdicts.push_back({"monotone_in_time", worst_mono, tol, worst_mono <= tol});

  const Scalar f_sup = trace.f.values.abs().maxCoeff();
  Scalar worst_ratio = 0;
  for (std::size_t k = 0; k < trace.snapshots.size(); ++k) {
    Scalar dist = (trace.snapshots[k].values - u_hat.values).abs().maxCoeff();
    Scalar envelope = std::exp(-trace.m * trace.times[k]) * f_sup / trace.m;
    worst_ratio = std::max(worst_ratio, dist / envelope);
  }
  rep.verdicts.push_back(
      {"exponential_approach", worst_ratio, Scalar(1.01), worst_ratio <= Scalar(1.01)});
  return rep;
}

template <typename Scalar>
nlohmann::ordered_json comparison_to_json(const ComparisonReport<Scalar>& rep) {
  nlohmann::ordered_json j;
  j["checks"] = checks_to_json(rep.verdicts);
  return j;
}

// Serializes a trace as one field CSV per snapshot plus a manifest JSON
// {"times": [...], "m": ..., "dt": ...} in the given directory.
template <typename Scalar>
void write_trace(const EvolutionTrace<Scalar>& trace, const std::string& dir) {
  namespace fs = std::filesystem;
  require(trace.times.size() == trace.snapshots.size(),
          "write_trace: times and snapshots differ in length");
  fs::create_directories(dir);
  char name[32];
  for (std::size_t k = 0; k < trace.snapshots.size(); ++k) {
    std::snprintf(name, sizeof name, "snapshot_%04zu.csv", k);
    write_field_csv(trace.snapshots[k], (fs::path(dir) / name).string());
  }
  nlohmann::ordered_json manifest;
  manifest["times"] = trace.times;
  manifest["m"] = trace.m;
  manifest["dt"] = trace.dt;
  std::ofstream out(fs::path(dir) / "manifest.json");
  require(out.good(), "write_trace: cannot open manifest in " + dir);
  out << manifest.dump(2) << "\n";
  require(out.good(), "write_trace: manifest write failed in " + dir);
}

}  // namespace jumpgen
