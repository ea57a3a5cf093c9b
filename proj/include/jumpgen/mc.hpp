#pragma once

// Monte Carlo oracle: random walks with step density a. The geometrically
// stopped walk S_K with P(K=k) = lambda (1+lambda)^{-k}, k >= 1, has density
// lambda * G_lambda, so histogramming endpoints cross-checks the deterministic
// resolvent solvers. A separate report reproduces the two-regime tail bound
// (gaussian for moderate radii, exponential for large ones) of the n-step walk.

#include <jumpgen/asymptotics.hpp>
#include <jumpgen/kernels.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

namespace jumpgen {

// --- deterministic splittable randomness ------------------------------------

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// splitmix64 stream; cheap to fork, so every walk owns an independent
// substream keyed by (seed, walk index) and results never depend on how walks
// are partitioned across threads.
struct RngState {
  std::uint64_t state = 0;

  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ULL;
    return detail::mix64(state);
  }

  // uniform on (0, 1]: the +1 keeps log() finite
  double uniform() { return double((next() >> 11) + 1) * 0x1.0p-53; }
};

inline RngState walk_substream(std::uint64_t seed, std::uint64_t walk_index) {
  return RngState{detail::mix64(seed ^ detail::mix64(walk_index + 0x9E3779B97F4A7C15ULL))};
}

namespace detail {

inline unsigned thread_budget() {
  if (const char* env = std::getenv("JUMPGEN_THREADS")) {
    char* end = nullptr;
    unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return unsigned(std::min(v, 256ul));
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// Runs body(walk_begin, walk_end, slot) on contiguous walk ranges, one slot per
// thread. Accumulators must be per-slot integers so the merge is exact and the
// result independent of the partition.
template <typename Body>
void parallel_walks(Eigen::Index n_walks, unsigned threads, Body body) {
  if (threads <= 1 || n_walks < 1024) {
    body(Eigen::Index(0), n_walks, 0u);
    return;
  }
  std::vector<std::thread> pool;
  Eigen::Index chunk = (n_walks + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    Eigen::Index b = std::min<Eigen::Index>(Eigen::Index(t) * chunk, n_walks);
    Eigen::Index e = std::min<Eigen::Index>(b + chunk, n_walks);
    if (b >= e) break;
    pool.emplace_back([=]() { body(b, e, t); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// --- step sampling -----------------------------------------------------------

// Draws single steps from a kernel family. Analytic families use exact
// transforms (inversion / Box-Muller); tabulated kernels use the alias method
// over grid cells with uniform jitter inside the chosen cell, i.e. the exact
// piecewise-constant density the table represents.
template <typename Scalar = double>
class StepSampler {
 public:
  explicit StepSampler(const KernelSpec<Scalar>& spec) : spec_(spec) {
    if (spec_.family == Family::tabulated) build_alias();
  }

  Eigen::Matrix<Scalar, 2, 1> operator()(RngState& rng) const {
    switch (spec_.family) {
      case Family::laplace: return laplace_step(rng);
      case Family::gaussian: return gaussian_step(rng);
      case Family::polynomial: return polynomial_step(rng);
      case Family::tabulated: return tabulated_step(rng);
    }
    throw Error("StepSampler: unknown family");
  }

 private:
  using Point = Eigen::Matrix<Scalar, 2, 1>;

  Point laplace_step(RngState& rng) const {
    const Scalar d = spec_.delta;
    if (spec_.dim == 1) {
      Scalar mag = -std::log(rng.uniform()) / d;
      return {rng.uniform() <= Scalar(0.5) ? -mag : mag, Scalar(0)};
    }
    // radial density ~ r e^{-delta r} is Gamma(2, 1/delta)
    Scalar r = -(std::log(rng.uniform()) + std::log(rng.uniform())) / d;
    Scalar phi = Scalar(2 * EIGEN_PI) * Scalar(rng.uniform());
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  Point gaussian_step(RngState& rng) const {
    const Scalar s = spec_.sigma;
    Scalar rho = std::sqrt(-2 * std::log(rng.uniform()));
    Scalar phi = Scalar(2 * EIGEN_PI) * Scalar(rng.uniform());
    if (spec_.dim == 1) return {s * rho * std::cos(phi), Scalar(0)};
    return {s * rho * std::cos(phi), s * rho * std::sin(phi)};
  }

  Point polynomial_step(RngState& rng) const {
    const Scalar al = spec_.alpha;
    if (spec_.dim == 1) {
      // |X| has survival (1+r)^{-alpha}
      Scalar mag = std::pow(rng.uniform(), Scalar(-1) / al) - 1;
      return {rng.uniform() <= Scalar(0.5) ? -mag : mag, Scalar(0)};
    }
    // radial survival S(r) = (1+alpha)(1+r)^{-alpha} - alpha (1+r)^{-(1+alpha)}
    Scalar u = rng.uniform();
    auto surv = [al](Scalar r) {
      return (1 + al) * std::pow(1 + r, -al) - al * std::pow(1 + r, -(1 + al));
    };
    Scalar lo = 0, hi = 1;
    while (surv(hi) > u) hi *= 2;
    for (int it = 0; it < 200 && hi - lo > Scalar(1e-12) * (1 + hi); ++it) {
      Scalar mid = (lo + hi) / 2;
      (surv(mid) > u ? lo : hi) = mid;
    }
    Scalar r = (lo + hi) / 2;
    Scalar phi = Scalar(2 * EIGEN_PI) * Scalar(rng.uniform());
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  Point tabulated_step(RngState& rng) const {
    const Grid<Scalar>& g = spec_.table->grid;
    const Scalar n = Scalar(cut_.size());
    Scalar scaled = Scalar(rng.uniform()) * n;
    Eigen::Index idx = std::min<Eigen::Index>(Eigen::Index(scaled), cut_.size() - 1);
    Scalar frac = scaled - Scalar(idx);
    Eigen::Index cell = frac < cut_[std::size_t(idx)] ? idx : alias_[std::size_t(idx)];
    Scalar h = g.spacing();
    Point p{node_coordinate(g, cell, 0) + (Scalar(rng.uniform()) - Scalar(0.5)) * h, Scalar(0)};
    if (g.dim == 2)
      p[1] = node_coordinate(g, cell, 1) + (Scalar(rng.uniform()) - Scalar(0.5)) * h;
    return p;
  }

  // Vose alias tables over the cell probabilities a_j h^d
  void build_alias() {
    const Field<Scalar>& a = *spec_.table;
    const std::size_t n = std::size_t(a.values.size());
    std::vector<Scalar> scaled(n);
    Scalar total = 0;
    for (std::size_t j = 0; j < n; ++j) total += std::max<Scalar>(a.values[j], 0);
    require(total > 0, "StepSampler: tabulated kernel has no mass");
    for (std::size_t j = 0; j < n; ++j)
      scaled[j] = std::max<Scalar>(a.values[j], 0) / total * Scalar(n);

    cut_.assign(n, Scalar(1));
    alias_.resize(n);
    for (std::size_t j = 0; j < n; ++j) alias_[j] = Eigen::Index(j);
    std::vector<std::size_t> small, large;
    for (std::size_t j = 0; j < n; ++j) (scaled[j] < 1 ? small : large).push_back(j);
    while (!small.empty() && !large.empty()) {
      std::size_t s = small.back(), l = large.back();
      small.pop_back();
      cut_[s] = scaled[s];
      alias_[s] = Eigen::Index(l);
      scaled[l] -= 1 - scaled[s];
      if (scaled[l] < 1) {
        large.pop_back();
        small.push_back(l);
      }
    }
  }

  KernelSpec<Scalar> spec_;
  std::vector<Scalar> cut_;
  std::vector<Eigen::Index> alias_;
};

// One draw from the step density. For bulk sampling of tabulated kernels build
// a StepSampler once instead; this convenience overload rebuilds its alias
// tables on every call.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> sample_step(const KernelSpec<Scalar>& spec, RngState& rng) {
  return StepSampler<Scalar>(spec)(rng);
}

// --- geometrically stopped walk histogram ------------------------------------

template <typename Scalar = double>
struct WalkConfig {
  KernelSpec<Scalar> spec;
  std::uint64_t seed = 0;
  Eigen::Index n_walks = 0;
  Grid<Scalar> binning;
};

template <typename Scalar = double>
struct McEstimate {
  Scalar lambda = 0;
  Field<Scalar> estimate;             // density estimate of lambda * G_lambda
  Field<Scalar> std_error;            // per-cell binomial standard error
  std::vector<long long> counts;      // raw per-cell endpoint counts
  long long overflow_count = 0;       // endpoints outside the box
  Scalar overflow_fraction = 0;
  Scalar mean_k = 0;                  // empirical mean of the stopping time
  std::uint64_t seed = 0;
  Eigen::Index n_walks = 0;
  std::vector<std::string> warnings;
};

namespace detail {

// Stopping time with P(K=k) = lambda (1+lambda)^{-k}, k >= 1.
template <typename Scalar>
long long geometric_stop(Scalar lambda, RngState& rng) {
  Scalar u = Scalar(rng.uniform());
  long long k = (long long)std::ceil(double(-std::log(u) / std::log1p(lambda)));
  return k < 1 ? 1 : k;
}

// Cell of a point under nearest-node binning (cell j covers
// [x_j - h/2, x_j + h/2) per axis); returns -1 for points outside the box.
template <typename Scalar>
Eigen::Index locate_cell(const Grid<Scalar>& g, const Eigen::Matrix<Scalar, 2, 1>& p) {
  const Scalar h = g.spacing();
  const Eigen::Index n = g.points_per_axis;
  Eigen::Index flat = 0;
  for (int ax = 0; ax < g.dim; ++ax) {
    Scalar t = (p[ax] + g.extent / 2 + h / 2) / h;
    if (!(t >= 0) || t >= Scalar(n)) return -1;
    flat = flat * n + Eigen::Index(t);
  }
  return flat;
}

}  // namespace detail

template <typename Scalar>
McEstimate<Scalar> estimate_resolvent_mc(const KernelSpec<Scalar>& spec, Scalar lambda,
                                         const WalkConfig<Scalar>& config) {
  require(lambda > 0, "estimate_resolvent_mc: lambda must be positive");
  require(config.n_walks >= 1, "estimate_resolvent_mc: need at least one walk");
  require(spec.dim == config.binning.dim,
          "estimate_resolvent_mc: kernel and binning dimensions differ");

  const Grid<Scalar>& g = config.binning;
  const StepSampler<Scalar> sampler(spec);
  const unsigned threads = detail::thread_budget();

  std::vector<std::vector<long long>> slot_counts(threads,
                                                  std::vector<long long>(g.size(), 0));
  std::vector<long long> slot_overflow(threads, 0);
  std::vector<long long> slot_ksum(threads, 0);

  detail::parallel_walks(config.n_walks, threads,
                         [&](Eigen::Index b, Eigen::Index e, unsigned slot) {
    auto& counts = slot_counts[slot];
    long long overflow = 0, ksum = 0;
    for (Eigen::Index w = b; w < e; ++w) {
      RngState rng = walk_substream(config.seed, std::uint64_t(w));
      long long k = detail::geometric_stop(lambda, rng);
      ksum += k;
      Eigen::Matrix<Scalar, 2, 1> pos{0, 0};
      for (long long s = 0; s < k; ++s) pos += sampler(rng);
      Eigen::Index cell = detail::locate_cell(g, pos);
      if (cell < 0)
        ++overflow;
      else
        ++counts[std::size_t(cell)];
    }
    slot_overflow[slot] += overflow;
    slot_ksum[slot] += ksum;
  });

  McEstimate<Scalar> out;
  out.lambda = lambda;
  out.seed = config.seed;
  out.n_walks = config.n_walks;
  out.counts.assign(std::size_t(g.size()), 0);
  long long ksum = 0;
  for (unsigned t = 0; t < threads; ++t) {
    for (std::size_t j = 0; j < out.counts.size(); ++j) out.counts[j] += slot_counts[t][j];
    out.overflow_count += slot_overflow[t];
    ksum += slot_ksum[t];
  }
  out.mean_k = Scalar(ksum) / Scalar(config.n_walks);
  out.overflow_fraction = Scalar(out.overflow_count) / Scalar(config.n_walks);

  const Scalar hd = g.cell_volume();
  const Scalar nw = Scalar(config.n_walks);
  out.estimate = Field<Scalar>{g, Eigen::Array<Scalar, Eigen::Dynamic, 1>(g.size())};
  out.std_error = Field<Scalar>{g, Eigen::Array<Scalar, Eigen::Dynamic, 1>(g.size())};
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    Scalar p = Scalar(out.counts[std::size_t(j)]) / nw;
    out.estimate.values[j] = p / hd;
    out.std_error.values[j] = std::sqrt(p * (1 - p) / nw) / hd;
  }
  if (out.overflow_fraction > Scalar(0.05)) {
    char msg[96];
    std::snprintf(msg, sizeof msg, "overflow fraction %.2f%% exceeds 5%%: box too small",
                  double(out.overflow_fraction) * 100);
    out.warnings.push_back(msg);
  }
  return out;
}

// --- n-step walk tail dichotomy ----------------------------------------------

template <typename Scalar = double>
struct WalkTailReport {
  Eigen::Index n_steps = 0;
  Scalar split_radius = 0;            // c * c1 * n: gaussian regime below, exponential above
  std::vector<Scalar> radii;          // radii kept (>= 50 exceedances)
  std::vector<Scalar> survival;       // empirical P(|S_n| > r)
  std::vector<long long> exceedances;
  std::vector<Check<Scalar>> verdicts;
  std::vector<std::string> notes;
};

// Empirical survival of |S_n| at the requested radii, split at r* = c c1 n
// (c the kernel's tail rate, c1 = log M(c/2) / (c/2)^2). In each regime both
// a gaussian-shape fit (log P vs r^2) and an exponential-shape fit (log P vs
// r) are computed; the verdict is that the regime's own shape has the smaller
// residual. Radii with fewer than 50 exceedances are dropped with a notice.
template <typename Scalar>
WalkTailReport<Scalar> walk_tail_report(const KernelSpec<Scalar>& spec, Eigen::Index n,
                                        const WalkConfig<Scalar>& config,
                                        const std::vector<Scalar>& radii) {
  require(n >= 1, "walk_tail_report: n must be >= 1");
  require(spec.dim == 1, "walk_tail_report: defined for d=1 kernels");
  require(config.n_walks >= 1000, "walk_tail_report: need at least 1000 walks");
  require(radii.size() >= 1, "walk_tail_report: need at least one radius");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    require(radii[i] > 0, "walk_tail_report: radii must be positive");
    if (i > 0)
      require(radii[i] > radii[i - 1], "walk_tail_report: radii must be strictly increasing");
  }
  TailClass<Scalar> tc = tail_class(spec);
  require(tc.kind == TailKind::exponential,
          "walk_tail_report: kernel must have an exponential-class tail");

  const Scalar c = tc.rate;
  const Scalar half = c / 2;
  const Scalar c1 = std::log(mgf(spec, half)) / (half * half);
  const StepSampler<Scalar> sampler(spec);
  const unsigned threads = detail::thread_budget();

  std::vector<std::vector<long long>> slot_exceed(threads,
                                                  std::vector<long long>(radii.size(), 0));
  detail::parallel_walks(config.n_walks, threads,
                         [&](Eigen::Index b, Eigen::Index e, unsigned slot) {
    auto& exceed = slot_exceed[slot];
    for (Eigen::Index w = b; w < e; ++w) {
      RngState rng = walk_substream(config.seed, std::uint64_t(w));
      Scalar s = 0;
      for (Eigen::Index st = 0; st < n; ++st) s += sampler(rng)[0];
      Scalar r = std::abs(s);
      for (std::size_t i = 0; i < radii.size() && r > radii[i]; ++i) ++exceed[i];
    }
  });

  WalkTailReport<Scalar> rep;
  rep.n_steps = n;
  rep.split_radius = c * c1 * Scalar(n);
  char msg[128];
  for (std::size_t i = 0; i < radii.size(); ++i) {
    long long total = 0;
    for (unsigned t = 0; t < threads; ++t) total += slot_exceed[t][i];
    if (total < 50) {
      std::snprintf(msg, sizeof msg,
                    "radius %g excluded: only %lld exceedances (need 50)", double(radii[i]),
                    total);
      rep.notes.push_back(msg);
      continue;
    }
    rep.radii.push_back(radii[i]);
    rep.exceedances.push_back(total);
    rep.survival.push_back(Scalar(total) / Scalar(config.n_walks));
  }

  auto fit_regime = [&](bool gaussian_regime) {
    std::vector<Scalar> r, r2, y, w;
    for (std::size_t i = 0; i < rep.radii.size(); ++i) {
      bool below = rep.radii[i] <= rep.split_radius;
      if (below != gaussian_regime) continue;
      r.push_back(rep.radii[i]);
      r2.push_back(rep.radii[i] * rep.radii[i]);
      y.push_back(std::log(rep.survival[i]));
      w.push_back(1);
    }
    const char* regime = gaussian_regime ? "gaussian" : "exponential";
    if (r.size() < 3) {
      std::snprintf(msg, sizeof msg, "%s regime has %zu usable radii; no shape verdict",
                    regime, r.size());
      rep.notes.push_back(msg);
      return;
    }
    detail::LineFit<Scalar> fg = detail::weighted_line_fit(r2, y, w);
    detail::LineFit<Scalar> fe = detail::weighted_line_fit(r, y, w);
    Check<Scalar> check;
    check.bound = 1;
    if (gaussian_regime) {
      check.name = "gaussian_regime_residual_ordering";
      check.measured = fg.rms / fe.rms;
    } else {
      check.name = "exponential_regime_residual_ordering";
      check.measured = fe.rms / fg.rms;
    }
    check.pass = check.measured < 1;
    rep.verdicts.push_back(check);
    std::snprintf(msg, sizeof msg,
                  "%s regime shape fits: rms(log P ~ r^2) = %.4f, rms(log P ~ r) = %.4f",
                  regime, double(fg.rms), double(fe.rms));
    rep.notes.push_back(msg);
  };
  fit_regime(true);
  fit_regime(false);
  return rep;
}

// --- serialization -----------------------------------------------------------

// CSV of the estimate, a sibling *_stderr.csv of per-cell standard errors, and
// a JSON sidecar with seed, walk count, and overflow fraction.
template <typename Scalar>
void write_mc_estimate(const McEstimate<Scalar>& est, const std::string& csv_path) {
  require(csv_path.size() > 4 && csv_path.substr(csv_path.size() - 4) == ".csv",
          "write_mc_estimate: path must end in .csv");
  write_field_csv(est.estimate, csv_path);
  std::string stem = csv_path.substr(0, csv_path.size() - 4);
  write_field_csv(est.std_error, stem + "_stderr.csv");

  nlohmann::ordered_json j;
  j["lambda"] = est.lambda;
  j["seed"] = est.seed;
  j["n_walks"] = est.n_walks;
  j["overflow_fraction"] = est.overflow_fraction;
  j["mean_k"] = est.mean_k;
  j["warnings"] = est.warnings;
  std::ofstream out(sidecar_path(csv_path));
  require(out.good(), "write_mc_estimate: cannot open " + sidecar_path(csv_path));
  out << j.dump(2) << "\n";
  require(out.good(), "write_mc_estimate: write failed for " + sidecar_path(csv_path));
}

template <typename Scalar>
nlohmann::ordered_json walk_tail_to_json(const WalkTailReport<Scalar>& rep) {
  nlohmann::ordered_json j;
  j["n_steps"] = rep.n_steps;
  j["split_radius"] = rep.split_radius;
  j["radii"] = rep.radii;
  j["survival"] = rep.survival;
  j["exceedances"] = rep.exceedances;
  j["checks"] = checks_to_json(rep.verdicts);
  j["notes"] = rep.notes;
  return j;
}

}  // namespace jumpgen
