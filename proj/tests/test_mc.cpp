#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <jumpgen/mc.hpp>
#include <jumpgen/resolvent.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace jumpgen;

TEST_CASE("RngState: reproducible substreams, uniforms in (0,1]") {
  RngState a = walk_substream(42, 7);
  RngState b = walk_substream(42, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());

  RngState c = walk_substream(42, 8);
  int differs = 0;
  for (int i = 0; i < 100; ++i) differs += (a.next() != c.next());
  CHECK(differs > 90);

  RngState d = walk_substream(1, 0);
  for (int i = 0; i < 1000; ++i) {
    double u = d.uniform();
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
  }
}

TEST_CASE("sample_step: laplace and gaussian moments") {
  const int n = 1000000;

  StepSampler<double> lap(KernelSpec<double>::laplace_kernel(1.0, 1));
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    RngState rng = walk_substream(42, i);
    double x = lap(rng)[0];
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) <= 0.004);
  CHECK(sq / n - (sum / n) * (sum / n) == doctest::Approx(2.0).epsilon(0.02));

  StepSampler<double> gauss(KernelSpec<double>::gaussian_kernel(1.0, 2));
  double s1 = 0, s2 = 0, q1 = 0, q2 = 0, cross = 0;
  for (int i = 0; i < n; ++i) {
    RngState rng = walk_substream(43, i);
    auto p = gauss(rng);
    s1 += p[0];
    s2 += p[1];
    q1 += p[0] * p[0];
    q2 += p[1] * p[1];
    cross += p[0] * p[1];
  }
  CHECK(q1 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(q2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::abs(s1 / n) <= 0.005);
  CHECK(std::abs(cross / n) <= 0.005);
}

TEST_CASE("sample_step: polynomial family in both dimensions") {
  const int n = 400000;

  // alpha = 3, d = 1: E|X| = 1/(alpha - 1) = 1/2 (the |X|^2 estimator has
  // infinite variance at this alpha, so test the first absolute moment)
  StepSampler<double> p3(KernelSpec<double>::polynomial_kernel(3.0, 1));
  double absum = 0;
  int positive = 0;
  for (int i = 0; i < n; ++i) {
    RngState rng = walk_substream(7, i);
    double x = p3(rng)[0];
    absum += std::abs(x);
    positive += (x > 0);
  }
  CHECK(absum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(double(positive) / n == doctest::Approx(0.5).epsilon(0.01));

  // alpha = 1, d = 1: no finite moments; the median of |X| is exactly 1
  StepSampler<double> p1(KernelSpec<double>::polynomial_kernel(1.0, 1));
  std::vector<double> mags(n);
  for (int i = 0; i < n; ++i) {
    RngState rng = walk_substream(8, i);
    mags[std::size_t(i)] = std::abs(p1(rng)[0]);
  }
  std::nth_element(mags.begin(), mags.begin() + n / 2, mags.end());
  CHECK(mags[std::size_t(n / 2)] == doctest::Approx(1.0).epsilon(0.03));

  // alpha = 2.5, d = 2: E|X| = alpha(1+alpha) Beta(3, alpha - 1) = 4/3, and the
  // radial survival at r = 1 is (1+alpha) 2^-alpha - alpha 2^-(1+alpha)
  StepSampler<double> p2(KernelSpec<double>::polynomial_kernel(2.5, 2));
  double rsum = 0;
  int beyond1 = 0;
  for (int i = 0; i < n; ++i) {
    RngState rng = walk_substream(9, i);
    auto p = p2(rng);
    double r = std::hypot(p[0], p[1]);
    rsum += r;
    beyond1 += (r > 1.0);
  }
  CHECK(rsum / n == doctest::Approx(4.0 / 3.0).epsilon(0.02));
  double surv1 = 3.5 * std::pow(2.0, -2.5) - 2.5 * std::pow(2.0, -3.5);
  CHECK(double(beyond1) / n == doctest::Approx(surv1).epsilon(0.02));
}

TEST_CASE("sample_step: tabulated kernel via alias tables") {
  // hand-made 8-cell table: frequencies must match the cell probabilities
  Grid<double> tiny = make_grid(1, 8.0, 8);
  Field<double> tf{tiny, Eigen::ArrayXd(8)};
  tf.values << 0.02, 0.08, 0.2, 0.4, 0.15, 0.1, 0.04, 0.01;
  auto tiny_spec = KernelSpec<double>::tabulated_kernel(tf);
  StepSampler<double> ts(tiny_spec);
  const int n = 1000000;
  Eigen::ArrayXd freq = Eigen::ArrayXd::Zero(8);
  for (int i = 0; i < n; ++i) {
    RngState rng = walk_substream(11, i);
    double x = ts(rng)[0];
    Eigen::Index j = Eigen::Index((x + 4.0 + 0.5) / 1.0);
    REQUIRE(j >= 0);
    REQUIRE(j < 8);
    freq[j] += 1.0;
  }
  for (Eigen::Index j = 0; j < 8; ++j) {
    double p = tf.values[j];
    double se = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(freq[j] / n - p) <= 4 * se);
  }

  // tabulated laplace behaves like the analytic sampler
  Grid<double> g = make_grid(1, 40.0, 512);
  auto tab = KernelSpec<double>::tabulated_kernel(
      sample_kernel(KernelSpec<double>::laplace_kernel(1.0, 1), g).field);
  StepSampler<double> lap(tab);
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    RngState rng = walk_substream(12, i);
    double x = lap(rng)[0];
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) <= 0.01);
  CHECK(sq / n == doctest::Approx(2.0).epsilon(0.03));

  // one-shot convenience overload draws from the same construction
  RngState r1 = walk_substream(13, 0), r2 = walk_substream(13, 0);
  CHECK(sample_step(tiny_spec, r1)[0] == ts(r2)[0]);
}

TEST_CASE("estimate_resolvent_mc: exact histogram mass, determinism across threads") {
  auto spec = KernelSpec<double>::laplace_kernel(1.0, 1);
  WalkConfig<double> cfg{spec, 5, 20000, make_grid(1, 40.0, 256)};

  auto est = estimate_resolvent_mc(spec, 1.0, cfg);
  long long total = est.overflow_count;
  for (long long c : est.counts) total += c;
  CHECK(total == cfg.n_walks);

  auto rerun = estimate_resolvent_mc(spec, 1.0, cfg);
  CHECK(rerun.counts == est.counts);
  CHECK(rerun.overflow_count == est.overflow_count);
  CHECK((rerun.estimate.values == est.estimate.values).all());

  setenv("JUMPGEN_THREADS", "3", 1);
  auto threaded = estimate_resolvent_mc(spec, 1.0, cfg);
  setenv("JUMPGEN_THREADS", "0", 1);
  auto auto_threaded = estimate_resolvent_mc(spec, 1.0, cfg);
  unsetenv("JUMPGEN_THREADS");
  CHECK(threaded.counts == est.counts);
  CHECK(auto_threaded.counts == est.counts);

  CHECK_THROWS_AS(estimate_resolvent_mc(spec, 0.0, cfg), Error);
  WalkConfig<double> bad = cfg;
  bad.binning = make_grid(2, 40.0, 64);
  CHECK_THROWS_AS(estimate_resolvent_mc(spec, 1.0, bad), Error);
  bad = cfg;
  bad.n_walks = 0;
  CHECK_THROWS_AS(estimate_resolvent_mc(spec, 1.0, bad), Error);
}

TEST_CASE("estimate_resolvent_mc: matches spectral lambda G for every analytic family") {
  // The spectral reference must itself be unbiased on the comparison window.
  // Light-tailed families are fine on a width-40 box, but the polynomial
  // kernel needs care twice over: its slow tail makes box truncation (and the
  // mass renormalisation it forces) visible at width 40, and its |x| cusp at
  // the origin makes the histogram's cell average differ from the node value
  // unless the cells are fine.  A wide box with fine cells fixes both.
  std::vector<std::pair<KernelSpec<double>, Grid<double>>> cases{
      {KernelSpec<double>::laplace_kernel(1.0, 1), make_grid(1, 40.0, 4096)},
      {KernelSpec<double>::gaussian_kernel(1.0, 1), make_grid(1, 40.0, 4096)},
      {KernelSpec<double>::polynomial_kernel(1.0, 1), make_grid(1, 8000.0, 524288)}};
  for (const auto& [spec, bins] : cases) {
    Field<double> a = sample_kernel(spec, bins).field;
    for (double lambda : {0.5, 1.0}) {
      WalkConfig<double> cfg{spec, 2024, 200000, bins};
      auto est = estimate_resolvent_mc(spec, lambda, cfg);
      auto res = resolvent_kernel_spectral(a, lambda);
      int cells = 0, within = 0;
      for (Eigen::Index j = 0; j < bins.size(); ++j) {
        if (std::abs(node_coordinate(bins, j, 0)) > 3.0) continue;
        ++cells;
        double se = std::max(est.std_error.values[j], 1e-300);
        if (std::abs(est.estimate.values[j] - lambda * res.g.values[j]) <= 3 * se) ++within;
      }
      INFO("family ", int(spec.family), " lambda ", lambda);
      CHECK(double(within) / cells >= 0.99);
    }
  }
}

TEST_CASE("estimate_resolvent_mc: standard errors halve when walks quadruple") {
  auto spec = KernelSpec<double>::laplace_kernel(1.0, 1);
  Grid<double> bins = make_grid(1, 40.0, 256);
  WalkConfig<double> small{spec, 99, 50000, bins};
  WalkConfig<double> large{spec, 99, 200000, bins};
  auto es = estimate_resolvent_mc(spec, 1.0, small);
  auto el = estimate_resolvent_mc(spec, 1.0, large);

  double acc_s = 0, acc_l = 0;
  int cells = 0;
  for (Eigen::Index j = 0; j < bins.size(); ++j) {
    if (std::abs(node_coordinate(bins, j, 0)) > 3.0) continue;
    ++cells;
    acc_s += es.std_error.values[j];
    acc_l += el.std_error.values[j];
  }
  REQUIRE(cells > 0);
  CHECK(acc_s / acc_l == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("estimate_resolvent_mc: stopping-time mean and overflow warning") {
  auto spec = KernelSpec<double>::laplace_kernel(1.0, 1);
  WalkConfig<double> cfg{spec, 31, 1000000, make_grid(1, 40.0, 256)};
  auto est = estimate_resolvent_mc(spec, 1.0, cfg);
  CHECK(est.mean_k == doctest::Approx(2.0).epsilon(0.01));
  CHECK(est.overflow_fraction <= 2e-6);
  CHECK(est.warnings.empty());

  // a box of width 4 loses a sizeable fraction of endpoints
  WalkConfig<double> tight{spec, 31, 100000, make_grid(1, 4.0, 64)};
  auto clipped = estimate_resolvent_mc(spec, 1.0, tight);
  CHECK(clipped.overflow_fraction > 0.05);
  REQUIRE(!clipped.warnings.empty());
  CHECK(clipped.warnings[0].find("overflow") != std::string::npos);
  long long total = clipped.overflow_count;
  for (long long c : clipped.counts) total += c;
  CHECK(total == tight.n_walks);
}

TEST_CASE("walk_tail_report: hundred-step walks look gaussian at moderate radii") {
  auto spec = KernelSpec<double>::laplace_kernel(1.0, 1);
  WalkConfig<double> cfg{spec, 7, 1000000, make_grid(1, 40.0, 256)};
  std::vector<double> radii;
  for (double r = 2; r <= 28; r += 2) radii.push_back(r);

  auto rep = walk_tail_report(spec, 100, cfg, radii);
  // split c * c1 * n with c = 1, c1 = log(4/3)/0.25
  CHECK(rep.split_radius == doctest::Approx(100.0 * std::log(4.0 / 3.0) / 0.25).epsilon(1e-12));
  CHECK(rep.radii.size() == radii.size());  // all radii have plenty of exceedances

  REQUIRE(rep.verdicts.size() == 1);
  CHECK(rep.verdicts[0].name == "gaussian_regime_residual_ordering");
  CHECK(rep.verdicts[0].pass);
  CHECK(rep.verdicts[0].measured < 1.0);

  // log-survival vs r^2 is linear on [5, 20] with residual below 0.1
  std::vector<double> r2, y, w;
  for (std::size_t i = 0; i < rep.radii.size(); ++i) {
    if (rep.radii[i] < 5.0 || rep.radii[i] > 20.0) continue;
    r2.push_back(rep.radii[i] * rep.radii[i]);
    y.push_back(std::log(rep.survival[i]));
    w.push_back(1.0);
  }
  REQUIRE(r2.size() >= 3);
  CHECK(detail::weighted_line_fit(r2, y, w).rms < 0.1);
}

TEST_CASE("walk_tail_report: four-step walks look exponential at large radii") {
  auto spec = KernelSpec<double>::laplace_kernel(1.0, 1);
  WalkConfig<double> cfg{spec, 7, 2000000, make_grid(1, 40.0, 256)};
  std::vector<double> radii{6, 8, 10, 12, 14};

  auto rep = walk_tail_report(spec, 4, cfg, radii);
  CHECK(rep.split_radius == doctest::Approx(4.0 * std::log(4.0 / 3.0) / 0.25).epsilon(1e-12));
  CHECK(rep.radii.size() == radii.size());

  REQUIRE(rep.verdicts.size() == 1);
  CHECK(rep.verdicts[0].name == "exponential_regime_residual_ordering");
  CHECK(rep.verdicts[0].pass);
  CHECK(rep.verdicts[0].measured < 0.7);
}

TEST_CASE("walk_tail_report: single step reproduces the kernel tail itself") {
  auto spec = KernelSpec<double>::laplace_kernel(1.0, 1);
  WalkConfig<double> cfg{spec, 17, 1000000, make_grid(1, 40.0, 256)};
  std::vector<double> radii{1, 2, 3, 4};

  auto rep = walk_tail_report(spec, 1, cfg, radii);
  REQUIRE(rep.radii.size() == 4);
  for (std::size_t i = 0; i < rep.radii.size(); ++i) {
    double p = std::exp(-rep.radii[i]);  // P(|X| > r) = e^{-delta r}
    double se = std::sqrt(p * (1 - p) / double(cfg.n_walks));
    CHECK(std::abs(rep.survival[i] - p) <= 4 * se);
  }
}

TEST_CASE("walk_tail_report: guards and sparse-radius exclusion") {
  auto lap = KernelSpec<double>::laplace_kernel(1.0, 1);
  WalkConfig<double> cfg{lap, 3, 100000, make_grid(1, 40.0, 256)};

  CHECK_THROWS_AS(walk_tail_report(KernelSpec<double>::polynomial_kernel(1.0, 1), 4, cfg,
                                   {1.0, 2.0}),
                  Error);
  CHECK_THROWS_AS(walk_tail_report(KernelSpec<double>::gaussian_kernel(1.0, 1), 4, cfg,
                                   {1.0, 2.0}),
                  Error);
  CHECK_THROWS_AS(walk_tail_report(lap, 0, cfg, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(walk_tail_report(lap, 4, cfg, {2.0, 1.0}), Error);
  CHECK_THROWS_AS(walk_tail_report(lap, 4, cfg, {-1.0, 2.0}), Error);
  WalkConfig<double> few = cfg;
  few.n_walks = 500;
  CHECK_THROWS_AS(walk_tail_report(lap, 4, few, {1.0, 2.0}), Error);

  // a radius far beyond reach is dropped with a notice, leaving too few points
  auto rep = walk_tail_report(lap, 4, cfg, {6.0, 30.0});
  CHECK(rep.radii.size() == 1);
  CHECK(rep.verdicts.empty());
  bool excluded_note = false, sparse_note = false;
  for (const auto& note : rep.notes) {
    excluded_note |= note.find("excluded") != std::string::npos;
    sparse_note |= note.find("no shape verdict") != std::string::npos;
  }
  CHECK(excluded_note);
  CHECK(sparse_note);
}

TEST_CASE("write_mc_estimate: estimate, standard errors, and manifest on disk") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "jumpgen_mc_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto spec = KernelSpec<double>::laplace_kernel(1.0, 1);
  Grid<double> bins = make_grid(1, 40.0, 128);
  WalkConfig<double> cfg{spec, 123, 50000, bins};
  auto est = estimate_resolvent_mc(spec, 0.5, cfg);

  std::string csv = (dir / "mc.csv").string();
  write_mc_estimate(est, csv);
  CHECK(fs::exists(dir / "mc.csv"));
  CHECK(fs::exists(dir / "mc_stderr.csv"));
  CHECK(fs::exists(dir / "mc.json"));

  Field<double> back = read_field_csv(bins, csv);
  CHECK((back.values == est.estimate.values).all());
  Field<double> se = read_field_csv(bins, (dir / "mc_stderr.csv").string());
  CHECK((se.values == est.std_error.values).all());

  std::ifstream in(dir / "mc.json");
  nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j["lambda"].get<double>() == 0.5);
  CHECK(j["seed"].get<std::uint64_t>() == 123);
  CHECK(j["n_walks"].get<long long>() == 50000);
  CHECK(j.contains("overflow_fraction"));

  auto tail = walk_tail_report(spec, 1, cfg, {1.0, 2.0, 3.0});
  auto tj = walk_tail_to_json(tail);
  CHECK(tj.contains("split_radius"));
  CHECK(tj.contains("survival"));
  CHECK(tj["n_steps"].get<int>() == 1);
}
