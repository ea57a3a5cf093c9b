#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <jumpgen/schrodinger.hpp>

#include "support/dense_oracle.hpp"

#include <filesystem>
#include <fstream>

using namespace jumpgen;

TEST_CASE("potential realization: box and tabulated") {
  Grid<double> g = make_grid(1, 40.0, 512);
  auto box = Potential<double>::box_potential(1.0, 1.0);
  Field<double> v = realize(box, g);
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    double r = node_radius(g, j);
    CHECK(v.values[j] == (r <= 1.0 ? 1.0 : 0.0));
  }

  auto weak = Potential<double>::box_potential(0.3, 0.5);
  Field<double> vw = realize(weak, g);
  CHECK(vw.values.maxCoeff() == 0.3);
  CHECK(integrate(vw) == doctest::Approx(0.3 * 1.0).epsilon(0.1));

  CHECK_THROWS_AS(Potential<double>::box_potential(0.0, 1.0), Error);
  CHECK_THROWS_AS(Potential<double>::box_potential(1.2, 1.0), Error);
  CHECK_THROWS_AS(Potential<double>::box_potential(0.5, -1.0), Error);

  Field<double> tab = v;
  auto tp = Potential<double>::tabulated_potential(tab, 1.0);
  CHECK((realize(tp, g).values == v.values).all());
  Grid<double> g2 = make_grid(1, 40.0, 256);
  CHECK_THROWS_AS(realize(tp, g2), Error);

  Field<double> outside = v;
  outside.values[0] = 0.5;  // x = -20, beyond the support radius
  CHECK_THROWS_AS(Potential<double>::tabulated_potential(outside, 1.0), Error);
  Field<double> toobig = v;
  toobig.values[g.size() / 2] = 1.5;
  CHECK_THROWS_AS(Potential<double>::tabulated_potential(toobig, 1.0), Error);
}

TEST_CASE("potential realization in d=2 is a disc") {
  Grid<double> g = make_grid(2, 20.0, 128);
  Field<double> v = realize(Potential<double>::box_potential(1.0, 2.0), g);
  CHECK(integrate(v) == doctest::Approx(4 * EIGEN_PI).epsilon(0.05));
  for (Eigen::Index j = 0; j < g.size(); ++j)
    if (node_radius(g, j) > 2.0) CHECK(v.values[j] == 0.0);
}

TEST_CASE("principal_eigenpair: identically zero potential hits the edge") {
  Grid<double> g = make_grid(1, 40.0, 512);
  Field<double> a = sample_kernel(KernelSpec<double>::laplace_kernel(1.0), g).field;
  Field<double> zeros{g, Eigen::ArrayXd::Zero(g.size())};
  auto V = Potential<double>::tabulated_potential(zeros, 1.0);
  auto gs = principal_eigenpair(a, V, 1e-8);
  CHECK(gs.edge_detected);
  CHECK(std::abs(gs.lambda) < 1e-7);
}

TEST_CASE("principal_eigenpair vs dense oracle: unit box potential") {
  Grid<double> g = make_grid(1, 40.0, 512);
  Field<double> a = sample_kernel(KernelSpec<double>::laplace_kernel(1.0), g).field;
  auto V = Potential<double>::box_potential(1.0, 1.0);
  auto gs = principal_eigenpair(a, V, 1e-8);
  CHECK_FALSE(gs.edge_detected);
  CHECK(gs.lambda > 0);
  CHECK(gs.residual <= 1e-8);
  CHECK(gs.psi.values.maxCoeff() == 1.0);
  CHECK(gs.psi.values.minCoeff() > 0.0);

  double mu_dense = jumpgen_test::dense_principal_eigenvalue(a, realize(V, g));
  CHECK(std::abs((gs.lambda + 1) - mu_dense) < 1e-6);
}

TEST_CASE("principal_eigenpair: weak potential still binds in d=1") {
  Grid<double> g = make_grid(1, 40.0, 512);
  Field<double> a = sample_kernel(KernelSpec<double>::laplace_kernel(1.0), g).field;
  auto V = Potential<double>::box_potential(0.3, 0.5);
  auto gs = principal_eigenpair(a, V, 1e-8);
  CHECK_FALSE(gs.edge_detected);
  CHECK(gs.lambda > 0);
  double mu_dense = jumpgen_test::dense_principal_eigenvalue(a, realize(V, g));
  CHECK(std::abs((gs.lambda + 1) - mu_dense) < 1e-6);
}

TEST_CASE("rayleigh quotients are nondecreasing; scaling the start changes nothing") {
  Grid<double> g = make_grid(1, 40.0, 512);
  Field<double> a = sample_kernel(KernelSpec<double>::laplace_kernel(1.0), g).field;
  auto V = Potential<double>::box_potential(1.0, 1.0);
  std::vector<double> trace;
  auto gs = principal_eigenpair(a, V, 1e-8, &trace);
  REQUIRE(trace.size() >= 3);
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] >= trace[i - 1] - 1e-14);

  Field<double> start = realize(V, g);
  start.values = 5.0 * (start.values > 0).cast<double>();
  auto gs2 = principal_eigenpair(a, V, 1e-8, nullptr, &start);
  CHECK(std::abs(gs.lambda - gs2.lambda) < 1e-12);
  CHECK((gs.psi.values - gs2.psi.values).abs().maxCoeff() < 1e-12);
}

TEST_CASE("variational bound: converged eigenvalue dominates trial quotients") {
  Grid<double> g = make_grid(1, 40.0, 512);
  Field<double> a = sample_kernel(KernelSpec<double>::laplace_kernel(1.0), g).field;
  auto V = Potential<double>::box_potential(1.0, 1.0);
  Field<double> vf = realize(V, g);
  auto gs = principal_eigenpair(a, V, 1e-10);
  double mu = gs.lambda + 1;
  auto quotient = [&](const Field<double>& u) {
    Field<double> w = apply_schrodinger(a, vf, u);
    return (u.values * w.values).sum() / u.values.square().sum();
  };
  Field<double> t1{g, Eigen::ArrayXd::Ones(g.size())};
  Field<double> t2 = vf;
  Field<double> t3{g, (Eigen::ArrayXd::Random(g.size()) + 1.0)};
  for (const auto& t : {t1, t2, t3}) CHECK(quotient(t) <= mu + 1e-9);
  CHECK(quotient(gs.psi) == doctest::Approx(mu).epsilon(1e-10));
}

TEST_CASE("groundstate_residual: resolvent representation agrees and is sensitive") {
  Grid<double> g = make_grid(1, 40.0, 512);
  Field<double> a = sample_kernel(KernelSpec<double>::laplace_kernel(1.0), g).field;
  auto V = Potential<double>::box_potential(1.0, 1.0);
  auto gs = principal_eigenpair(a, V, 1e-8);
  CHECK(groundstate_residual(a, V, gs) <= 1e-6);

  GroundState<double> noisy = gs;
  Eigen::ArrayXd bump = 0.01 * (Eigen::ArrayXd::Random(g.size()) * gs.psi.values);
  noisy.psi.values += bump;
  CHECK(groundstate_residual(a, V, noisy) > 1e-3);

  GroundState<double> edge;
  edge.edge_detected = true;
  CHECK_THROWS_AS(groundstate_residual(a, V, edge), Error);
}

TEST_CASE("groundstate_tail_report: exponential kernel tracks the MGF root") {
  Grid<double> g = make_grid(1, 40.0, 2048);
  auto spec = KernelSpec<double>::laplace_kernel(1.0);
  Field<double> a = sample_kernel(spec, g).field;
  auto V = Potential<double>::box_potential(1.0, 1.0);
  auto gs = principal_eigenpair(a, V, 1e-10);
  auto rep = groundstate_tail_report(gs, spec);
  REQUIRE(rep.verdicts.size() == 2);
  CHECK(rep.verdicts[1].name == "rate_match");
  CHECK(rep.verdicts[1].measured <= 0.03);
  CHECK(rep.verdicts[1].pass);
  double q = std::sqrt(gs.lambda / (1 + gs.lambda));
  CHECK(std::abs(rep.fitted - q) / q < 0.03);
}

TEST_CASE("groundstate_tail_report: polynomial kernel keeps the kernel exponent") {
  Grid<double> g = make_grid(1, 400.0, 1 << 15);
  auto spec = KernelSpec<double>::polynomial_kernel(1.0);
  Field<double> a = sample_kernel(spec, g).field;
  auto V = Potential<double>::box_potential(1.0, 1.0);
  auto gs = principal_eigenpair(a, V, 1e-8);
  CHECK(gs.lambda > 0.3);
  auto rep = groundstate_tail_report(gs, spec);
  REQUIRE(rep.verdicts.size() == 2);
  CHECK(rep.verdicts[1].name == "exponent_match");
  CHECK(rep.verdicts[1].pass);
  CHECK(std::abs(rep.fitted - 2.0) < 0.15);
}

TEST_CASE("groundstate_tail_report: super-exponential kernel is out of scope") {
  Grid<double> g = make_grid(1, 40.0, 512);
  auto spec = KernelSpec<double>::gaussian_kernel(1.0);
  Field<double> a = sample_kernel(spec, g).field;
  auto gs = principal_eigenpair(a, Potential<double>::box_potential(1.0, 1.0), 1e-8);
  auto rep = groundstate_tail_report(gs, spec);
  REQUIRE(rep.verdicts.size() == 1);
  CHECK(rep.verdicts[0].name == "out_of_theorem_scope");
  CHECK(rep.verdicts[0].pass);
}

TEST_CASE("groundstate_tail_report: bounded-MGF kernel reports an informational band") {
  // kernel with a finite MGF limit at its log-rate; lambda = 0.3 exceeds the
  // ceiling, so the decay-rate equation has no root below c
  Grid<double> g = make_grid(1, 200.0, 8192);
  Field<double> table{g, Eigen::ArrayXd(g.size())};
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    double r = node_radius(g, j);
    table.values[j] = std::exp(-r) * std::pow(1 + r, -4.0);
  }
  table.values /= integrate(table);
  auto spec = KernelSpec<double>::tabulated_kernel(table);
  REQUIRE(solve_decay_rate(spec, 0.3).kind == DecayCase::no_root_below_c);

  // synthetic converged state decaying at the kernel rate (a full eigensolve
  // would push the far tail below the convolution noise floor)
  GroundState<double> gs;
  Grid<double> gp = make_grid(1, 60.0, 2048);
  gs.psi = Field<double>{gp, Eigen::ArrayXd(gp.size())};
  for (Eigen::Index j = 0; j < gp.size(); ++j) {
    double r = node_radius(gp, j);
    gs.psi.values[j] = std::exp(-r) * std::pow(1 + r, -4.0);
  }
  gs.lambda = 0.3;
  gs.residual = 1e-9;
  gs.iterations = 1;

  auto rep = groundstate_tail_report(gs, spec, {7.5, 15.0});
  REQUIRE(rep.verdicts.size() == 2);
  CHECK(rep.verdicts[1].name == "rate_band_informational");
  CHECK(rep.verdicts[1].pass);
  CHECK(rep.fitted > 1.0);  // local slope 1 + 4/(1+x) on the window
}

TEST_CASE("ground state serialization") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "jumpgen_schrodinger_test";
  fs::create_directories(dir);
  Grid<double> g = make_grid(1, 40.0, 512);
  Field<double> a = sample_kernel(KernelSpec<double>::laplace_kernel(1.0), g).field;
  auto gs = principal_eigenpair(a, Potential<double>::box_potential(1.0, 1.0), 1e-8);
  std::string csv = (dir / "psi.csv").string();
  write_ground_state(gs, csv);
  Field<double> back = read_field_csv(g, csv);
  CHECK((back.values == gs.psi.values).all());
  std::ifstream in(sidecar_path(csv));
  nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j["lambda"] == gs.lambda);
  CHECK(j["iterations"] == gs.iterations);
  CHECK(j["edge_detected"] == false);
  fs::remove_all(dir);
}

TEST_CASE("potential JSON round trip") {
  auto box = Potential<double>::box_potential(0.3, 0.5);
  auto j = potential_to_json(box);
  auto back = potential_from_json<double>(j);
  CHECK(back.profile == PotentialProfile::box);
  CHECK(back.beta == 0.3);
  CHECK(back.support_radius == 0.5);

  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "jumpgen_potential_test";
  fs::create_directories(dir);
  Grid<double> g = make_grid(1, 20.0, 64);
  Field<double> v = realize(Potential<double>::box_potential(0.7, 2.0), g);
  write_field_csv(v, (dir / "v.csv").string());
  auto tab = Potential<double>::tabulated_potential(v, 2.0);
  auto jt = potential_to_json(tab, "v.csv");
  auto back2 = potential_from_json<double>(jt, dir.string());
  CHECK(back2.profile == PotentialProfile::tabulated);
  CHECK((back2.table->values == v.values).all());
  fs::remove_all(dir);

  CHECK_THROWS_AS(potential_from_json<double>(nlohmann::json{{"profile", "well"}}), Error);
}
