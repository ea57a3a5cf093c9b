#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <jumpgen/grid.hpp>

#include <cstdio>
#include <filesystem>
#include <random>

using namespace jumpgen;

namespace {

Field<double> random_field(const Grid<double>& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Field<double> f = make_field(g);
  for (Eigen::Index i = 0; i < g.size(); ++i) f.values[i] = u(rng);
  return f;
}

}  // namespace

TEST_CASE("make_grid basics and preconditions") {
  Grid<double> g = make_grid(1, 10.0, 10);
  CHECK(g.spacing() == doctest::Approx(1.0));
  CHECK(node_coordinate(g, 0, 0) == doctest::Approx(-5.0));
  CHECK(node_coordinate(g, 9, 0) == doctest::Approx(4.0));

  Grid<double> g2 = make_grid(2, 8.0, 8);
  CHECK(g2.size() == 64);
  CHECK(g2.spacing() == doctest::Approx(1.0));
  CHECK(node_coordinate(g2, 63, 0) == doctest::Approx(3.0));
  CHECK(node_coordinate(g2, 63, 1) == doctest::Approx(3.0));

  CHECK_THROWS_AS(make_grid(1, 10.0, 7), Error);   // odd N
  CHECK_THROWS_AS(make_grid(3, 10.0, 8), Error);   // bad dim
  CHECK_THROWS_AS(make_grid(1, -1.0, 8), Error);   // bad extent
  CHECK_THROWS_AS(make_grid(1, 10.0, 6), Error);   // too few points
}

TEST_CASE("dual lattice enumeration") {
  Grid<double> g = make_grid(1, 10.0, 10);
  CHECK(dual_index(g, 0) == 0);
  CHECK(dual_index(g, 4) == 4);
  CHECK(dual_index(g, 5) == -5);
  CHECK(dual_index(g, 9) == -1);
  CHECK(dual_coordinate(g, 1, 0) == doctest::Approx(2.0 * EIGEN_PI / 10.0));
}

TEST_CASE("integrate: rectangle rule") {
  Grid<double> g = make_grid(1, 10.0, 10);
  Field<double> one{g, Eigen::ArrayXd::Ones(g.size())};
  CHECK(integrate(one) == doctest::Approx(10.0));

  Field<double> ind = make_field(g);
  ind.values[3] = 1.0;
  CHECK(integrate(ind) == doctest::Approx(1.0));  // h = 1

  // sampled Laplace density: rectangle rule is h^2-accurate because of the
  // kink at 0 (error = h^2/12 + O(h^4) ~ 7.9e-6 here)
  Grid<double> gl = make_grid(1, 40.0, 4096);
  Field<double> lap = make_field(gl);
  for (Eigen::Index i = 0; i < gl.size(); ++i)
    lap.values[i] = 0.5 * std::exp(-std::abs(node_coordinate(gl, i, 0)));
  CHECK(integrate(lap) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("integrate is linear and monotone") {
  Grid<double> g = make_grid(1, 5.0, 16);
  Field<double> f = random_field(g, 1);
  Field<double> gfield = random_field(g, 2);
  Field<double> comb{g, 2.0 * f.values + 3.0 * gfield.values};
  CHECK(integrate(comb) ==
        doctest::Approx(2.0 * integrate(f) + 3.0 * integrate(gfield)).epsilon(1e-12));

  Field<double> bigger{g, f.values + 0.5};
  CHECK(integrate(bigger) >= integrate(f));
}

TEST_CASE("transform of constants concentrates at p=0") {
  Grid<double> g = make_grid(1, 10.0, 16);
  Field<double> one{g, Eigen::ArrayXd::Ones(g.size())};
  SpectralField<double> F = transform(one);
  CHECK(std::abs(F.values[0] - 10.0) < 1e-12);
  for (Eigen::Index k = 1; k < g.size(); ++k) CHECK(std::abs(F.values[k]) < 1e-12);
}

TEST_CASE("transform approximates the continuum Fourier transform") {
  // Laplace kernel delta=1: atilde(p) = 1/(1+p^2)
  Grid<double> g = make_grid(1, 40.0, 4096);
  Field<double> a = make_field(g);
  for (Eigen::Index i = 0; i < g.size(); ++i)
    a.values[i] = 0.5 * std::exp(-std::abs(node_coordinate(g, i, 0)));
  SpectralField<double> A = transform(a);
  // p = 1 lives at signed index k with 2 pi k / 40 = 1 -> not a lattice point;
  // use p at k=64 exactly: p = 2 pi 64/40 = 10.0531, and compare on-lattice.
  for (Eigen::Index k : {1, 7, 64, 200}) {
    double p = dual_coordinate(g, k, 0);
    CHECK(std::abs(A.values[k].real() - 1.0 / (1.0 + p * p)) < 1e-4);
    CHECK(std::abs(A.values[k].imag()) < 1e-12);
  }
  CHECK(conjugate_symmetry_defect(A) < 1e-12);
}

TEST_CASE("round trip is the identity within 1e-12") {
  for (int dim : {1, 2}) {
    Grid<double> g = make_grid(dim, 12.5, dim == 1 ? 128 : 32);
    Field<double> f = random_field(g, 42 + dim);
    Field<double> back = inverse_transform(transform(f));
    double rel = (back.values - f.values).abs().maxCoeff() / f.values.abs().maxCoeff();
    CHECK(rel < 1e-12);
  }
}

TEST_CASE("Parseval identity") {
  for (int dim : {1, 2}) {
    Grid<double> g = make_grid(dim, 7.0, dim == 1 ? 64 : 24);
    Field<double> f = random_field(g, 7 + dim);
    SpectralField<double> F = transform(f);
    Field<double> sq{g, f.values * f.values};
    double lhs = integrate(sq);
    double rhs = F.values.abs2().sum() / std::pow(g.extent, dim);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("transform in d=2 matches a direct DFT on a small grid") {
  Grid<double> g = make_grid(2, 4.0, 8);
  Field<double> f = random_field(g, 5);
  SpectralField<double> F = transform(f);
  Eigen::Index n = g.points_per_axis;
  for (Eigen::Index flat : {0, 1, 9, 37, 63}) {
    std::complex<double> acc(0, 0);
    double p1 = dual_coordinate(g, flat, 0), p2 = dual_coordinate(g, flat, 1);
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      double x1 = node_coordinate(g, j, 0), x2 = node_coordinate(g, j, 1);
      acc += f.values[j] * std::exp(std::complex<double>(0, -(p1 * x1 + p2 * x2)));
    }
    acc *= g.cell_volume();
    CHECK(std::abs(F.values[flat] - acc) < 1e-10);
    (void)n;
  }
}

TEST_CASE("float scalar round trip (loose tolerance)") {
  Grid<float> g = make_grid<float>(1, 8.0f, 64);
  Field<float> f = make_field(g);
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  for (Eigen::Index i = 0; i < g.size(); ++i) f.values[i] = u(rng);
  Field<float> back = inverse_transform(transform(f));
  CHECK((back.values - f.values).abs().maxCoeff() < 1e-5f);
}

TEST_CASE("field CSV round trip is exact") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "jumpgen_grid_test";
  fs::create_directories(dir);
  for (int dim : {1, 2}) {
    Grid<double> g = make_grid(dim, 3.0, dim == 1 ? 16 : 8);
    Field<double> f = random_field(g, 11 + dim);
    std::string path = (dir / ("f" + std::to_string(dim) + ".csv")).string();
    write_field_csv(f, path);
    Field<double> back = read_field_csv(g, path);
    CHECK((back.values == f.values).all());  // 17 significant digits round-trip exactly
  }
  Grid<double> wrong = make_grid(1, 3.0, 32);
  CHECK_THROWS_AS(read_field_csv(wrong, (dir / "f1.csv").string()),
                  Error);
  fs::remove_all(dir);
}

TEST_CASE("transform rejects mismatched sizes") {
  Grid<double> g = make_grid(1, 4.0, 16);
  Field<double> f{g, Eigen::ArrayXd::Zero(8)};
  CHECK_THROWS_AS(transform(f), Error);
}
