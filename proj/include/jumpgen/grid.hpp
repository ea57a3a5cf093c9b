#pragma once

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "jumpgen/common.hpp"

namespace jumpgen {

// Uniform periodic lattice on [-L/2, L/2)^d. Nodes per axis: x_j = -L/2 + j*h,
// j = 0..N-1; dual frequencies p_k = 2*pi*k/L for signed k in {-N/2,...,N/2-1}.
template <typename Scalar = double>
struct Grid {
  int dim = 1;
  Scalar extent = Scalar(1);          // L
  Eigen::Index points_per_axis = 8;   // N

  Scalar spacing() const { return extent / Scalar(points_per_axis); }
  Eigen::Index size() const {
    return dim == 1 ? points_per_axis : points_per_axis * points_per_axis;
  }
  Scalar cell_volume() const {
    Scalar h = spacing();
    return dim == 1 ? h : h * h;
  }
  bool operator==(const Grid&) const = default;
};

template <typename Scalar = double>
struct Field {
  Grid<Scalar> grid;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> values;
};

template <typename Scalar = double>
struct SpectralField {
  Grid<Scalar> grid;
  Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1> values;
};

template <typename Scalar>
Grid<Scalar> make_grid(int dim, Scalar extent, Eigen::Index points_per_axis) {
  require(dim == 1 || dim == 2, "make_grid: dim must be 1 or 2");
  require(extent > Scalar(0), "make_grid: extent must be positive");
  require(points_per_axis >= 8, "make_grid: need at least 8 points per axis");
  require(points_per_axis % 2 == 0, "make_grid: points per axis must be even");
  return Grid<Scalar>{dim, extent, points_per_axis};
}

inline Grid<double> make_grid(int dim, double extent, Eigen::Index points_per_axis) {
  return make_grid<double>(dim, extent, points_per_axis);
}

// Storage is row-major over axes: flat = j1*N + j2 in d=2.
template <typename Scalar>
Scalar node_coordinate(const Grid<Scalar>& g, Eigen::Index flat, int axis) {
  Eigen::Index n = g.points_per_axis;
  Eigen::Index j = (g.dim == 1) ? flat : (axis == 0 ? flat / n : flat % n);
  return -g.extent / Scalar(2) + Scalar(j) * g.spacing();
}

template <typename Scalar>
Scalar node_radius(const Grid<Scalar>& g, Eigen::Index flat) {
  if (g.dim == 1) return std::abs(node_coordinate(g, flat, 0));
  Scalar x1 = node_coordinate(g, flat, 0);
  Scalar x2 = node_coordinate(g, flat, 1);
  return std::hypot(x1, x2);
}

// Signed frequency index for a storage index along one axis (FFT order).
template <typename Scalar>
Eigen::Index dual_index(const Grid<Scalar>& g, Eigen::Index k) {
  return k < g.points_per_axis / 2 ? k : k - g.points_per_axis;
}

template <typename Scalar>
Scalar dual_coordinate(const Grid<Scalar>& g, Eigen::Index flat, int axis) {
  Eigen::Index n = g.points_per_axis;
  Eigen::Index k = (g.dim == 1) ? flat : (axis == 0 ? flat / n : flat % n);
  constexpr Scalar two_pi = Scalar(2) * Scalar(EIGEN_PI);
  return two_pi * Scalar(dual_index(g, k)) / g.extent;
}

template <typename Scalar>
Field<Scalar> make_field(const Grid<Scalar>& g) {
  return Field<Scalar>{g, Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(g.size())};
}

template <typename Scalar>
void check_same_grid(const Grid<Scalar>& a, const Grid<Scalar>& b, const char* op) {
  require(a == b, std::string(op) + ": grid mismatch");
}

template <typename Scalar>
Scalar integrate(const Field<Scalar>& f) {
  require(f.values.isFinite().all(), "integrate: field has non-finite entries");
  return f.values.sum() * f.grid.cell_volume();
}

namespace detail {

template <typename Scalar>
using CVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

// In-place DFT along rows / columns of a flattened row-major d<=2 array.
template <typename Scalar>
void dft_all_axes(const Grid<Scalar>& g, CVector<Scalar>& buf, bool forward) {
  Eigen::FFT<Scalar> fft;
  Eigen::Index n = g.points_per_axis;
  CVector<Scalar> in(n), out(n);
  if (g.dim == 1) {
    if (forward) fft.fwd(out, buf); else fft.inv(out, buf);
    buf = out;
    return;
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    in = buf.segment(r * n, n);
    if (forward) fft.fwd(out, in); else fft.inv(out, in);
    buf.segment(r * n, n) = out;
  }
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) in[r] = buf[r * n + c];
    if (forward) fft.fwd(out, in); else fft.inv(out, in);
    for (Eigen::Index r = 0; r < n; ++r) buf[r * n + c] = out[r];
  }
}

// (-1)^(sum of storage indices): compensates the -L/2 offset of node 0, so the
// forward transform is the Riemann sum of \int f(x) e^{-i p x} dx at p_k.
template <typename Scalar>
void apply_alternating_sign(const Grid<Scalar>& g, CVector<Scalar>& buf) {
  Eigen::Index n = g.points_per_axis;
  if (g.dim == 1) {
    for (Eigen::Index k = 1; k < n; k += 2) buf[k] = -buf[k];
    return;
  }
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = (r % 2 == 0) ? 1 : 0; c < n; c += 2) buf[r * n + c] = -buf[r * n + c];
}

}  // namespace detail

// F(p_k) = h^d * sum_j f(x_j) e^{-i p_k . x_j}; exact inverse below. With this
// convention transform(a*u) = transform(a) . transform(u) holds exactly for the
// h^d-weighted periodic convolution, and transform(f) at p=0 equals integrate(f).
template <typename Scalar>
SpectralField<Scalar> transform(const Field<Scalar>& f) {
  require(f.values.size() == f.grid.size(), "transform: field length != grid size");
  detail::CVector<Scalar> buf = f.values.template cast<std::complex<Scalar>>().matrix();
  detail::dft_all_axes(f.grid, buf, true);
  detail::apply_alternating_sign(f.grid, buf);
  buf *= std::complex<Scalar>(std::pow(f.grid.spacing(), Scalar(f.grid.dim)), 0);
  return SpectralField<Scalar>{f.grid, buf.array()};
}

template <typename Scalar>
Field<Scalar> inverse_transform(const SpectralField<Scalar>& F) {
  require(F.values.size() == F.grid.size(), "inverse_transform: field length != grid size");
  detail::CVector<Scalar> buf = F.values.matrix();
  detail::apply_alternating_sign(F.grid, buf);
  detail::dft_all_axes(F.grid, buf, false);
  Scalar scale = std::pow(F.grid.spacing(), Scalar(F.grid.dim));
  return Field<Scalar>{F.grid, (buf.array() / scale).real()};
}

// Conjugate-symmetry check for transforms of real fields: value at -p vs
// conjugate of value at p, relative to the largest magnitude.
template <typename Scalar>
Scalar conjugate_symmetry_defect(const SpectralField<Scalar>& F) {
  Eigen::Index n = F.grid.points_per_axis;
  Scalar scale = F.values.abs().maxCoeff();
  if (scale == Scalar(0)) return Scalar(0);
  Scalar worst = 0;
  auto mirror1 = [n](Eigen::Index k) { return (n - k) % n; };
  for (Eigen::Index i = 0; i < F.grid.size(); ++i) {
    Eigen::Index m;
    if (F.grid.dim == 1) {
      m = mirror1(i);
    } else {
      m = mirror1(i / n) * n + mirror1(i % n);
    }
    worst = std::max(worst, std::abs(F.values[i] - std::conj(F.values[m])));
  }
  return worst / scale;
}

// ---- CSV field format: one row per node, columns x1[,x2],value, 17 significant digits.

// Companion metadata path for a CSV artifact: extension swapped for .json.
inline std::string sidecar_path(const std::string& csv_path) {
  std::string out = csv_path;
  if (out.size() >= 4 && out.compare(out.size() - 4, 4, ".csv") == 0)
    out.resize(out.size() - 4);
  return out + ".json";
}

template <typename Scalar>
void write_field_csv(const Field<Scalar>& f, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_field_csv: cannot open " + path);
  out << (f.grid.dim == 1 ? "x1,value\n" : "x1,x2,value\n");
  char buf[96];
  for (Eigen::Index i = 0; i < f.grid.size(); ++i) {
    if (f.grid.dim == 1) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n",
                    double(node_coordinate(f.grid, i, 0)), double(f.values[i]));
    } else {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n",
                    double(node_coordinate(f.grid, i, 0)),
                    double(node_coordinate(f.grid, i, 1)), double(f.values[i]));
    }
    out << buf;
  }
  require(out.good(), "write_field_csv: write failed for " + path);
}

template <typename Scalar>
Field<Scalar> read_field_csv(const Grid<Scalar>& g, const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_field_csv: cannot open " + path);
  Field<Scalar> f = make_field(g);
  std::string line;
  Eigen::Index row = 0;
  Scalar tol = Scalar(1e-9) * g.spacing();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row == 0 && !line.empty() && (std::isalpha(static_cast<unsigned char>(line[0]))))
      continue;  // header
    std::stringstream ss(line);
    std::string cell;
    std::vector<Scalar> cols;
    while (std::getline(ss, cell, ',')) cols.push_back(static_cast<Scalar>(std::strtod(cell.c_str(), nullptr)));
    require(static_cast<int>(cols.size()) == g.dim + 1,
            "read_field_csv: wrong column count in " + path);
    require(row < g.size(), "read_field_csv: too many rows in " + path);
    for (int ax = 0; ax < g.dim; ++ax)
      require(std::abs(cols[ax] - node_coordinate(g, row, ax)) <= tol,
              "read_field_csv: node coordinates do not match the grid in " + path);
    f.values[row] = cols[g.dim];
    ++row;
  }
  require(row == g.size(), "read_field_csv: row count does not match grid in " + path);
  return f;
}

}  // namespace jumpgen
