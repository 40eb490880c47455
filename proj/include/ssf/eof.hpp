#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ssf/field.hpp"

namespace ssf {

/// Top-k orthonormal spatial patterns of one variable, fitted on the daily
/// snapshots of a year range. Cells that are ever missing inside the fit
/// range are excluded from the basis (zero weight, zero mean).
struct EofBasis {
  std::string variable;
  LatLonGrid grid;
  int fit_year_start = 0;
  int fit_year_end = 0;
  int k = 0;
  std::vector<std::uint8_t> included;  // per cell
  Eigen::VectorXd cell_mean;           // n_cells, 0 at excluded cells
  Eigen::MatrixXd loadings;            // n_cells x k, orthonormal columns
  Eigen::VectorXd explained_variance;  // k, non-increasing
};

namespace detail {

// Fix each column's sign so its largest-magnitude entry is positive.
inline void fix_loading_signs(Eigen::MatrixXd& loadings) {
  for (Eigen::Index j = 0; j < loadings.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < loadings.rows(); ++i) {
      const double a = std::abs(loadings(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (loadings(arg, j) < 0) loadings.col(j) = -loadings.col(j);
  }
}

}  // namespace detail

/// Principal spatial patterns of the centered daily snapshots. The
/// eigenproblem is solved on whichever of the cell-covariance or the
/// date-Gram matrix is smaller.
inline EofBasis fit_eof(const GriddedField& f, int fit_year_start,
                        int fit_year_end, int k = 10) {
  std::vector<int> fit_dates;
  for (int t = 0; t < f.n_dates; ++t) {
    const int y = f.date_at(t).year;
    if (y >= fit_year_start && y <= fit_year_end) fit_dates.push_back(t);
  }
  const int n = static_cast<int>(fit_dates.size());
  if (n < k)
    throw DataError("fit_eof: " + std::to_string(n) + " fit dates < k=" +
                    std::to_string(k));

  const int n_cells = f.n_cells();
  std::vector<std::uint8_t> included(static_cast<std::size_t>(n_cells), 1);
  for (int t : fit_dates)
    for (int cell = 0; cell < n_cells; ++cell)
      if (f.is_missing(t, cell)) included[static_cast<std::size_t>(cell)] = 0;
  std::vector<int> cells;
  for (int cell = 0; cell < n_cells; ++cell)
    if (included[static_cast<std::size_t>(cell)]) cells.push_back(cell);
  const int m = static_cast<int>(cells.size());
  if (m == 0) throw DataError("fit_eof: every cell is missing in the fit range");
  if (k > std::min(m, n))
    throw DataError("fit_eof: k exceeds the data rank bound");

  Eigen::MatrixXd X(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) X(i, j) = f.at(fit_dates[i], cells[j]);
  const Eigen::RowVectorXd mu = X.colwise().mean();
  X.rowwise() -= mu;

  Eigen::MatrixXd sub_loadings(m, k);
  Eigen::VectorXd evar(k);
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  if (m <= n) {
    const Eigen::MatrixXd C = X.transpose() * X / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    if (es.info() != Eigen::Success)
      throw NumericError("fit_eof: eigensolver failed for " + f.name);
    for (int j = 0; j < k; ++j) {
      sub_loadings.col(j) = es.eigenvectors().col(m - 1 - j);
      evar(j) = std::max(es.eigenvalues()(m - 1 - j), 0.0);
    }
  } else {
    const Eigen::MatrixXd G = X * X.transpose() / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.info() != Eigen::Success)
      throw NumericError("fit_eof: eigensolver failed for " + f.name);
    for (int j = 0; j < k; ++j) {
      const double lambda = std::max(es.eigenvalues()(n - 1 - j), 0.0);
      evar(j) = lambda;
      Eigen::VectorXd v = X.transpose() * es.eigenvectors().col(n - 1 - j);
      const double norm = v.norm();
      if (norm < 1e-300)
        throw NumericError("fit_eof: degenerate eigenvector for " + f.name);
      sub_loadings.col(j) = v / norm;
    }
  }
  detail::fix_loading_signs(sub_loadings);

  EofBasis b;
  b.variable = f.name;
  b.grid = f.grid;
  b.fit_year_start = fit_year_start;
  b.fit_year_end = fit_year_end;
  b.k = k;
  b.included = included;
  b.cell_mean = Eigen::VectorXd::Zero(n_cells);
  b.loadings = Eigen::MatrixXd::Zero(n_cells, k);
  for (int j = 0; j < m; ++j) {
    b.cell_mean(cells[j]) = mu(j);
    b.loadings.row(cells[j]) = sub_loadings.row(j);
  }
  b.explained_variance = evar;
  return b;
}

/// Project one snapshot onto the basis: loadings' * (snapshot - cell_mean).
/// Missing cells contribute zero anomaly.
inline Eigen::VectorXd project(const GriddedField& f, int t,
                               const EofBasis& basis) {
  if (!f.grid.same_geometry(basis.grid))
    throw DataError("project: snapshot grid does not match basis grid");
  Eigen::VectorXd anom = Eigen::VectorXd::Zero(f.n_cells());
  for (int cell = 0; cell < f.n_cells(); ++cell) {
    if (!basis.included[static_cast<std::size_t>(cell)]) continue;
    if (f.is_missing(t, cell)) continue;
    anom(cell) = f.at(t, cell) - basis.cell_mean(cell);
  }
  return basis.loadings.transpose() * anom;
}

/// Projection of every date in the field; rows follow the field's dates.
inline Eigen::MatrixXd project_all(const GriddedField& f, const EofBasis& basis) {
  Eigen::MatrixXd out(f.n_dates, basis.k);
  for (int t = 0; t < f.n_dates; ++t) out.row(t) = project(f, t, basis).transpose();
  return out;
}

inline void save_eof(const EofBasis& b, const std::string& dir,
                     const std::string& name) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  // loadings ride the field payload format with k pseudo-dates
  GriddedField pat =
      GriddedField::zeros(name + "_loadings", b.grid, Date{2001, 1, 1}, b.k);
  for (int j = 0; j < b.k; ++j)
    for (int cell = 0; cell < b.grid.n_cells(); ++cell)
      pat.set(j, cell, b.loadings(cell, j));
  write_field(pat, (fs::path(dir) / (name + "_loadings.json")).string());

  nlohmann::json meta{{"variable", b.variable},
                      {"fit_year_start", b.fit_year_start},
                      {"fit_year_end", b.fit_year_end},
                      {"k", b.k}};
  meta["explained_variance"] = std::vector<double>(
      b.explained_variance.data(), b.explained_variance.data() + b.k);
  meta["cell_mean"] = std::vector<double>(b.cell_mean.data(),
                                          b.cell_mean.data() + b.cell_mean.size());
  meta["included"] = b.included;
  std::ofstream out((fs::path(dir) / (name + "_meta.json")).string());
  out << meta.dump(2) << "\n";
}

inline EofBasis load_eof(const std::string& dir, const std::string& name) {
  namespace fs = std::filesystem;
  const GriddedField pat =
      read_field((fs::path(dir) / (name + "_loadings.json")).string());
  std::ifstream in((fs::path(dir) / (name + "_meta.json")).string());
  if (!in) throw DataError("missing basis metadata for " + name);
  nlohmann::json meta;
  in >> meta;
  EofBasis b;
  b.variable = meta.at("variable").get<std::string>();
  b.grid = pat.grid;
  b.fit_year_start = meta.at("fit_year_start").get<int>();
  b.fit_year_end = meta.at("fit_year_end").get<int>();
  b.k = meta.at("k").get<int>();
  b.included = meta.at("included").get<std::vector<std::uint8_t>>();
  const auto mean = meta.at("cell_mean").get<std::vector<double>>();
  b.cell_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                                  static_cast<long>(mean.size()));
  const auto evar = meta.at("explained_variance").get<std::vector<double>>();
  b.explained_variance = Eigen::Map<const Eigen::VectorXd>(
      evar.data(), static_cast<long>(evar.size()));
  b.loadings = Eigen::MatrixXd::Zero(pat.grid.n_cells(), b.k);
  for (int j = 0; j < b.k; ++j)
    for (int cell = 0; cell < pat.grid.n_cells(); ++cell)
      b.loadings(cell, j) = pat.at(j, cell);
  return b;
}

}  // namespace ssf
