#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "ssf/eof.hpp"
#include "ssf/util.hpp"

using namespace ssf;

namespace {

LatLonGrid line_grid(int n_cells) {
  LatLonGrid g;
  g.lat_start = 0;
  g.lat_step = 1;
  g.n_lat = 1;
  g.lon_start = 0;
  g.lon_step = 1;
  g.n_lon = n_cells;
  return g;
}

// Hand-rolled cyclic Jacobi eigensolver for small symmetric matrices; the
// independent oracle for fit_eof.
void jacobi_eigen(std::vector<std::vector<double>> a,
                  std::vector<double>& eigenvalues,
                  std::vector<std::vector<double>>& eigenvectors) {
  const std::size_t n = a.size();
  eigenvectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) eigenvectors[i][i] = 1.0;
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a[p][i], aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = eigenvectors[i][p], viq = eigenvectors[i][q];
          eigenvectors[i][p] = c * vip - s * viq;
          eigenvectors[i][q] = s * vip + c * viq;
        }
      }
    }
  }
  eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a[i][i];
}

}  // namespace

TEST_CASE("rank-1 field recovers the planted pattern") {
  const int cells = 12;
  GriddedField f =
      GriddedField::zeros("sst", line_grid(cells), Date{2000, 1, 1}, 400);
  Rng rng(2);
  std::vector<double> pattern(cells);
  for (auto& p : pattern) p = rng.normal();
  for (int t = 0; t < f.n_dates; ++t) {
    const double a = rng.normal();
    for (int c = 0; c < cells; ++c) f.set(t, c, a * pattern[c]);
  }
  const auto basis = fit_eof(f, 2000, 2001, 3);

  double dot = 0, np = 0;
  for (int c = 0; c < cells; ++c) {
    dot += basis.loadings(c, 0) * pattern[c];
    np += pattern[c] * pattern[c];
  }
  CHECK(std::abs(dot) / std::sqrt(np) == Catch::Approx(1.0).margin(1e-8));
  CHECK(basis.explained_variance(1) ==
        Catch::Approx(0.0).margin(1e-10 * basis.explained_variance(0)));
  CHECK(basis.explained_variance(2) ==
        Catch::Approx(0.0).margin(1e-10 * basis.explained_variance(0)));
}

TEST_CASE("loadings are orthonormal with non-increasing variance") {
  GriddedField f =
      GriddedField::zeros("slp", line_grid(9), Date{2000, 1, 1}, 300);
  Rng rng(4);
  for (int t = 0; t < f.n_dates; ++t)
    for (int c = 0; c < 9; ++c) f.set(t, c, rng.normal());
  const auto basis = fit_eof(f, 2000, 2000, 5);

  const Eigen::MatrixXd gram = basis.loadings.transpose() * basis.loadings;
  CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
  for (int j = 1; j < 5; ++j)
    CHECK(basis.explained_variance(j) <= basis.explained_variance(j - 1) + 1e-12);
  // sign convention: the largest-magnitude weight of each loading is positive
  for (int j = 0; j < 5; ++j) {
    Eigen::Index arg;
    basis.loadings.col(j).cwiseAbs().maxCoeff(&arg);
    CHECK(basis.loadings(arg, j) > 0);
  }
}

TEST_CASE("small matrix matches a Jacobi eigensolve oracle") {
  // 3 cells, 5 dates, hand-checkable
  GriddedField f =
      GriddedField::zeros("rhum", line_grid(3), Date{2000, 1, 1}, 5);
  const double data[5][3] = {{1.0, 2.0, 0.5},
                             {2.0, 1.0, -0.5},
                             {0.0, 3.0, 1.5},
                             {-1.0, 0.5, 2.0},
                             {1.5, -2.0, 0.25}};
  for (int t = 0; t < 5; ++t)
    for (int c = 0; c < 3; ++c) f.set(t, c, data[t][c]);
  const auto basis = fit_eof(f, 2000, 2000, 3);

  // centered covariance, n-1 denominator
  double mean[3] = {0, 0, 0};
  for (int t = 0; t < 5; ++t)
    for (int c = 0; c < 3; ++c) mean[c] += data[t][c] / 5.0;
  std::vector<std::vector<double>> cov(3, std::vector<double>(3, 0.0));
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      for (int t = 0; t < 5; ++t)
        cov[a][b] += (data[t][a] - mean[a]) * (data[t][b] - mean[b]);
      cov[a][b] /= 4.0;
    }
  std::vector<double> evals;
  std::vector<std::vector<double>> evecs;
  jacobi_eigen(cov, evals, evecs);
  std::vector<int> order{0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return evals[a] > evals[b]; });

  for (int j = 0; j < 3; ++j) {
    CHECK(basis.explained_variance(j) ==
          Catch::Approx(evals[order[j]]).margin(1e-10));
    double dot = 0;
    for (int c = 0; c < 3; ++c) dot += basis.loadings(c, j) * evecs[c][order[j]];
    CHECK(std::abs(dot) == Catch::Approx(1.0).margin(1e-8));
  }
}

TEST_CASE("projection properties") {
  GriddedField f =
      GriddedField::zeros("hgt500", line_grid(14), Date{2000, 1, 1}, 250);
  Rng rng(9);
  for (int t = 0; t < f.n_dates; ++t)
    for (int c = 0; c < 14; ++c)
      f.set(t, c, 2.0 * rng.normal() + 0.3 * c);
  const auto basis = fit_eof(f, 2000, 2000, 10);

  SECTION("the temporal-mean snapshot projects to zero") {
    GriddedField mean_snap = GriddedField::zeros("m", f.grid, f.date_start, 1);
    for (int c = 0; c < 14; ++c) mean_snap.set(0, c, basis.cell_mean(c));
    const auto p = project(mean_snap, 0, basis);
    CHECK(p.cwiseAbs().maxCoeff() < 1e-10);
  }

  SECTION("cell_mean + loading_j projects to e_j") {
    for (int j : {0, 3, 9}) {
      GriddedField snap = GriddedField::zeros("s", f.grid, f.date_start, 1);
      for (int c = 0; c < 14; ++c)
        snap.set(0, c, basis.cell_mean(c) + basis.loadings(c, j));
      const auto p = project(snap, 0, basis);
      for (int i = 0; i < 10; ++i)
        CHECK(p(i) == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-9));
    }
  }

  SECTION("reconstruction error is non-increasing in k") {
    GriddedField snap = GriddedField::zeros("s", f.grid, f.date_start, 1);
    for (int c = 0; c < 14; ++c) snap.set(0, c, 3.0 * rng.normal());
    Eigen::VectorXd x(14);
    for (int c = 0; c < 14; ++c) x(c) = snap.at(0, c) - basis.cell_mean(c);
    const auto coef = project(snap, 0, basis);
    double prev = x.norm();
    for (int k = 1; k <= 10; ++k) {
      const Eigen::VectorXd recon =
          basis.loadings.leftCols(k) * coef.head(k);
      const double err = (x - recon).norm();
      CHECK(err <= prev + 1e-12);
      prev = err;
    }
  }

  SECTION("fit-range projections have covariance diag(explained_variance)") {
    Eigen::MatrixXd pcs = project_all(f, basis);
    pcs.rowwise() -= pcs.colwise().mean();
    const Eigen::MatrixXd cov =
        pcs.transpose() * pcs / static_cast<double>(f.n_dates - 1);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) {
        const double expect = i == j ? basis.explained_variance(i) : 0.0;
        CHECK(cov(i, j) ==
              Catch::Approx(expect).margin(1e-6 * basis.explained_variance(0)));
      }
  }

  SECTION("grid mismatch is rejected") {
    GriddedField other =
        GriddedField::zeros("o", line_grid(5), f.date_start, 1);
    CHECK_THROWS_AS(project(other, 0, basis), DataError);
  }
}

TEST_CASE("fit_eof is invariant to date order") {
  GriddedField f =
      GriddedField::zeros("sm", line_grid(8), Date{2000, 1, 1}, 120);
  Rng rng(13);
  for (int t = 0; t < f.n_dates; ++t)
    for (int c = 0; c < 8; ++c) f.set(t, c, rng.normal());
  GriddedField rev = f;
  for (int t = 0; t < f.n_dates; ++t)
    for (int c = 0; c < 8; ++c) rev.set(t, c, f.at(f.n_dates - 1 - t, c));

  const auto b1 = fit_eof(f, 2000, 2000, 4);
  const auto b2 = fit_eof(rev, 2000, 2000, 4);
  CHECK((b1.loadings - b2.loadings).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((b1.explained_variance - b2.explained_variance).cwiseAbs().maxCoeff() <
        1e-9);
}

TEST_CASE("missing cells are excluded consistently; gram path works") {
  // more cells than dates forces the date-Gram path
  GriddedField f =
      GriddedField::zeros("sst", line_grid(40), Date{2000, 1, 1}, 25);
  Rng rng(21);
  for (int t = 0; t < f.n_dates; ++t)
    for (int c = 0; c < 40; ++c) f.set(t, c, rng.normal());
  f.set_missing(7, 11);  // cell 11 must drop out of the basis

  const auto basis = fit_eof(f, 2000, 2000, 6);
  CHECK(basis.included[11] == 0);
  CHECK(basis.loadings.row(11).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::MatrixXd gram = basis.loadings.transpose() * basis.loadings;
  CHECK((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);

  SECTION("sum of explained variances is bounded by total variance") {
    double total = 0;
    for (int c = 0; c < 40; ++c) {
      if (!basis.included[static_cast<std::size_t>(c)]) continue;
      double m = 0;
      for (int t = 0; t < f.n_dates; ++t) m += f.at(t, c);
      m /= f.n_dates;
      double ss = 0;
      for (int t = 0; t < f.n_dates; ++t)
        ss += (f.at(t, c) - m) * (f.at(t, c) - m);
      total += ss / (f.n_dates - 1);
    }
    CHECK(basis.explained_variance.sum() <= total + 1e-9);
  }
}

TEST_CASE("error paths") {
  GriddedField f =
      GriddedField::zeros("x", line_grid(4), Date{2000, 1, 1}, 5);
  CHECK_THROWS_AS(fit_eof(f, 2000, 2000, 10), DataError);  // fewer dates than k
  for (int t = 0; t < 5; ++t)
    for (int c = 0; c < 4; ++c) f.set_missing(t, c);
  CHECK_THROWS_AS(fit_eof(f, 2000, 2000, 2), DataError);  // all cells missing
}

TEST_CASE("basis persistence round-trip") {
  GriddedField f =
      GriddedField::zeros("nao_field", line_grid(6), Date{2000, 1, 1}, 80);
  Rng rng(31);
  for (int t = 0; t < f.n_dates; ++t)
    for (int c = 0; c < 6; ++c) f.set(t, c, rng.normal() + c);
  const auto basis = fit_eof(f, 2000, 2000, 3);
  const auto dir = std::filesystem::temp_directory_path() / "ssf_eof_test";
  save_eof(basis, dir.string(), "nao_field");
  const auto loaded = load_eof(dir.string(), "nao_field");
  CHECK(loaded.k == 3);
  CHECK(loaded.variable == "nao_field");
  CHECK((loaded.cell_mean - basis.cell_mean).cwiseAbs().maxCoeff() < 1e-12);
  // loadings ride a float32 payload
  CHECK((loaded.loadings - basis.loadings).cwiseAbs().maxCoeff() < 1e-6);
  std::filesystem::remove_all(dir);
}
