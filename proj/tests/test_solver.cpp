#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "growfem/solver.hpp"
#include "support/oracles.hpp"

using namespace growfem;

namespace {

SparseMatrix dense_to_csr(const oracle::DenseMatrix& m) {
  std::vector<Triplet> ts;
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.n; ++j)
      if (m.at(i, j) != 0.0)
        ts.push_back({static_cast<std::int64_t>(i), static_cast<std::int64_t>(j), m.at(i, j)});
  return csr_from_triplets(static_cast<std::int64_t>(m.n), 0, std::move(ts));
}

oracle::DenseMatrix random_spd(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1, 1);
  oracle::DenseMatrix b;
  b.n = n;
  b.a.assign(n * n, 0.0);
  for (auto& v : b.a) v = u(rng);
  oracle::DenseMatrix spd;
  spd.n = n;
  spd.a.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += b.at(k, i) * b.at(k, j);
      spd.at(i, j) = acc;
    }
    spd.at(i, i) += static_cast<double>(n);  // keep it comfortably definite
  }
  return spd;
}

std::vector<std::vector<double>> segment(const std::vector<double>& x,
                                         const std::vector<std::pair<std::int64_t, std::int64_t>>& r) {
  std::vector<std::vector<double>> out;
  for (auto [b, e] : r)
    out.push_back(std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(b),
                                      x.begin() + static_cast<std::ptrdiff_t>(e)));
  return out;
}

std::vector<std::pair<std::int64_t, std::int64_t>> even_ranges(std::int64_t n, int parts) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (int p = 0; p < parts; ++p)
    out.push_back({n * p / parts, n * (p + 1) / parts});
  return out;
}

}  // namespace

TEST_CASE("csr_from_triplets accumulates duplicates deterministically") {
  auto m = csr_from_triplets(2, 0, {{0, 0, 1.0}, {0, 1, 2.0}, {0, 0, 0.5}, {1, 1, 3.0}});
  REQUIRE(m.row_ptr == std::vector<std::int64_t>{0, 2, 3});
  CHECK(m.cols == std::vector<std::int64_t>{0, 1, 1});
  CHECK(m.vals == std::vector<double>{1.5, 2.0, 3.0});
}

TEST_CASE("jacobi_pcg basics") {
  SECTION("identity matrix converges in one iteration") {
    auto m = csr_from_triplets(4, 0, {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}, {3, 3, 1}});
    std::vector<double> b{1, -2, 3, -4}, x;
    auto rep = jacobi_pcg(m, b, x);
    CHECK(rep.converged);
    CHECK(rep.iterations == 1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(x[i] == Catch::Approx(b[i]).margin(1e-14));
  }

  SECTION("any diagonal matrix is solved in one preconditioned iteration") {
    auto m = csr_from_triplets(4, 0, {{0, 0, 1}, {1, 1, 2}, {2, 2, 3}, {3, 3, 4}});
    std::vector<double> b{4, 6, 6, 4}, x;
    auto rep = jacobi_pcg(m, b, x);
    CHECK(rep.converged);
    CHECK(rep.iterations == 1);
    CHECK(x[3] == Catch::Approx(1.0).margin(1e-14));
  }

  SECTION("zero rhs returns zero immediately") {
    auto m = csr_from_triplets(2, 0, {{0, 0, 2}, {1, 1, 2}});
    std::vector<double> b{0, 0}, x;
    auto rep = jacobi_pcg(m, b, x);
    CHECK(rep.converged);
    CHECK(rep.iterations == 0);
  }

  SECTION("non-positive diagonal is rejected") {
    auto m = csr_from_triplets(2, 0, {{0, 0, -1}, {0, 1, 0.1}, {1, 0, 0.1}, {1, 1, 1}});
    std::vector<double> b{1, 1}, x;
    CHECK_THROWS_AS(jacobi_pcg(m, b, x), NumericalError);
  }

  SECTION("indefinite matrices break down") {
    // positive diagonal but indefinite
    auto m = csr_from_triplets(2, 0, {{0, 0, 1}, {0, 1, 3}, {1, 0, 3}, {1, 1, 1}});
    std::vector<double> b{1, -1}, x;
    CHECK_THROWS_AS(jacobi_pcg(m, b, x), NumericalError);
  }
}

TEST_CASE("jacobi_pcg matches the dense Cholesky oracle on random SPD systems") {
  std::mt19937_64 rng(2025);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 10 + rng() % 41;
    oracle::DenseMatrix spd = random_spd(rng, n);
    std::vector<double> b(n);
    for (auto& v : b) v = u(rng);

    std::vector<double> want;
    REQUIRE(oracle::cholesky_solve(spd, b, want));

    std::vector<double> got;
    auto rep = jacobi_pcg(dense_to_csr(spd), b, got, 1e-12, 10000);
    REQUIRE(rep.converged);
    for (std::size_t i = 0; i < n; ++i)
      REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-10 * (1 + std::abs(want[i]))));
  }
}

TEST_CASE("reported residual agrees with the recomputed true residual") {
  std::mt19937_64 rng(9);
  oracle::DenseMatrix spd = random_spd(rng, 30);
  std::vector<double> b(30, 1.0), x;
  SparseMatrix a = dense_to_csr(spd);
  auto rep = jacobi_pcg(a, b, x, 1e-10, 10000);
  REQUIRE(rep.converged);
  auto ax = matvec(a, x);
  double rn = 0, bn = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    rn += (b[i] - ax[i]) * (b[i] - ax[i]);
    bn += b[i] * b[i];
  }
  CHECK(std::sqrt(rn / bn) == Catch::Approx(rep.residual).margin(1e-10));
}

TEST_CASE("distributed matvec and dot equal the serial oracle") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-2, 2);
  oracle::DenseMatrix spd = random_spd(rng, 64);
  SparseMatrix a = dense_to_csr(spd);
  std::vector<double> x(64);
  for (auto& v : x) v = u(rng);
  auto serial = matvec(a, x);

  for (const char* kind : {"serial", "threads"}) {
    for (int P : {1, 2, 4}) {
      auto ranges = even_ranges(64, P);
      DistributedSystem sys(split_rows(a, ranges), 64);
      auto xp = segment(x, ranges);
      std::vector<std::vector<double>> yp;
      auto tr = make_transport(kind, P);
      sys.matvec(xp, yp, *tr);
      std::size_t flat = 0;
      for (int p = 0; p < P; ++p)
        for (double v : yp[static_cast<std::size_t>(p)]) REQUIRE(v == serial[flat++]);

      // dot of a vector with itself is non-negative and equals the flat sum
      double flat_dot = 0.0;
      for (double v : x) flat_dot += v * v;
      REQUIRE(distributed_dot(xp, xp) == flat_dot);
    }
  }
}

TEST_CASE("solutions are identical for every part count") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(-1, 1);
  oracle::DenseMatrix spd = random_spd(rng, 100);
  SparseMatrix a = dense_to_csr(spd);
  std::vector<double> b(100);
  for (auto& v : b) v = u(rng);

  std::vector<double> reference;
  jacobi_pcg(a, b, reference, 1e-11, 10000);

  for (int P : {1, 2, 4, 8}) {
    auto ranges = even_ranges(100, P);
    DistributedSystem sys(split_rows(a, ranges), 100);
    auto bp = segment(b, ranges);
    auto xp = segment(std::vector<double>(100, 0.0), ranges);
    auto tr = make_transport("serial", P);
    auto rep = jacobi_pcg(sys, bp, xp, *tr, 1e-11, 10000);
    REQUIRE(rep.converged);
    std::size_t flat = 0;
    for (int p = 0; p < P; ++p)
      for (double v : xp[static_cast<std::size_t>(p)]) {
        REQUIRE(v == reference[flat]);  // bit-identical under ordered reductions
        ++flat;
      }
  }
}
