#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

#include "growfem/core.hpp"
#include "growfem/transport.hpp"

namespace growfem {

/// Compressed-row symmetric sparse matrix (full storage) with global column
/// ids; rows may cover the whole system (serial) or one part's range.
struct SparseMatrix {
  std::int64_t rows = 0;
  std::int64_t row_begin = 0;  // global id of the first stored row
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int64_t> cols;
  std::vector<double> vals;

  std::int64_t row_end() const { return row_begin + rows; }
};

struct Triplet {
  std::int64_t row;
  std::int64_t col;
  double value;
};

/// Builds CSR from triplets covering rows [row_begin, row_begin + rows).
/// Duplicate entries are accumulated in their incoming order, so the result
/// is bit-reproducible for a fixed triplet sequence.
inline SparseMatrix csr_from_triplets(std::int64_t rows, std::int64_t row_begin,
                                      std::vector<Triplet> ts) {
  std::stable_sort(ts.begin(), ts.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m;
  m.rows = rows;
  m.row_begin = row_begin;
  m.row_ptr.assign(static_cast<std::size_t>(rows) + 1, 0);
  for (std::size_t i = 0; i < ts.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < ts.size() && ts[j].row == ts[i].row && ts[j].col == ts[i].col) sum += ts[j++].value;
    if (ts[i].row < row_begin || ts[i].row >= row_begin + rows)
      throw InvalidArgument("csr_from_triplets: row out of range");
    m.cols.push_back(ts[i].col);
    m.vals.push_back(sum);
    ++m.row_ptr[static_cast<std::size_t>(ts[i].row - row_begin) + 1];
    i = j;
  }
  for (std::size_t r = 1; r < m.row_ptr.size(); ++r) m.row_ptr[r] += m.row_ptr[r - 1];
  return m;
}

inline std::vector<double> matvec(const SparseMatrix& a, std::span<const double> x) {
  std::vector<double> y(static_cast<std::size_t>(a.rows), 0.0);
  for (std::int64_t r = 0; r < a.rows; ++r) {
    double acc = 0.0;
    for (std::int64_t k = a.row_ptr[static_cast<std::size_t>(r)];
         k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
      acc += a.vals[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(a.cols[static_cast<std::size_t>(k)])];
    y[static_cast<std::size_t>(r)] = acc;
  }
  return y;
}

struct SolveReport {
  int iterations = 0;
  double residual = 0.0;  // final relative residual
  bool converged = false;
};

/// Row distribution and ghost plumbing of a part-distributed system. Rows are
/// contiguous per part; the column sets define the import lists exchanged on
/// every matvec.
class DistributedSystem {
 public:
  DistributedSystem(std::vector<SparseMatrix> parts, std::int64_t n)
      : parts_(std::move(parts)), n_(n) {
    imports_.resize(parts_.size());
    ghost_slot_.resize(parts_.size());
    for (std::size_t p = 0; p < parts_.size(); ++p) {
      const SparseMatrix& a = parts_[p];
      std::vector<std::int64_t> foreign;
      for (std::int64_t c : a.cols)
        if (c < a.row_begin || c >= a.row_end()) foreign.push_back(c);
      std::sort(foreign.begin(), foreign.end());
      foreign.erase(std::unique(foreign.begin(), foreign.end()), foreign.end());
      imports_[p] = std::move(foreign);
      for (std::size_t g = 0; g < imports_[p].size(); ++g)
        ghost_slot_[p][imports_[p][g]] = g;
    }
  }

  int num_parts() const { return static_cast<int>(parts_.size()); }
  std::int64_t size() const { return n_; }
  const SparseMatrix& part(int p) const { return parts_[static_cast<std::size_t>(p)]; }
  const std::vector<std::int64_t>& imports(int p) const {
    return imports_[static_cast<std::size_t>(p)];
  }

  int owner_of(std::int64_t dof) const {
    for (std::size_t p = 0; p < parts_.size(); ++p)
      if (dof >= parts_[p].row_begin && dof < parts_[p].row_end()) return static_cast<int>(p);
    throw InvalidArgument("owner_of: dof outside all ranges");
  }

  /// One ghost exchange followed by the local sparse products; y is resized
  /// per part. Exactly one transport superstep carries the ghost values.
  void matvec(const std::vector<std::vector<double>>& x, std::vector<std::vector<double>>& y,
              Transport& tr) const {
    tr.step([&](int p) {
      // owners push the requested entries to every importer
      for (int q = 0; q < num_parts(); ++q) {
        if (q == p) continue;
        const auto& imp = imports_[static_cast<std::size_t>(q)];
        std::vector<std::byte> buf;
        const SparseMatrix& mine = parts_[static_cast<std::size_t>(p)];
        for (std::int64_t g : imp)
          if (g >= mine.row_begin && g < mine.row_end())
            wire::put<double>(buf, x[static_cast<std::size_t>(p)]
                                    [static_cast<std::size_t>(g - mine.row_begin)]);
        if (!buf.empty()) tr.send(p, q, std::move(buf));
      }
    });

    y.resize(parts_.size());
    tr.step([&](int p) {
      const SparseMatrix& a = parts_[static_cast<std::size_t>(p)];
      std::vector<double> ghosts(imports_[static_cast<std::size_t>(p)].size(), 0.0);
      for (int q = 0; q < num_parts(); ++q) {
        if (q == p) continue;
        const SparseMatrix& theirs = parts_[static_cast<std::size_t>(q)];
        const auto& msgs = tr.recv(p, q);
        if (msgs.empty()) continue;
        // one message per sender, packed in this part's import-list order
        std::size_t pos = 0;
        for (std::int64_t g : imports_[static_cast<std::size_t>(p)]) {
          if (g < theirs.row_begin || g >= theirs.row_end()) continue;
          ghosts[ghost_slot_[static_cast<std::size_t>(p)].at(g)] =
              wire::get<double>(msgs.front(), pos);
        }
      }
      auto& out = y[static_cast<std::size_t>(p)];
      out.assign(static_cast<std::size_t>(a.rows), 0.0);
      for (std::int64_t r = 0; r < a.rows; ++r) {
        double acc = 0.0;
        for (std::int64_t k = a.row_ptr[static_cast<std::size_t>(r)];
             k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k) {
          const std::int64_t c = a.cols[static_cast<std::size_t>(k)];
          const double xv = (c >= a.row_begin && c < a.row_end())
                                ? x[static_cast<std::size_t>(p)][static_cast<std::size_t>(c - a.row_begin)]
                                : ghosts[ghost_slot_[static_cast<std::size_t>(p)].at(c)];
          acc += a.vals[static_cast<std::size_t>(k)] * xv;
        }
        out[static_cast<std::size_t>(r)] = acc;
      }
    });
  }

 private:
  std::vector<SparseMatrix> parts_;
  std::int64_t n_;
  std::vector<std::vector<std::int64_t>> imports_;
  std::vector<std::unordered_map<std::int64_t, std::size_t>> ghost_slot_;
};

/// Global reduction over the parts' contiguous segments, summed in ascending
/// global index order: bit-identical for every part count.
inline double distributed_dot(const std::vector<std::vector<double>>& x,
                              const std::vector<std::vector<double>>& y) {
  double acc = 0.0;
  for (std::size_t p = 0; p < x.size(); ++p)
    for (std::size_t i = 0; i < x[p].size(); ++i) acc += x[p][i] * y[p][i];
  return acc;
}

/// Conjugate gradients with Jacobi (diagonal) preconditioning over the
/// part-distributed layout. Stops on the relative residual; the recurrence
/// residual is confirmed against the recomputed true residual at convergence.
inline SolveReport jacobi_pcg(const DistributedSystem& sys,
                              const std::vector<std::vector<double>>& b,
                              std::vector<std::vector<double>>& x, Transport& tr,
                              double tol = 1e-8, int max_iters = 5000) {
  if (tol <= 0) throw InvalidArgument("jacobi_pcg: tolerance must be positive");
  const int P = sys.num_parts();

  // Jacobi preconditioner: the matrix diagonal, which must be positive.
  std::vector<std::vector<double>> diag(static_cast<std::size_t>(P));
  for (int p = 0; p < P; ++p) {
    const SparseMatrix& a = sys.part(p);
    auto& d = diag[static_cast<std::size_t>(p)];
    d.assign(static_cast<std::size_t>(a.rows), 0.0);
    for (std::int64_t r = 0; r < a.rows; ++r) {
      for (std::int64_t k = a.row_ptr[static_cast<std::size_t>(r)];
           k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
        if (a.cols[static_cast<std::size_t>(k)] == a.row_begin + r)
          d[static_cast<std::size_t>(r)] = a.vals[static_cast<std::size_t>(k)];
      if (d[static_cast<std::size_t>(r)] <= 0.0)
        throw NumericalError("jacobi_pcg: non-positive diagonal entry");
    }
  }

  auto axpy = [&](double alpha, const std::vector<std::vector<double>>& u,
                  std::vector<std::vector<double>>& v) {
    for (int p = 0; p < P; ++p)
      for (std::size_t i = 0; i < v[static_cast<std::size_t>(p)].size(); ++i)
        v[static_cast<std::size_t>(p)][i] += alpha * u[static_cast<std::size_t>(p)][i];
  };

  const double bnorm = std::sqrt(distributed_dot(b, b));
  SolveReport rep;
  if (bnorm == 0.0) {
    for (auto& seg : x) std::fill(seg.begin(), seg.end(), 0.0);
    rep.converged = true;
    return rep;
  }

  std::vector<std::vector<double>> r(static_cast<std::size_t>(P));
  std::vector<std::vector<double>> q;
  sys.matvec(x, q, tr);
  for (int p = 0; p < P; ++p) {
    const auto& bp = b[static_cast<std::size_t>(p)];
    r[static_cast<std::size_t>(p)].resize(bp.size());
    for (std::size_t i = 0; i < bp.size(); ++i)
      r[static_cast<std::size_t>(p)][i] = bp[i] - q[static_cast<std::size_t>(p)][i];
  }

  auto precondition = [&](const std::vector<std::vector<double>>& in,
                          std::vector<std::vector<double>>& out) {
    out.resize(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
      const auto& dp = diag[static_cast<std::size_t>(p)];
      auto& op = out[static_cast<std::size_t>(p)];
      op.resize(dp.size());
      for (std::size_t i = 0; i < dp.size(); ++i)
        op[i] = in[static_cast<std::size_t>(p)][i] / dp[i];
    }
  };

  std::vector<std::vector<double>> z, pdir;
  precondition(r, z);
  pdir = z;
  double rho = distributed_dot(r, z);

  for (int it = 1; it <= max_iters; ++it) {
    sys.matvec(pdir, q, tr);
    const double pq = distributed_dot(pdir, q);
    if (pq <= 0.0) throw NumericalError("jacobi_pcg: breakdown, matrix is not SPD");
    const double alpha = rho / pq;
    axpy(alpha, pdir, x);
    axpy(-alpha, q, r);

    const double rnorm = std::sqrt(distributed_dot(r, r));
    rep.iterations = it;
    if (rnorm / bnorm <= tol) {
      // confirm with the true residual before declaring convergence
      std::vector<std::vector<double>> ax;
      sys.matvec(x, ax, tr);
      std::vector<std::vector<double>> rt(static_cast<std::size_t>(P));
      for (int p = 0; p < P; ++p) {
        const auto& bp = b[static_cast<std::size_t>(p)];
        rt[static_cast<std::size_t>(p)].resize(bp.size());
        for (std::size_t i = 0; i < bp.size(); ++i)
          rt[static_cast<std::size_t>(p)][i] = bp[i] - ax[static_cast<std::size_t>(p)][i];
      }
      const double true_norm = std::sqrt(distributed_dot(rt, rt));
      rep.residual = true_norm / bnorm;
      if (rep.residual <= tol) {
        rep.converged = true;
        return rep;
      }
      r = std::move(rt);
    } else {
      rep.residual = rnorm / bnorm;
    }

    precondition(r, z);
    const double rho_next = distributed_dot(r, z);
    const double beta = rho_next / rho;
    rho = rho_next;
    for (int p = 0; p < P; ++p)
      for (std::size_t i = 0; i < pdir[static_cast<std::size_t>(p)].size(); ++i)
        pdir[static_cast<std::size_t>(p)][i] =
            z[static_cast<std::size_t>(p)][i] + beta * pdir[static_cast<std::size_t>(p)][i];
  }
  return rep;
}

/// Serial convenience front-end: one part covering all rows.
inline SolveReport jacobi_pcg(const SparseMatrix& a, std::span<const double> b,
                              std::vector<double>& x, double tol = 1e-8, int max_iters = 5000) {
  if (a.row_begin != 0) throw InvalidArgument("jacobi_pcg: serial matrix must start at row 0");
  DistributedSystem sys({a}, a.rows);
  Transport tr(1);
  std::vector<std::vector<double>> bb{std::vector<double>(b.begin(), b.end())};
  if (x.size() != static_cast<std::size_t>(a.rows)) x.assign(static_cast<std::size_t>(a.rows), 0.0);
  std::vector<std::vector<double>> xx{x};
  SolveReport rep = jacobi_pcg(sys, bb, xx, tr, tol, max_iters);
  x = std::move(xx[0]);
  return rep;
}

/// Splits a global CSR into per-part row ranges (columns stay global).
inline std::vector<SparseMatrix> split_rows(const SparseMatrix& a,
                                            const std::vector<std::pair<std::int64_t, std::int64_t>>& ranges) {
  std::vector<SparseMatrix> parts;
  for (const auto& [b, e] : ranges) {
    SparseMatrix m;
    m.rows = e - b;
    m.row_begin = b;
    m.row_ptr.assign(static_cast<std::size_t>(m.rows) + 1, 0);
    for (std::int64_t r = b; r < e; ++r) {
      const auto lo = a.row_ptr[static_cast<std::size_t>(r)];
      const auto hi = a.row_ptr[static_cast<std::size_t>(r) + 1];
      for (std::int64_t k = lo; k < hi; ++k) {
        m.cols.push_back(a.cols[static_cast<std::size_t>(k)]);
        m.vals.push_back(a.vals[static_cast<std::size_t>(k)]);
      }
      m.row_ptr[static_cast<std::size_t>(r - b) + 1] =
          m.row_ptr[static_cast<std::size_t>(r - b)] + (hi - lo);
    }
    parts.push_back(std::move(m));
  }
  return parts;
}

}  // namespace growfem
