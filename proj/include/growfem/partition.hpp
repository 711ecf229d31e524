#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "growfem/octree.hpp"
#include "growfem/status.hpp"
#include "growfem/transport.hpp"

namespace growfem {

/// Partition weights per cell state. Active cells carry the FE work, inactive
/// ones only the mesh bookkeeping.
struct WeightFunction {
  std::uint64_t w_active = 1;
  std::uint64_t w_inactive = 1;
};

/// Contiguous z-order ranges, one per part. boundaries[p] is the first leaf
/// index owned by part p+1; ranges may be empty.
struct Partition {
  int num_parts = 1;
  std::vector<std::size_t> boundaries;  // size num_parts - 1, non-decreasing

  std::size_t begin_of(int p) const {
    return p == 0 ? 0 : boundaries[static_cast<std::size_t>(p) - 1];
  }
  std::size_t end_of(int p, std::size_t num_leaves) const {
    return p == num_parts - 1 ? num_leaves : boundaries[static_cast<std::size_t>(p)];
  }
  int owner_of(std::size_t leaf_index) const {
    auto it = std::upper_bound(boundaries.begin(), boundaries.end(), leaf_index);
    return static_cast<int>(it - boundaries.begin());
  }

  static Partition single(std::size_t /*num_leaves*/) { return Partition{1, {}}; }
};

inline std::vector<std::uint64_t> compute_weights(const OctreeMesh& mesh,
                                                  const StatusField& status,
                                                  const WeightFunction& w) {
  if (status.size() != mesh.size())
    throw InvalidArgument("compute_weights: status length mismatch");
  if (w.w_active < 1) throw InvalidArgument("compute_weights: w_active must be >= 1");
  std::vector<std::uint64_t> out(status.size());
  for (std::size_t i = 0; i < status.size(); ++i)
    out[i] = status[i].active ? w.w_active : w.w_inactive;
  return out;
}

/// Prefix-greedy split of the z-order sequence: the k-th boundary is placed at
/// the first leaf whose cumulative weight reaches k/P of the total, which
/// keeps every part within one maximal leaf weight of the ideal load.
inline Partition partition_by_weight(std::span<const std::uint64_t> weights, int num_parts) {
  if (num_parts < 1) throw InvalidArgument("partition_by_weight: need at least one part");
  Partition part;
  part.num_parts = num_parts;
  const std::uint64_t total = std::accumulate(weights.begin(), weights.end(), std::uint64_t{0});
  using u128 = unsigned __int128;
  u128 cum = 0;
  std::size_t i = 0;
  for (int k = 1; k < num_parts; ++k) {
    // first leaf whose cumulative weight reaches k/P of the total, exactly
    const u128 target = u128(total) * u128(k);
    while (i < weights.size() && cum * u128(num_parts) < target) cum += weights[i++];
    part.boundaries.push_back(i);
  }
  return part;
}

inline std::vector<std::uint64_t> part_loads(std::span<const std::uint64_t> weights,
                                             const Partition& part) {
  std::vector<std::uint64_t> loads(static_cast<std::size_t>(part.num_parts), 0);
  for (int p = 0; p < part.num_parts; ++p)
    for (std::size_t i = part.begin_of(p); i < part.end_of(p, weights.size()); ++i)
      loads[static_cast<std::size_t>(p)] += weights[i];
  return loads;
}

/// Serial reference of payload migration after repartitioning: returns the
/// per-part payload slices under the new ownership.
template <class T>
std::vector<std::vector<T>> redistribute(std::span<const T> payloads, const Partition& new_part) {
  std::vector<std::vector<T>> out(static_cast<std::size_t>(new_part.num_parts));
  for (int p = 0; p < new_part.num_parts; ++p) {
    const std::size_t b = new_part.begin_of(p);
    const std::size_t e = new_part.end_of(p, payloads.size());
    out[static_cast<std::size_t>(p)].assign(payloads.begin() + static_cast<std::ptrdiff_t>(b),
                                            payloads.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

/// Transport-backed payload migration: each part sends the overlap of its old
/// range with every new range to the new owner; one superstep.
template <class T>
std::vector<std::vector<T>> redistribute_via_transport(
    const std::vector<std::vector<T>>& old_payloads, const Partition& old_part,
    const Partition& new_part, std::size_t num_leaves, Transport& tr) {
  static_assert(std::is_trivially_copyable_v<T>);
  if (tr.parts() != old_part.num_parts || tr.parts() != new_part.num_parts)
    throw InvalidArgument("redistribute_via_transport: part count mismatch");

  tr.step([&](int p) {
    const std::size_t ob = old_part.begin_of(p);
    const std::size_t oe = old_part.end_of(p, num_leaves);
    if (old_payloads[static_cast<std::size_t>(p)].size() != oe - ob)
      throw InvalidArgument("redistribute_via_transport: payload length mismatch");
    for (int q = 0; q < new_part.num_parts; ++q) {
      const std::size_t nb = std::max(ob, new_part.begin_of(q));
      const std::size_t ne = std::min(oe, new_part.end_of(q, num_leaves));
      if (nb >= ne) continue;
      std::vector<std::byte> buf;
      wire::put<std::uint64_t>(buf, nb);
      wire::put<std::uint64_t>(buf, ne - nb);
      for (std::size_t i = nb; i < ne; ++i)
        wire::put<T>(buf, old_payloads[static_cast<std::size_t>(p)][i - ob]);
      tr.send(p, q, std::move(buf));
    }
  });

  std::vector<std::vector<T>> out(static_cast<std::size_t>(new_part.num_parts));
  for (int q = 0; q < new_part.num_parts; ++q) {
    const std::size_t nb = new_part.begin_of(q);
    const std::size_t ne = new_part.end_of(q, num_leaves);
    out[static_cast<std::size_t>(q)].resize(ne - nb);
    for (int p = 0; p < old_part.num_parts; ++p) {
      for (const auto& msg : tr.recv(q, p)) {
        std::size_t pos = 0;
        const std::size_t first = wire::get<std::uint64_t>(msg, pos);
        const std::size_t count = wire::get<std::uint64_t>(msg, pos);
        for (std::size_t i = 0; i < count; ++i)
          out[static_cast<std::size_t>(q)][first + i - nb] = wire::get<T>(msg, pos);
      }
    }
  }
  return out;
}

/// A ghost cell of a part: a leaf owned elsewhere that touches the part's
/// owned range.
struct GhostCell {
  std::size_t leaf_index;
  int owner;
};

inline std::vector<GhostCell> ghost_layer(const OctreeMesh& mesh, const Partition& part,
                                          int part_id) {
  if (part_id < 0 || part_id >= part.num_parts)
    throw InvalidArgument("ghost_layer: part id out of range");
  const std::size_t b = part.begin_of(part_id);
  const std::size_t e = part.end_of(part_id, mesh.size());
  std::vector<std::size_t> found;
  for (std::size_t i = b; i < e; ++i)
    for (std::size_t j : mesh.adjacent_leaves(i))
      if (j < b || j >= e) found.push_back(j);
  std::sort(found.begin(), found.end());
  found.erase(std::unique(found.begin(), found.end()), found.end());
  std::vector<GhostCell> out;
  out.reserve(found.size());
  for (std::size_t j : found) out.push_back({j, part.owner_of(j)});
  return out;
}

/// Per-part statistics of one tracked quantity for one time step.
struct StepStats {
  double mean = 0.0;
  double sigma = 0.0;  // population convention
  double cv = 0.0;     // sigma / mean, 0 when mean == 0
};

inline StepStats step_stats(std::span<const double> per_part) {
  if (per_part.empty()) throw InvalidArgument("step_stats: empty sample");
  StepStats s;
  for (double v : per_part) s.mean += v;
  s.mean /= static_cast<double>(per_part.size());
  double var = 0.0;
  for (double v : per_part) var += (v - s.mean) * (v - s.mean);
  var /= static_cast<double>(per_part.size());
  s.sigma = std::sqrt(var);
  s.cv = s.mean > 0.0 ? s.sigma / s.mean : 0.0;
  return s;
}

/// Load-imbalance report across parts and steps for the tracked quantities
/// (cells, weighted cells, active cells, DOFs).
struct ImbalanceReport {
  std::vector<std::string> quantities;
  // rows[q][step] are the per-step stats of quantity q
  std::vector<std::vector<StepStats>> rows;
  // time-averaged coefficient of variation per quantity
  std::vector<double> mean_cv_over_time;

  std::string to_csv() const {
    std::ostringstream os;
    os << "step,quantity,mean,sigma,cv\n";
    for (std::size_t q = 0; q < quantities.size(); ++q)
      for (std::size_t s = 0; s < rows[q].size(); ++s)
        os << s << ',' << quantities[q] << ',' << rows[q][s].mean << ',' << rows[q][s].sigma << ','
           << rows[q][s].cv << '\n';
    return os.str();
  }
};

/// samples[q][step][part] -> value of quantity q on that part at that step.
inline ImbalanceReport imbalance_stats(
    const std::vector<std::string>& quantities,
    const std::vector<std::vector<std::vector<double>>>& samples) {
  if (quantities.empty() || samples.size() != quantities.size())
    throw InvalidArgument("imbalance_stats: bad sample layout");
  ImbalanceReport rep;
  rep.quantities = quantities;
  rep.rows.resize(samples.size());
  rep.mean_cv_over_time.resize(samples.size(), 0.0);
  for (std::size_t q = 0; q < samples.size(); ++q) {
    if (samples[q].empty()) throw InvalidArgument("imbalance_stats: empty sample");
    double acc = 0.0;
    for (const auto& per_part : samples[q]) {
      rep.rows[q].push_back(step_stats(per_part));
      acc += rep.rows[q].back().cv;
    }
    rep.mean_cv_over_time[q] = acc / static_cast<double>(samples[q].size());
  }
  return rep;
}

}  // namespace growfem
