#pragma once

#include <vector>

#include "growfem/partition.hpp"
#include "growfem/status.hpp"
#include "growfem/transport.hpp"

namespace growfem {

/// Refreshes ghost statuses in exactly one nearest-neighbour exchange round.
///
/// local[p] holds the statuses of part p's owned range; ghosts[p] the ghost
/// descriptors from ghost_layer(). Returns per part the ghost statuses in the
/// same order as the descriptors.
inline std::vector<std::vector<CellStatus>> exchange_ghost_status(
    const std::vector<std::vector<CellStatus>>& local,
    const std::vector<std::vector<GhostCell>>& ghosts, const Partition& part,
    std::size_t num_leaves, Transport& tr) {
  if (tr.parts() != part.num_parts)
    throw InvalidArgument("exchange_ghost_status: part count mismatch");

  // Owners learn who needs which of their leaves from the (symmetric) ghost
  // descriptors of the requesters; everything is derivable locally, so a
  // single send round suffices.
  tr.step([&](int p) {
    const std::size_t b = part.begin_of(p);
    const std::size_t e = part.end_of(p, num_leaves);
    if (local[static_cast<std::size_t>(p)].size() != e - b)
      throw InvalidArgument("exchange_ghost_status: local status length mismatch");
    for (int q = 0; q < part.num_parts; ++q) {
      if (q == p) continue;
      std::vector<std::byte> buf;
      for (const GhostCell& g : ghosts[static_cast<std::size_t>(q)]) {
        if (g.owner != p) continue;
        wire::put<std::uint64_t>(buf, g.leaf_index);
        wire::put<CellStatus>(buf, local[static_cast<std::size_t>(p)][g.leaf_index - b]);
      }
      if (!buf.empty()) tr.send(p, q, std::move(buf));
    }
  });

  std::vector<std::vector<CellStatus>> out(static_cast<std::size_t>(part.num_parts));
  for (int q = 0; q < part.num_parts; ++q) {
    const auto& gl = ghosts[static_cast<std::size_t>(q)];
    out[static_cast<std::size_t>(q)].resize(gl.size());
    for (int p = 0; p < part.num_parts; ++p) {
      for (const auto& msg : tr.recv(q, p)) {
        std::size_t pos = 0;
        while (pos < msg.size()) {
          const std::size_t leaf = wire::get<std::uint64_t>(msg, pos);
          const CellStatus st = wire::get<CellStatus>(msg, pos);
          auto it = std::lower_bound(gl.begin(), gl.end(), leaf,
                                     [](const GhostCell& g, std::size_t v) {
                                       return g.leaf_index < v;
                                     });
          if (it == gl.end() || it->leaf_index != leaf)
            throw Error("exchange_ghost_status: unexpected ghost leaf");
          out[static_cast<std::size_t>(q)][static_cast<std::size_t>(it - gl.begin())] = st;
        }
      }
    }
  }
  return out;
}

}  // namespace growfem
