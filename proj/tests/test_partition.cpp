#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <random>
#include <set>

#include "growfem/partition.hpp"
#include "growfem/status_exchange.hpp"
#include "support/oracles.hpp"

using namespace growfem;

namespace {

// Exhaustive enumeration of contiguous 2-part splits, minimizing the worst
// deviation from the ideal load; cross-checks the greedy split.
std::uint64_t best_possible_deviation(std::span<const std::uint64_t> w) {
  const std::uint64_t total = std::accumulate(w.begin(), w.end(), std::uint64_t{0});
  std::uint64_t best = total;
  for (std::size_t cut = 0; cut <= w.size(); ++cut) {
    std::uint64_t a = std::accumulate(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(cut),
                                      std::uint64_t{0});
    const std::uint64_t dev = std::max(2 * a, total) - std::min(2 * a, total);
    best = std::min(best, dev);
  }
  return best;
}

}  // namespace

TEST_CASE("compute_weights applies the active/inactive weight function") {
  OctreeMesh mesh = OctreeMesh::uniform(1, 0, 3);
  StatusField status = make_status(8);

  SECTION("all active, unit weights") {
    for (auto& s : status) s.active = true;
    auto w = compute_weights(mesh, status, {1, 1});
    CHECK(w == std::vector<std::uint64_t>(8, 1));
  }

  SECTION("alternating statuses with (10,1)") {
    for (std::size_t i = 0; i < 8; i += 2) status[i].active = true;
    auto w = compute_weights(mesh, status, {10, 1});
    for (std::size_t i = 0; i < 8; ++i) CHECK(w[i] == (i % 2 == 0 ? 10u : 1u));
  }

  SECTION("(1,0) zeroes the inactive cells") {
    status[3].active = true;
    auto w = compute_weights(mesh, status, {1, 0});
    for (std::size_t i = 0; i < 8; ++i) CHECK(w[i] == (i == 3 ? 1u : 0u));
  }
}

TEST_CASE("partition_by_weight splits the z-order curve by cumulative weight") {
  SECTION("uniform weights split evenly") {
    std::vector<std::uint64_t> w{1, 1, 1, 1};
    Partition p = partition_by_weight(w, 2);
    CHECK(p.boundaries == std::vector<std::size_t>{2});
    CHECK(part_loads(w, p) == std::vector<std::uint64_t>{2, 2});
  }

  SECTION("alternating heavy/light splits after the second leaf") {
    std::vector<std::uint64_t> w{10, 1, 10, 1};
    Partition p = partition_by_weight(w, 2);
    CHECK(p.boundaries == std::vector<std::size_t>{2});
    CHECK(part_loads(w, p) == std::vector<std::uint64_t>{11, 11});
  }

  SECTION("zero-weight tail goes to the trailing part") {
    std::vector<std::uint64_t> w{5, 0, 0, 0};
    Partition p = partition_by_weight(w, 2);
    CHECK(part_loads(w, p) == std::vector<std::uint64_t>{5, 0});
  }

  SECTION("invalid part count") {
    std::vector<std::uint64_t> w{1};
    CHECK_THROWS_AS(partition_by_weight(w, 0), InvalidArgument);
  }

  SECTION("balance bound: every part within one max weight of ideal") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng() % 300;
      std::vector<std::uint64_t> w(n);
      std::uint64_t wmax = 0;
      for (auto& v : w) {
        v = rng() % 20;
        wmax = std::max(wmax, v);
      }
      const int parts = 1 + static_cast<int>(rng() % 8);
      Partition p = partition_by_weight(w, parts);
      const double total =
          static_cast<double>(std::accumulate(w.begin(), w.end(), std::uint64_t{0}));
      auto loads = part_loads(w, p);
      REQUIRE(loads.size() == static_cast<std::size_t>(parts));
      std::uint64_t sum = 0;
      const double ideal = total / parts;
      for (auto l : loads) {
        REQUIRE(std::abs(static_cast<double>(l) - ideal) <= static_cast<double>(wmax) + 1e-9);
        sum += l;
      }
      REQUIRE(sum == static_cast<std::uint64_t>(total));
      REQUIRE(partition_by_weight(w, parts).boundaries == p.boundaries);  // determinism
    }
  }

  SECTION("2-part greedy split tracks the exhaustive optimum") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::uint64_t> w(1 + rng() % 40);
      std::uint64_t wmax = 0;
      for (auto& v : w) {
        v = rng() % 30;
        wmax = std::max(wmax, v);
      }
      Partition p = partition_by_weight(w, 2);
      auto loads = part_loads(w, p);
      const std::uint64_t dev = loads[0] > loads[1] ? loads[0] - loads[1] : loads[1] - loads[0];
      REQUIRE(dev <= best_possible_deviation(w) + 2 * wmax);
    }
  }
}

TEST_CASE("redistribute moves payloads to their new owners losslessly") {
  SECTION("identical partitions change nothing") {
    std::vector<int> payload{1, 2, 3, 4};
    Partition p{2, {2}};
    auto out = redistribute<int>(payload, p);
    CHECK(out[0] == std::vector<int>{1, 2});
    CHECK(out[1] == std::vector<int>{3, 4});
  }

  SECTION("one part to two parts hands out the contiguous ranges") {
    std::vector<int> payload{7, 8, 9};
    auto out = redistribute<int>(payload, Partition{2, {1}});
    CHECK(out[0] == std::vector<int>{7});
    CHECK(out[1] == std::vector<int>{8, 9});
  }

  SECTION("transport-backed migration equals the serial gather/scatter") {
    std::mt19937_64 rng(5);
    for (const char* kind : {"serial", "threads"}) {
      for (int trial = 0; trial < 15; ++trial) {
        const std::size_t n = 50 + rng() % 10000;
        const int parts = 4;
        std::vector<double> payload(n);
        for (auto& v : payload) v = static_cast<double>(rng() % 1000);

        auto random_partition = [&] {
          Partition p;
          p.num_parts = parts;
          std::vector<std::size_t> cuts;
          for (int i = 0; i < parts - 1; ++i) cuts.push_back(rng() % (n + 1));
          std::sort(cuts.begin(), cuts.end());
          p.boundaries = cuts;
          return p;
        };
        Partition oldp = random_partition();
        Partition newp = random_partition();

        auto serial = redistribute<double>(payload, newp);
        auto old_slices = redistribute<double>(payload, oldp);
        auto tr = make_transport(kind, parts);
        auto moved = redistribute_via_transport<double>(old_slices, oldp, newp, n, *tr);
        REQUIRE(moved == serial);
      }
    }
  }

  SECTION("payload multiset is preserved") {
    std::vector<int> payload{9, 9, 3, 7, 1};
    Partition newp{3, {1, 4}};
    auto out = redistribute<int>(payload, newp);
    std::vector<int> flat;
    for (const auto& part : out) flat.insert(flat.end(), part.begin(), part.end());
    CHECK(flat == payload);
  }

  SECTION("mismatched lengths are an error") {
    std::vector<std::vector<int>> slices{{1, 2, 3}};  // claims 3, range says 2
    auto tr = make_transport("serial", 1);
    CHECK_THROWS_AS(
        redistribute_via_transport<int>(slices, Partition::single(2), Partition::single(2), 2, *tr),
        InvalidArgument);
  }
}

TEST_CASE("ghost_layer finds exactly the off-part neighbors") {
  SECTION("single part has no ghosts") {
    OctreeMesh mesh = OctreeMesh::uniform(2, 0, 4);
    CHECK(ghost_layer(mesh, Partition::single(mesh.size()), 0).empty());
  }

  SECTION("uniform 64-leaf mesh split in two matches the all-pairs oracle") {
    OctreeMesh mesh = OctreeMesh::uniform(2, 0, 4);
    std::vector<std::uint64_t> w(mesh.size(), 1);
    Partition p = partition_by_weight(w, 2);
    for (int part = 0; part < 2; ++part) {
      auto ghosts = ghost_layer(mesh, p, part);
      const std::size_t b = p.begin_of(part), e = p.end_of(part, mesh.size());
      std::set<std::size_t> want;
      for (std::size_t i = b; i < e; ++i)
        for (std::size_t j : oracle::brute_force_adjacent(mesh, i))
          if (j < b || j >= e) want.insert(j);
      std::set<std::size_t> got;
      for (const auto& g : ghosts) {
        got.insert(g.leaf_index);
        CHECK(g.owner == p.owner_of(g.leaf_index));
        CHECK(g.owner != part);
      }
      REQUIRE(got == want);
    }
  }

  SECTION("empty part range yields an empty ghost set") {
    OctreeMesh mesh = OctreeMesh::uniform(1, 0, 3);
    Partition p{3, {8, 8}};  // parts 1 and 2 own nothing
    CHECK(ghost_layer(mesh, p, 1).empty());
    CHECK(ghost_layer(mesh, p, 2).empty());
  }

  SECTION("ghost relation is consistent across the cut") {
    OctreeMesh mesh = OctreeMesh::uniform(2, 0, 4);
    std::vector<std::uint64_t> w(mesh.size(), 1);
    Partition p = partition_by_weight(w, 4);
    for (int a = 0; a < 4; ++a) {
      for (const auto& g : ghost_layer(mesh, p, a)) {
        // some leaf of part a must be a ghost of g's owner
        bool found = false;
        for (const auto& h : ghost_layer(mesh, p, g.owner))
          if (h.owner == a) found = true;
        REQUIRE(found);
      }
    }
  }
}

TEST_CASE("exchange_ghost_status refreshes ghosts in one round") {
  OctreeMesh mesh = OctreeMesh::uniform(2, 0, 4);
  std::vector<std::uint64_t> w(mesh.size(), 1);
  const int parts = 3;
  Partition p = partition_by_weight(w, parts);

  StatusField global = make_status(mesh.size());
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    global[i].active = (i * 7 % 3) == 0;
    global[i].tag = (i % 2) ? InactiveTag::powder : InactiveTag::gas;
  }

  std::vector<std::vector<CellStatus>> local(parts);
  std::vector<std::vector<GhostCell>> ghosts(parts);
  for (int q = 0; q < parts; ++q) {
    for (std::size_t i = p.begin_of(q); i < p.end_of(q, mesh.size()); ++i)
      local[static_cast<std::size_t>(q)].push_back(global[i]);
    ghosts[static_cast<std::size_t>(q)] = ghost_layer(mesh, p, q);
  }

  for (const char* kind : {"serial", "threads"}) {
    auto tr = make_transport(kind, parts);
    auto ghost_values = exchange_ghost_status(local, ghosts, p, mesh.size(), *tr);
    CHECK(tr->supersteps() == 1);
    for (int q = 0; q < parts; ++q)
      for (std::size_t g = 0; g < ghosts[static_cast<std::size_t>(q)].size(); ++g)
        REQUIRE(ghost_values[static_cast<std::size_t>(q)][g] ==
                global[ghosts[static_cast<std::size_t>(q)][g].leaf_index]);
  }

  SECTION("single part is a no-op") {
    auto tr = make_transport("serial", 1);
    std::vector<std::vector<CellStatus>> one{global};
    std::vector<std::vector<GhostCell>> none{{}};
    auto out = exchange_ghost_status(one, none, Partition::single(mesh.size()), mesh.size(), *tr);
    CHECK(out[0].empty());
  }
}

TEST_CASE("imbalance statistics use the population convention") {
  SECTION("constant samples have zero coefficient of variation") {
    auto rep = imbalance_stats({"cells"}, {{{4, 4, 4, 4}}});
    CHECK(rep.rows[0][0].cv == 0.0);
  }

  SECTION("samples {1,3}: mean 2, sigma 1, cv 0.5") {
    auto rep = imbalance_stats({"dofs"}, {{{1, 3}}});
    CHECK(rep.rows[0][0].mean == Catch::Approx(2.0));
    CHECK(rep.rows[0][0].sigma == Catch::Approx(1.0));
    CHECK(rep.rows[0][0].cv == Catch::Approx(0.5));
  }

  SECTION("weighted loads from partition_by_weight balance to near-zero cv") {
    std::mt19937_64 rng(11);
    std::vector<std::uint64_t> w(4000);
    for (auto& v : w) v = (rng() % 2) ? 10 : 1;
    Partition p = partition_by_weight(w, 8);
    auto loads = part_loads(w, p);
    std::vector<double> sample(loads.begin(), loads.end());
    CHECK(step_stats(sample).cv < 0.005);
  }

  SECTION("empty input is an error") {
    CHECK_THROWS_AS(imbalance_stats({"cells"}, {{}}), InvalidArgument);
  }

  SECTION("time average of per-step cv") {
    auto rep = imbalance_stats({"x"}, {{{1, 3}, {2, 2}}});
    CHECK(rep.mean_cv_over_time[0] == Catch::Approx(0.25));
  }

  SECTION("csv serialization has the documented schema") {
    auto rep = imbalance_stats({"cells"}, {{{1, 1}}});
    const std::string csv = rep.to_csv();
    CHECK(csv.rfind("step,quantity,mean,sigma,cv\n", 0) == 0);
    CHECK(csv.find("0,cells,1,0,0") != std::string::npos);
  }
}
