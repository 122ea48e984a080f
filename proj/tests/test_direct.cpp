#include "doctest.h"

#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <stdexcept>

#include "taskfmm/direct.hpp"

using namespace taskfmm;

namespace {

std::vector<Particle> random_particles(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u = [&] { return (rng() >> 11) * 0x1.0p-53; };
  std::vector<Particle> ps;
  for (std::size_t i = 0; i < n; ++i) ps.push_back({{u(), u(), u()}, 0.5 + u()});
  return ps;
}

}  // namespace

TEST_CASE("pair kernels") {
  CHECK(laplace_potential({0, 0, 0}, {1, 0, 0}) == 1.0);
  CHECK(laplace_potential({0, 0, 0}, {1, 1, 1}) ==
        doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-15));

  // unit-cube corner: three edge, three face-diagonal, one body-diagonal source
  double pot = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        if (i + j + k > 0)
          pot += laplace_potential({0, 0, 0},
                                   {static_cast<double>(i), static_cast<double>(j),
                                    static_cast<double>(k)});
  CHECK(pot == doctest::Approx(5.6986706127492681).epsilon(1e-15));

  const auto f = laplace_force({0, 0, 0}, {2, 0, 0});
  CHECK(f[0] == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(f[1] == 0.0);
  CHECK(f[2] == 0.0);
}

TEST_CASE("force is minus the potential gradient") {
  std::mt19937_64 rng(19);
  auto u = [&] { return (rng() >> 11) * 0x1.0p-53; };
  const double h = 1e-6;
  for (int t = 0; t < 20; ++t) {
    const std::array<double, 3> x{u(), u(), u()};
    const std::array<double, 3> y{u() + 2.0, u(), u()};
    const auto f = laplace_force(x, y);
    for (int a = 0; a < 3; ++a) {
      auto xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const double grad = (laplace_potential(xp, y) - laplace_potential(xm, y)) / (2 * h);
      CHECK(f[a] == doctest::Approx(-grad).epsilon(1e-6));
    }
  }
}

TEST_CASE("direct oracle") {
  const auto ps = random_particles(20, 101);
  std::vector<std::uint32_t> targets{0, 5, 19};
  const OracleResult r = direct_oracle(ps, targets);
  REQUIRE(r.potential.size() == 3);

  for (std::size_t t = 0; t < targets.size(); ++t) {
    double pot = 0, fx = 0, fy = 0, fz = 0;
    for (std::size_t j = 0; j < ps.size(); ++j) {
      if (j == targets[t]) continue;
      pot += ps[j].weight * laplace_potential(ps[targets[t]].position, ps[j].position);
      const auto f = laplace_force(ps[targets[t]].position, ps[j].position);
      fx += ps[j].weight * f[0];
      fy += ps[j].weight * f[1];
      fz += ps[j].weight * f[2];
    }
    CHECK(r.potential[t] == doctest::Approx(pot).epsilon(1e-14));
    CHECK(r.fx[t] == doctest::Approx(fx).epsilon(1e-14));
    CHECK(r.fy[t] == doctest::Approx(fy).epsilon(1e-14));
    CHECK(r.fz[t] == doctest::Approx(fz).epsilon(1e-14));
  }
}

TEST_CASE("closed system forces cancel") {
  const auto ps = random_particles(60, 7);
  std::vector<std::uint32_t> all(ps.size());
  std::iota(all.begin(), all.end(), 0);
  const OracleResult r = direct_oracle(ps, all);
  double sx = 0, sy = 0, sz = 0, scale = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    sx += ps[i].weight * r.fx[i];
    sy += ps[i].weight * r.fy[i];
    sz += ps[i].weight * r.fz[i];
    scale += ps[i].weight * std::sqrt(r.fx[i] * r.fx[i] + r.fy[i] * r.fy[i] + r.fz[i] * r.fz[i]);
  }
  CHECK(std::sqrt(sx * sx + sy * sy + sz * sz) / scale <= 1e-10);
}

TEST_CASE("near field plan") {
  const auto ps = random_particles(400, 23);
  GroupTree tree(ps, 4, 6);
  const NearFieldPlan plan = build_near_field_plan(tree);
  const int leaf = tree.leaf_level();
  const TreeLevel& lvl = tree.level(leaf);
  const std::size_t blocks = lvl.block_count();

  SUBCASE("adjacency matches the geometry lists") {
    for (std::uint32_t c = 0; c < lvl.cells.size(); ++c) {
      const auto expect = near_field_list(tree, leaf, c);
      const auto got = plan.near_of(c);
      REQUIRE(got.size() == expect.size());
      for (std::size_t i = 0; i < expect.size(); ++i) CHECK(got[i] == expect[i]);
    }
  }

  SUBCASE("block partner lists mirror each other") {
    REQUIRE(plan.partners_above.size() == blocks);
    REQUIRE(plan.contributors_below.size() == blocks);
    for (std::uint32_t b = 0; b < blocks; ++b) {
      CHECK(std::is_sorted(plan.partners_above[b].begin(), plan.partners_above[b].end()));
      CHECK(std::is_sorted(plan.contributors_below[b].begin(), plan.contributors_below[b].end()));
      for (std::uint32_t p : plan.partners_above[b]) {
        CHECK(p > b);
        const auto& back = plan.contributors_below[p];
        CHECK(std::find(back.begin(), back.end(), b) != back.end());
      }
      for (std::uint32_t c : plan.contributors_below[b]) {
        CHECK(c < b);
        const auto& fwd = plan.partners_above[c];
        CHECK(std::find(fwd.begin(), fwd.end(), b) != fwd.end());
      }
    }
  }

  SUBCASE("directional totals") {
    // brute force count over all particle pairs in adjacent-or-same cells
    std::uint64_t expect = 0;
    for (std::uint32_t c = 0; c < lvl.cells.size(); ++c) {
      const Cell& cell = lvl.cells[c];
      expect += static_cast<std::uint64_t>(cell.particle_count) * (cell.particle_count - 1);
      for (std::uint32_t o : plan.near_of(c))
        expect += static_cast<std::uint64_t>(cell.particle_count) * lvl.cells[o].particle_count;
    }
    CHECK(plan.total_directional == expect);
    std::uint64_t owned = 0;
    for (std::uint32_t b = 0; b < blocks; ++b) owned += plan.task_interactions[b];
    CHECK(owned == plan.total_directional);
  }
}

TEST_CASE("buffers") {
  const auto ps = random_particles(300, 41);
  GroupTree tree(ps, 4, 5);
  const NearFieldPlan plan = build_near_field_plan(tree);
  P2PBuffers buffers(tree, plan);
  const std::size_t blocks = tree.level(tree.leaf_level()).block_count();

  for (std::uint32_t b = 0; b < blocks; ++b) {
    const auto contributors = buffers.contributors(b);
    REQUIRE(!contributors.empty());
    CHECK(std::is_sorted(contributors.begin(), contributors.end()));
    CHECK(std::find(contributors.begin(), contributors.end(), b) != contributors.end());
    REQUIRE(contributors.size() == plan.contributors_below[b].size() + 1);

    const auto [first, last] = tree.block_particles(b);
    for (std::uint32_t c : contributors) {
      const auto slot = buffers.slot(b, c);
      CHECK(slot.size() == 4 * (last - first));
      for (double v : slot) CHECK(v == 0.0);
    }
  }
  CHECK_THROWS_AS(buffers.slot(0, 0xdeadbeefu), std::out_of_range);
}

TEST_CASE("mutual evaluation equals one sided evaluation") {
  const auto ps = random_particles(500, 57);
  GroupTree tree(ps, 4, 6);
  const NearFieldPlan plan = build_near_field_plan(tree);
  const std::size_t blocks = tree.level(tree.leaf_level()).block_count();
  tree.allocate_accumulators();
  ParticleStore& st = tree.particles();
  P2PBuffers buffers(tree, plan);

  // one sided straight into the accumulators
  for (std::uint32_t b = 0; b < blocks; ++b) p2p_block(tree, plan, b, false, buffers);
  const std::vector<double> pot_ref = st.potential;
  const std::vector<double> fx_ref = st.fx, fy_ref = st.fy, fz_ref = st.fz;

  std::fill(st.potential.begin(), st.potential.end(), 0.0);
  std::fill(st.fx.begin(), st.fx.end(), 0.0);
  std::fill(st.fy.begin(), st.fy.end(), 0.0);
  std::fill(st.fz.begin(), st.fz.end(), 0.0);

  // mutual through buffers, then the ordered reduce
  for (std::uint32_t b = 0; b < blocks; ++b) p2p_block(tree, plan, b, true, buffers);
  for (std::uint32_t b = 0; b < blocks; ++b) p2p_reduce(tree, b, buffers);

  double num = 0, den = 0;
  for (std::size_t i = 0; i < st.size(); ++i) {
    num += (st.potential[i] - pot_ref[i]) * (st.potential[i] - pot_ref[i]);
    den += pot_ref[i] * pot_ref[i];
    num += (st.fx[i] - fx_ref[i]) * (st.fx[i] - fx_ref[i]);
    den += fx_ref[i] * fx_ref[i];
    num += (st.fy[i] - fy_ref[i]) * (st.fy[i] - fy_ref[i]);
    den += fy_ref[i] * fy_ref[i];
    num += (st.fz[i] - fz_ref[i]) * (st.fz[i] - fz_ref[i]);
    den += fz_ref[i] * fz_ref[i];
  }
  CHECK(std::sqrt(num / den) <= 1e-14);
}

TEST_CASE("reduce is deterministic regardless of fill order") {
  const auto ps = random_particles(350, 71);
  GroupTree tree(ps, 4, 4);
  const NearFieldPlan plan = build_near_field_plan(tree);
  const std::size_t blocks = tree.level(tree.leaf_level()).block_count();
  tree.allocate_accumulators();
  ParticleStore& st = tree.particles();
  P2PBuffers buffers(tree, plan);

  auto run = [&](bool reversed) {
    std::fill(st.potential.begin(), st.potential.end(), 0.0);
    std::fill(st.fx.begin(), st.fx.end(), 0.0);
    std::fill(st.fy.begin(), st.fy.end(), 0.0);
    std::fill(st.fz.begin(), st.fz.end(), 0.0);
    buffers.reset();
    if (reversed)
      for (std::uint32_t b = blocks; b-- > 0;) p2p_block(tree, plan, b, true, buffers);
    else
      for (std::uint32_t b = 0; b < blocks; ++b) p2p_block(tree, plan, b, true, buffers);
    for (std::uint32_t b = 0; b < blocks; ++b) p2p_reduce(tree, b, buffers);
    return st.potential;
  };

  const auto forward = run(false);
  const auto backward = run(true);
  CHECK(std::memcmp(forward.data(), backward.data(), forward.size() * sizeof(double)) == 0);
}
