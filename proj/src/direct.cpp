#include "taskfmm/direct.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace taskfmm {

double laplace_potential(const std::array<double, 3>& x, const std::array<double, 3>& y) {
  const double dx = x[0] - y[0], dy = x[1] - y[1], dz = x[2] - y[2];
  return 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::array<double, 3> laplace_force(const std::array<double, 3>& x,
                                    const std::array<double, 3>& y) {
  const double dx = x[0] - y[0], dy = x[1] - y[1], dz = x[2] - y[2];
  const double inv = 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz);
  const double inv3 = inv * inv * inv;
  return {dx * inv3, dy * inv3, dz * inv3};
}

NearFieldPlan build_near_field_plan(const GroupTree& tree) {
  const int leaf = tree.leaf_level();
  const TreeLevel& lv = tree.level(leaf);
  const std::size_t ncells = lv.cells.size();
  const std::size_t nblocks = lv.block_count();

  NearFieldPlan plan;
  plan.near_offsets.resize(ncells + 1, 0);
  for (std::size_t c = 0; c < ncells; ++c) {
    const auto near = near_field_list(tree, leaf, static_cast<std::uint32_t>(c));
    plan.near_offsets[c + 1] = plan.near_offsets[c] + static_cast<std::uint32_t>(near.size());
    plan.near_cells.insert(plan.near_cells.end(), near.begin(), near.end());
  }

  plan.partners_above.resize(nblocks);
  plan.contributors_below.resize(nblocks);
  plan.task_interactions.assign(nblocks, 0);
  for (std::uint32_t b = 0; b < nblocks; ++b) {
    std::vector<std::uint32_t> partners;
    std::uint64_t owned = 0;
    for (std::uint32_t c = lv.block_offsets[b]; c < lv.block_offsets[b + 1]; ++c) {
      const std::uint64_t nc = lv.cells[c].particle_count;
      owned += nc * (nc - 1);
      for (std::uint32_t other : plan.near_of(c)) {
        const std::uint32_t ob = tree.block_of_cell(leaf, other);
        if (ob < b || (ob == b && other < c)) continue;  // owned by the other side
        if (ob != b) partners.push_back(ob);
        owned += 2 * nc * lv.cells[other].particle_count;
      }
    }
    std::sort(partners.begin(), partners.end());
    partners.erase(std::unique(partners.begin(), partners.end()), partners.end());
    plan.partners_above[b] = std::move(partners);
    plan.task_interactions[b] = owned;
    plan.total_directional += owned;
  }
  for (std::uint32_t b = 0; b < nblocks; ++b)
    for (std::uint32_t p : plan.partners_above[b]) plan.contributors_below[p].push_back(b);
  return plan;
}

P2PBuffers::P2PBuffers(const GroupTree& tree, const NearFieldPlan& plan) {
  const std::size_t nblocks = tree.level(tree.leaf_level()).block_count();
  blocks_.resize(nblocks);
  for (std::uint32_t b = 0; b < nblocks; ++b) {
    BlockBuffer& buf = blocks_[b];
    buf.contributors = plan.contributors_below[b];
    buf.contributors.push_back(b);
    const auto [p0, p1] = tree.block_particles(b);
    buf.particle_count = p1 - p0;
    buf.data.assign(buf.contributors.size() * 4 * std::size_t{buf.particle_count}, 0.0);
  }
}

std::span<double> P2PBuffers::slot(std::uint32_t block, std::uint32_t contributor) {
  BlockBuffer& buf = blocks_[block];
  const auto it = std::lower_bound(buf.contributors.begin(), buf.contributors.end(), contributor);
  if (it == buf.contributors.end() || *it != contributor)
    throw std::out_of_range("P2PBuffers::slot: unknown contributor");
  const std::size_t idx = static_cast<std::size_t>(it - buf.contributors.begin());
  const std::size_t span_len = 4 * std::size_t{buf.particle_count};
  return {buf.data.data() + idx * span_len, span_len};
}

std::span<const std::uint32_t> P2PBuffers::contributors(std::uint32_t block) const {
  return blocks_[block].contributors;
}

void P2PBuffers::reset() {
  for (BlockBuffer& buf : blocks_) std::fill(buf.data.begin(), buf.data.end(), 0.0);
}

namespace {

struct SlotView {
  double* pot;
  double* fx;
  double* fy;
  double* fz;
  std::uint32_t base;  // global index of the block's first particle
};

SlotView slot_view(std::span<double> s, std::uint32_t base) {
  const std::size_t pc = s.size() / 4;
  return {s.data(), s.data() + pc, s.data() + 2 * pc, s.data() + 3 * pc, base};
}

}  // namespace

void p2p_block(GroupTree& tree, const NearFieldPlan& plan, std::uint32_t block, bool mutual,
               P2PBuffers& buffers) {
  const int leaf = tree.leaf_level();
  const TreeLevel& lv = tree.level(leaf);
  ParticleStore& st = tree.particles();
  const double* px = st.x.data();
  const double* py = st.y.data();
  const double* pz = st.z.data();
  const double* pw = st.w.data();

  if (!mutual) {
    double* pot = st.potential.data();
    double* fx = st.fx.data();
    double* fy = st.fy.data();
    double* fz = st.fz.data();
    for (std::uint32_t c = lv.block_offsets[block]; c < lv.block_offsets[block + 1]; ++c) {
      const Cell& cell = lv.cells[c];
      const std::uint32_t a0 = cell.first_particle, a1 = a0 + cell.particle_count;
      auto incoming = [&](std::uint32_t i, std::uint32_t j) {
        const double dx = px[i] - px[j], dy = py[i] - py[j], dz = pz[i] - pz[j];
        const double inv = 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz);
        const double s = pw[j] * inv * inv * inv;
        pot[i] += pw[j] * inv;
        fx[i] += s * dx;
        fy[i] += s * dy;
        fz[i] += s * dz;
      };
      for (std::uint32_t i = a0; i < a1; ++i)
        for (std::uint32_t j = a0; j < a1; ++j)
          if (j != i) incoming(i, j);
      for (std::uint32_t other : plan.near_of(c)) {
        const Cell& oc = lv.cells[other];
        for (std::uint32_t i = a0; i < a1; ++i)
          for (std::uint32_t j = oc.first_particle; j < oc.first_particle + oc.particle_count; ++j)
            incoming(i, j);
      }
    }
    return;
  }

  const SlotView own = slot_view(buffers.slot(block, block), tree.block_particles(block).first);
  for (std::uint32_t c = lv.block_offsets[block]; c < lv.block_offsets[block + 1]; ++c) {
    const Cell& cell = lv.cells[c];
    const std::uint32_t a0 = cell.first_particle, a1 = a0 + cell.particle_count;

    auto pair = [&](std::uint32_t i, std::uint32_t j, const SlotView& side_j) {
      const double dx = px[i] - px[j], dy = py[i] - py[j], dz = pz[i] - pz[j];
      const double inv = 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz);
      const double inv3 = inv * inv * inv;
      const std::uint32_t a = i - own.base, b = j - side_j.base;
      own.pot[a] += pw[j] * inv;
      own.fx[a] += pw[j] * inv3 * dx;
      own.fy[a] += pw[j] * inv3 * dy;
      own.fz[a] += pw[j] * inv3 * dz;
      side_j.pot[b] += pw[i] * inv;
      side_j.fx[b] -= pw[i] * inv3 * dx;
      side_j.fy[b] -= pw[i] * inv3 * dy;
      side_j.fz[b] -= pw[i] * inv3 * dz;
    };

    for (std::uint32_t i = a0; i < a1; ++i)
      for (std::uint32_t j = i + 1; j < a1; ++j) pair(i, j, own);
    for (std::uint32_t other : plan.near_of(c)) {
      const std::uint32_t ob = tree.block_of_cell(leaf, other);
      if (ob < block || (ob == block && other < c)) continue;
      const SlotView side = ob == block
                                ? own
                                : slot_view(buffers.slot(ob, block), tree.block_particles(ob).first);
      const Cell& oc = lv.cells[other];
      for (std::uint32_t i = a0; i < a1; ++i)
        for (std::uint32_t j = oc.first_particle; j < oc.first_particle + oc.particle_count; ++j)
          pair(i, j, side);
    }
  }
}

void p2p_reduce(GroupTree& tree, std::uint32_t block, P2PBuffers& buffers) {
  ParticleStore& st = tree.particles();
  const auto [p0, p1] = tree.block_particles(block);
  const std::uint32_t pc = p1 - p0;
  for (std::uint32_t contributor : buffers.contributors(block)) {
    const std::span<double> s = buffers.slot(block, contributor);
    for (std::uint32_t k = 0; k < pc; ++k) {
      st.potential[p0 + k] += s[k];
      st.fx[p0 + k] += s[pc + k];
      st.fy[p0 + k] += s[2 * pc + k];
      st.fz[p0 + k] += s[3 * pc + k];
    }
  }
}

OracleResult direct_oracle(std::span<const Particle> particles,
                           std::span<const std::uint32_t> targets) {
  OracleResult out;
  out.potential.assign(targets.size(), 0.0);
  out.fx.assign(targets.size(), 0.0);
  out.fy.assign(targets.size(), 0.0);
  out.fz.assign(targets.size(), 0.0);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const Particle& a = particles[targets[t]];
    for (std::size_t j = 0; j < particles.size(); ++j) {
      if (j == targets[t]) continue;
      const Particle& b = particles[j];
      const double dx = a.position[0] - b.position[0];
      const double dy = a.position[1] - b.position[1];
      const double dz = a.position[2] - b.position[2];
      const double inv = 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz);
      const double s = b.weight * inv * inv * inv;
      out.potential[t] += b.weight * inv;
      out.fx[t] += s * dx;
      out.fy[t] += s * dy;
      out.fz[t] += s * dz;
    }
  }
  return out;
}

}  // namespace taskfmm
