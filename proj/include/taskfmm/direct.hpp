#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "taskfmm/geometry.hpp"

namespace taskfmm {

//! P(x,y) = 1/|x-y| and F(x,y) = (x-y)/|x-y|^3, so F = -grad_x P.
//! Requires x != y; coincident distinct particles are rejected at tree build.
double laplace_potential(const std::array<double, 3>& x, const std::array<double, 3>& y);
std::array<double, 3> laplace_force(const std::array<double, 3>& x, const std::array<double, 3>& y);

//! Near-field structure of the leaf level: per-cell adjacency plus the
//! block-pair ownership used by mutual P2P. The task of block b owns every
//! unordered block pair (b, b') with b' >= b; reciprocal contributions reach
//! b' through its buffer, and b's own contributions go through b's own buffer
//! slot so P2P tasks never touch live accumulators.
struct NearFieldPlan {
  std::vector<std::uint32_t> near_offsets;  // per leaf cell, size cells+1
  std::vector<std::uint32_t> near_cells;    // ascending per cell
  std::vector<std::vector<std::uint32_t>> partners_above;      // per block: b' > b, ascending
  std::vector<std::vector<std::uint32_t>> contributors_below;  // per block: b'' < b, ascending
  std::vector<std::uint64_t> task_interactions;  // directional count computed by block b's task
  std::uint64_t total_directional = 0;

  std::span<const std::uint32_t> near_of(std::uint32_t cell) const {
    return {near_cells.data() + near_offsets[cell], near_cells.data() + near_offsets[cell + 1]};
  }
};

NearFieldPlan build_near_field_plan(const GroupTree& tree);

//! Per-block scratch accumulators for P2P contributions. Block b has one slot
//! per contributing task (contributors_below plus b itself), each slot laid out
//! as [pot | fx | fy | fz], one entry per particle of b. Every slot has exactly
//! one writer task; the reduce drains slots in ascending contributor order.
class P2PBuffers {
 public:
  P2PBuffers() = default;
  P2PBuffers(const GroupTree& tree, const NearFieldPlan& plan);

  std::span<double> slot(std::uint32_t block, std::uint32_t contributor);
  std::span<const std::uint32_t> contributors(std::uint32_t block) const;
  void reset();

 private:
  struct BlockBuffer {
    std::vector<std::uint32_t> contributors;  // ascending, includes the block itself
    std::vector<double> data;                 // contributors * 4 * particle_count
    std::uint32_t particle_count = 0;
  };
  std::vector<BlockBuffer> blocks_;
};

//! Computes the near-field interactions owned by `block`. mutual: evaluates
//! each unordered pair once, writing both sides into buffer slots. non-mutual:
//! one-sided evaluation of everything incoming to `block` (any source block),
//! added straight to live accumulators; no buffers, no reduce needed.
void p2p_block(GroupTree& tree, const NearFieldPlan& plan, std::uint32_t block, bool mutual,
               P2PBuffers& buffers);

//! Drains the block's buffer slots into live accumulators, ascending
//! contributor order, making the result independent of execution schedule.
void p2p_reduce(GroupTree& tree, std::uint32_t block, P2PBuffers& buffers);

//! O(N * targets) reference summation over the original input array.
struct OracleResult {
  std::vector<double> potential, fx, fy, fz;  // one entry per requested target
};
OracleResult direct_oracle(std::span<const Particle> particles,
                           std::span<const std::uint32_t> targets);

}  // namespace taskfmm
