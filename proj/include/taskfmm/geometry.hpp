#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace taskfmm {

//! A cell has at most 26 adjacent cells and at most 189 well-separated
//! interaction partners (children of the parent's neighbors minus adjacency).
inline constexpr int NEAR_FIELD_MAX = 26;
inline constexpr int FAR_FIELD_MAX = 189;

struct Particle {
  std::array<double, 3> position;
  double weight;
};

struct Cube {
  std::array<double, 3> center{0.5, 0.5, 0.5};
  double width = 1.0;
};

//! Tight bounding cube of the particle set, expanded by a 1e-6 relative margin.
Cube bounding_cube(std::span<const Particle> particles);

//! Interleaved 3*level bit code; within each bit triple i is most significant,
//! then j, then k. Example: (i,j,k)=(3,1,2) at level 2 -> 101110b = 46.
std::uint64_t morton_encode(std::uint32_t i, std::uint32_t j, std::uint32_t k, int level);
std::array<std::uint32_t, 3> morton_decode(std::uint64_t code, int level);

struct Cell {
  std::uint64_t code;
  std::uint32_t first_particle = 0;  // leaf level only
  std::uint32_t particle_count = 0;  // leaf level only
  std::uint32_t parent = 0;
  std::uint32_t first_child = 0;
  std::uint32_t child_count = 0;
};

struct TreeLevel {
  std::vector<Cell> cells;                   // Morton order, strictly increasing codes
  std::vector<std::uint32_t> block_offsets;  // block b = cells [offsets[b], offsets[b+1])
  // Expansion coefficients, cell-major (see GroupTree::allocate_expansions).
  // Locals are split into the part written by the cell's own M2L task and the
  // part inherited through L2L so each array has exactly one writer task.
  std::vector<double> multipole;
  std::vector<double> local_own;
  std::vector<double> local_down;

  std::size_t block_count() const { return block_offsets.empty() ? 0 : block_offsets.size() - 1; }
};

//! Particles in Morton order, struct-of-arrays. `id` is the original input
//! index. Accumulators are allocated separately so statistics-only runs on
//! large inputs skip them.
struct ParticleStore {
  std::vector<double> x, y, z, w;
  std::vector<std::uint32_t> id;
  std::vector<double> potential, fx, fy, fz;

  std::size_t size() const { return x.size(); }
};

//! Linear Morton-order octree of fixed height storing only nonempty cells,
//! with each level's cell list cut into blocks of at most group_size cells.
class GroupTree {
 public:
  static constexpr std::uint32_t npos = 0xffffffffu;

  GroupTree(std::span<const Particle> particles, int height, int group_size);
  GroupTree(std::span<const Particle> particles, int height, int group_size, const Cube& root);

  int height() const { return height_; }
  int leaf_level() const { return height_ - 1; }
  int group_size() const { return group_size_; }
  const Cube& root_cube() const { return root_; }

  double cell_width(int level) const;
  Cube cell_cube(int level, std::uint32_t cell) const;

  const TreeLevel& level(int v) const { return levels_[v]; }
  TreeLevel& level(int v) { return levels_[v]; }
  const ParticleStore& particles() const { return store_; }
  ParticleStore& particles() { return store_; }

  //! Index of the cell with this code, npos if absent. O(1) when the level is
  //! fully populated, binary search otherwise.
  std::uint32_t find_cell(int level, std::uint64_t code) const;
  std::uint32_t block_of_cell(int level, std::uint32_t cell) const;

  //! Particle range covered by a leaf block (contiguous by construction).
  std::pair<std::uint32_t, std::uint32_t> block_particles(std::uint32_t leaf_block) const;

  void allocate_expansions(std::size_t coeffs_per_cell);
  void allocate_accumulators();
  std::size_t expansion_size() const { return expansion_size_; }

  std::size_t total_cells() const;

 private:
  void build(std::span<const Particle> particles);

  int height_;
  int group_size_;
  Cube root_;
  std::vector<TreeLevel> levels_;
  ParticleStore store_;
  std::size_t expansion_size_ = 0;
};

//! Existing leaf cells at grid Chebyshev distance 1 (the cell itself excluded),
//! ascending cell index.
std::vector<std::uint32_t> near_field_list(const GroupTree& tree, int level, std::uint32_t cell);

struct FarPair {
  std::uint32_t source;          // cell index at the same level
  std::array<int, 3> transfer;   // source grid coords minus target grid coords
};

//! Existing well-separated cells at this level: children of the parent's
//! neighbors that are not adjacent to the cell. Defined for level >= 2.
std::vector<FarPair> far_field_list(const GroupTree& tree, int level, std::uint32_t cell);

}  // namespace taskfmm
