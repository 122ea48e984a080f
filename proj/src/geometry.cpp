#include "taskfmm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace taskfmm {

namespace {

constexpr int MIN_HEIGHT = 3;
constexpr int MAX_HEIGHT = 21;  // 3 bits per level fit a 64-bit code

}  // namespace

Cube bounding_cube(std::span<const Particle> particles) {
  if (particles.empty()) throw std::invalid_argument("bounding_cube: empty particle set");
  std::array<double, 3> lo = particles[0].position;
  std::array<double, 3> hi = particles[0].position;
  for (const Particle& p : particles) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p.position[a]);
      hi[a] = std::max(hi[a], p.position[a]);
    }
  }
  double extent = 0;
  Cube cube;
  for (int a = 0; a < 3; ++a) {
    cube.center[a] = 0.5 * (lo[a] + hi[a]);
    extent = std::max(extent, hi[a] - lo[a]);
  }
  cube.width = extent > 0 ? extent * (1.0 + 1e-6) : 1.0;
  return cube;
}

std::uint64_t morton_encode(std::uint32_t i, std::uint32_t j, std::uint32_t k, int level) {
  std::uint64_t code = 0;
  for (int b = 0; b < level; ++b) {
    const std::uint64_t bit = std::uint64_t{1} << b;
    code |= ((i & bit) >> b) << (3 * b + 2);
    code |= ((j & bit) >> b) << (3 * b + 1);
    code |= ((k & bit) >> b) << (3 * b);
  }
  return code;
}

std::array<std::uint32_t, 3> morton_decode(std::uint64_t code, int level) {
  std::array<std::uint32_t, 3> ijk{0, 0, 0};
  for (int b = 0; b < level; ++b) {
    ijk[0] |= static_cast<std::uint32_t>((code >> (3 * b + 2)) & 1) << b;
    ijk[1] |= static_cast<std::uint32_t>((code >> (3 * b + 1)) & 1) << b;
    ijk[2] |= static_cast<std::uint32_t>((code >> (3 * b)) & 1) << b;
  }
  return ijk;
}

GroupTree::GroupTree(std::span<const Particle> particles, int height, int group_size)
    : GroupTree(particles, height, group_size, bounding_cube(particles)) {}

GroupTree::GroupTree(std::span<const Particle> particles, int height, int group_size,
                     const Cube& root)
    : height_(height), group_size_(group_size), root_(root) {
  if (height < MIN_HEIGHT || height > MAX_HEIGHT)
    throw std::invalid_argument("GroupTree: height must be in [3, 21]");
  if (group_size < 1) throw std::invalid_argument("GroupTree: group size must be positive");
  if (particles.empty()) throw std::invalid_argument("GroupTree: empty particle set");
  if (!(root.width > 0)) throw std::invalid_argument("GroupTree: root cube width must be positive");
  build(particles);
}

void GroupTree::build(std::span<const Particle> particles) {
  const int leaf = leaf_level();
  const std::uint32_t grid = std::uint32_t{1} << leaf;
  const double cw = root_.width / static_cast<double>(grid);
  std::array<double, 3> lo;
  for (int a = 0; a < 3; ++a) lo[a] = root_.center[a] - 0.5 * root_.width;

  const std::size_t n = particles.size();
  std::vector<std::pair<std::uint64_t, std::uint32_t>> order(n);
  for (std::size_t p = 0; p < n; ++p) {
    std::array<std::uint32_t, 3> ijk;
    for (int a = 0; a < 3; ++a) {
      const double c = particles[p].position[a];
      if (c < lo[a] || c > lo[a] + root_.width)
        throw std::domain_error("GroupTree: particle outside the root cube");
      double u = std::floor((c - lo[a]) / cw);
      if (u < 0) u = 0;
      if (u >= grid) u = grid - 1;
      ijk[a] = static_cast<std::uint32_t>(u);
    }
    order[p] = {morton_encode(ijk[0], ijk[1], ijk[2], leaf), static_cast<std::uint32_t>(p)};
  }
  std::sort(order.begin(), order.end());

  store_.x.resize(n);
  store_.y.resize(n);
  store_.z.resize(n);
  store_.w.resize(n);
  store_.id.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const Particle& p = particles[order[s].second];
    store_.x[s] = p.position[0];
    store_.y[s] = p.position[1];
    store_.z[s] = p.position[2];
    store_.w[s] = p.weight;
    store_.id[s] = order[s].second;
  }

  levels_.resize(height_);
  TreeLevel& leaves = levels_[leaf];
  for (std::size_t s = 0; s < n;) {
    std::size_t e = s;
    while (e < n && order[e].first == order[s].first) ++e;
    Cell cell;
    cell.code = order[s].first;
    cell.first_particle = static_cast<std::uint32_t>(s);
    cell.particle_count = static_cast<std::uint32_t>(e - s);
    leaves.cells.push_back(cell);
    s = e;
  }

  // Distinct particles sharing an exact position break the pair kernels; they
  // can only be siblings inside one leaf, so check per cell.
  {
    std::vector<std::array<double, 3>> pos;
    for (const Cell& cell : leaves.cells) {
      pos.clear();
      for (std::uint32_t s = cell.first_particle; s < cell.first_particle + cell.particle_count; ++s)
        pos.push_back({store_.x[s], store_.y[s], store_.z[s]});
      std::sort(pos.begin(), pos.end());
      for (std::size_t s = 1; s < pos.size(); ++s)
        if (pos[s] == pos[s - 1]) throw std::domain_error("GroupTree: coincident particles");
    }
  }

  for (int v = leaf - 1; v >= 0; --v) {
    TreeLevel& parents = levels_[v];
    TreeLevel& children = levels_[v + 1];
    for (std::uint32_t c = 0; c < children.cells.size();) {
      const std::uint64_t pcode = children.cells[c].code >> 3;
      Cell cell;
      cell.code = pcode;
      cell.first_child = c;
      while (c < children.cells.size() && (children.cells[c].code >> 3) == pcode) {
        children.cells[c].parent = static_cast<std::uint32_t>(parents.cells.size());
        ++c;
      }
      cell.child_count = c - cell.first_child;
      parents.cells.push_back(cell);
    }
  }

  for (int v = 0; v < height_; ++v) {
    TreeLevel& lv = levels_[v];
    const std::uint32_t cells = static_cast<std::uint32_t>(lv.cells.size());
    for (std::uint32_t b = 0; b < cells; b += group_size_) lv.block_offsets.push_back(b);
    lv.block_offsets.push_back(cells);
  }
}

double GroupTree::cell_width(int level) const {
  return root_.width / static_cast<double>(std::uint64_t{1} << level);
}

Cube GroupTree::cell_cube(int level, std::uint32_t cell) const {
  const double cw = cell_width(level);
  const auto ijk = morton_decode(levels_[level].cells[cell].code, level);
  Cube cube;
  for (int a = 0; a < 3; ++a)
    cube.center[a] = root_.center[a] - 0.5 * root_.width + (ijk[a] + 0.5) * cw;
  cube.width = cw;
  return cube;
}

std::uint32_t GroupTree::find_cell(int level, std::uint64_t code) const {
  const TreeLevel& lv = levels_[level];
  if (code >= (std::uint64_t{1} << (3 * level))) return npos;
  if (lv.cells.size() == (std::uint64_t{1} << (3 * level)))
    return static_cast<std::uint32_t>(code);
  auto it = std::lower_bound(lv.cells.begin(), lv.cells.end(), code,
                             [](const Cell& c, std::uint64_t v) { return c.code < v; });
  if (it == lv.cells.end() || it->code != code) return npos;
  return static_cast<std::uint32_t>(it - lv.cells.begin());
}

std::uint32_t GroupTree::block_of_cell([[maybe_unused]] int level, std::uint32_t cell) const {
  return cell / static_cast<std::uint32_t>(group_size_);
}

std::pair<std::uint32_t, std::uint32_t> GroupTree::block_particles(std::uint32_t leaf_block) const {
  const TreeLevel& lv = levels_[leaf_level()];
  const Cell& first = lv.cells[lv.block_offsets[leaf_block]];
  const Cell& last = lv.cells[lv.block_offsets[leaf_block + 1] - 1];
  return {first.first_particle, last.first_particle + last.particle_count};
}

void GroupTree::allocate_expansions(std::size_t coeffs_per_cell) {
  expansion_size_ = coeffs_per_cell;
  for (TreeLevel& lv : levels_) {
    lv.multipole.assign(lv.cells.size() * coeffs_per_cell, 0.0);
    lv.local_own.assign(lv.cells.size() * coeffs_per_cell, 0.0);
    lv.local_down.assign(lv.cells.size() * coeffs_per_cell, 0.0);
  }
}

void GroupTree::allocate_accumulators() {
  const std::size_t n = store_.size();
  store_.potential.assign(n, 0.0);
  store_.fx.assign(n, 0.0);
  store_.fy.assign(n, 0.0);
  store_.fz.assign(n, 0.0);
}

std::size_t GroupTree::total_cells() const {
  std::size_t total = 0;
  for (const TreeLevel& lv : levels_) total += lv.cells.size();
  return total;
}

std::vector<std::uint32_t> near_field_list(const GroupTree& tree, int level, std::uint32_t cell) {
  const auto ijk = morton_decode(tree.level(level).cells[cell].code, level);
  const std::int64_t grid = std::int64_t{1} << level;
  std::vector<std::uint32_t> out;
  out.reserve(NEAR_FIELD_MAX);
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj)
      for (int dk = -1; dk <= 1; ++dk) {
        if (di == 0 && dj == 0 && dk == 0) continue;
        const std::int64_t i = std::int64_t{ijk[0]} + di;
        const std::int64_t j = std::int64_t{ijk[1]} + dj;
        const std::int64_t k = std::int64_t{ijk[2]} + dk;
        if (i < 0 || j < 0 || k < 0 || i >= grid || j >= grid || k >= grid) continue;
        const std::uint32_t found = tree.find_cell(
            level, morton_encode(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                 static_cast<std::uint32_t>(k), level));
        if (found != GroupTree::npos) out.push_back(found);
      }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<FarPair> far_field_list(const GroupTree& tree, int level, std::uint32_t cell) {
  if (level < 2) throw std::invalid_argument("far_field_list: defined for level >= 2");
  const TreeLevel& lv = tree.level(level);
  const TreeLevel& parents = tree.level(level - 1);
  const auto ijk = morton_decode(lv.cells[cell].code, level);
  const std::uint32_t pidx = lv.cells[cell].parent;
  const auto pijk = morton_decode(parents.cells[pidx].code, level - 1);
  const std::int64_t pgrid = std::int64_t{1} << (level - 1);

  std::vector<FarPair> out;
  out.reserve(FAR_FIELD_MAX);
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj)
      for (int dk = -1; dk <= 1; ++dk) {
        const std::int64_t i = std::int64_t{pijk[0]} + di;
        const std::int64_t j = std::int64_t{pijk[1]} + dj;
        const std::int64_t k = std::int64_t{pijk[2]} + dk;
        if (i < 0 || j < 0 || k < 0 || i >= pgrid || j >= pgrid || k >= pgrid) continue;
        const std::uint32_t np = tree.find_cell(
            level - 1, morton_encode(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                     static_cast<std::uint32_t>(k), level - 1));
        if (np == GroupTree::npos) continue;
        const Cell& pc = parents.cells[np];
        for (std::uint32_t c = pc.first_child; c < pc.first_child + pc.child_count; ++c) {
          const auto cijk = morton_decode(lv.cells[c].code, level);
          const int ti = static_cast<int>(cijk[0]) - static_cast<int>(ijk[0]);
          const int tj = static_cast<int>(cijk[1]) - static_cast<int>(ijk[1]);
          const int tk = static_cast<int>(cijk[2]) - static_cast<int>(ijk[2]);
          const int d = std::max({std::abs(ti), std::abs(tj), std::abs(tk)});
          if (d <= 1) continue;  // the cell itself and its adjacency
          out.push_back({c, {ti, tj, tk}});
        }
      }
  std::sort(out.begin(), out.end(),
            [](const FarPair& a, const FarPair& b) { return a.source < b.source; });
  return out;
}

}  // namespace taskfmm
