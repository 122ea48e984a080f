#include "taskfmm/taskflow.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <utility>

namespace taskfmm {

const char* task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::P2M: return "P2M";
    case TaskKind::M2M: return "M2M";
    case TaskKind::M2L: return "M2L";
    case TaskKind::L2L: return "L2L";
    case TaskKind::L2P: return "L2P";
    case TaskKind::P2P: return "P2P";
    case TaskKind::P2PReduce: return "P2PREDUCE";
  }
  return "?";
}

std::uint64_t TaskGraph::total_work(TaskKind kind) const {
  std::uint64_t sum = 0;
  for (const Task& t : tasks)
    if (t.kind == kind) sum += t.work;
  return sum;
}

std::size_t TaskGraph::count(TaskKind kind) const {
  std::size_t n = 0;
  for (const Task& t : tasks)
    if (t.kind == kind) ++n;
  return n;
}

void TaskGraph::dump(std::ostream& os) const {
  for (const Task& t : tasks) {
    os << "task " << t.id << ' ' << task_kind_name(t.kind) << " L" << t.level << " B" << t.block
       << " work=" << t.work << " ->";
    for (std::uint32_t s : t.successors) os << ' ' << s;
    os << '\n';
  }
}

namespace {

//! canonical class per admissible transfer-vector slot, -1 elsewhere
const std::array<int, 343>& canonical_table() {
  static const std::array<int, 343> table = [] {
    std::array<int, 343> t;
    t.fill(-1);
    for (int i = -3; i <= 3; ++i)
      for (int j = -3; j <= 3; ++j)
        for (int k = -3; k <= 3; ++k) {
          const int d = std::max({std::abs(i), std::abs(j), std::abs(k)});
          if (d < 2) continue;
          t[m2l_vector_slot({i, j, k})] = canonicalize_m2l_vector({i, j, k}).index;
        }
    return t;
  }();
  return table;
}

}  // namespace

InteractionPlan build_interaction_plan(const GroupTree& tree) {
  InteractionPlan plan;
  plan.near = build_near_field_plan(tree);
  plan.far.resize(tree.height());
  const auto& canon = canonical_table();

  for (int v = 2; v <= tree.leaf_level(); ++v) {
    const TreeLevel& lv = tree.level(v);
    const std::size_t nblocks = lv.block_count();
    LevelM2L& far = plan.far[v];

    std::vector<std::vector<M2LPairRef>> groups(nblocks * 16);
    std::vector<std::vector<std::uint32_t>> sources(nblocks);
    for (std::uint32_t c = 0; c < lv.cells.size(); ++c) {
      const std::uint32_t tb = tree.block_of_cell(v, c);
      for (const FarPair& fp : far_field_list(tree, v, c)) {
        const int slot = m2l_vector_slot(fp.transfer);
        groups[tb * 16 + canon[slot]].push_back(
            {c, fp.source, static_cast<std::uint16_t>(slot)});
        sources[tb].push_back(tree.block_of_cell(v, fp.source));
      }
    }

    far.group_offsets.assign(nblocks * 16 + 1, 0);
    for (std::size_t g = 0; g < groups.size(); ++g)
      far.group_offsets[g + 1] = far.group_offsets[g] + groups[g].size();
    far.pairs.reserve(far.group_offsets.back());
    for (auto& g : groups) far.pairs.insert(far.pairs.end(), g.begin(), g.end());

    far.source_blocks.resize(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) {
      auto& s = sources[b];
      std::sort(s.begin(), s.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
      far.source_blocks[b] = std::move(s);
    }
  }
  return plan;
}

std::uint64_t InteractionStats::m2l_level_total(int level) const {
  std::uint64_t sum = 0;
  for (std::uint64_t p : m2l_pairs[level]) sum += p;
  return sum;
}

InteractionStats count_interactions(const GroupTree& tree) {
  InteractionStats stats;
  const int leaf = tree.leaf_level();
  const TreeLevel& lv = tree.level(leaf);
  for (std::uint32_t c = 0; c < lv.cells.size(); ++c) {
    const std::uint64_t nc = lv.cells[c].particle_count;
    stats.near_directional += nc * (nc - 1);
    for (std::uint32_t other : near_field_list(tree, leaf, c))
      stats.near_directional += nc * lv.cells[other].particle_count;
  }

  stats.m2l_pairs.assign(tree.height(), {});
  const auto& canon = canonical_table();
  for (int v = 2; v <= leaf; ++v)
    for (std::uint32_t c = 0; c < tree.level(v).cells.size(); ++c)
      for (const FarPair& fp : far_field_list(tree, v, c))
        ++stats.m2l_pairs[v][canon[m2l_vector_slot(fp.transfer)]];

  stats.transfers.assign(tree.height(), 0);
  for (int v = 0; v + 1 < tree.height(); ++v)
    stats.transfers[v] = tree.level(v + 1).cells.size();
  return stats;
}

namespace {

constexpr std::uint32_t SKIP = 0xffffffffu;

}  // namespace

TaskGraph build_taskgraph(const GroupTree& tree, const InteractionPlan& plan,
                          const TaskGraphOptions& options) {
  const int leaf = tree.leaf_level();
  const TreeLevel& leaf_lv = tree.level(leaf);
  const std::size_t nb_leaf = leaf_lv.block_count();

  TaskGraph graph;
  auto make_task = [&](TaskKind kind, int level, std::uint32_t block,
                       std::uint64_t work) -> std::uint32_t {
    const std::uint32_t id = static_cast<std::uint32_t>(graph.tasks.size());
    graph.tasks.push_back(Task{id, kind, static_cast<std::int16_t>(level), block, work, 0, 0, {}});
    return id;
  };
  auto block_transfers = [&](int v, std::uint32_t block) {
    const TreeLevel& lv = tree.level(v);
    std::uint64_t n = 0;
    for (std::uint32_t c = lv.block_offsets[block]; c < lv.block_offsets[block + 1]; ++c)
      n += lv.cells[c].child_count;
    return n;
  };
  auto block_particles = [&](std::uint32_t block) {
    const auto [p0, p1] = tree.block_particles(block);
    return std::uint64_t{p1} - p0;
  };

  std::vector<std::uint32_t> p2m_id(nb_leaf), l2p_id(nb_leaf), p2p_id(nb_leaf), red_id(nb_leaf);
  std::vector<std::vector<std::uint32_t>> m2m_id(tree.height()), m2l_id(tree.height()),
      l2l_id(tree.height());

  for (std::uint32_t b = 0; b < nb_leaf; ++b)
    p2m_id[b] = make_task(TaskKind::P2M, leaf, b, block_particles(b));
  for (int v = leaf - 1; v >= 2; --v) {
    m2m_id[v].resize(tree.level(v).block_count());
    for (std::uint32_t b = 0; b < m2m_id[v].size(); ++b)
      m2m_id[v][b] = make_task(TaskKind::M2M, v, b, block_transfers(v, b));
  }
  for (int v = 2; v <= leaf; ++v) {
    m2l_id[v].resize(tree.level(v).block_count());
    for (std::uint32_t b = 0; b < m2l_id[v].size(); ++b) {
      const std::uint64_t pairs = plan.far[v].block_pair_count(b);
      m2l_id[v][b] = options.elide_empty_m2l && pairs == 0
                         ? SKIP
                         : make_task(TaskKind::M2L, v, b, pairs);
    }
  }
  for (int v = 2; v < leaf; ++v) {
    l2l_id[v].resize(tree.level(v).block_count());
    for (std::uint32_t b = 0; b < l2l_id[v].size(); ++b)
      l2l_id[v][b] = make_task(TaskKind::L2L, v, b, block_transfers(v, b));
  }
  for (std::uint32_t b = 0; b < nb_leaf; ++b)
    l2p_id[b] = make_task(TaskKind::L2P, leaf, b, block_particles(b));
  for (std::uint32_t b = 0; b < nb_leaf; ++b)
    p2p_id[b] = make_task(TaskKind::P2P, leaf, b, plan.near.task_interactions[b]);
  for (std::uint32_t b = 0; b < nb_leaf; ++b)
    red_id[b] = make_task(TaskKind::P2PReduce, leaf, b, block_particles(b));

  // a level's multipole producer and local consumer, per block
  auto producer = [&](int v, std::uint32_t b) { return v == leaf ? p2m_id[b] : m2m_id[v][b]; };
  auto local_consumer = [&](int v, std::uint32_t b) {
    return v == leaf ? l2p_id[b] : l2l_id[v][b];
  };

  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  auto add_edge = [&](std::uint32_t from, std::uint32_t to) { edges.emplace_back(from, to); };
  // an edge into an elided M2L task falls through to the task that would have
  // consumed its output
  auto add_edge_to_m2l = [&](std::uint32_t from, int v, std::uint32_t b) {
    const std::uint32_t id = m2l_id[v][b];
    add_edge(from, id == SKIP ? local_consumer(v, b) : id);
  };

  // upward sweep: child-level producers feed parent-block M2M
  for (int v = 2; v < leaf; ++v) {
    const int cv = v + 1;
    const TreeLevel& child_lv = tree.level(cv);
    for (std::uint32_t cb = 0; cb < child_lv.block_count(); ++cb)
      for (std::uint32_t c = child_lv.block_offsets[cb]; c < child_lv.block_offsets[cb + 1]; ++c)
        add_edge(producer(cv, cb),
                 m2m_id[v][tree.block_of_cell(v, child_lv.cells[c].parent)]);
  }
  // multipoles feed same-level M2L targets
  for (int v = 2; v <= leaf; ++v)
    for (std::uint32_t tb = 0; tb < m2l_id[v].size(); ++tb)
      for (std::uint32_t sb : plan.far[v].source_blocks[tb])
        add_edge_to_m2l(producer(v, sb), v, tb);
  // locals flow down
  for (int v = 2; v <= leaf; ++v)
    for (std::uint32_t b = 0; b < m2l_id[v].size(); ++b)
      if (m2l_id[v][b] != SKIP) add_edge(m2l_id[v][b], local_consumer(v, b));
  for (int v = 2; v < leaf; ++v) {
    const TreeLevel& lv = tree.level(v);
    for (std::uint32_t b = 0; b < l2l_id[v].size(); ++b)
      for (std::uint32_t c = lv.block_offsets[b]; c < lv.block_offsets[b + 1]; ++c) {
        const Cell& cell = lv.cells[c];
        for (std::uint32_t ch = cell.first_child; ch < cell.first_child + cell.child_count; ++ch)
          add_edge(l2l_id[v][b], local_consumer(v + 1, tree.block_of_cell(v + 1, ch)));
      }
  }
  // near field drains through the per-block reduce
  for (std::uint32_t b = 0; b < nb_leaf; ++b) {
    add_edge(l2p_id[b], red_id[b]);
    add_edge(p2p_id[b], red_id[b]);
    for (std::uint32_t p : plan.near.partners_above[b]) add_edge(p2p_id[b], red_id[p]);
  }

  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (const auto& [from, to] : edges) {
    graph.tasks[from].successors.push_back(to);
    ++graph.tasks[to].pred_count;
  }

  // Kahn pass; a leftover task means the construction produced a cycle
  std::vector<std::uint32_t> degree(graph.size());
  std::vector<std::uint32_t> ready;
  for (const Task& t : graph.tasks) {
    degree[t.id] = t.pred_count;
    if (t.pred_count == 0) ready.push_back(t.id);
  }
  std::size_t seen = 0;
  while (!ready.empty()) {
    const std::uint32_t id = ready.back();
    ready.pop_back();
    ++seen;
    for (std::uint32_t s : graph.tasks[id].successors)
      if (--degree[s] == 0) ready.push_back(s);
  }
  if (seen != graph.size()) throw std::logic_error("build_taskgraph: dependency cycle");
  return graph;
}

void assign_priorities(TaskGraph& graph) {
  std::int16_t leaf = 0;
  for (const Task& t : graph.tasks) leaf = std::max(leaf, t.level);
  for (Task& t : graph.tasks) {
    switch (t.kind) {
      case TaskKind::P2M: t.priority = 1000; break;
      case TaskKind::M2M: t.priority = 900 - (leaf - 1 - t.level); break;
      case TaskKind::M2L: t.priority = 700 - t.level; break;
      case TaskKind::L2L: t.priority = 600 - t.level; break;
      case TaskKind::P2P: t.priority = 500; break;
      case TaskKind::L2P: t.priority = 200; break;
      case TaskKind::P2PReduce: t.priority = 100; break;
    }
  }
}

}  // namespace taskfmm
