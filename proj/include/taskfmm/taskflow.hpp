#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "taskfmm/direct.hpp"
#include "taskfmm/geometry.hpp"
#include "taskfmm/m2l.hpp"

namespace taskfmm {

enum class TaskKind : std::uint8_t { P2M, M2M, M2L, L2L, L2P, P2P, P2PReduce };
inline constexpr int TASK_KIND_COUNT = 7;
const char* task_kind_name(TaskKind kind);

//! One block-granular task. `block` indexes the blocks of `level`; for M2M and
//! L2L that is the parent-side block. Work measures: directional interaction
//! count (P2P), pair count (M2L), particle count (P2M/L2P/P2PReduce),
//! child-transfer count (M2M/L2L).
struct Task {
  std::uint32_t id;
  TaskKind kind;
  std::int16_t level;
  std::uint32_t block;
  std::uint64_t work;
  std::int32_t priority = 0;
  std::uint32_t pred_count = 0;
  std::vector<std::uint32_t> successors;  // sorted, unique
};

struct TaskGraph {
  std::vector<Task> tasks;

  std::size_t size() const { return tasks.size(); }
  std::uint64_t total_work(TaskKind kind) const;
  std::size_t count(TaskKind kind) const;
  //! One line per task: "task <id> <kind> L<level> B<block> work=<w> -> <succ ids>"
  void dump(std::ostream& os) const;
};

//! Far-field pair lists for one level, grouped by (target block, canonical
//! class) so each group feeds one batched operator application.
struct LevelM2L {
  std::vector<M2LPairRef> pairs;
  std::vector<std::uint64_t> group_offsets;        // size block_count*16 + 1
  std::vector<std::vector<std::uint32_t>> source_blocks;  // per block, ascending

  std::span<const M2LPairRef> batch(std::uint32_t block, int canonical) const {
    const std::uint64_t a = group_offsets[block * 16 + canonical];
    const std::uint64_t b = group_offsets[block * 16 + canonical + 1];
    return {pairs.data() + a, pairs.data() + b};
  }
  std::uint64_t block_pair_count(std::uint32_t block) const {
    return group_offsets[(block + 1) * 16] - group_offsets[block * 16];
  }
};

//! Everything the payloads and the graph builder need to know about who
//! interacts with whom; built once, single-threaded.
struct InteractionPlan {
  NearFieldPlan near;
  std::vector<LevelM2L> far;  // indexed by level, entries 0..1 empty
};

InteractionPlan build_interaction_plan(const GroupTree& tree);

//! Interaction counts only (no pair lists); enough to price a run without
//! executing it, and cheap enough for very large trees.
struct InteractionStats {
  std::uint64_t near_directional = 0;
  std::vector<std::array<std::uint64_t, 16>> m2l_pairs;  // per level, per canonical
  std::vector<std::uint64_t> transfers;                  // per parent level: child count

  std::uint64_t m2l_level_total(int level) const;
};

InteractionStats count_interactions(const GroupTree& tree);

struct TaskGraphOptions {
  bool elide_empty_m2l = true;  // drop zero-pair M2L tasks, bridging pred->succ
};

//! Block-granular DAG covering the whole evaluation. Topologically validated
//! at build time (throws on a cycle, which would be a construction bug).
TaskGraph build_taskgraph(const GroupTree& tree, const InteractionPlan& plan,
                          const TaskGraphOptions& options = {});

//! Default priorities, larger runs earlier: P2M highest, upward sweep by level,
//! M2L below the sweep, P2P medium, L2P low, P2PReduce lowest. No edge points
//! from lower to higher priority.
void assign_priorities(TaskGraph& graph);

}  // namespace taskfmm
