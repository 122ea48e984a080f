#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taskfmm/chebyshev.hpp"
#include "taskfmm/direct.hpp"
#include "taskfmm/geometry.hpp"
#include "taskfmm/m2l.hpp"
#include "taskfmm/runtime.hpp"
#include "taskfmm/taskflow.hpp"

namespace taskfmm {

enum class Distribution { Uniform, Sphere };

struct RunConfig {
  std::uint64_t n = 10000;
  Distribution dist = Distribution::Uniform;
  int height = 4;
  int acc = 5;  // interpolation order l = acc, svd eps = 10^-acc
  int group_size = 250;
  int workers = 1;
  SchedulePolicy policy = SchedulePolicy::Priority;
  std::uint64_t seed = 42;
  std::uint64_t check = 1000;   // oracle sample size, 0 disables
  std::string particles_path;  // csv input overriding n/dist/seed
  std::string out_dir;
  bool trace = false;
  bool dry_run = false;
};

//! Reproducible particle sets: positions fully determined by (n, dist, seed)
//! via mt19937_64 with explicit scaling (no implementation-defined
//! distributions). uniform fills [0,1]^3; sphere lies on the surface of the
//! unit-diameter sphere centered at (1/2,1/2,1/2), unit weights both.
std::vector<Particle> generate_particles(std::uint64_t n, Distribution dist, std::uint64_t seed);

//! CSV with header x,y,z,w.
std::vector<Particle> read_particles_csv(const std::string& path);

//! sqrt(sum (est-ref)^2 / sum ref^2)
double relative_l2_error(std::span<const double> estimate, std::span<const double> reference);

//! Analytic flop prices per unit of task work. P2P uses the mutual kernel:
//! 30 flops per unordered pair evaluation (sqrt and div counted as one each),
//! i.e. 15 per directional interaction. P2PReduce is bookkeeping, priced 0.
namespace flop_cost {
inline constexpr std::uint64_t p2p_per_interaction = 15;
std::uint64_t p2m_per_particle(int order);      // 4 l^3 + 15 l
std::uint64_t l2p_per_particle(int order);      // 16 l^3 + 30 l
std::uint64_t transfer_per_child(int order);    // 6 l^4 (three l x l by l x l^2 passes)
std::uint64_t m2l_per_pair(int order, int rank);  // 4 l^3 r + r^2
}  // namespace flop_cost

//! Work and flop totals per (task kind, level). Built analytically from
//! interaction statistics, so a dry run prices a tree without executing it;
//! trace work sums reproduce the work columns exactly.
struct FlopLedger {
  struct Entry {
    std::uint64_t work = 0;
    std::uint64_t flops = 0;
  };
  int height = 0;
  std::array<std::vector<Entry>, TASK_KIND_COUNT> rows;  // [kind][level]

  std::uint64_t kind_flops(TaskKind kind) const;
  std::uint64_t kind_work(TaskKind kind) const;
  std::uint64_t total_flops() const;
  double share(TaskKind kind, int level) const;  // percent of total
};

FlopLedger build_ledger(const InteractionStats& stats, const CompressionReport& report,
                        int order, std::uint64_t n_particles, int height);

//! The level-by-operator percentage grid as printable text.
std::string format_breakdown(const FlopLedger& ledger);

//! Owns one configured evaluation: tree, interaction plan, operators, graph,
//! buffers, and the payload dispatch. Construction does all single-threaded
//! setup; run_task executes one task; reset rewinds for another execution.
class FmmContext {
 public:
  FmmContext(std::vector<Particle> particles, const RunConfig& cfg);
  ~FmmContext();
  FmmContext(const FmmContext&) = delete;
  FmmContext& operator=(const FmmContext&) = delete;

  const GroupTree& tree() const { return *tree_; }
  GroupTree& tree() { return *tree_; }
  const InteractionPlan& plan() const { return plan_; }
  const TaskGraph& graph() const { return graph_; }
  const M2LOperatorSet& ops() const { return *ops_; }
  const InterpolationEngine& interp() const { return *interp_; }
  const std::vector<Particle>& input() const { return input_; }
  double setup_seconds() const { return setup_seconds_; }

  void reset();
  void run_task(const Task& task);
  TaskBody body();

  struct Fields {
    std::vector<double> potential, fx, fy, fz;  // original input order
  };
  Fields gather() const;

 private:
  std::vector<Particle> input_;
  std::unique_ptr<GroupTree> tree_;
  std::unique_ptr<InterpolationEngine> interp_;
  std::unique_ptr<M2LOperatorSet> ops_;
  InteractionPlan plan_;
  TaskGraph graph_;
  P2PBuffers buffers_;
  std::vector<double> level_scale_;  // 1/cell_width per level
  double setup_seconds_ = 0;
};

struct RunResult {
  RunConfig config;
  double setup_seconds = 0;
  double exec_seconds = 0;
  double wall_seconds = 0;
  double eps_l2_potential = -1;  // -1 when not checked
  double eps_l2_force = -1;
  FlopLedger ledger;
  TraceLog trace;
  OccupancyReport occ;
  FmmContext::Fields fields;
  std::vector<Particle> input;
  CompressionReport compression;
};

//! Full pipeline: particles -> tree -> graph -> execute -> oracle check.
//! CostModel policy calibrates itself on two preliminary runs first. Dry runs
//! stop after pricing the tree (no expansions, no execution). Writes
//! results.csv / trace.json / summary.json when out_dir is set.
RunResult run_fmm(const RunConfig& cfg);

struct SweepRow {
  int workers;
  double seconds;
  double efficiency;
};

//! Re-executes one built context per worker count (fixed seed and inputs),
//! reporting e_n = t_1/(n t_n) from execution wall time.
std::vector<SweepRow> efficiency_sweep(const RunConfig& cfg, std::span<const int> worker_counts);

void write_results_csv(const std::string& path, std::span<const Particle> input,
                       const FmmContext::Fields& fields);
void write_summary_json(const std::string& path, const RunResult& result,
                        std::span<const SweepRow> sweep = {});

}  // namespace taskfmm
