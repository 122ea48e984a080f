#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "taskfmm/taskflow.hpp"

namespace taskfmm {

enum class SchedulePolicy { Fifo, Priority, CostModel };
const char* schedule_policy_name(SchedulePolicy policy);

struct TraceEvent {
  std::uint32_t task;
  TaskKind kind;
  std::int16_t level;
  std::uint32_t worker;
  std::uint64_t work;
  std::int64_t start_ns;  // relative to execution start
  std::int64_t end_ns;
};

struct TraceLog {
  std::vector<TraceEvent> events;  // merged, ascending start time
  std::int64_t wall_ns = 0;
  int workers = 0;
};

//! Per-kind affine duration model fitted from traces: duration = base + slope*work.
struct PerformanceModel {
  struct KindFit {
    bool available = false;
    double base_ns = 0;
    double slope_ns = 0;  // clamped to >= 0
    std::size_t samples = 0;
    double rms_ns = 0;  // fit residual
  };
  std::array<KindFit, TASK_KIND_COUNT> fits;

  //! Unavailable kinds fall back to the raw work measure as a duration proxy.
  double estimate_ns(TaskKind kind, std::uint64_t work) const;
};

//! Least-squares fit per kind over all events of the given traces (at least
//! two). A kind with fewer than two distinct work values is marked unavailable.
PerformanceModel calibrate(std::span<const TraceLog> traces);

struct ExecutionResult {
  TraceLog trace;
  double wall_seconds = 0;
  // queue-poll accounting: how often workers blocked, and how often one blocked
  // while the ready queue was nonempty (work conservation says never)
  std::uint64_t wait_episodes = 0;
  std::uint64_t waited_with_ready = 0;
};

using TaskBody = std::function<void(const Task&)>;

//! Runs the graph on a pool of worker threads sharing one guarded ready queue.
//! Fifo pops in release order, Priority by (task priority, release order),
//! CostModel largest-estimated-duration-first. Numerical determinism is the
//! payloads' business (single-writer arrays); the schedule itself is not
//! deterministic. Throws with a diagnostic listing the blocked tasks if the
//! graph deadlocks (a cycle, or a predecessor count that never drains).
ExecutionResult execute(const TaskGraph& graph, int workers, SchedulePolicy policy,
                        const TaskBody& body, const PerformanceModel* model = nullptr);

//! Every edge's predecessor finished before its successor started, and every
//! task ran exactly once. Fills `why` with the first violation if given.
bool validate_trace(const TaskGraph& graph, const TraceLog& trace, std::string* why = nullptr);

//! e_n = t_1 / (n * t_n)
double parallel_efficiency(double t1, int n, double tn);

struct OccupancyReport {
  std::vector<double> busy_fraction;                 // per worker
  std::array<double, TASK_KIND_COUNT> kind_share{};  // of total busy time
};
OccupancyReport occupancy(const TraceLog& trace);

//! Chrome trace-event JSON ("X" phase events, microsecond timestamps, one tid
//! per worker, level and work in args).
void write_chrome_trace(const TraceLog& trace, std::ostream& os);

}  // namespace taskfmm
