#include "taskfmm/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace taskfmm {

const char* schedule_policy_name(SchedulePolicy policy) {
  switch (policy) {
    case SchedulePolicy::Fifo: return "fifo";
    case SchedulePolicy::Priority: return "priority";
    case SchedulePolicy::CostModel: return "cost-model";
  }
  return "?";
}

double PerformanceModel::estimate_ns(TaskKind kind, std::uint64_t work) const {
  const KindFit& fit = fits[static_cast<int>(kind)];
  if (!fit.available) return static_cast<double>(work);
  return fit.base_ns + fit.slope_ns * static_cast<double>(work);
}

PerformanceModel calibrate(std::span<const TraceLog> traces) {
  if (traces.size() < 2) throw std::invalid_argument("calibrate: need at least two traces");
  PerformanceModel model;
  for (int k = 0; k < TASK_KIND_COUNT; ++k) {
    std::vector<double> ws, ds;
    for (const TraceLog& t : traces)
      for (const TraceEvent& e : t.events)
        if (static_cast<int>(e.kind) == k) {
          ws.push_back(static_cast<double>(e.work));
          ds.push_back(static_cast<double>(e.end_ns - e.start_ns));
        }
    PerformanceModel::KindFit& fit = model.fits[k];
    fit.samples = ws.size();
    const std::size_t n = ws.size();
    if (n < 2) continue;
    double mw = 0, md = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mw += ws[i];
      md += ds[i];
    }
    mw /= n;
    md /= n;
    double var = 0, cov = 0;
    for (std::size_t i = 0; i < n; ++i) {
      var += (ws[i] - mw) * (ws[i] - mw);
      cov += (ws[i] - mw) * (ds[i] - md);
    }
    if (var == 0) continue;  // fewer than two distinct work values
    fit.slope_ns = std::max(cov / var, 0.0);
    fit.base_ns = md - fit.slope_ns * mw;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ds[i] - (fit.base_ns + fit.slope_ns * ws[i]);
      ss += r * r;
    }
    fit.rms_ns = std::sqrt(ss / n);
    fit.available = true;
  }
  return model;
}

namespace {

struct ReadyEntry {
  double key;
  std::uint64_t seq;
  std::uint32_t id;
};

struct ReadyOrder {
  // top() = largest key, ties broken toward the earliest release
  bool operator()(const ReadyEntry& a, const ReadyEntry& b) const {
    if (a.key != b.key) return a.key < b.key;
    return a.seq > b.seq;
  }
};

}  // namespace

ExecutionResult execute(const TaskGraph& graph, int workers, SchedulePolicy policy,
                        const TaskBody& body, const PerformanceModel* model) {
  if (workers < 1) throw std::invalid_argument("execute: need at least one worker");
  const std::size_t total = graph.size();

  auto key_of = [&](const Task& t) -> double {
    switch (policy) {
      case SchedulePolicy::Fifo: return 0.0;
      case SchedulePolicy::Priority: return static_cast<double>(t.priority);
      case SchedulePolicy::CostModel:
        return model ? model->estimate_ns(t.kind, t.work) : static_cast<double>(t.work);
    }
    return 0.0;
  };

  std::mutex mu;
  std::condition_variable cv;
  std::priority_queue<ReadyEntry, std::vector<ReadyEntry>, ReadyOrder> ready;
  std::vector<std::uint32_t> degree(total);
  std::uint64_t seq = 0;
  std::size_t completed = 0, in_flight = 0;
  std::uint64_t wait_episodes = 0, waited_with_ready = 0;
  bool failed = false;
  std::exception_ptr error;

  for (const Task& t : graph.tasks) {
    degree[t.id] = t.pred_count;
    if (t.pred_count == 0) ready.push({key_of(t), seq++, t.id});
  }

  std::vector<std::vector<TraceEvent>> worker_events(workers);
  const auto t0 = std::chrono::steady_clock::now();
  auto now_ns = [&] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                                t0)
        .count();
  };

  auto worker_fn = [&](int wid) {
    std::unique_lock<std::mutex> lk(mu);
    for (;;) {
      while (!failed && completed < total && ready.empty()) {
        if (in_flight == 0) {
          // nothing running, nothing ready, tasks remain: the graph is stuck
          std::ostringstream os;
          std::size_t blocked = 0;
          for (const Task& t : graph.tasks)
            if (degree[t.id] > 0) {
              if (blocked < 8)
                os << "\n  task " << t.id << ' ' << task_kind_name(t.kind) << " L" << t.level
                   << " B" << t.block << " waiting on " << degree[t.id] << " predecessors";
              ++blocked;
            }
          failed = true;
          error = std::make_exception_ptr(std::runtime_error(
              "execute: deadlock, " + std::to_string(blocked) + " tasks blocked" + os.str()));
          cv.notify_all();
          return;
        }
        ++wait_episodes;
        if (!ready.empty()) ++waited_with_ready;  // never, by the loop condition
        cv.wait(lk);
      }
      if (failed || completed == total) return;

      const std::uint32_t id = ready.top().id;
      ready.pop();
      ++in_flight;
      const Task& task = graph.tasks[id];
      lk.unlock();

      const std::int64_t start = now_ns();
      std::exception_ptr thrown;
      try {
        body(task);
      } catch (...) {
        thrown = std::current_exception();
      }
      const std::int64_t end = now_ns();
      worker_events[wid].push_back(
          {task.id, task.kind, task.level, static_cast<std::uint32_t>(wid), task.work, start, end});

      lk.lock();
      --in_flight;
      ++completed;
      if (thrown && !failed) {
        failed = true;
        error = thrown;
      }
      std::size_t released = 0;
      for (std::uint32_t s : task.successors)
        if (--degree[s] == 0) {
          ready.push({key_of(graph.tasks[s]), seq++, s});
          ++released;
        }
      if (failed || completed == total)
        cv.notify_all();
      else if (released == 1)
        cv.notify_one();
      else if (released > 1)
        cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn, w);
  for (std::thread& t : pool) t.join();
  const std::int64_t wall = now_ns();
  if (error) std::rethrow_exception(error);

  ExecutionResult result;
  result.trace.workers = workers;
  result.trace.wall_ns = wall;
  result.wall_seconds = static_cast<double>(wall) * 1e-9;
  result.wait_episodes = wait_episodes;
  result.waited_with_ready = waited_with_ready;
  for (auto& ev : worker_events)
    result.trace.events.insert(result.trace.events.end(), ev.begin(), ev.end());
  std::sort(result.trace.events.begin(), result.trace.events.end(),
            [](const TraceEvent& a, const TraceEvent& b) {
              if (a.start_ns != b.start_ns) return a.start_ns < b.start_ns;
              return a.task < b.task;
            });
  return result;
}

bool validate_trace(const TaskGraph& graph, const TraceLog& trace, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (trace.events.size() != graph.size())
    return fail("event count " + std::to_string(trace.events.size()) + " != task count " +
                std::to_string(graph.size()));

  std::vector<const TraceEvent*> by_task(graph.size(), nullptr);
  for (const TraceEvent& e : trace.events) {
    if (e.task >= graph.size()) return fail("event for unknown task " + std::to_string(e.task));
    if (by_task[e.task]) return fail("task " + std::to_string(e.task) + " ran twice");
    by_task[e.task] = &e;
  }
  for (const Task& t : graph.tasks)
    for (std::uint32_t s : t.successors)
      if (by_task[t.id]->end_ns > by_task[s]->start_ns)
        return fail("edge " + std::to_string(t.id) + " -> " + std::to_string(s) +
                    ": successor started at " + std::to_string(by_task[s]->start_ns) +
                    "ns before predecessor ended at " + std::to_string(by_task[t.id]->end_ns) +
                    "ns");

  std::vector<std::vector<const TraceEvent*>> per_worker(trace.workers);
  for (const TraceEvent& e : trace.events) {
    if (e.worker >= static_cast<std::uint32_t>(trace.workers))
      return fail("event on unknown worker " + std::to_string(e.worker));
    per_worker[e.worker].push_back(&e);
  }
  for (auto& evs : per_worker) {
    std::sort(evs.begin(), evs.end(),
              [](const TraceEvent* a, const TraceEvent* b) { return a->start_ns < b->start_ns; });
    for (std::size_t i = 1; i < evs.size(); ++i)
      if (evs[i - 1]->end_ns > evs[i]->start_ns)
        return fail("worker " + std::to_string(evs[i]->worker) + " events overlap: tasks " +
                    std::to_string(evs[i - 1]->task) + " and " + std::to_string(evs[i]->task));
  }
  return true;
}

double parallel_efficiency(double t1, int n, double tn) { return t1 / (n * tn); }

OccupancyReport occupancy(const TraceLog& trace) {
  OccupancyReport report;
  report.busy_fraction.assign(trace.workers, 0.0);
  double total_busy = 0;
  for (const TraceEvent& e : trace.events) {
    const double d = static_cast<double>(e.end_ns - e.start_ns);
    report.busy_fraction[e.worker] += d;
    report.kind_share[static_cast<int>(e.kind)] += d;
    total_busy += d;
  }
  for (double& f : report.busy_fraction)
    f = trace.wall_ns > 0 ? f / static_cast<double>(trace.wall_ns) : 0.0;
  if (total_busy > 0)
    for (double& s : report.kind_share) s /= total_busy;
  return report;
}

void write_chrome_trace(const TraceLog& trace, std::ostream& os) {
  const auto saved = os.precision(15);
  os << "[";
  bool first = true;
  for (const TraceEvent& e : trace.events) {
    if (!first) os << ",";
    first = false;
    os << "\n{\"name\":\"" << task_kind_name(e.kind) << "\",\"ph\":\"X\",\"ts\":"
       << static_cast<double>(e.start_ns) / 1000.0
       << ",\"dur\":" << static_cast<double>(e.end_ns - e.start_ns) / 1000.0
       << ",\"pid\":0,\"tid\":" << e.worker << ",\"args\":{\"level\":" << e.level
       << ",\"work\":" << e.work << "}}";
  }
  os << "\n]\n";
  os.precision(saved);
}

}  // namespace taskfmm
