#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "taskfmm/bench.hpp"

namespace {

void print_report(const taskfmm::RunResult& r) {
  using taskfmm::TaskKind;
  const taskfmm::RunConfig& cfg = r.config;
  std::printf("run: n=%zu dist=%s height=%d acc=%d group-size=%d workers=%d policy=%s seed=%llu\n",
              r.input.size(), cfg.dist == taskfmm::Distribution::Uniform ? "uniform" : "sphere",
              cfg.height, cfg.acc, cfg.group_size, cfg.workers,
              taskfmm::schedule_policy_name(cfg.policy),
              static_cast<unsigned long long>(cfg.seed));
  if (cfg.dry_run)
    std::printf("dry run: tree priced without execution, setup %.3f s\n", r.setup_seconds);
  else
    std::printf("setup %.3f s, execution %.3f s, total %.3f s\n", r.setup_seconds, r.exec_seconds,
                r.wall_seconds);

  if (r.eps_l2_potential >= 0)
    std::printf("accuracy: potential rel-l2 %.3e, force rel-l2 %.3e\n", r.eps_l2_potential,
                r.eps_l2_force);

  std::printf("m2l compression (order %d, eps %.1e): ranks [", r.compression.order,
              r.compression.eps);
  for (int c = 0; c < 16; ++c)
    std::printf("%d%s", r.compression.ranks[c], c + 1 < 16 ? " " : "");
  std::printf("], weighted mean rank %.2f\n", r.compression.weighted_mean_rank);

  std::printf("flop breakdown (percent of %llu total flops):\n%s",
              static_cast<unsigned long long>(r.ledger.total_flops()),
              taskfmm::format_breakdown(r.ledger).c_str());

  if (!cfg.dry_run) {
    std::printf("occupancy:");
    for (std::size_t w = 0; w < r.occ.busy_fraction.size(); ++w)
      std::printf(" w%zu=%.1f%%", w, 100.0 * r.occ.busy_fraction[w]);
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-parallel black-box fmm benchmark"};
  taskfmm::RunConfig cfg;
  std::vector<int> sweep_counts;

  const std::map<std::string, taskfmm::Distribution> dist_names{
      {"uniform", taskfmm::Distribution::Uniform}, {"sphere", taskfmm::Distribution::Sphere}};
  const std::map<std::string, taskfmm::SchedulePolicy> policy_names{
      {"fifo", taskfmm::SchedulePolicy::Fifo},
      {"priority", taskfmm::SchedulePolicy::Priority},
      {"cost-model", taskfmm::SchedulePolicy::CostModel}};

  app.add_option("--n", cfg.n, "number of generated particles");
  app.add_option("--dist", cfg.dist, "particle distribution")
      ->transform(CLI::CheckedTransformer(dist_names, CLI::ignore_case));
  app.add_option("--height", cfg.height, "octree height (levels 0..height-1)");
  app.add_option("--acc", cfg.acc, "accuracy: interpolation order and -log10 of the svd cutoff");
  app.add_option("--group-size", cfg.group_size, "cells per task block");
  app.add_option("--workers", cfg.workers, "worker thread count");
  app.add_option("--policy", cfg.policy, "scheduling policy")
      ->transform(CLI::CheckedTransformer(policy_names, CLI::ignore_case));
  app.add_option("--seed", cfg.seed, "rng seed for particle generation");
  app.add_option("--check", cfg.check, "oracle sample size, 0 disables the accuracy check");
  app.add_option("--particles", cfg.particles_path, "csv input (header x,y,z,w) replacing --n");
  app.add_option("--out", cfg.out_dir, "directory for results.csv / trace.json / summary.json");
  app.add_flag("--trace", cfg.trace, "write chrome trace json (needs --out)");
  app.add_flag("--dry-run", cfg.dry_run, "price the tree without executing");
  app.add_option("--sweep", sweep_counts, "worker counts for a parallel-efficiency sweep")
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    const taskfmm::RunResult result = taskfmm::run_fmm(cfg);
    print_report(result);

    if (!sweep_counts.empty() && !cfg.dry_run) {
      const std::vector<taskfmm::SweepRow> rows = taskfmm::efficiency_sweep(cfg, sweep_counts);
      std::printf("efficiency sweep:\n");
      for (const taskfmm::SweepRow& row : rows)
        std::printf("  %2d workers: %.3f s, e_%d = %.3f\n", row.workers, row.seconds, row.workers,
                    row.efficiency);
      if (!cfg.out_dir.empty())
        taskfmm::write_summary_json(
            (std::filesystem::path(cfg.out_dir) / "summary.json").string(), result, rows);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
