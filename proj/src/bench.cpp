#include "taskfmm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace taskfmm {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<Particle> generate_particles(std::uint64_t n, Distribution dist, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Particle> particles;
  particles.reserve(n);
  if (dist == Distribution::Uniform) {
    for (std::uint64_t i = 0; i < n; ++i) {
      const double x = uniform01(rng), y = uniform01(rng), z = uniform01(rng);
      particles.push_back({{x, y, z}, 1.0});
    }
    return particles;
  }
  constexpr double two_pi = 6.283185307179586476925286766559;
  auto normal_pair = [&](double& a, double& b) {
    // Box-Muller; u1 shifted into (0,1] so the log is finite
    const double u1 = static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform01(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    a = r * std::cos(two_pi * u2);
    b = r * std::sin(two_pi * u2);
  };
  for (std::uint64_t i = 0; i < n; ++i) {
    double gx, gy, gz, spare;
    double norm = 0;
    do {
      normal_pair(gx, gy);
      normal_pair(gz, spare);
      norm = std::sqrt(gx * gx + gy * gy + gz * gz);
    } while (norm < 1e-12);
    particles.push_back(
        {{0.5 + 0.5 * gx / norm, 0.5 + 0.5 * gy / norm, 0.5 + 0.5 * gz / norm}, 1.0});
  }
  return particles;
}

std::vector<Particle> read_particles_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open particle file: " + path);
  std::string line;
  auto strip = [](std::string s) {
    std::erase_if(s, [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
    return s;
  };
  if (!std::getline(in, line) || strip(line) != "x,y,z,w")
    throw std::runtime_error("particle csv must start with header x,y,z,w: " + path);
  std::vector<Particle> particles;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    std::istringstream row(line);
    std::array<double, 4> col;
    std::string field;
    for (int c = 0; c < 4; ++c) {
      if (!std::getline(row, field, ','))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 4 columns");
      col[c] = std::stod(field);
    }
    particles.push_back({{col[0], col[1], col[2]}, col[3]});
  }
  return particles;
}

double relative_l2_error(std::span<const double> estimate, std::span<const double> reference) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = estimate[i] - reference[i];
    num += d * d;
    den += reference[i] * reference[i];
  }
  if (den == 0) return num == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

namespace flop_cost {

std::uint64_t p2m_per_particle(int order) {
  const std::uint64_t l = order;
  return 4 * l * l * l + 15 * l;
}

std::uint64_t l2p_per_particle(int order) {
  const std::uint64_t l = order;
  return 16 * l * l * l + 30 * l;
}

std::uint64_t transfer_per_child(int order) {
  const std::uint64_t l = order;
  return 6 * l * l * l * l;
}

std::uint64_t m2l_per_pair(int order, int rank) {
  const std::uint64_t l = order, r = rank;
  return 4 * l * l * l * r + r * r;
}

}  // namespace flop_cost

std::uint64_t FlopLedger::kind_flops(TaskKind kind) const {
  std::uint64_t sum = 0;
  for (const Entry& e : rows[static_cast<int>(kind)]) sum += e.flops;
  return sum;
}

std::uint64_t FlopLedger::kind_work(TaskKind kind) const {
  std::uint64_t sum = 0;
  for (const Entry& e : rows[static_cast<int>(kind)]) sum += e.work;
  return sum;
}

std::uint64_t FlopLedger::total_flops() const {
  std::uint64_t sum = 0;
  for (int k = 0; k < TASK_KIND_COUNT; ++k) sum += kind_flops(static_cast<TaskKind>(k));
  return sum;
}

double FlopLedger::share(TaskKind kind, int level) const {
  const std::uint64_t total = total_flops();
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>(rows[static_cast<int>(kind)][level].flops) /
         static_cast<double>(total);
}

FlopLedger build_ledger(const InteractionStats& stats, const CompressionReport& report,
                        int order, std::uint64_t n_particles, int height) {
  FlopLedger ledger;
  ledger.height = height;
  for (auto& row : ledger.rows) row.assign(height, {});
  const int leaf = height - 1;

  auto& at = ledger.rows;
  at[static_cast<int>(TaskKind::P2M)][leaf] = {
      n_particles, n_particles * flop_cost::p2m_per_particle(order)};
  at[static_cast<int>(TaskKind::L2P)][leaf] = {
      n_particles, n_particles * flop_cost::l2p_per_particle(order)};
  at[static_cast<int>(TaskKind::P2P)][leaf] = {
      stats.near_directional, stats.near_directional * flop_cost::p2p_per_interaction};
  at[static_cast<int>(TaskKind::P2PReduce)][leaf] = {n_particles, 0};
  for (int v = 2; v < leaf; ++v) {
    const std::uint64_t t = stats.transfers[v];
    at[static_cast<int>(TaskKind::M2M)][v] = {t, t * flop_cost::transfer_per_child(order)};
    at[static_cast<int>(TaskKind::L2L)][v] = {t, t * flop_cost::transfer_per_child(order)};
  }
  for (int v = 2; v <= leaf; ++v) {
    FlopLedger::Entry e;
    for (int c = 0; c < 16; ++c) {
      const std::uint64_t pairs = stats.m2l_pairs[v][c];
      e.work += pairs;
      e.flops += pairs * flop_cost::m2l_per_pair(order, report.ranks[c]);
    }
    at[static_cast<int>(TaskKind::M2L)][v] = e;
  }
  return ledger;
}

std::string format_breakdown(const FlopLedger& ledger) {
  std::string out = "level";
  for (int k = 0; k < TASK_KIND_COUNT; ++k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, " %9s", task_kind_name(static_cast<TaskKind>(k)));
    out += buf;
  }
  out += '\n';
  auto percent = [&](std::uint64_t flops, std::uint64_t work) {
    char buf[16];
    const std::uint64_t total = ledger.total_flops();
    if (work == 0 && flops == 0)
      std::snprintf(buf, sizeof buf, " %9s", "-");
    else
      std::snprintf(buf, sizeof buf, " %8.2f%%",
                    total ? 100.0 * static_cast<double>(flops) / static_cast<double>(total) : 0.0);
    return std::string(buf);
  };
  for (int v = 0; v < ledger.height; ++v) {
    bool any = false;
    for (const auto& row : ledger.rows) any = any || row[v].work > 0 || row[v].flops > 0;
    if (!any) continue;
    char head[16];
    std::snprintf(head, sizeof head, "%5d", v);
    out += head;
    for (const auto& row : ledger.rows) out += percent(row[v].flops, row[v].work);
    out += '\n';
  }
  out += "total";
  for (int k = 0; k < TASK_KIND_COUNT; ++k) {
    const TaskKind kind = static_cast<TaskKind>(k);
    out += percent(ledger.kind_flops(kind), ledger.kind_work(kind));
  }
  out += '\n';
  return out;
}

FmmContext::FmmContext(std::vector<Particle> particles, const RunConfig& cfg)
    : input_(std::move(particles)) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.acc < 2) throw std::invalid_argument("accuracy parameter must be at least 2");
  tree_ = std::make_unique<GroupTree>(input_, cfg.height, cfg.group_size);
  interp_ = std::make_unique<InterpolationEngine>(cfg.acc);
  ops_ = std::make_unique<M2LOperatorSet>(cfg.acc, std::pow(10.0, -cfg.acc));
  plan_ = build_interaction_plan(*tree_);
  graph_ = build_taskgraph(*tree_, plan_);
  assign_priorities(graph_);
  buffers_ = P2PBuffers(*tree_, plan_.near);
  tree_->allocate_expansions(interp_->coeff_count());
  tree_->allocate_accumulators();
  level_scale_.resize(cfg.height);
  for (int v = 0; v < cfg.height; ++v) level_scale_[v] = 1.0 / tree_->cell_width(v);
  setup_seconds_ = seconds_since(t0);
}

FmmContext::~FmmContext() = default;

void FmmContext::reset() {
  ParticleStore& st = tree_->particles();
  std::fill(st.potential.begin(), st.potential.end(), 0.0);
  std::fill(st.fx.begin(), st.fx.end(), 0.0);
  std::fill(st.fy.begin(), st.fy.end(), 0.0);
  std::fill(st.fz.begin(), st.fz.end(), 0.0);
  for (int v = 0; v < tree_->height(); ++v) {
    TreeLevel& lv = tree_->level(v);
    std::fill(lv.multipole.begin(), lv.multipole.end(), 0.0);
    std::fill(lv.local_own.begin(), lv.local_own.end(), 0.0);
    std::fill(lv.local_down.begin(), lv.local_down.end(), 0.0);
  }
  buffers_.reset();
}

void FmmContext::run_task(const Task& task) {
  const std::size_t coeffs = tree_->expansion_size();
  ParticleStore& st = tree_->particles();
  switch (task.kind) {
    case TaskKind::P2M: {
      const int leaf = tree_->leaf_level();
      TreeLevel& lv = tree_->level(leaf);
      for (std::uint32_t c = lv.block_offsets[task.block]; c < lv.block_offsets[task.block + 1];
           ++c) {
        const Cell& cell = lv.cells[c];
        interp_->p2m(tree_->cell_cube(leaf, c),
                     {st.x.data() + cell.first_particle, cell.particle_count},
                     {st.y.data() + cell.first_particle, cell.particle_count},
                     {st.z.data() + cell.first_particle, cell.particle_count},
                     {st.w.data() + cell.first_particle, cell.particle_count},
                     {lv.multipole.data() + c * coeffs, coeffs});
      }
      break;
    }
    case TaskKind::M2M: {
      TreeLevel& lv = tree_->level(task.level);
      TreeLevel& child_lv = tree_->level(task.level + 1);
      for (std::uint32_t c = lv.block_offsets[task.block]; c < lv.block_offsets[task.block + 1];
           ++c) {
        const Cell& cell = lv.cells[c];
        for (std::uint32_t ch = cell.first_child; ch < cell.first_child + cell.child_count;
             ++ch)
          interp_->m2m(static_cast<int>(child_lv.cells[ch].code & 7),
                       {child_lv.multipole.data() + ch * coeffs, coeffs},
                       {lv.multipole.data() + c * coeffs, coeffs});
      }
      break;
    }
    case TaskKind::M2L: {
      TreeLevel& lv = tree_->level(task.level);
      const LevelM2L& far = plan_.far[task.level];
      const double scale = level_scale_[task.level];
      for (int canonical = 0; canonical < 16; ++canonical) {
        const auto batch = far.batch(task.block, canonical);
        if (!batch.empty())
          ops_->apply_batch(canonical, batch, lv.multipole.data(), lv.local_own.data(), coeffs,
                            scale);
      }
      break;
    }
    case TaskKind::L2L: {
      TreeLevel& lv = tree_->level(task.level);
      TreeLevel& child_lv = tree_->level(task.level + 1);
      double total[1000];
      for (std::uint32_t c = lv.block_offsets[task.block]; c < lv.block_offsets[task.block + 1];
           ++c) {
        const Cell& cell = lv.cells[c];
        if (cell.child_count == 0) continue;
        for (std::size_t i = 0; i < coeffs; ++i)
          total[i] = lv.local_own[c * coeffs + i] + lv.local_down[c * coeffs + i];
        for (std::uint32_t ch = cell.first_child; ch < cell.first_child + cell.child_count;
             ++ch)
          interp_->l2l(static_cast<int>(child_lv.cells[ch].code & 7), {total, coeffs},
                       {child_lv.local_down.data() + ch * coeffs, coeffs});
      }
      break;
    }
    case TaskKind::L2P: {
      const int leaf = tree_->leaf_level();
      TreeLevel& lv = tree_->level(leaf);
      double total[1000];
      for (std::uint32_t c = lv.block_offsets[task.block]; c < lv.block_offsets[task.block + 1];
           ++c) {
        const Cell& cell = lv.cells[c];
        for (std::size_t i = 0; i < coeffs; ++i)
          total[i] = lv.local_own[c * coeffs + i] + lv.local_down[c * coeffs + i];
        interp_->l2p(tree_->cell_cube(leaf, c), {total, coeffs},
                     {st.x.data() + cell.first_particle, cell.particle_count},
                     {st.y.data() + cell.first_particle, cell.particle_count},
                     {st.z.data() + cell.first_particle, cell.particle_count},
                     {st.potential.data() + cell.first_particle, cell.particle_count},
                     {st.fx.data() + cell.first_particle, cell.particle_count},
                     {st.fy.data() + cell.first_particle, cell.particle_count},
                     {st.fz.data() + cell.first_particle, cell.particle_count});
      }
      break;
    }
    case TaskKind::P2P:
      p2p_block(*tree_, plan_.near, task.block, true, buffers_);
      break;
    case TaskKind::P2PReduce:
      p2p_reduce(*tree_, task.block, buffers_);
      break;
  }
}

TaskBody FmmContext::body() {
  return [this](const Task& task) { run_task(task); };
}

FmmContext::Fields FmmContext::gather() const {
  const ParticleStore& st = tree_->particles();
  Fields fields;
  fields.potential.resize(st.size());
  fields.fx.resize(st.size());
  fields.fy.resize(st.size());
  fields.fz.resize(st.size());
  for (std::size_t i = 0; i < st.size(); ++i) {
    const std::uint32_t orig = st.id[i];
    fields.potential[orig] = st.potential[i];
    fields.fx[orig] = st.fx[i];
    fields.fy[orig] = st.fy[i];
    fields.fz[orig] = st.fz[i];
  }
  return fields;
}

namespace {

std::vector<std::uint32_t> check_targets(std::uint64_t n, std::uint64_t check) {
  std::vector<std::uint32_t> targets;
  targets.reserve(check);
  for (std::uint64_t k = 0; k < check; ++k)
    targets.push_back(static_cast<std::uint32_t>(k * n / check));
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  return targets;
}

void check_against_oracle(RunResult& result) {
  const std::uint64_t n = result.input.size();
  const auto targets = check_targets(n, std::min<std::uint64_t>(result.config.check, n));
  const OracleResult oracle = direct_oracle(result.input, targets);
  std::vector<double> est_pot(targets.size()), est_f, ref_f;
  est_f.reserve(3 * targets.size());
  ref_f.reserve(3 * targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const std::uint32_t i = targets[t];
    est_pot[t] = result.fields.potential[i];
    est_f.push_back(result.fields.fx[i]);
    est_f.push_back(result.fields.fy[i]);
    est_f.push_back(result.fields.fz[i]);
    ref_f.push_back(oracle.fx[t]);
    ref_f.push_back(oracle.fy[t]);
    ref_f.push_back(oracle.fz[t]);
  }
  result.eps_l2_potential = relative_l2_error(est_pot, oracle.potential);
  result.eps_l2_force = relative_l2_error(est_f, ref_f);
}

void write_outputs(const RunResult& result) {
  const std::filesystem::path dir(result.config.out_dir);
  std::filesystem::create_directories(dir);
  if (!result.config.dry_run) {
    write_results_csv((dir / "results.csv").string(), result.input, result.fields);
    if (result.config.trace) {
      std::ofstream os(dir / "trace.json");
      write_chrome_trace(result.trace, os);
    }
  }
  write_summary_json((dir / "summary.json").string(), result);
}

}  // namespace

RunResult run_fmm(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Particle> particles = cfg.particles_path.empty()
                                        ? generate_particles(cfg.n, cfg.dist, cfg.seed)
                                        : read_particles_csv(cfg.particles_path);
  const std::uint64_t n = particles.size();
  RunResult result;
  result.config = cfg;

  if (cfg.dry_run) {
    if (cfg.acc < 2) throw std::invalid_argument("accuracy parameter must be at least 2");
    const GroupTree tree(particles, cfg.height, cfg.group_size);
    const InteractionStats stats = count_interactions(tree);
    const M2LOperatorSet ops(cfg.acc, std::pow(10.0, -cfg.acc));
    result.compression = ops.report();
    result.ledger = build_ledger(stats, result.compression, cfg.acc, n, cfg.height);
    result.input = std::move(particles);
    result.setup_seconds = seconds_since(t0);
    result.wall_seconds = result.setup_seconds;
    if (!cfg.out_dir.empty()) write_outputs(result);
    return result;
  }

  FmmContext ctx(std::move(particles), cfg);
  result.setup_seconds = ctx.setup_seconds();
  result.compression = ctx.ops().report();
  result.ledger =
      build_ledger(count_interactions(ctx.tree()), result.compression, cfg.acc, n, cfg.height);

  PerformanceModel model;
  const PerformanceModel* model_ptr = nullptr;
  if (cfg.policy == SchedulePolicy::CostModel) {
    // self-calibration: two preliminary runs under the plain policy
    std::vector<TraceLog> preliminary;
    for (int i = 0; i < 2; ++i) {
      ctx.reset();
      preliminary.push_back(
          execute(ctx.graph(), cfg.workers, SchedulePolicy::Fifo, ctx.body()).trace);
    }
    model = calibrate(preliminary);
    model_ptr = &model;
    ctx.reset();
  }
  ExecutionResult exec = execute(ctx.graph(), cfg.workers, cfg.policy, ctx.body(), model_ptr);
  result.exec_seconds = exec.wall_seconds;
  result.trace = std::move(exec.trace);
  result.occ = occupancy(result.trace);
  result.fields = ctx.gather();
  result.input = ctx.input();
  result.wall_seconds = seconds_since(t0);

  if (cfg.check > 0) check_against_oracle(result);
  if (!cfg.out_dir.empty()) write_outputs(result);
  return result;
}

std::vector<SweepRow> efficiency_sweep(const RunConfig& cfg, std::span<const int> worker_counts) {
  std::vector<Particle> particles = cfg.particles_path.empty()
                                        ? generate_particles(cfg.n, cfg.dist, cfg.seed)
                                        : read_particles_csv(cfg.particles_path);
  FmmContext ctx(std::move(particles), cfg);

  PerformanceModel model;
  const PerformanceModel* model_ptr = nullptr;
  if (cfg.policy == SchedulePolicy::CostModel) {
    std::vector<TraceLog> preliminary;
    for (int i = 0; i < 2; ++i) {
      ctx.reset();
      preliminary.push_back(execute(ctx.graph(), 1, SchedulePolicy::Fifo, ctx.body()).trace);
    }
    model = calibrate(preliminary);
    model_ptr = &model;
  }

  ctx.reset();
  const double t1 = execute(ctx.graph(), 1, cfg.policy, ctx.body(), model_ptr).wall_seconds;
  std::vector<SweepRow> rows;
  for (int workers : worker_counts) {
    if (workers == 1) {
      rows.push_back({1, t1, 1.0});
      continue;
    }
    ctx.reset();
    const double tn = execute(ctx.graph(), workers, cfg.policy, ctx.body(), model_ptr).wall_seconds;
    rows.push_back({workers, tn, parallel_efficiency(t1, workers, tn)});
  }
  return rows;
}

void write_results_csv(const std::string& path, std::span<const Particle> input,
                       const FmmContext::Fields& fields) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fputs("id,x,y,z,w,potential,fx,fy,fz\n", f);
  for (std::size_t i = 0; i < input.size(); ++i)
    std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i,
                 input[i].position[0], input[i].position[1], input[i].position[2],
                 input[i].weight, fields.potential[i], fields.fx[i], fields.fy[i], fields.fz[i]);
  std::fclose(f);
}

void write_summary_json(const std::string& path, const RunResult& result,
                        std::span<const SweepRow> sweep) {
  using nlohmann::json;
  const RunConfig& cfg = result.config;
  json j;
  j["config"] = {{"n", result.input.size()},
                 {"dist", cfg.dist == Distribution::Uniform ? "uniform" : "sphere"},
                 {"height", cfg.height},
                 {"acc", cfg.acc},
                 {"group_size", cfg.group_size},
                 {"workers", cfg.workers},
                 {"policy", schedule_policy_name(cfg.policy)},
                 {"seed", cfg.seed},
                 {"check", cfg.check},
                 {"dry_run", cfg.dry_run}};
  j["timings"] = {{"setup_seconds", result.setup_seconds},
                  {"exec_seconds", result.exec_seconds},
                  {"wall_seconds", result.wall_seconds}};
  if (result.eps_l2_potential >= 0) {
    j["accuracy"] = {{"eps_l2_potential", result.eps_l2_potential},
                     {"eps_l2_force", result.eps_l2_force}};
  }
  j["compression"] = {{"order", result.compression.order},
                      {"eps", result.compression.eps},
                      {"ranks", result.compression.ranks},
                      {"multiplicity", result.compression.multiplicity},
                      {"weighted_mean_rank", result.compression.weighted_mean_rank}};
  j["flop_costs"] = {{"p2p_per_directional_interaction", flop_cost::p2p_per_interaction},
                     {"p2m_per_particle", flop_cost::p2m_per_particle(cfg.acc)},
                     {"l2p_per_particle", flop_cost::l2p_per_particle(cfg.acc)},
                     {"transfer_per_child", flop_cost::transfer_per_child(cfg.acc)},
                     {"m2l_per_pair_rank1", flop_cost::m2l_per_pair(cfg.acc, 1)}};
  json ledger = json::object();
  for (int k = 0; k < TASK_KIND_COUNT; ++k) {
    const TaskKind kind = static_cast<TaskKind>(k);
    json levels = json::array();
    for (int v = 0; v < result.ledger.height; ++v) {
      const auto& e = result.ledger.rows[k][v];
      if (e.work == 0 && e.flops == 0) continue;
      levels.push_back({{"level", v},
                        {"work", e.work},
                        {"flops", e.flops},
                        {"share_percent", result.ledger.share(kind, v)}});
    }
    ledger[task_kind_name(kind)] = {{"work", result.ledger.kind_work(kind)},
                                    {"flops", result.ledger.kind_flops(kind)},
                                    {"levels", levels}};
  }
  ledger["total_flops"] = result.ledger.total_flops();
  j["ledger"] = ledger;
  j["breakdown"] = format_breakdown(result.ledger);
  if (!cfg.dry_run) {
    j["occupancy"] = {{"busy_fraction", result.occ.busy_fraction}};
    json shares = json::object();
    for (int k = 0; k < TASK_KIND_COUNT; ++k)
      shares[task_kind_name(static_cast<TaskKind>(k))] = result.occ.kind_share[k];
    j["occupancy"]["kind_share"] = shares;
  }
  if (!sweep.empty()) {
    json rows = json::array();
    for (const SweepRow& row : sweep)
      rows.push_back(
          {{"workers", row.workers}, {"seconds", row.seconds}, {"efficiency", row.efficiency}});
    j["efficiency"] = rows;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << '\n';
}

}  // namespace taskfmm
