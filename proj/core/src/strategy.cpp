#include "connkit/strategy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "connkit/error.hpp"
#include "json_util.hpp"

namespace connkit::strategy {

using detail::json;

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::RandomSearch:
      return "random";
    case Kind::GridSearch:
      return "grid";
    case Kind::ForcePositionHybrid:
      return "hybrid";
  }
  return "unknown";
}

std::optional<Kind> kind_from_string(std::string_view name) {
  for (auto k : {Kind::RandomSearch, Kind::GridSearch, Kind::ForcePositionHybrid})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Success:
      return "success";
    case Outcome::BudgetExhausted:
      return "budget_exhausted";
    case Outcome::GeometricFailure:
      return "geometric_failure";
  }
  return "unknown";
}

void StrategyConfig::check() const {
  if (!(grid_resolution > 0.0)) throw std::invalid_argument("grid_resolution must be > 0");
  if (!(grid_side >= grid_resolution)) throw std::invalid_argument("grid_side must be >= grid_resolution");
  if (budget == 0) throw std::invalid_argument("budget must be > 0");
  if (!(perturb_radius >= 0.0) || !(gain >= 0.0) || !(micro_radius >= 0.0) || micro_count < 0 || !(hover > 0.0) ||
      stall_steps < 1 || !(stall_descent >= 0.0))
    throw std::invalid_argument("strategy parameters out of range");
}

StrategyConfig default_config(Kind kind) {
  StrategyConfig c;
  c.kind = kind;
  return c;
}

std::vector<Eigen::Vector2d> grid_points(const StrategyConfig& cfg) {
  cfg.check();
  // Tolerate side/resolution ratios that are integral up to rounding.
  const int n = static_cast<int>(std::floor(cfg.grid_side / cfg.grid_resolution + 1e-9)) + 1;
  const double half = 0.5 * cfg.grid_resolution * (n - 1);
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(static_cast<std::size_t>(n * n));
  for (int row = 0; row < n; ++row) {
    const double y = -half + row * cfg.grid_resolution;
    for (int k = 0; k < n; ++k) {
      const int col = row % 2 == 0 ? k : n - 1 - k;
      pts.emplace_back(-half + col * cfg.grid_resolution, y);
    }
  }
  return pts;
}

namespace {

using sim::Phase;

// Budgeted access to one world plus the motion primitives every policy
// shares. Positions are tip positions in the hole frame; the policies only
// ever use them relative to the believed target, never the true hole axis.
class Agent {
 public:
  Agent(sim::World& w, const StrategyConfig& cfg, sim::TraceSink* trace)
      : w_(w), cfg_(cfg), trace_(trace), start_(w.steps) {}

  std::size_t used() const { return w_.steps - start_; }
  bool spent() const { return used() >= cfg_.budget; }
  bool engaged() const { return w_.joint.phase != Phase::Free; }
  bool fixed() const { return w_.joint.phase == Phase::Fixed; }
  Vec3 tip() const { return w_.body.tip(); }
  Eigen::Vector2d believed_axis() const { return w_.nominal.apply(w_.body.tip_offset).head<2>(); }
  const sim::World& world() const { return w_; }

  sim::ContactReading act(const sim::Command& c) {
    if (spent()) return {};
    last_ = sim::step_sim(w_, c, trace_);
    return last_;
  }

  sim::ContactReading press() { return act(sim::Press{w_.caps.translation}); }

  // Press until the body is stopped (force reading) or engages.
  sim::ContactReading press_until_blocked() {
    sim::ContactReading r;
    while (!spent() && !engaged()) {
      r = press();
      if (r.in_contact()) break;
    }
    return r;
  }

  // Straight lateral move; returns false when a surface stops it.
  bool move_lateral(const Eigen::Vector2d& to) {
    while (!spent() && !engaged()) {
      const Eigen::Vector2d delta = to - tip().head<2>();
      const double dist = delta.norm();
      if (dist <= 1e-12) return true;
      const double step = std::min(dist, w_.caps.translation);
      const auto r = act(sim::Translate{Vec3(delta.x() / dist * step, delta.y() / dist * step, 0.0)});
      if (r.in_contact()) return false;
    }
    return engaged();
  }

  // Lift by `hover` and move; lift again whenever the move is stopped.
  void reposition(const Eigen::Vector2d& to, int max_lifts = 6) {
    for (int i = 0; i < max_lifts && !spent() && !engaged(); ++i) {
      act(sim::Translate{Vec3(0.0, 0.0, cfg_.hover)});
      if (move_lateral(to)) return;
    }
  }

  // Drives an engaged joint to Fixed.
  void complete() {
    while (!spent() && engaged() && !fixed()) {
      if (w_.type != ConnectorType::Screw) {
        press();
        continue;
      }
      if (w_.joint.phase == Phase::Tightening) {
        act(sim::Rotate{Vec3::UnitZ(), w_.caps.rotation});
        continue;
      }
      // Turn a few increments, then take up the freed travel.
      for (int k = 0; k < kTurnsPerPress && !spent() && w_.joint.phase == Phase::AxisConstrained; ++k)
        act(sim::Rotate{Vec3::UnitZ(), w_.caps.rotation});
      if (w_.joint.phase == Phase::AxisConstrained) press();
    }
  }

  bool done() const { return fixed() || spent(); }

 private:
  static constexpr int kTurnsPerPress = 8;
  sim::World& w_;
  const StrategyConfig& cfg_;
  sim::TraceSink* trace_;
  std::size_t start_;
  sim::ContactReading last_;
};

TrialReport finish(const sim::World& w, const StrategyConfig& cfg, const Agent& agent, std::uint64_t seed) {
  TrialReport r;
  r.op_id = w.op_id;
  r.strategy = cfg.kind;
  r.seed = seed;
  r.steps_used = agent.used();
  r.rotation_error = sim::rotation_error(w, w.target);
  r.translation_error = sim::translation_error(w, w.target);
  r.final_phase = w.joint.phase;
  r.success = sim::check_success(w, w.target);
  r.outcome = r.success ? Outcome::Success : agent.spent() ? Outcome::BudgetExhausted : Outcome::GeometricFailure;
  return r;
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Press until the tip stops descending for `stall_steps` presses in a row.
void descend_until_stall(Agent& a, const StrategyConfig& cfg) {
  int still = 0;
  while (!a.spent() && !a.engaged() && still < cfg.stall_steps) {
    const double z = a.tip().z();
    a.press();
    still = z - a.tip().z() < cfg.stall_descent ? still + 1 : 0;
  }
}

// Lands the tip at one lateral location: reposition, then press until stopped.
sim::ContactReading probe(Agent& a, const Eigen::Vector2d& at, bool first) {
  if (first) a.move_lateral(at);
  else a.reposition(at);
  return a.press_until_blocked();
}

}  // namespace

TrialReport run_random_search(sim::World& world, const StrategyConfig& cfg, std::uint64_t seed,
                              sim::TraceSink* trace) {
  cfg.check();
  Agent a(world, cfg, trace);
  std::mt19937_64 rng(seed ^ 0x52414e444f4dULL);
  descend_until_stall(a, cfg);
  const Eigen::Vector2d centre = a.tip().head<2>();
  while (!a.spent() && !a.engaged()) {
    const double r = cfg.perturb_radius * std::sqrt(unit(rng));
    const double phi = 2.0 * M_PI * unit(rng);
    a.move_lateral(centre + r * Eigen::Vector2d(std::cos(phi), std::sin(phi)));
    if (!a.engaged()) a.press();
  }
  a.complete();
  return finish(world, cfg, a, seed);
}

namespace {

// Shared coarse search. `on_contact` may take over after a probe; it returns
// true when the body is engaged.
template <class OnContact>
void grid_search(Agent& a, const StrategyConfig& cfg, OnContact&& on_contact) {
  const Eigen::Vector2d centre = a.believed_axis();
  bool first = true;
  for (const auto& offset : grid_points(cfg)) {
    if (a.spent() || a.engaged()) return;
    if (on_contact(probe(a, centre + offset, first)) || a.engaged()) return;
    first = false;
  }
}

// A probe that stops below the surface it started on sits in a recess.
constexpr double kRecessDepth = 1e-6;

// Jam clearing from position alone: try a ring of small offsets around the
// current landing point and keep the first that lets the press sink deeper.
bool sink_by_perturbation(Agent& a, const StrategyConfig& cfg) {
  if (a.tip().z() > -kRecessDepth) return a.engaged();
  bool improved = true;
  while (improved && !a.spent() && !a.engaged()) {
    improved = false;
    const Eigen::Vector2d here = a.tip().head<2>();
    const double depth = a.tip().z();
    for (int k = 0; k < cfg.micro_count && !a.spent() && !a.engaged(); ++k) {
      const double phi = 2.0 * M_PI * k / cfg.micro_count;
      probe(a, here + cfg.micro_radius * Eigen::Vector2d(std::cos(phi), std::sin(phi)), false);
      if (a.tip().z() < depth - kRecessDepth) {
        improved = true;
        break;
      }
    }
  }
  return a.engaged();
}

}  // namespace

TrialReport run_grid_search(sim::World& world, const StrategyConfig& cfg, std::uint64_t seed, sim::TraceSink* trace) {
  cfg.check();
  Agent a(world, cfg, trace);
  grid_search(a, cfg, [&](const sim::ContactReading&) { return sink_by_perturbation(a, cfg); });
  a.complete();
  return finish(world, cfg, a, seed);
}

TrialReport run_hybrid(sim::World& world, const StrategyConfig& cfg, std::uint64_t seed, sim::TraceSink* trace) {
  cfg.check();
  Agent a(world, cfg, trace);
  // Fine phase: follow the lateral reaction, pressing after every correction.
  auto follow = [&](sim::ContactReading r) {
    while (!a.spent() && !a.engaged() && r.lateral().norm() > 0.0) {
      const Eigen::Vector2d shift = cfg.gain * r.lateral() * 1e-3;
      a.move_lateral(a.tip().head<2>() + shift);
      if (a.engaged()) break;
      r = a.press_until_blocked();
    }
    return a.engaged();
  };
  grid_search(a, cfg, follow);
  a.complete();
  return finish(world, cfg, a, seed);
}

TrialReport run_strategy(sim::World& world, const StrategyConfig& cfg, std::uint64_t seed, sim::TraceSink* trace) {
  switch (cfg.kind) {
    case Kind::RandomSearch:
      return run_random_search(world, cfg, seed, trace);
    case Kind::GridSearch:
      return run_grid_search(world, cfg, seed, trace);
    case Kind::ForcePositionHybrid:
      return run_hybrid(world, cfg, seed, trace);
  }
  throw std::invalid_argument("unknown strategy");
}

// --- benchmark ---------------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

TrialReport run_one(const std::vector<ConnectionOperation>& ops, std::size_t op_index, std::size_t trial,
                    const StrategyConfig& cfg, const AssemblyGraph& graph,
                    const std::map<PartId, RigidTransform>& solved, const BenchmarkOptions& opt,
                    const std::map<PartId, RigidTransform>* truth) {
  const std::uint64_t seed = trial_seed(opt.seed, op_index, trial);
  sim::World w = sim::init_trial(ops[op_index], graph, solved, seed, opt.setup, opt.scenarios, truth);
  TrialReport r = run_strategy(w, cfg, seed);
  r.task = graph.name;
  r.op_index = op_index;
  r.trial = trial;
  return r;
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t base, std::size_t op_index, std::size_t trial) {
  return splitmix(splitmix(splitmix(base) ^ static_cast<std::uint64_t>(op_index)) ^ static_cast<std::uint64_t>(trial));
}

BenchmarkResult run_benchmark(const AssemblyGraph& graph, const std::map<PartId, RigidTransform>& solved,
                              const BenchmarkOptions& opt, const std::map<PartId, RigidTransform>* truth) {
  for (const auto& s : opt.strategies) s.check();
  if (opt.trials_per_op < 0) throw std::invalid_argument("trials_per_op must be >= 0");
  const auto ops = plan_sequence(graph);

  struct Job {
    std::size_t op, strategy, trial;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < ops.size(); ++i)
    for (std::size_t s = 0; s < opt.strategies.size(); ++s)
      for (std::size_t t = 0; t < static_cast<std::size_t>(opt.trials_per_op); ++t) jobs.push_back({i, s, t});

  BenchmarkResult out;
  out.reports.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next++) < jobs.size();) {
      const Job& j = jobs[k];
      out.reports[k] = run_one(ops, j.op, j.trial, opt.strategies[j.strategy], graph, solved, opt, truth);
    }
  };
  const int threads = std::max(1, std::min<int>(opt.parallelism, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::stable_sort(out.reports.begin(), out.reports.end(), [](const TrialReport& a, const TrialReport& b) {
    return std::tie(a.op_index, a.strategy, a.trial) < std::tie(b.op_index, b.strategy, b.trial);
  });
  out.summary = summarize(out.reports);
  return out;
}

TrialReport replay(const TrialReport& report, const AssemblyGraph& graph,
                   const std::map<PartId, RigidTransform>& solved, const BenchmarkOptions& opt,
                   const std::map<PartId, RigidTransform>* truth) {
  const auto ops = plan_sequence(graph);
  if (report.op_index >= ops.size()) throw std::invalid_argument("report refers to an unknown operation");
  StrategyConfig cfg = default_config(report.strategy);
  for (const auto& s : opt.strategies)
    if (s.kind == report.strategy) cfg = s;
  return run_one(ops, report.op_index, report.trial, cfg, graph, solved, opt, truth);
}

std::vector<SummaryRow> summarize(const std::vector<TrialReport>& reports) {
  std::map<std::pair<std::string, Kind>, std::pair<std::size_t, std::size_t>> acc;
  for (const auto& r : reports) {
    auto& [n, ok] = acc[{r.task, r.strategy}];
    ++n;
    ok += r.success ? 1 : 0;
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, v] : acc)
    rows.push_back({key.first, key.second, v.first, static_cast<double>(v.second) / static_cast<double>(v.first)});
  return rows;
}

std::string report_to_json(const TrialReport& r) {
  json j = {{"task", r.task},
            {"op", r.op_id},
            {"op_index", r.op_index},
            {"strategy", to_string(r.strategy)},
            {"seed", r.seed},
            {"trial", r.trial},
            {"success", r.success},
            {"outcome", to_string(r.outcome)},
            {"steps_used", r.steps_used},
            {"rotation_error", r.rotation_error},
            {"translation_error", r.translation_error},
            {"final_phase", sim::to_string(r.final_phase)}};
  return j.dump();
}

TrialReport report_from_json(std::string_view line) {
  const json j = detail::parse_json(line, "report");
  TrialReport r;
  r.task = detail::get<std::string>(j, "task", "");
  r.op_id = detail::get<std::string>(j, "op", "");
  r.op_index = detail::get<std::size_t>(j, "op_index", "");
  const auto kind = detail::get<std::string>(j, "strategy", "");
  auto k = kind_from_string(kind);
  if (!k) throw SchemaError("unknown strategy \"" + kind + "\"", "strategy");
  r.strategy = *k;
  r.seed = detail::get<std::uint64_t>(j, "seed", "");
  r.trial = detail::get<std::size_t>(j, "trial", "");
  r.success = detail::get<bool>(j, "success", "");
  const auto outcome = detail::get<std::string>(j, "outcome", "");
  bool known = false;
  for (auto o : {Outcome::Success, Outcome::BudgetExhausted, Outcome::GeometricFailure})
    if (to_string(o) == outcome) {
      r.outcome = o;
      known = true;
    }
  if (!known) throw SchemaError("unknown outcome \"" + outcome + "\"", "outcome");
  r.steps_used = detail::get<std::size_t>(j, "steps_used", "");
  r.rotation_error = detail::get<double>(j, "rotation_error", "");
  r.translation_error = detail::get<double>(j, "translation_error", "");
  const auto phase = detail::get<std::string>(j, "final_phase", "");
  known = false;
  for (auto p : {Phase::Free, Phase::AxisConstrained, Phase::Tightening, Phase::Fixed})
    if (sim::to_string(p) == phase) {
      r.final_phase = p;
      known = true;
    }
  if (!known) throw SchemaError("unknown phase \"" + phase + "\"", "final_phase");
  return r;
}

std::vector<TrialReport> load_reports(std::string_view jsonl) {
  std::vector<TrialReport> out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    ++lineno;
    const auto line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(report_from_json(line));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), "results", lineno);
    }
  }
  return out;
}

namespace {

struct Table {
  std::vector<std::string> tasks;
  std::vector<Kind> kinds;
  std::map<std::pair<Kind, std::string>, double> cell;
};

Table tabulate(const std::vector<SummaryRow>& rows) {
  Table t;
  std::set<Kind> kinds;
  for (const auto& r : rows) {
    if (std::find(t.tasks.begin(), t.tasks.end(), r.task) == t.tasks.end()) t.tasks.push_back(r.task);
    kinds.insert(r.strategy);
    t.cell[{r.strategy, r.task}] = r.mean_success;
  }
  t.kinds.assign(kinds.begin(), kinds.end());
  return t;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

}  // namespace

std::string summary_text(const std::vector<SummaryRow>& rows) {
  const Table t = tabulate(rows);
  std::size_t first = 8;
  std::vector<std::size_t> width;
  for (const auto& task : t.tasks) width.push_back(std::max<std::size_t>(task.size(), 5));
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(first)) << "strategy";
  for (std::size_t i = 0; i < t.tasks.size(); ++i) os << "  " << std::right << std::setw(static_cast<int>(width[i])) << t.tasks[i];
  os << "\n";
  for (Kind k : t.kinds) {
    os << std::left << std::setw(static_cast<int>(first)) << to_string(k);
    for (std::size_t i = 0; i < t.tasks.size(); ++i) {
      auto it = t.cell.find({k, t.tasks[i]});
      os << "  " << std::right << std::setw(static_cast<int>(width[i])) << (it == t.cell.end() ? "-" : fmt(it->second));
    }
    os << "\n";
  }
  return os.str();
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  const Table t = tabulate(rows);
  std::ostringstream os;
  os << "strategy";
  for (const auto& task : t.tasks) os << "," << task;
  os << "\n";
  for (Kind k : t.kinds) {
    os << to_string(k);
    for (const auto& task : t.tasks) {
      auto it = t.cell.find({k, task});
      os << "," << (it == t.cell.end() ? "" : fmt(it->second));
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace connkit::strategy
