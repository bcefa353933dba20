#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "connkit/graph.hpp"
#include "connkit/sim.hpp"

namespace connkit::strategy {

enum class Kind { RandomSearch, GridSearch, ForcePositionHybrid };

std::string_view to_string(Kind kind);  // "random", "grid", "hybrid"
std::optional<Kind> kind_from_string(std::string_view name);

struct StrategyConfig {
  Kind kind = Kind::GridSearch;
  std::size_t budget = 2000;       // sim steps
  double grid_side = 0.01;         // m
  double grid_resolution = 0.002;  // m
  double perturb_radius = 0.001;  // m, random-search dither radius
  double gain = 0.8;               // hybrid: mm of lateral correction per unit lateral force
  double micro_radius = 0.0005;    // m, jam-clearing ring tried around a recessed landing
  int micro_count = 8;             // points on that ring
  double hover = 0.001;            // m lifted before each lateral repositioning
  int stall_steps = 3;             // consecutive presses below stall_descent
  double stall_descent = 1e-6;     // m

  // Throws std::invalid_argument unless grid_side >= grid_resolution > 0 and budget > 0.
  void check() const;
};

StrategyConfig default_config(Kind kind);

// Lattice offsets (hole-frame x, y) relative to the grid centre, visited row
// by row from the (-,-) corner, alternating direction on every row.
std::vector<Eigen::Vector2d> grid_points(const StrategyConfig& cfg);

enum class Outcome { Success, BudgetExhausted, GeometricFailure };
std::string_view to_string(Outcome outcome);

struct TrialReport {
  std::string task;
  std::string op_id;
  std::size_t op_index = 0;
  Kind strategy = Kind::GridSearch;
  std::uint64_t seed = 0;
  std::size_t trial = 0;
  bool success = false;
  Outcome outcome = Outcome::GeometricFailure;
  std::size_t steps_used = 0;
  double rotation_error = 0.0;
  double translation_error = 0.0;
  sim::Phase final_phase = sim::Phase::Free;
};

// Each runner mutates `world` until success or the step budget runs out and
// reports the final state. `seed` drives any randomness in the policy.
TrialReport run_random_search(sim::World& world, const StrategyConfig& cfg, std::uint64_t seed,
                              sim::TraceSink* trace = nullptr);
TrialReport run_grid_search(sim::World& world, const StrategyConfig& cfg, std::uint64_t seed,
                            sim::TraceSink* trace = nullptr);
TrialReport run_hybrid(sim::World& world, const StrategyConfig& cfg, std::uint64_t seed,
                       sim::TraceSink* trace = nullptr);
TrialReport run_strategy(sim::World& world, const StrategyConfig& cfg, std::uint64_t seed,
                         sim::TraceSink* trace = nullptr);

struct BenchmarkOptions {
  std::vector<StrategyConfig> strategies;
  int trials_per_op = 100;
  std::uint64_t seed = 0;
  sim::TrialSetup setup;
  sim::ScenarioSet scenarios;
  int parallelism = 1;
};

struct SummaryRow {
  std::string task;
  Kind strategy = Kind::GridSearch;
  std::size_t trials = 0;
  double mean_success = 0.0;
};

struct BenchmarkResult {
  std::vector<TrialReport> reports;  // sorted by (op_index, strategy, trial)
  std::vector<SummaryRow> summary;
};

// Seed of one trial; shared by all strategies so they face the same
// initial perturbations.
std::uint64_t trial_seed(std::uint64_t base, std::size_t op_index, std::size_t trial);

BenchmarkResult run_benchmark(const AssemblyGraph& graph, const std::map<PartId, RigidTransform>& solved,
                              const BenchmarkOptions& opt, const std::map<PartId, RigidTransform>* truth = nullptr);

// Re-runs the trial a report came from.
TrialReport replay(const TrialReport& report, const AssemblyGraph& graph,
                   const std::map<PartId, RigidTransform>& solved, const BenchmarkOptions& opt,
                   const std::map<PartId, RigidTransform>* truth = nullptr);

// Mean success per (task, strategy); rows sorted by task then strategy.
std::vector<SummaryRow> summarize(const std::vector<TrialReport>& reports);

std::string report_to_json(const TrialReport& report);  // single line
TrialReport report_from_json(std::string_view line);
std::vector<TrialReport> load_reports(std::string_view jsonl);

// Strategies as rows, tasks as columns.
std::string summary_text(const std::vector<SummaryRow>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);

}  // namespace connkit::strategy
