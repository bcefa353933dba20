#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "connkit/error.hpp"
#include "connkit/strategy.hpp"
#include "support.hpp"

using namespace connkit;
using namespace connkit::strategy;

namespace {

// True hole axis at the origin; the planner believes it sits at `off`.
sim::World offset_world(ConnectorType type, const Eigen::Vector2d& off) {
  const sim::HoleSpec hole = sim::default_hole(type);
  sim::TrialSetup setup;
  setup.lateral_perturbation = 0.0;
  sim::World w = sim::init_trial(type, hole, RigidTransform{}, Vec3(0, 0, -hole.depth), 1, setup);
  w.nominal.translation += Vec3(off.x(), off.y(), 0.0);
  w.body.pose.translation += Vec3(off.x(), off.y(), 0.0);
  return w;
}

TrialReport run(Kind k, ConnectorType type, const Eigen::Vector2d& off, std::uint64_t seed = 1) {
  sim::World w = offset_world(type, off);
  return run_strategy(w, default_config(k), seed);
}

}  // namespace

TEST_SUITE("strategy") {
  TEST_CASE("names") {
    for (auto k : {Kind::RandomSearch, Kind::GridSearch, Kind::ForcePositionHybrid})
      CHECK(kind_from_string(to_string(k)) == k);
    CHECK_FALSE(kind_from_string("spiral").has_value());
    CHECK(to_string(Outcome::BudgetExhausted) == "budget_exhausted");
  }

  TEST_CASE("config checks") {
    StrategyConfig c;
    CHECK_NOTHROW(c.check());
    c.grid_resolution = 0.0;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    c = StrategyConfig{};
    c.grid_side = 0.001;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    c = StrategyConfig{};
    c.budget = 0;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    c = StrategyConfig{};
    c.gain = -1.0;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
  }

  TEST_CASE("grid lattice is a serpentine over the square") {
    const auto pts = grid_points(StrategyConfig{});
    REQUIRE(pts.size() == 36);
    const double xs[] = {-0.005, -0.003, -0.001, 0.001, 0.003, 0.005};
    for (int row = 0; row < 6; ++row)
      for (int k = 0; k < 6; ++k) {
        const auto& p = pts[static_cast<std::size_t>(row * 6 + k)];
        CHECK(p.y() == doctest::Approx(xs[row]));
        CHECK(p.x() == doctest::Approx(xs[row % 2 == 0 ? k : 5 - k]));
      }
    // Consecutive points are one lattice step apart.
    for (std::size_t i = 1; i < pts.size(); ++i) CHECK((pts[i] - pts[i - 1]).norm() == doctest::Approx(0.002));

    StrategyConfig c;
    c.grid_side = 0.004;
    c.grid_resolution = 0.004;
    CHECK(grid_points(c).size() == 4);
    c.grid_side = 0.003;
    c.grid_resolution = 0.002;
    CHECK(grid_points(c).size() == 4);
  }

  TEST_CASE("every strategy seats a perfectly placed peg") {
    for (auto k : {Kind::RandomSearch, Kind::GridSearch, Kind::ForcePositionHybrid})
      for (auto t : {ConnectorType::MortiseTenon, ConnectorType::Dowel, ConnectorType::Screw}) {
        CAPTURE(to_string(k));
        CAPTURE(to_string(t));
        const TrialReport r = run(k, t, Eigen::Vector2d::Zero());
        CHECK(r.success);
        CHECK(r.outcome == Outcome::Success);
        CHECK(r.final_phase == sim::Phase::Fixed);
      }
  }

  TEST_CASE("grid covers offsets inside its square and not beyond") {
    for (double x : {-0.005, -0.003, -0.0015, 0.0, 0.001, 0.0025, 0.004, 0.005})
      for (double y : {-0.004, 0.0, 0.002, 0.005}) {
        CAPTURE(x);
        CAPTURE(y);
        CHECK(run(Kind::GridSearch, ConnectorType::Dowel, Eigen::Vector2d(x, y)).success);
      }
    const TrialReport far = run(Kind::GridSearch, ConnectorType::Dowel, Eigen::Vector2d(0.008, 0.0));
    CHECK_FALSE(far.success);
    CHECK(far.final_phase == sim::Phase::Free);
  }

  TEST_CASE("random dithering cannot cross a 3 mm error") {
    StrategyConfig cfg = default_config(Kind::RandomSearch);
    cfg.perturb_radius = 0.001;
    int wins = 0;
    const int n = 300;
    for (int seed = 0; seed < n; ++seed) {
      sim::World w = offset_world(ConnectorType::Dowel, Eigen::Vector2d(0.003, 0.0));
      wins += run_random_search(w, cfg, static_cast<std::uint64_t>(seed)).success ? 1 : 0;
    }
    CHECK(static_cast<double>(wins) / n < 0.1);
  }

  TEST_CASE("random dithering finds a hole it nearly hits") {
    int wins = 0;
    for (int seed = 0; seed < 50; ++seed)
      wins += run(Kind::RandomSearch, ConnectorType::Dowel, Eigen::Vector2d(0.0006, 0.0), static_cast<std::uint64_t>(seed))
                  .success;
    CHECK(wins > 40);
  }

  TEST_CASE("force feedback beats the grid on chamfer contact") {
    const Eigen::Vector2d off(0.0018, -0.0009);
    const TrialReport h = run(Kind::ForcePositionHybrid, ConnectorType::Dowel, off);
    const TrialReport g = run(Kind::GridSearch, ConnectorType::Dowel, off);
    CHECK(h.success);
    CHECK(g.success);
    CHECK(h.steps_used < g.steps_used);
  }

  TEST_CASE("hybrid tightens screws") {
    sim::World w = offset_world(ConnectorType::Screw, Eigen::Vector2d(0.001, 0.001));
    const TrialReport r = run_hybrid(w, default_config(Kind::ForcePositionHybrid), 3);
    CHECK(r.success);
    CHECK(w.joint.tightening_turns >= w.hole.final_turn);
    CHECK(w.joint.inserted_depth == doctest::Approx(w.hole.depth));
  }

  TEST_CASE("the step budget is a hard limit") {
    for (auto k : {Kind::RandomSearch, Kind::GridSearch, Kind::ForcePositionHybrid}) {
      StrategyConfig cfg = default_config(k);
      cfg.budget = 40;
      sim::World w = offset_world(ConnectorType::Dowel, Eigen::Vector2d(0.004, 0.0));
      const TrialReport r = run_strategy(w, cfg, 1);
      CHECK(r.steps_used <= 40);
      CHECK(w.steps <= 40);
      if (!r.success) CHECK(r.outcome == Outcome::BudgetExhausted);
    }
  }

  TEST_CASE("trial seeds") {
    CHECK(trial_seed(0, 0, 0) == trial_seed(0, 0, 0));
    std::set<std::uint64_t> seen;
    for (std::size_t op = 0; op < 20; ++op)
      for (std::size_t t = 0; t < 50; ++t) seen.insert(trial_seed(7, op, t));
    CHECK(seen.size() == 1000);
    CHECK(trial_seed(7, 1, 2) != trial_seed(8, 1, 2));
  }

  TEST_CASE("benchmark reports, replay and parallel determinism") {
    const AssemblyGraph g = test::fixture_graph("shoe_shelf");
    const auto solved = solve_graph_poses(g).parts;
    BenchmarkOptions opt;
    opt.strategies = {default_config(Kind::GridSearch), default_config(Kind::RandomSearch)};
    opt.trials_per_op = 2;
    opt.seed = 17;
    const BenchmarkResult a = run_benchmark(g, solved, opt);
    REQUIRE(a.reports.size() == 11 * 2 * 2);
    CHECK(a.reports[0].op_index == 0);
    CHECK(a.reports[0].strategy == Kind::RandomSearch);
    CHECK(a.reports.back().op_index == 10);
    CHECK(a.reports.back().strategy == Kind::GridSearch);
    CHECK(a.reports.back().trial == 1);
    REQUIRE(a.summary.size() == 2);
    CHECK(a.summary[0].trials == 22);

    opt.parallelism = 3;
    const BenchmarkResult b = run_benchmark(g, solved, opt);
    REQUIRE(b.reports.size() == a.reports.size());
    for (std::size_t i = 0; i < a.reports.size(); ++i) CHECK(report_to_json(a.reports[i]) == report_to_json(b.reports[i]));

    for (std::size_t i : {std::size_t{0}, std::size_t{7}, a.reports.size() - 1})
      CHECK(report_to_json(replay(a.reports[i], g, solved, opt)) == report_to_json(a.reports[i]));

    // Both strategies see the same initial perturbation for a given trial.
    CHECK(a.reports[0].seed == a.reports[2].seed);
  }

  TEST_CASE("zero perturbation seats every operation") {
    for (const auto& f : test::kFixtures) {
      CAPTURE(f.stem);
      const AssemblyGraph g = test::fixture_graph(f.stem);
      const auto solved = solve_graph_poses(g).parts;
      BenchmarkOptions opt;
      opt.strategies = {default_config(Kind::ForcePositionHybrid)};
      opt.trials_per_op = 1;
      opt.setup.lateral_perturbation = 0.0;
      const BenchmarkResult r = run_benchmark(g, solved, opt);
      CHECK(r.reports.size() == f.operations);
      for (const auto& rep : r.reports) CHECK(rep.success);
      CHECK(r.summary.at(0).mean_success == 1.0);
    }
  }

  TEST_CASE("report lines round trip") {
    TrialReport r;
    r.task = "Chair";
    r.op_id = "E5:9";
    r.op_index = 21;
    r.strategy = Kind::ForcePositionHybrid;
    r.seed = 0xFFFFFFFFFFFFFFFFULL;
    r.trial = 99;
    r.success = true;
    r.outcome = Outcome::Success;
    r.steps_used = 123;
    r.rotation_error = 1e-17;
    r.translation_error = 0.1 + 0.2;
    r.final_phase = sim::Phase::Fixed;
    const std::string line = report_to_json(r);
    CHECK(line.find('\n') == std::string::npos);
    const TrialReport back = report_from_json(line);
    CHECK(report_to_json(back) == line);
    CHECK(back.seed == r.seed);
    CHECK(back.translation_error == r.translation_error);

    const auto many = load_reports(line + "\n\n" + line + "\n");
    CHECK(many.size() == 2);
    CHECK_THROWS_AS(load_reports(line + "\n{broken\n"), ParseError);
    std::string bad = line;
    bad.replace(bad.find("hybrid"), 6, "spiral");
    CHECK_THROWS_AS(report_from_json(bad), SchemaError);
  }

  TEST_CASE("summary tables") {
    const std::vector<SummaryRow> rows = {{"Chair", Kind::GridSearch, 100, 0.5},
                                          {"Chair", Kind::ForcePositionHybrid, 100, 1.0},
                                          {"LEGO Person", Kind::GridSearch, 100, 0.25}};
    CHECK(summary_csv(rows) == "strategy,Chair,LEGO Person\ngrid,0.500,0.250\nhybrid,1.000,\n");
    const std::string text = summary_text(rows);
    CHECK(text.rfind("strategy", 0) == 0);
    CHECK(text.find("hybrid") != std::string::npos);
    CHECK(text.find("-") != std::string::npos);

    std::vector<TrialReport> reps(4);
    for (std::size_t i = 0; i < reps.size(); ++i) {
      reps[i].task = "T";
      reps[i].strategy = Kind::GridSearch;
      reps[i].success = i < 3;
    }
    const auto s = summarize(reps);
    REQUIRE(s.size() == 1);
    CHECK(s[0].mean_success == 0.75);
  }
}
