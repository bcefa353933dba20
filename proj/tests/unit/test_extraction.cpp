#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "connkit/error.hpp"
#include "connkit/extraction.hpp"
#include "support.hpp"

using namespace connkit;

namespace {

PointPair pp(const char* a, const char* b, ConnectorType t = ConnectorType::Dowel) {
  return PointPair(PointId(a), PointId(b), t);
}

// Two components with two candidates each, truth (A1,B1) and (A2,B2).
ExtractionStep two_by_two(int connectors) {
  ExtractionStep s;
  s.step_index = 1;
  s.components.push_back({NodeId("A"), "A", "a.png", {PointId("A1"), PointId("A2")}});
  s.components.push_back({NodeId("B"), "B", "b.png", {PointId("B1"), PointId("B2")}});
  s.connector_budget[ConnectorType::Dowel] = connectors;
  s.truth_pairs = {pp("A1", "B1")};
  if (connectors == 2) s.truth_pairs.push_back(pp("A2", "B2"));
  return s;
}

}  // namespace

TEST_SUITE("extraction") {
  TEST_CASE("pairs are normalized") {
    const PointPair p = pp("5E", "1B");
    CHECK(p.a.str() == "1B");
    CHECK(p.b.str() == "5E");
    CHECK(p == pp("1B", "5E"));
  }

  TEST_CASE("hand-counted F1") {
    ExtractionStep t;
    t.truth_pairs = {pp("1A", "2A"), pp("1B", "2B")};
    StepPrediction p;
    // One hit, one miss: TP 1, FP 1, FN 1 -> 2/4.
    p.pairs = {pp("1A", "2A"), pp("1B", "2C")};
    ExtractionScore s = score_step(p, t);
    CHECK(s.pair_f1 == doctest::Approx(0.5));
    CHECK(s.pair_success == 0.0);
    // Point sets {1A,2A,1B,2C} vs {1A,2A,1B,2B}: TP 3, FP 1, FN 1 -> 6/8.
    CHECK(s.set_f1 == doctest::Approx(0.75));
    CHECK(s.set_success == 0.0);

    // Swapped partners: every point is right, no pair is.
    p.pairs = {pp("1A", "2B"), pp("1B", "2A")};
    s = score_step(p, t);
    CHECK(s.pair_f1 == 0.0);
    CHECK(s.set_f1 == 1.0);
    CHECK(s.set_success == 1.0);
  }

  TEST_CASE("connector type matters unless disabled") {
    ExtractionStep t;
    t.truth_pairs = {pp("1A", "2A", ConnectorType::Screw)};
    StepPrediction p;
    p.pairs = {pp("2A", "1A", ConnectorType::Dowel)};
    CHECK(score_step(p, t).pair_f1 == 0.0);
    CHECK(score_step(p, t, ScoreOptions{false}).pair_f1 == 1.0);
  }

  TEST_CASE("empty prediction and empty truth") {
    ExtractionStep t;
    StepPrediction p;
    const ExtractionScore s = score_step(p, t);
    CHECK(s.pair_f1 == 1.0);
    CHECK(s.set_success == 1.0);
    t.truth_pairs = {pp("1A", "2A")};
    CHECK(score_step(p, t).pair_f1 == 0.0);
  }

  TEST_CASE("F1 is symmetric in prediction and truth") {
    std::mt19937_64 rng(21);
    const char* ids[] = {"1A", "1B", "1C", "2A", "2B", "2C"};
    for (int i = 0; i < 200; ++i) {
      ExtractionStep t;
      StepPrediction p;
      for (int k = 0; k < 3; ++k) {
        t.truth_pairs.push_back(pp(ids[rng() % 3], ids[3 + rng() % 3]));
        p.pairs.push_back(pp(ids[rng() % 3], ids[3 + rng() % 3]));
      }
      ExtractionStep t2;
      t2.truth_pairs = p.pairs;
      StepPrediction p2;
      p2.pairs = t.truth_pairs;
      CHECK(score_step(p, t).pair_f1 == doctest::Approx(score_step(p2, t2).pair_f1));
      CHECK(score_step(p, t).set_f1 == doctest::Approx(score_step(p2, t2).set_f1));
    }
  }

  TEST_CASE("step mismatch") {
    ExtractionStep t;
    t.step_index = 2;
    StepPrediction p;
    p.step_index = 3;
    CHECK_THROWS_AS(score_step(p, t), StepMismatch);
  }

  TEST_CASE("dataset mean with half the steps perfect") {
    const ExtractionDataset ds = derive_dataset(test::fixture_graph("shoe_shelf"));
    std::vector<StepPrediction> preds;
    for (std::size_t i = 0; i < ds.steps.size(); i += 2) {
      StepPrediction p;
      p.step_index = ds.steps[i].step_index;
      p.pairs = ds.steps[i].truth_pairs;
      preds.push_back(p);
    }
    const DatasetScore s = score_dataset(preds, ds);
    REQUIRE(s.per_step.size() == ds.steps.size());
    const double expected = static_cast<double>((ds.steps.size() + 1) / 2) / static_cast<double>(ds.steps.size());
    CHECK(s.mean.pair_f1 == doctest::Approx(expected));
    CHECK(s.mean.pair_success == doctest::Approx(expected));
  }

  TEST_CASE("random baseline on one connector over a 2x2 step") {
    // Four equally likely pairs, one of them right.
    const ExtractionStep s = two_by_two(1);
    std::map<std::pair<std::string, std::string>, int> seen;
    double hits = 0;
    const int n = 10000;
    for (int seed = 0; seed < n; ++seed) {
      const StepPrediction p = random_baseline(s, static_cast<std::uint64_t>(seed));
      REQUIRE(p.pairs.size() == 1);
      seen[{p.pairs[0].a.str(), p.pairs[0].b.str()}]++;
      hits += score_step(p, s).pair_success;
    }
    CHECK(seen.size() == 4);
    const double se = std::sqrt(0.25 * 0.75 / n);
    CHECK(std::abs(hits / n - 0.25) < 3 * se);
  }

  TEST_CASE("random baseline on two connectors over a 2x2 step") {
    // Two perfect matchings, equally likely; every outcome uses all points.
    const ExtractionStep s = two_by_two(2);
    double hits = 0;
    const int n = 10000;
    for (int seed = 0; seed < n; ++seed) {
      const StepPrediction p = random_baseline(s, static_cast<std::uint64_t>(seed));
      const ExtractionScore sc = score_step(p, s);
      CHECK(sc.set_success == 1.0);
      hits += sc.pair_success;
    }
    const double se = std::sqrt(0.25 / n);
    CHECK(std::abs(hits / n - 0.5) < 3 * se);
  }

  TEST_CASE("random baseline is deterministic and respects the budget") {
    const ExtractionDataset ds = derive_dataset(test::fixture_graph("chair"));
    for (const auto& step : ds.steps) {
      const StepPrediction a = random_baseline(step, 42), b = random_baseline(step, 42);
      CHECK(a.pairs == b.pairs);
      std::size_t budget = 0;
      for (const auto& [t, c] : step.connector_budget) budget += static_cast<std::size_t>(c);
      CHECK(a.pairs.size() == budget);
      std::set<PointId> used;
      for (const auto& p : a.pairs) {
        CHECK(used.insert(p.a).second);
        CHECK(used.insert(p.b).second);
      }
    }
  }

  TEST_CASE("random baseline edge cases") {
    ExtractionStep s = two_by_two(1);
    s.connector_budget.clear();
    CHECK(random_baseline(s, 1).pairs.empty());
    s.connector_budget[ConnectorType::Dowel] = 3;
    CHECK_THROWS_AS(random_baseline(s, 1), InsufficientCandidates);
  }

  TEST_CASE("derived chair dataset") {
    const AssemblyGraph g = test::fixture_graph("chair");
    const ExtractionDataset ds = derive_dataset(g);
    CHECK(ds.task == "Chair");
    REQUIRE(ds.steps.size() == g.step_order.size());
    const ExtractionStep& s1 = ds.steps[0];
    REQUIRE(s1.components.size() == 2);
    CHECK(s1.components[0].candidates.size() + s1.components[1].candidates.size() == 16);
    CHECK(s1.truth_pairs.size() == 2);
    CHECK(s1.connector_budget.at(ConnectorType::Dowel) == 2);
    CHECK(s1.components[0].image.rfind("assets/Chair/step1_", 0) == 0);

    // Candidates shrink as earlier steps consume points.
    std::size_t truth = 0;
    for (const auto& s : ds.steps) truth += s.truth_pairs.size();
    CHECK(truth == 22);

    // Every truth pair draws one point from each side.
    for (const auto& s : ds.steps)
      for (const auto& p : s.truth_pairs) {
        auto has = [&](const StepComponent& c, const PointId& id) {
          return std::find(c.candidates.begin(), c.candidates.end(), id) != c.candidates.end();
        };
        CHECK(((has(s.components[0], p.a) && has(s.components[1], p.b)) ||
               (has(s.components[0], p.b) && has(s.components[1], p.a))));
      }
  }

  TEST_CASE("dataset and prediction files round trip") {
    for (const auto& f : test::kFixtures) {
      const ExtractionDataset ds = derive_dataset(test::fixture_graph(f.stem));
      const ExtractionDataset back = load_dataset(save_dataset(ds));
      CHECK(back.task == ds.task);
      REQUIRE(back.steps.size() == ds.steps.size());
      for (std::size_t i = 0; i < ds.steps.size(); ++i) {
        CHECK(back.steps[i].truth_pairs == ds.steps[i].truth_pairs);
        CHECK(back.steps[i].connector_budget == ds.steps[i].connector_budget);
        CHECK(back.steps[i].components.size() == ds.steps[i].components.size());
      }
      CHECK(save_dataset(back) == save_dataset(ds));
    }
    std::vector<StepPrediction> preds(1);
    preds[0].pairs = {pp("1A", "2A", ConnectorType::Screw)};
    preds[0].flags = {"degraded"};
    const auto back = load_predictions(save_predictions(preds, "Chair"));
    REQUIRE(back.size() == 1);
    CHECK(back[0].pairs == preds[0].pairs);
    CHECK(back[0].flags == preds[0].flags);
  }

  TEST_CASE("stored datasets match the fixtures") {
    for (const auto& f : test::kFixtures) {
      const ExtractionDataset stored = load_dataset(test::slurp(test::data_path(std::string("datasets/") + f.stem + ".json")));
      const ExtractionDataset derived = derive_dataset(test::fixture_graph(f.stem));
      CHECK(save_dataset(stored) == save_dataset(derived));
      std::size_t n = 0;
      for (const auto& s : stored.steps) n += s.truth_pairs.size();
      CHECK(n == f.operations);
    }
  }
}
