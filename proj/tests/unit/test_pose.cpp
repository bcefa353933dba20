#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "connkit/error.hpp"
#include "connkit/pose.hpp"
#include "support.hpp"

using namespace connkit;

namespace {

// Objective at rotation r with its optimal translation, written out from the
// definition rather than through the library.
double objective_at(const MatchedPairs& m, const Mat3& r) {
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (const auto& p : m.pairs) {
    ca += p.a.position;
    cb += p.b.position;
  }
  ca /= static_cast<double>(m.pairs.size());
  cb /= static_cast<double>(m.pairs.size());
  const Vec3 t = cb - r * ca;
  double f = 0.0;
  for (const auto& p : m.pairs)
    f += (r * p.a.position + t - p.b.position).squaredNorm() + m.alpha * (r * p.a.normal + p.b.normal).squaredNorm();
  return f;
}

}  // namespace

TEST_SUITE("pose") {
  TEST_CASE("generic k=3 recovers the ground truth") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
      const RigidTransform truth{test::random_rotation(rng), test::random_vec(rng, 0.5)};
      const MatchedPairs m = test::consistent_pairs(rng, truth, 3);
      const AlignmentResult r = solve_alignment(m);
      CHECK(geodesic_distance(r.transform.rotation, truth.rotation) < 1e-9);
      CHECK((r.transform.translation - truth.translation).norm() < 1e-9);
      CHECK(r.residual < 1e-18);
      CHECK(r.degeneracy == Degeneracy::Full);
      // Normals end up collinear and opposite.
      for (const auto& p : m.pairs) CHECK((r.transform.rotate(p.a.normal) + p.b.normal).norm() < 1e-9);
    }
  }

  TEST_CASE("identical frames give the identity") {
    MatchedPairs m;
    m.pairs.push_back({{Vec3(0.1, 0, 0), Vec3(0, 0, 1)}, {Vec3(0.1, 0, 0), Vec3(0, 0, -1)}});
    m.pairs.push_back({{Vec3(0, 0.2, 0), Vec3(1, 0, 0)}, {Vec3(0, 0.2, 0), Vec3(-1, 0, 0)}});
    const AlignmentResult r = solve_alignment(m);
    CHECK((r.transform.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK(r.transform.translation.norm() < 1e-12);
    CHECK(r.residual == doctest::Approx(0.0));
  }

  TEST_CASE("single pair with parallel normals flips about the lexicographic perpendicular") {
    MatchedPairs m;
    m.pairs.push_back({{Vec3(0.1, 0.2, 0.3), Vec3(0, 0, 1)}, {Vec3(0.5, 0.5, 0.5), Vec3(0, 0, 1)}});
    const AlignmentResult r = solve_alignment(m);
    CHECK(r.degeneracy == Degeneracy::AxisFree);
    const Mat3 expected = axis_angle(Vec3(-1, 0, 0), M_PI);
    CHECK((r.transform.rotation - expected).norm() < 1e-12);
    CHECK((r.transform.apply(m.pairs[0].a.position) - m.pairs[0].b.position).norm() < 1e-12);
    CHECK(r.residual < 1e-24);
    CHECK(r.transform.is_proper());
  }

  TEST_CASE("single pair with antiparallel normals keeps the orientation") {
    MatchedPairs m;
    m.pairs.push_back({{Vec3(0, 0, 0), Vec3(0, 1, 0)}, {Vec3(1, 2, 3), Vec3(0, -1, 0)}});
    const AlignmentResult r = solve_alignment(m);
    CHECK(r.degeneracy == Degeneracy::AxisFree);
    CHECK((r.transform.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK((r.transform.translation - Vec3(1, 2, 3)).norm() < 1e-12);
  }

  TEST_CASE("collinear points with a shared normal are planar") {
    MatchedPairs m;
    for (double x : {0.0, 0.1, 0.2})
      m.pairs.push_back({{Vec3(x, 0, 0), Vec3(0, 0, 1)}, {Vec3(x, 0, 0), Vec3(0, 0, -1)}});
    const AlignmentResult r = solve_alignment(m);
    CHECK(r.degeneracy == Degeneracy::Planar);
    CHECK((r.transform.rotation - Mat3::Identity()).norm() < 1e-12);
  }

  TEST_CASE("degenerate and malformed input") {
    MatchedPairs m;
    CHECK_THROWS_AS(solve_alignment(m), std::invalid_argument);
    m.alpha = 0.0;
    m.pairs.push_back({{Vec3(1, 1, 1), Vec3(0, 0, 1)}, {Vec3(2, 2, 2), Vec3(0, 0, -1)}});
    m.pairs.push_back({{Vec3(1, 1, 1), Vec3(0, 1, 0)}, {Vec3(2, 2, 2), Vec3(0, -1, 0)}});
    CHECK_THROWS_AS(solve_alignment(m), DegenerateInput);
    m.alpha = -1.0;
    CHECK_THROWS_AS(solve_alignment(m), std::invalid_argument);
  }

  TEST_CASE("residual is invariant under a common rigid motion") {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 100; ++i) {
      const RigidTransform truth{test::random_rotation(rng), test::random_vec(rng, 0.5)};
      MatchedPairs m = test::consistent_pairs(rng, truth, 4);
      for (auto& p : m.pairs) p.b.position += test::random_vec(rng, 0.01);
      const double before = solve_alignment(m).residual;
      const RigidTransform g{test::random_rotation(rng), test::random_vec(rng, 1.0)};
      MatchedPairs moved = m;
      for (auto& p : moved.pairs) {
        p.a.position = g.apply(p.a.position);
        p.a.normal = g.rotate(p.a.normal);
        p.b.position = g.apply(p.b.position);
        p.b.normal = g.rotate(p.b.normal);
      }
      CHECK(solve_alignment(moved).residual == doctest::Approx(before).epsilon(1e-9).scale(1e-12));
    }
  }

  TEST_CASE("residual grows with feature noise") {
    std::mt19937_64 rng(13);
    double last = 0.0;
    for (double sigma : {0.0, 1e-4, 1e-3, 1e-2}) {
      double mean = 0.0;
      for (int i = 0; i < 200; ++i) {
        const RigidTransform truth{test::random_rotation(rng), test::random_vec(rng, 0.5)};
        MatchedPairs m = test::consistent_pairs(rng, truth, 5);
        std::normal_distribution<double> n(0.0, sigma > 0 ? sigma : 1.0);
        if (sigma > 0)
          for (auto& p : m.pairs) p.b.position += Vec3(n(rng), n(rng), n(rng));
        mean += solve_alignment(m).residual / 200.0;
      }
      if (sigma == 0.0)
        CHECK(mean < 1e-20);
      else
        CHECK(mean > last);
      last = mean;
    }
  }

  TEST_CASE("no sampled rotation beats the solver") {
    std::mt19937_64 rng(14);
    for (int k = 1; k <= 6; ++k) {
      for (int inst = 0; inst < 3; ++inst) {
        const RigidTransform truth{test::random_rotation(rng), test::random_vec(rng, 0.3)};
        MatchedPairs m = test::consistent_pairs(rng, truth, k);
        for (auto& p : m.pairs) {
          p.b.position += test::random_vec(rng, 0.05);
          p.b.normal = (p.b.normal + test::random_vec(rng, 0.3)).normalized();
        }
        const AlignmentResult r = solve_alignment(m);
        CHECK(r.residual == doctest::Approx(alignment_objective(m, r.transform)));
        CHECK(r.transform.is_proper());
        double best = INFINITY;
        for (int s = 0; s < 20000; ++s) best = std::min(best, objective_at(m, test::random_rotation(rng)));
        CHECK(best >= r.residual - 1e-9);
      }
    }
  }

  TEST_CASE("metrics of a perfect prediction") {
    const std::vector<RigidTransform> poses{RigidTransform{}, RigidTransform{axis_angle(Vec3::UnitX(), 0.4), Vec3(1, 0, 0)}};
    const std::vector<std::vector<Vec3>> clouds{{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)},
                                                {Vec3(0, 0, 1), Vec3(1, 1, 0), Vec3(0, 1, 1)}};
    const PoseMetrics m = pose_metrics(poses, poses, clouds);
    CHECK(m.gd == 0.0);
    CHECK(m.rmse == 0.0);
    CHECK(m.cd == 0.0);
    CHECK(m.pa == 1.0);
  }

  TEST_CASE("quarter turn on one of two parts") {
    // Part 0 is off by a quarter turn about z, part 1 is exact:
    // GD = (pi/2 + 0) / 2 = pi/4 and only part 1 is accurate.
    const std::vector<RigidTransform> truth{RigidTransform{}, RigidTransform{}};
    const std::vector<RigidTransform> pred{RigidTransform{axis_angle(Vec3::UnitZ(), M_PI / 2), Vec3::Zero()},
                                           RigidTransform{}};
    const std::vector<Vec3> square{Vec3(0.1, 0, 0), Vec3(0, 0.2, 0), Vec3(-0.1, 0, 0), Vec3(0, -0.2, 0)};
    const PoseMetrics m = pose_metrics(pred, truth, {square, square}, 0.01);
    CHECK(std::abs(m.gd - M_PI / 4) < 1e-12);
    CHECK(m.pa == 0.5);
    // Hand counts for part 0: each point moves to its quarter-turned image.
    // RMSE: |(0.1,0)->(0,0.1)| = 0.1*sqrt2, |(0,0.2)->(-0.2,0)| = 0.2*sqrt2.
    const double rmse0 = std::sqrt((2 * 0.02 + 2 * 0.08) / 4.0);
    CHECK(m.rmse == doctest::Approx(rmse0 / 2).epsilon(1e-12));
  }

  TEST_CASE("metric argument checks") {
    const std::vector<Vec3> tri{Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()};
    CHECK_THROWS_AS(pose_metrics({RigidTransform{}}, {}, {tri}), LengthMismatch);
    CHECK_THROWS_AS(pose_metrics({RigidTransform{}}, {RigidTransform{}}, {{Vec3::Zero(), Vec3::UnitX()}}),
                    std::invalid_argument);
  }

  TEST_CASE("chamfer distance by hand") {
    const std::vector<Vec3> p{Vec3(0, 0, 0), Vec3(1, 0, 0)};
    const std::vector<Vec3> q{Vec3(0, 0, 0), Vec3(3, 0, 0)};
    // p->q: 0 and 1 (mean 0.5); q->p: 0 and 2 (mean 1); symmetric mean 0.75.
    CHECK(chamfer_distance(p, q) == doctest::Approx(0.75));
    CHECK(chamfer_distance(q, p) == doctest::Approx(0.75));
  }

  TEST_CASE("fixture poses match the ground truth exactly") {
    for (const auto& f : test::kFixtures) {
      CAPTURE(f.stem);
      const AssemblyGraph g = test::fixture_graph(f.stem);
      const GraphPoses solved = solve_graph_poses(g);
      const auto truth = test::fixture_truth(f.stem);
      REQUIRE(solved.parts.size() == truth.size());
      for (const auto& [id, t] : truth) {
        CAPTURE(id.str());
        const RigidTransform& s = solved.parts.at(id);
        CHECK(geodesic_distance(s.rotation, t.rotation) < 1e-9);
        CHECK((s.translation - t.translation).norm() < 1e-9);
      }
      CHECK(solved.edges.size() == g.step_order.size());
      for (const auto& e : solved.edges) CHECK(e.result.residual < 1e-18);
    }
  }

  TEST_CASE("single edge solve and pose file round trip") {
    const AssemblyGraph g = test::fixture_graph("chair");
    const AlignmentResult r = solve_edge(g, "E3");
    CHECK(r.residual < 1e-18);
    CHECK(r.transform.is_proper());
    CHECK_THROWS(solve_edge(g, "E99"));

    const GraphPoses solved = solve_graph_poses(g);
    const auto back = load_poses(save_poses(solved, g.name, 1.0));
    REQUIRE(back.size() == solved.parts.size());
    for (const auto& [id, t] : solved.parts) CHECK(back.at(id) == t);
  }
}
