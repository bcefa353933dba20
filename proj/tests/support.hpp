#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "connkit/geometry.hpp"
#include "connkit/graph.hpp"
#include "connkit/graph_io.hpp"
#include "connkit/pose.hpp"

namespace connkit::test {

inline std::filesystem::path data_path(const std::string& rel) { return std::filesystem::path(CONNKIT_DATA_DIR) / rel; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Fixture {
  const char* stem;
  const char* task;
  std::size_t operations;
};

// Step counts of the four benchmark tasks.
inline constexpr Fixture kFixtures[] = {
    {"shoe_shelf", "Shoe Shelf", 11},
    {"chair", "Chair", 22},
    {"lego_person", "LEGO Person", 8},
    {"plane_model", "Plane Model", 12},
};

inline AssemblyGraph fixture_graph(const std::string& stem) { return load_graph_file(data_path("graphs/" + stem + ".json")); }

inline std::map<PartId, RigidTransform> fixture_truth(const std::string& stem) {
  return load_poses(slurp(data_path("graphs/" + stem + ".truth.json")));
}

// Uniform rotation from a unit quaternion with Gaussian components.
inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

// k pairs consistent with the ground truth: x_b = R x_a + t, n_b = -R n_a.
inline MatchedPairs consistent_pairs(std::mt19937_64& rng, const RigidTransform& truth, int k, double alpha = 1.0) {
  MatchedPairs m;
  m.alpha = alpha;
  for (int i = 0; i < k; ++i) {
    FeaturePair p;
    p.a.position = random_vec(rng, 0.2);
    p.a.normal = random_unit(rng);
    p.b.position = truth.apply(p.a.position);
    p.b.normal = -truth.rotate(p.a.normal);
    m.pairs.push_back(p);
  }
  return m;
}

}  // namespace connkit::test
