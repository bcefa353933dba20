#include "connkit/pose.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/SVD>

#include "connkit/error.hpp"
#include "json_util.hpp"

namespace connkit {

std::string_view to_string(Degeneracy d) {
  switch (d) {
    case Degeneracy::Full:
      return "full";
    case Degeneracy::Planar:
      return "planar";
    case Degeneracy::AxisFree:
      return "axis_free";
  }
  return "unknown";
}

double alignment_objective(const MatchedPairs& m, const RigidTransform& tf) {
  double sum = 0.0;
  for (const auto& p : m.pairs) {
    sum += (tf.apply(p.a.position) - p.b.position).squaredNorm();
    sum += m.alpha * (tf.rotate(p.a.normal) + p.b.normal).squaredNorm();
  }
  return sum;
}

namespace {

constexpr double kNormalTol = 1e-9;
// Singular values below this fraction of the largest count as zero.
constexpr double kRankTol = 1e-10;

void check_input(const MatchedPairs& m) {
  if (m.pairs.empty()) throw std::invalid_argument("solve_alignment: at least one feature pair is required");
  if (!(m.alpha >= 0.0) || !std::isfinite(m.alpha)) throw std::invalid_argument("solve_alignment: alpha must be >= 0");
  for (const auto& p : m.pairs) {
    for (const auto* f : {&p.a, &p.b}) {
      if (!f->position.allFinite() || !f->normal.allFinite())
        throw std::invalid_argument("solve_alignment: non-finite feature");
      if (std::abs(f->normal.norm() - 1.0) > kNormalTol)
        throw std::invalid_argument("solve_alignment: normals must be unit length");
    }
  }
}

}  // namespace

AlignmentResult solve_alignment(const MatchedPairs& m) {
  check_input(m);
  const double k = static_cast<double>(m.pairs.size());
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (const auto& p : m.pairs) {
    ca += p.a.position;
    cb += p.b.position;
  }
  ca /= k;
  cb /= k;

  Mat3 h = Mat3::Zero();
  bool positions_coincide = true;
  for (const auto& p : m.pairs) {
    const Vec3 da = p.a.position - ca, db = p.b.position - cb;
    if (!da.isZero(0.0) || !db.isZero(0.0)) positions_coincide = false;
    h += db * da.transpose();
    h += m.alpha * (-p.b.normal) * p.a.normal.transpose();
  }
  if (positions_coincide && m.alpha == 0.0)
    throw DegenerateInput("all positions coincide and alpha = 0; rotation is unconstrained", "matched_pairs");

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s = svd.singularValues();
  const Mat3 u = svd.matrixU(), v = svd.matrixV();

  int rank = 0;
  for (int i = 0; i < 3; ++i)
    if (s(i) > kRankTol * s(0)) ++rank;
  if (s(0) == 0.0) rank = 0;

  AlignmentResult out;
  Mat3& r = out.transform.rotation;
  if (rank >= 2) {
    // max tr(Rᵀ H) over SO(3); the last sign absorbs any reflection.
    Mat3 d = Mat3::Identity();
    d(2, 2) = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    r = u * d * v.transpose();
    out.degeneracy = rank == 3 ? Degeneracy::Full : Degeneracy::Planar;
  } else if (rank == 1) {
    // H = σ u vᵀ: any R with R v = u is optimal; take the least rotation.
    r = minimal_rotation(v.col(0), u.col(0));
    out.degeneracy = Degeneracy::AxisFree;
  } else {
    r = Mat3::Identity();
    out.degeneracy = Degeneracy::AxisFree;
  }
  out.transform.translation = cb - r * ca;
  out.residual = std::max(0.0, alignment_objective(m, out.transform));
  return out;
}

double chamfer_distance(const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
  if (p.empty() || q.empty()) throw std::invalid_argument("chamfer_distance: empty point set");
  auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double sum = 0.0;
    for (const auto& x : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : to) best = std::min(best, (x - y).squaredNorm());
      sum += std::sqrt(best);
    }
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (one_way(p, q) + one_way(q, p));
}

PoseMetrics pose_metrics(const std::vector<RigidTransform>& predicted, const std::vector<RigidTransform>& truth,
                         const std::vector<std::vector<Vec3>>& clouds, double tau) {
  if (predicted.size() != truth.size() || predicted.size() != clouds.size())
    throw LengthMismatch("predicted " + std::to_string(predicted.size()) + ", truth " + std::to_string(truth.size()) +
                             ", clouds " + std::to_string(clouds.size()),
                         "pose_metrics");
  if (predicted.empty()) throw std::invalid_argument("pose_metrics: no parts");
  PoseMetrics out;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (clouds[i].size() < 3) throw std::invalid_argument("pose_metrics: cloud " + std::to_string(i) + " has < 3 points");
    std::vector<Vec3> p, q;
    double sq = 0.0;
    for (const auto& x : clouds[i]) {
      p.push_back(predicted[i].apply(x));
      q.push_back(truth[i].apply(x));
      sq += (p.back() - q.back()).squaredNorm();
    }
    const double cd = chamfer_distance(p, q);
    out.gd += geodesic_distance(predicted[i].rotation, truth[i].rotation);
    out.rmse += std::sqrt(sq / static_cast<double>(clouds[i].size()));
    out.cd += cd;
    out.pa += cd < tau ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(predicted.size());
  out.gd /= n;
  out.rmse /= n;
  out.cd /= n;
  out.pa /= n;
  return out;
}

MatchedPairs edge_pairs(const AssemblyGraph& graph, const ConnectionEdge& edge,
                        const std::map<PartId, RigidTransform>& part_in_anchor, double alpha) {
  MatchedPairs m;
  m.alpha = alpha;
  auto lift = [&](const Endpoint& end) {
    const AttachmentFeature* f = graph.feature(end);
    if (!f) throw InvalidGraph("unknown attachment point " + end.point.str(), "connection_edge " + edge.id);
    auto pose = part_in_anchor.find(end.part);
    if (pose == part_in_anchor.end()) throw UnsolvedPose("part has no pose", end.part.str());
    return AttachmentFeature{pose->second.apply(f->position), pose->second.rotate(f->normal)};
  };
  for (const auto& inst : edge.instances) m.pairs.push_back({lift(inst.end_a), lift(inst.end_b)});
  return m;
}

namespace {

// Runs edges in step order, merging components as they connect. Each part's
// pose is kept relative to the anchor (first part) of its current group.
// Stops after `stop_at` when given.
GraphPoses solve_until(const AssemblyGraph& graph, double alpha, std::string_view stop_at) {
  const auto report = validate(graph);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    throw InvalidGraph(std::to_string(report.violations.size()) + " violation(s); first: " + v.message, v.locus);
  }
  const GraphIndex idx(graph);
  std::map<PartId, RigidTransform> pose;
  std::map<PartId, PartId> group;  // part -> group anchor
  for (const auto& [pid, _] : graph.parts) {
    pose[pid] = RigidTransform::identity();
    group[pid] = pid;
  }

  GraphPoses out;
  for (const auto& id : graph.step_order) {
    const ConnectionEdge& e = *graph.find_edge(id);
    const MatchedPairs m = edge_pairs(graph, e, pose, alpha);
    AlignmentResult r = solve_alignment(m);
    out.edges.push_back({e.id, r});

    const PartId ga = group.at(idx.parts_under(e.nodes.first).front());
    const PartId gb = group.at(idx.parts_under(e.nodes.second).front());
    // r maps group-a coordinates into group-b coordinates; re-anchor b on a.
    const RigidTransform b_to_a = r.transform.inverse();
    for (auto& [pid, g] : group) {
      if (g != gb) continue;
      pose[pid] = b_to_a * pose[pid];
      g = ga;
    }
    if (!stop_at.empty() && id == stop_at) break;
  }

  const GraphNode* root = graph.root();
  const PartId& first = idx.parts_under(root->id).front();
  const RigidTransform to_assembly = pose.at(first).inverse();
  for (const auto& [pid, p] : pose) out.parts[pid] = to_assembly * p;
  return out;
}

}  // namespace

GraphPoses solve_graph_poses(const AssemblyGraph& graph, double alpha) { return solve_until(graph, alpha, {}); }

AlignmentResult solve_edge(const AssemblyGraph& graph, std::string_view edge_id, double alpha) {
  if (!graph.find_edge(edge_id)) throw InvalidGraph("unknown connection edge", std::string(edge_id));
  return solve_until(graph, alpha, edge_id).edges.back().result;
}

std::string save_poses(const GraphPoses& poses, std::string_view graph_name, double alpha) {
  detail::json doc;
  doc["format_version"] = 1;
  doc["graph"] = graph_name;
  doc["alpha"] = alpha;
  detail::json parts = detail::json::object();
  for (const auto& [pid, t] : poses.parts) parts[pid.str()] = detail::to_json(t);
  doc["parts"] = parts;
  detail::json edges = detail::json::array();
  for (const auto& e : poses.edges)
    edges.push_back({{"edge", e.edge_id},
                     {"residual", e.result.residual},
                     {"degeneracy", to_string(e.result.degeneracy)},
                     {"transform", detail::to_json(e.result.transform)}});
  doc["edges"] = edges;
  return doc.dump(2) + "\n";
}

std::map<PartId, RigidTransform> load_poses(std::string_view bytes) {
  const auto doc = detail::parse_json(bytes, "poses");
  detail::check_version(doc, 1, "");
  const auto& parts = detail::at(doc, "parts", "");
  if (!parts.is_object()) throw ParseError("expected an object", "parts");
  std::map<PartId, RigidTransform> out;
  for (const auto& [pid, tj] : parts.items()) out[PartId(pid)] = detail::transform(tj, "parts." + pid);
  return out;
}

}  // namespace connkit
