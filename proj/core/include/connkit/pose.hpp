#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "connkit/geometry.hpp"
#include "connkit/graph.hpp"

namespace connkit {

inline constexpr double kDefaultAlpha = 1.0;       // m², weight of the normal term
inline constexpr double kDefaultPartAccuracyTau = 0.01;  // m, Chamfer threshold

struct FeaturePair {
  AttachmentFeature a;  // in part a's frame
  AttachmentFeature b;  // in part b's frame
};

struct MatchedPairs {
  std::vector<FeaturePair> pairs;
  double alpha = kDefaultAlpha;
};

// Rank of the cross-covariance that fixes the rotation.
//   Full     rank 3
//   Planar   rank 2, unique once reflections are excluded
//   AxisFree rank 1, rotation about one axis is unconstrained
enum class Degeneracy { Full, Planar, AxisFree };

std::string_view to_string(Degeneracy d);

struct AlignmentResult {
  RigidTransform transform;  // maps part a's frame onto part b's frame
  double residual = 0.0;     // objective value at the optimum, m²
  Degeneracy degeneracy = Degeneracy::Full;
};

// Σᵢ ‖R x_aᵢ + t − x_bᵢ‖² + α ‖R n_aᵢ + n_bᵢ‖²
double alignment_objective(const MatchedPairs& m, const RigidTransform& transform);

// Closed-form global minimizer of alignment_objective. Throws
// std::invalid_argument for an empty or malformed input and DegenerateInput
// when all positions coincide with α = 0.
AlignmentResult solve_alignment(const MatchedPairs& m);

struct PoseMetrics {
  double gd = 0.0;    // mean geodesic rotation distance, rad
  double rmse = 0.0;  // mean per-part RMS point error, m
  double cd = 0.0;    // mean per-part symmetric Chamfer distance, m
  double pa = 0.0;    // fraction of parts with CD < tau
};

// Per-part metrics averaged over parts. Throws LengthMismatch when the three
// lists differ in length; std::invalid_argument on a cloud with < 3 points.
PoseMetrics pose_metrics(const std::vector<RigidTransform>& predicted, const std::vector<RigidTransform>& truth,
                         const std::vector<std::vector<Vec3>>& clouds, double tau = kDefaultPartAccuracyTau);

// Symmetric Chamfer distance: ½(mean nearest distance p→q + mean q→p), L2.
double chamfer_distance(const std::vector<Vec3>& p, const std::vector<Vec3>& q);

// --- graph-level alignment -------------------------------------------------

// Features of one connection edge, expressed in the anchor frames of the two
// components it joins. Requires all edges inside both components to have been
// solved already (see solve_graph_poses).
MatchedPairs edge_pairs(const AssemblyGraph& graph, const ConnectionEdge& edge,
                        const std::map<PartId, RigidTransform>& part_in_anchor, double alpha = kDefaultAlpha);

struct EdgeAlignment {
  std::string edge_id;
  AlignmentResult result;
};

struct GraphPoses {
  // Pose of every part in the assembly frame (the frame of the first part of
  // the root in depth-first order).
  std::map<PartId, RigidTransform> parts;
  std::vector<EdgeAlignment> edges;  // in step order
};

// Solves every connection edge in step order, composing components bottom-up.
// Throws InvalidGraph on an invalid graph.
GraphPoses solve_graph_poses(const AssemblyGraph& graph, double alpha = kDefaultAlpha);

// Solves a single edge with all inner edges of its components composed first.
AlignmentResult solve_edge(const AssemblyGraph& graph, std::string_view edge_id, double alpha = kDefaultAlpha);

// Poses file: {"format_version":1, "graph": name, "alpha": α, "parts": {id: {"rotation": [[..]..], "translation": [..]}}}
std::string save_poses(const GraphPoses& poses, std::string_view graph_name, double alpha);
std::map<PartId, RigidTransform> load_poses(std::string_view bytes);

}  // namespace connkit
