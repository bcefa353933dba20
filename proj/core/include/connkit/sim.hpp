#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "connkit/geometry.hpp"
#include "connkit/graph.hpp"

// Quasi-static desk-scale connector simulator. All state lives in the hole
// frame: origin at the fixed attachment point, +z the outward hole axis, so a
// held body is inserted by moving along -z. The body is represented by its
// tip point; the peg radius only shifts the contact envelope, which is folded
// into the lateral offsets below.
namespace connkit::sim {

struct HoleSpec {
  RigidTransform axis_pose;  // hole frame expressed in the assembly frame
  double radius = 0.004;     // peg radius, m
  double depth = 0.010;      // full insertion depth, m
  double clearance = 0.0005; // radial clearance, m
  double chamfer = 0.002;    // radial extent of the 45° entry funnel, m
  double tilt_max = 0.05;    // rad
  double pitch = 0.00125;    // screw lead, m per revolution
  double final_turn = 0.5;   // tightening revolutions after the head seats
};

// Per-connector defaults. All connector types share clearance/chamfer; depth
// differs (tenon 8 mm, dowel 10 mm, screw 6 mm of thread engagement).
HoleSpec default_hole(ConnectorType type);

// Optional per-field overrides read from a scenario file.
struct HoleOverrides {
  std::optional<double> radius, depth, clearance, chamfer, tilt_max, pitch, final_turn;
  void apply(HoleSpec& spec) const;
};

// Scenario file:
// {"format_version":1,
//  "defaults": {HoleOverrides},
//  "connector_types": {"screw": {HoleOverrides}, ...},
//  "operations": {"E1:0": {HoleOverrides}, ...}}
struct ScenarioSet {
  HoleOverrides defaults;
  std::map<ConnectorType, HoleOverrides> by_type;
  std::map<std::string, HoleOverrides> by_operation;

  // default_hole(type) <- defaults <- by_type <- screw lead <- by_operation
  HoleSpec resolve(const ConnectionOperation& op) const;
};

ScenarioSet load_scenarios(std::string_view bytes);

enum class Phase { Free, AxisConstrained, Tightening, Fixed };
std::string_view to_string(Phase phase);

struct JointState {
  Phase phase = Phase::Free;
  double inserted_depth = 0.0;    // m, in [0, depth]
  double turns = 0.0;             // screw revolutions accumulated since engagement
  double tightening_turns = 0.0;  // revolutions accumulated after seating
};

// Reaction on the held body in model units, hole frame. One unit is the
// reaction to 1 mm of commanded motion blocked head-on by a surface.
struct ContactReading {
  Vec3 force = Vec3::Zero();

  bool in_contact() const { return !force.isZero(0.0); }
  Eigen::Vector2d lateral() const { return force.head<2>(); }
};

struct HeldBody {
  RigidTransform pose;              // body frame in the hole frame
  Vec3 tip_offset = Vec3::Zero();   // insertion tip in the body frame

  Vec3 tip() const { return pose.apply(tip_offset); }
};

struct StepCaps {
  double translation = 0.001;  // m per step
  double rotation = 0.1;       // rad per step
};

struct Translate {
  Vec3 delta = Vec3::Zero();
};
struct Rotate {
  Vec3 axis = Vec3::UnitZ();  // hole frame, need not be normalized
  double angle = 0.0;         // rad, right-handed about axis
};
struct Press {
  double distance = 0.0;  // m along -z
};
using Command = std::variant<Translate, Rotate, Press>;

std::string describe(const Command& cmd);

struct World {
  std::string op_id;
  ConnectorType type = ConnectorType::Dowel;
  HoleSpec hole;
  HeldBody body;
  RigidTransform target;   // body pose when fully inserted (ground truth)
  RigidTransform nominal;  // where the planner believes the target is
  JointState joint;
  StepCaps caps;
  std::size_t steps = 0;

  friend bool operator==(const World&, const World&);
};

struct TraceRecord {
  std::size_t step = 0;
  Command command;
  RigidTransform pose;  // body frame
  Vec3 tip = Vec3::Zero();
  ContactReading reading;
  JointState joint;
};

class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void record(const TraceRecord& rec) = 0;
};

// Line-delimited JSON: {"op","step","command","tip","rotation","force","phase","inserted","turns"}.
class JsonlTraceWriter final : public TraceSink {
 public:
  explicit JsonlTraceWriter(std::ostream& out, std::string op_id = {});
  void record(const TraceRecord& rec) override;

 private:
  std::ostream* out_;
  std::string op_id_;
};

// Lowest tip height reachable at a lateral offset from the hole axis.
// `locked` treats the bore as closed at the mouth (jammed or tilted body).
double floor_height(const HoleSpec& hole, double lateral_offset, bool locked = false);

// Tilt of the body's insertion axis relative to the target orientation.
double tilt(const World& world);

// Applies one command. Commands beyond the per-step caps are scaled down to
// them. Blocked motion yields a reaction force rather than an error.
ContactReading step_sim(World& world, const Command& command, TraceSink* trace = nullptr);

inline constexpr double kSuccessRotationTol = 0.05;       // rad
inline constexpr double kSuccessTranslationTol = 0.0002;  // m

double rotation_error(const World& world, const RigidTransform& truth);
double translation_error(const World& world, const RigidTransform& truth);

// Fixed joint formed and the held pose within both tolerances of `truth`.
bool check_success(const World& world, const RigidTransform& truth);

// Hole frame at `origin` with +z along `axis`; x = lexicographic perpendicular.
RigidTransform hole_frame(const Vec3& origin, const Vec3& axis);

struct TrialSetup {
  double lift = 0.02;                      // m above the aligned pose
  double lateral_perturbation = 0.003;     // uniform ±, per lateral axis
  double orientation_perturbation = 0.0;   // max tilt, rad; 0 disables
  StepCaps caps;
};

// Held body placed `lift` above `target`, then shifted by the seeded
// perturbation. The perturbation is unknown to the planner: `nominal` is the
// perturbed pose minus the lift.
World init_trial(ConnectorType type, const HoleSpec& hole, const RigidTransform& target, const Vec3& tip_offset,
                 std::uint64_t seed, const TrialSetup& setup = {});

// Builds the hole from the fixed side's attachment feature under `truth`
// poses and the target from the held part's pose under `solved` poses
// (`truth` defaults to `solved`). Throws UnsolvedPose when either part has no
// pose.
World init_trial(const ConnectionOperation& op, const AssemblyGraph& graph,
                 const std::map<PartId, RigidTransform>& solved, std::uint64_t seed, const TrialSetup& setup = {},
                 const ScenarioSet& scenarios = {}, const std::map<PartId, RigidTransform>* truth = nullptr);

}  // namespace connkit::sim
