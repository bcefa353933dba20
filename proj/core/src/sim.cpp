#include "connkit/sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

#include "connkit/error.hpp"
#include "json_util.hpp"

namespace connkit::sim {

using detail::json;

namespace {

constexpr double kFeasTol = 1e-12;    // m, contact envelope tolerance
constexpr double kWindowTol = 1e-9;   // m, alignment window slack
constexpr double kForceScale = 1e-3;  // m of blocked motion per force unit
constexpr double kTwoPi = 2.0 * M_PI;

}  // namespace

HoleSpec default_hole(ConnectorType type) {
  HoleSpec h;
  switch (type) {
    case ConnectorType::MortiseTenon:
      h.depth = 0.008;
      break;
    case ConnectorType::Dowel:
      h.depth = 0.010;
      break;
    case ConnectorType::Screw:
      h.depth = 0.006;
      break;
  }
  return h;
}

void HoleOverrides::apply(HoleSpec& s) const {
  if (radius) s.radius = *radius;
  if (depth) s.depth = *depth;
  if (clearance) s.clearance = *clearance;
  if (chamfer) s.chamfer = *chamfer;
  if (tilt_max) s.tilt_max = *tilt_max;
  if (pitch) s.pitch = *pitch;
  if (final_turn) s.final_turn = *final_turn;
}

HoleSpec ScenarioSet::resolve(const ConnectionOperation& op) const {
  HoleSpec s = default_hole(op.instance.type);
  defaults.apply(s);
  if (auto it = by_type.find(op.instance.type); it != by_type.end()) it->second.apply(s);
  if (op.instance.screw_lead) s.pitch = *op.instance.screw_lead;
  if (auto it = by_operation.find(op.id()); it != by_operation.end()) it->second.apply(s);
  return s;
}

namespace {

HoleOverrides overrides_from(const json& j, const std::string& locus) {
  if (!j.is_object()) throw ParseError("expected an object", locus);
  HoleOverrides o;
  static const std::vector<std::pair<const char*, std::optional<double> HoleOverrides::*>> fields = {
      {"radius", &HoleOverrides::radius},     {"depth", &HoleOverrides::depth},
      {"clearance", &HoleOverrides::clearance}, {"chamfer", &HoleOverrides::chamfer},
      {"tilt_max", &HoleOverrides::tilt_max}, {"pitch", &HoleOverrides::pitch},
      {"final_turn", &HoleOverrides::final_turn}};
  for (const auto& [key, _] : j.items()) {
    auto f = std::find_if(fields.begin(), fields.end(), [&](const auto& kv) { return key == kv.first; });
    if (f == fields.end()) throw SchemaError("unknown hole field \"" + key + "\"", locus + "." + key);
    const double v = detail::number(j.at(key), locus + "." + key);
    const bool positive_only = key == "radius" || key == "depth" || key == "pitch";
    if (!std::isfinite(v) || v < 0.0 || (positive_only && v == 0.0))
      throw SchemaError("out of range", locus + "." + key);
    o.*(f->second) = v;
  }
  return o;
}

}  // namespace

ScenarioSet load_scenarios(std::string_view bytes) {
  const json doc = detail::parse_json(bytes, "scenarios");
  detail::check_version(doc, 1, "");
  ScenarioSet s;
  if (const json* d = detail::maybe(doc, "defaults")) s.defaults = overrides_from(*d, "defaults");
  if (const json* t = detail::maybe(doc, "connector_types")) {
    if (!t->is_object()) throw ParseError("expected an object", "connector_types");
    for (const auto& [name, o] : t->items()) {
      auto type = connector_type_from_string(name);
      if (!type) throw SchemaError("unknown connector type \"" + name + "\"", "connector_types." + name);
      s.by_type[*type] = overrides_from(o, "connector_types." + name);
    }
  }
  if (const json* ops = detail::maybe(doc, "operations")) {
    if (!ops->is_object()) throw ParseError("expected an object", "operations");
    for (const auto& [id, o] : ops->items()) s.by_operation[id] = overrides_from(o, "operations." + id);
  }
  return s;
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Free:
      return "free";
    case Phase::AxisConstrained:
      return "axis_constrained";
    case Phase::Tightening:
      return "tightening";
    case Phase::Fixed:
      return "fixed";
  }
  return "unknown";
}

std::string describe(const Command& cmd) {
  std::ostringstream os;
  os.precision(17);
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Translate>)
          os << "translate " << c.delta.x() << " " << c.delta.y() << " " << c.delta.z();
        else if constexpr (std::is_same_v<T, Rotate>)
          os << "rotate " << c.axis.x() << " " << c.axis.y() << " " << c.axis.z() << " " << c.angle;
        else
          os << "press " << c.distance;
      },
      cmd);
  return os.str();
}

bool operator==(const World& a, const World& b) {
  auto joint_eq = [](const JointState& x, const JointState& y) {
    return x.phase == y.phase && x.inserted_depth == y.inserted_depth && x.turns == y.turns &&
           x.tightening_turns == y.tightening_turns;
  };
  auto hole_eq = [](const HoleSpec& x, const HoleSpec& y) {
    return x.axis_pose == y.axis_pose && x.radius == y.radius && x.depth == y.depth && x.clearance == y.clearance &&
           x.chamfer == y.chamfer && x.tilt_max == y.tilt_max && x.pitch == y.pitch && x.final_turn == y.final_turn;
  };
  return a.op_id == b.op_id && a.type == b.type && hole_eq(a.hole, b.hole) && a.body.pose == b.body.pose &&
         a.body.tip_offset == b.body.tip_offset && a.target == b.target && a.nominal == b.nominal &&
         joint_eq(a.joint, b.joint) && a.caps.translation == b.caps.translation && a.caps.rotation == b.caps.rotation &&
         a.steps == b.steps;
}

JsonlTraceWriter::JsonlTraceWriter(std::ostream& out, std::string op_id) : out_(&out), op_id_(std::move(op_id)) {}

void JsonlTraceWriter::record(const TraceRecord& rec) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(rec.pose.rotation(r, c));
  json j = {{"op", op_id_},
            {"step", rec.step},
            {"command", describe(rec.command)},
            {"tip", detail::to_json(rec.tip)},
            {"rotation", rot},
            {"force", detail::to_json(rec.reading.force)},
            {"phase", to_string(rec.joint.phase)},
            {"inserted", rec.joint.inserted_depth},
            {"turns", rec.joint.turns}};
  *out_ << j.dump() << "\n";
}

double floor_height(const HoleSpec& hole, double e, bool locked) {
  const double c = hole.clearance, ch = hole.chamfer;
  if (e <= c) return locked ? -ch : -hole.depth;
  return std::min(e - c - ch, 0.0);
}

double tilt(const World& w) {
  // Body direction that should line up with the hole axis.
  const Vec3 axis_in_body = w.target.rotation.transpose() * Vec3::UnitZ();
  const Vec3 now = w.body.pose.rotation * axis_in_body;
  return std::atan2(now.cross(Vec3::UnitZ()).norm(), now.dot(Vec3::UnitZ()));
}

namespace {

bool locked(const World& w) { return tilt(w) > w.hole.tilt_max; }

bool feasible(const HoleSpec& hole, const Vec3& p, bool lock) {
  return p.z() >= floor_height(hole, std::hypot(p.x(), p.y()), lock) - kFeasTol;
}

void add_roots(double a, double b, double c, std::vector<double>& out) {
  if (std::abs(a) < 1e-300) {
    if (std::abs(b) > 1e-300) out.push_back(-c / b);
    return;
  }
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return;
  const double sq = std::sqrt(disc);
  // Numerically stable pair.
  const double q = -0.5 * (b + (b >= 0 ? sq : -sq));
  out.push_back(q / a);
  if (q != 0.0) out.push_back(c / q);
}

// Largest s in [0, 1] such that p + t·d is feasible for every t in [0, s].
double free_travel(const HoleSpec& hole, const Vec3& p, const Vec3& d, bool lock) {
  const double c = hole.clearance, ch = hole.chamfer;
  std::vector<double> roots;
  const Eigen::Vector2d q = p.head<2>(), v = d.head<2>();
  for (double r : {c, c + ch}) add_roots(v.squaredNorm(), 2 * q.dot(v), q.squaredNorm() - r * r, roots);
  // z + c + ch = e, squared.
  const double a0 = p.z() + c + ch;
  add_roots(d.z() * d.z() - v.squaredNorm(), 2 * (a0 * d.z() - q.dot(v)), a0 * a0 - q.squaredNorm(), roots);
  if (d.z() != 0.0)
    for (double z : {0.0, -ch, -hole.depth}) roots.push_back((z - p.z()) / d.z());

  std::vector<double> cuts{0.0, 1.0};
  for (double r : roots)
    if (r > 0.0 && r < 1.0 && std::isfinite(r)) cuts.push_back(r);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  if (!feasible(hole, p, lock)) return 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
    if (!feasible(hole, p + mid * d, lock)) return cuts[i];
    if (!feasible(hole, p + cuts[i + 1] * d, lock)) return cuts[i + 1];
  }
  return 1.0;
}

// Outward surface normal of the envelope where motion from `at` along `d` is stopped.
Vec3 contact_normal(const HoleSpec& hole, const Vec3& at, const Vec3& d, bool lock) {
  const double c = hole.clearance, ch = hole.chamfer;
  const Vec3 probe = at + 1e-9 * d.normalized();
  const double e = std::hypot(probe.x(), probe.y());
  Vec3 radial = Vec3::Zero();
  if (e > 0) radial << probe.x() / e, probe.y() / e, 0.0;
  if (e <= c) return Vec3::UnitZ();
  if (at.z() < -ch - kFeasTol && !lock) return -radial;  // bore wall
  if (e < c + ch) return (Vec3::UnitZ() - radial) / std::sqrt(2.0);
  return Vec3::UnitZ();
}

// First s in [0, s_max] with the tip inside the alignment window (a disk
// crossed with a half-space, so the set is an interval).
std::optional<double> window_entry(const HoleSpec& hole, const Vec3& p, const Vec3& d, double s_max) {
  const double r = hole.clearance + kWindowTol;
  const Eigen::Vector2d q = p.head<2>(), v = d.head<2>();
  double lo = 0.0, hi = s_max;
  const double a = v.squaredNorm(), b = 2 * q.dot(v), c = q.squaredNorm() - r * r;
  if (a < 1e-300) {
    if (c > 0) return std::nullopt;
  } else {
    const double disc = b * b - 4 * a * c;
    if (disc < 0) return std::nullopt;
    const double sq = std::sqrt(disc);
    lo = std::max(lo, (-b - sq) / (2 * a));
    hi = std::min(hi, (-b + sq) / (2 * a));
  }
  if (d.z() == 0.0) {
    if (p.z() > kWindowTol) return std::nullopt;
  } else if (d.z() < 0.0) {
    lo = std::max(lo, (kWindowTol - p.z()) / d.z());
  } else {
    hi = std::min(hi, (kWindowTol - p.z()) / d.z());
  }
  if (lo > hi) return std::nullopt;
  return lo;
}

void set_pose_from_joint(World& w) {
  w.body.pose.rotation = w.target.rotation;
  w.body.pose.translation = w.target.translation + (w.hole.depth - w.joint.inserted_depth) * Vec3::UnitZ();
}

void engage(World& w) {
  const Vec3 tip = w.body.tip();
  w.joint.phase = Phase::AxisConstrained;
  w.joint.turns = 0.0;
  w.joint.tightening_turns = 0.0;
  w.joint.inserted_depth = w.type == ConnectorType::Screw ? 0.0 : std::clamp(-tip.z(), 0.0, w.hole.depth);
  if (w.type != ConnectorType::Screw && w.joint.inserted_depth >= w.hole.depth) w.joint.phase = Phase::Fixed;
  set_pose_from_joint(w);
}

bool in_window(const World& w, const Vec3& tip) {
  return std::hypot(tip.x(), tip.y()) <= w.hole.clearance + kWindowTol && tip.z() <= kWindowTol &&
         tilt(w) <= w.hole.tilt_max;
}

Vec3 reaction(const Vec3& blocked) { return -blocked / kForceScale; }

ContactReading free_translate(World& w, const Vec3& d) {
  ContactReading out;
  if (d.isZero(0.0)) return out;
  const bool lock = locked(w);
  const Vec3 tip = w.body.tip();
  const double s = free_travel(w.hole, tip, d, lock);
  if (!lock) {
    if (auto enter = window_entry(w.hole, tip, d, s)) {
      w.body.pose.translation += *enter * d;
      engage(w);
      return out;
    }
  }
  w.body.pose.translation += s * d;
  if (s < 1.0) {
    const Vec3 blocked = (1.0 - s) * d;
    const Vec3 n = contact_normal(w.hole, w.body.tip(), d, lock);
    const double push = -blocked.dot(n);
    if (push > 0.0) out.force = n * (push / kForceScale);
  }
  return out;
}

ContactReading engaged_translate(World& w, const Vec3& d) {
  ContactReading out;
  Vec3 blocked(d.x(), d.y(), 0.0);
  if (w.joint.phase == Phase::AxisConstrained && d.z() < 0.0) {
    const double want = -d.z();
    double next = std::min(w.joint.inserted_depth + want, w.hole.depth);
    if (w.type == ConnectorType::Screw) next = std::min(next, w.hole.pitch * w.joint.turns);
    next = std::max(next, w.joint.inserted_depth);
    blocked.z() = -(want - (next - w.joint.inserted_depth));
    w.joint.inserted_depth = next;
    if (next >= w.hole.depth)
      w.joint.phase = w.type == ConnectorType::Screw ? Phase::Tightening : Phase::Fixed;
    set_pose_from_joint(w);
  } else {
    blocked.z() = d.z();
  }
  if (!blocked.isZero(0.0)) out.force = reaction(blocked);
  return out;
}

ContactReading rotate(World& w, const Rotate& r, double angle) {
  ContactReading out;
  if (angle == 0.0 || r.axis.isZero(0.0)) return out;
  const Vec3 axis = r.axis.normalized();
  if (w.joint.phase == Phase::Free) {
    // Pivot about the tip so the contact state is unchanged.
    const Vec3 tip = w.body.tip();
    const Mat3 rot = axis_angle(axis, angle);
    w.body.pose.rotation = rot * w.body.pose.rotation;
    w.body.pose.translation = rot * (w.body.pose.translation - tip) + tip;
    if (in_window(w, w.body.tip())) engage(w);
    return out;
  }
  // Engaged joints only turn about the hole axis.
  if (axis.cross(Vec3::UnitZ()).norm() > 1e-9) return out;
  if (w.type != ConnectorType::Screw || w.joint.phase == Phase::Fixed) return out;
  const double delta = (axis.z() > 0 ? angle : -angle) / kTwoPi;
  if (w.joint.phase == Phase::AxisConstrained) {
    const double next = w.joint.turns + delta;
    if (delta < 0.0 && w.hole.pitch * next < w.joint.inserted_depth) return out;
    w.joint.turns = next;
  } else if (delta > 0.0) {  // Tightening
    w.joint.tightening_turns += delta;
    if (w.joint.tightening_turns >= w.hole.final_turn) w.joint.phase = Phase::Fixed;
  }
  return out;
}

}  // namespace

ContactReading step_sim(World& w, const Command& command, TraceSink* trace) {
  ContactReading out;
  Command applied = command;
  std::visit(
      [&](auto& c) {
        using T = std::decay_t<decltype(c)>;
        Vec3 d = Vec3::Zero();
        if constexpr (std::is_same_v<T, Rotate>) {
          c.angle = std::clamp(c.angle, -w.caps.rotation, w.caps.rotation);
          out = rotate(w, c, c.angle);
          return;
        } else if constexpr (std::is_same_v<T, Press>) {
          c.distance = std::clamp(c.distance, -w.caps.translation, w.caps.translation);
          d = -c.distance * Vec3::UnitZ();
        } else {
          const double n = c.delta.norm();
          if (n > w.caps.translation) c.delta *= w.caps.translation / n;
          d = c.delta;
        }
        out = w.joint.phase == Phase::Free ? free_translate(w, d) : engaged_translate(w, d);
      },
      applied);
  ++w.steps;
  if (trace) {
    trace->record(TraceRecord{w.steps, applied, w.body.pose, w.body.tip(), out, w.joint});
  }
  return out;
}

double rotation_error(const World& w, const RigidTransform& truth) {
  return geodesic_distance(w.body.pose.rotation, truth.rotation);
}

double translation_error(const World& w, const RigidTransform& truth) {
  return (w.body.pose.translation - truth.translation).norm();
}

bool check_success(const World& w, const RigidTransform& truth) {
  return w.joint.phase == Phase::Fixed && rotation_error(w, truth) < kSuccessRotationTol &&
         translation_error(w, truth) < kSuccessTranslationTol;
}

RigidTransform hole_frame(const Vec3& origin, const Vec3& axis) {
  const Vec3 z = axis.normalized();
  const Vec3 x = lexicographic_perpendicular(z);
  RigidTransform f;
  f.rotation.col(0) = x;
  f.rotation.col(1) = z.cross(x);
  f.rotation.col(2) = z;
  f.translation = origin;
  return f;
}

namespace {

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

World make_world(ConnectorType type, const HoleSpec& hole, const RigidTransform& aligned, const RigidTransform& target,
                 const Vec3& tip_offset, std::uint64_t seed, const TrialSetup& setup) {
  std::mt19937_64 rng(seed);
  const double dx = (2.0 * unit(rng) - 1.0) * setup.lateral_perturbation;
  const double dy = (2.0 * unit(rng) - 1.0) * setup.lateral_perturbation;
  Mat3 tilt_rot = Mat3::Identity();
  if (setup.orientation_perturbation > 0.0) {
    const double phi = kTwoPi * unit(rng);
    tilt_rot = axis_angle(Vec3(std::cos(phi), std::sin(phi), 0.0), setup.orientation_perturbation * unit(rng));
  }

  World w;
  w.type = type;
  w.hole = hole;
  w.target = target;
  w.caps = setup.caps;
  w.body.tip_offset = tip_offset;
  // Believed target: the aligned pose moved by the (unknown) perturbation.
  RigidTransform believed = aligned;
  const Vec3 tip = aligned.apply(tip_offset);
  believed.rotation = tilt_rot * aligned.rotation;
  believed.translation = tilt_rot * (aligned.translation - tip) + tip + Vec3(dx, dy, 0.0);
  w.nominal = believed;
  w.body.pose = believed;
  w.body.pose.translation.z() += setup.lift;
  return w;
}

}  // namespace

World init_trial(ConnectorType type, const HoleSpec& hole, const RigidTransform& target, const Vec3& tip_offset,
                 std::uint64_t seed, const TrialSetup& setup) {
  return make_world(type, hole, target, target, tip_offset, seed, setup);
}

World init_trial(const ConnectionOperation& op, const AssemblyGraph& graph,
                 const std::map<PartId, RigidTransform>& solved, std::uint64_t seed, const TrialSetup& setup,
                 const ScenarioSet& scenarios, const std::map<PartId, RigidTransform>* truth) {
  const auto& real = truth ? *truth : solved;
  auto pose_of = [&](const std::map<PartId, RigidTransform>& m, const PartId& p) -> const RigidTransform& {
    auto it = m.find(p);
    if (it == m.end()) throw UnsolvedPose("no pose for part " + p.str(), op.id());
    return it->second;
  };
  const RigidTransform& fixed_real = pose_of(real, op.fixed_end.part);
  const RigidTransform& held_real = pose_of(real, op.held_end.part);
  const RigidTransform& fixed_solved = pose_of(solved, op.fixed_end.part);
  const RigidTransform& held_solved = pose_of(solved, op.held_end.part);

  const AttachmentFeature* ff = graph.feature(op.fixed_end);
  const AttachmentFeature* hf = graph.feature(op.held_end);
  if (!ff || !hf) throw InvalidGraph("operation references an unknown attachment point", op.id());

  HoleSpec hole = scenarios.resolve(op);
  hole.axis_pose = hole_frame(fixed_real.apply(ff->position), fixed_real.rotate(ff->normal));
  const RigidTransform to_hole = hole.axis_pose.inverse();

  const RigidTransform target = to_hole * held_real;
  const RigidTransform aligned = to_hole * fixed_real * fixed_solved.inverse() * held_solved;
  const Vec3 tip_offset = hf->position + hole.depth * hf->normal;

  World w = make_world(op.instance.type, hole, aligned, target, tip_offset, seed, setup);
  w.op_id = op.id();
  return w;
}

}  // namespace connkit::sim
