#include "connkit/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>

#include "connkit/error.hpp"

namespace connkit {

std::string_view to_string(ConnectorType type) {
  switch (type) {
    case ConnectorType::MortiseTenon:
      return "mortise_tenon";
    case ConnectorType::Dowel:
      return "dowel";
    case ConnectorType::Screw:
      return "screw";
  }
  return "unknown";
}

std::optional<ConnectorType> connector_type_from_string(std::string_view name) {
  for (auto t : kConnectorTypes)
    if (to_string(t) == name) return t;
  return std::nullopt;
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Root:
      return "root";
    case NodeKind::Subassembly:
      return "subassembly";
    case NodeKind::Part:
      return "part";
  }
  return "unknown";
}

const GraphNode* AssemblyGraph::find_node(const NodeId& id) const {
  auto it = std::find_if(nodes.begin(), nodes.end(), [&](const GraphNode& n) { return n.id == id; });
  return it == nodes.end() ? nullptr : &*it;
}

const ConnectionEdge* AssemblyGraph::find_edge(std::string_view id) const {
  auto it = std::find_if(connection_edges.begin(), connection_edges.end(),
                         [&](const ConnectionEdge& e) { return e.id == id; });
  return it == connection_edges.end() ? nullptr : &*it;
}

const GraphNode* AssemblyGraph::root() const {
  auto it = std::find_if(nodes.begin(), nodes.end(), [](const GraphNode& n) { return n.kind == NodeKind::Root; });
  return it == nodes.end() ? nullptr : &*it;
}

std::vector<std::pair<NodeId, NodeId>> AssemblyGraph::composition_edges() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  for (const auto& n : nodes)
    for (const auto& c : n.children) out.emplace_back(n.id, c);
  return out;
}

const AttachmentFeature* AssemblyGraph::feature(const Endpoint& end) const {
  auto part = parts.find(end.part);
  if (part == parts.end()) return nullptr;
  auto point = part->second.points.find(end.point);
  return point == part->second.points.end() ? nullptr : &point->second;
}

GraphIndex::GraphIndex(const AssemblyGraph& graph) : graph_(&graph) {
  for (const auto& n : graph.nodes) by_id_.emplace(n.id, &n);
  for (const auto& n : graph.nodes)
    for (const auto& c : n.children) parent_.emplace(c, n.id);

  std::function<const std::vector<PartId>&(const NodeId&, int)> collect =
      [&](const NodeId& id, int depth) -> const std::vector<PartId>& {
    auto done = parts_under_.find(id);
    if (done != parts_under_.end()) return done->second;
    std::vector<PartId> parts;
    auto it = by_id_.find(id);
    // Depth guard keeps malformed (cyclic) graphs from recursing forever.
    if (it != by_id_.end() && depth <= static_cast<int>(by_id_.size())) {
      const GraphNode& n = *it->second;
      if (n.kind == NodeKind::Part) {
        if (n.part) parts.push_back(*n.part);
      } else {
        for (const auto& c : n.children) {
          const auto& sub = collect(c, depth + 1);
          parts.insert(parts.end(), sub.begin(), sub.end());
        }
      }
    }
    return parts_under_[id] = std::move(parts);
  };
  for (const auto& n : graph.nodes) collect(n.id, 0);
}

const GraphNode& GraphIndex::node(const NodeId& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw InvalidGraph("unknown node", id.str());
  return *it->second;
}

std::optional<NodeId> GraphIndex::parent(const NodeId& id) const {
  auto it = parent_.find(id);
  if (it == parent_.end()) return std::nullopt;
  return it->second;
}

const std::vector<PartId>& GraphIndex::parts_under(const NodeId& id) const {
  static const std::vector<PartId> kEmpty;
  auto it = parts_under_.find(id);
  return it == parts_under_.end() ? kEmpty : it->second;
}

bool GraphIndex::contains_part(const NodeId& id, const PartId& part) const {
  const auto& parts = parts_under(id);
  return std::find(parts.begin(), parts.end(), part) != parts.end();
}

std::size_t ValidationReport::count(std::string_view rule) const {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(), [&](const Violation& v) { return v.rule == rule; }));
}

namespace {

constexpr double kUnitTol = 1e-9;
constexpr double kLayoutTol = 1e-9;

class Reporter {
 public:
  explicit Reporter(ValidationReport& r) : r_(r) {}
  template <class... Args>
  void operator()(std::string rule, std::string locus, const Args&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    r_.violations.push_back({std::move(rule), std::move(locus), os.str()});
  }

 private:
  ValidationReport& r_;
};

// Sorted attachment-point features of every part under a node; equal
// layouts up to relabeling compare equal element-wise.
std::vector<AttachmentFeature> layout_of(const AssemblyGraph& g, const GraphIndex& idx, const NodeId& node) {
  std::vector<AttachmentFeature> out;
  for (const auto& pid : idx.parts_under(node)) {
    auto it = g.parts.find(pid);
    if (it == g.parts.end()) continue;
    for (const auto& [_, f] : it->second.points) out.push_back(f);
  }
  auto key = [](const AttachmentFeature& f) {
    std::array<double, 6> k{};
    for (int i = 0; i < 3; ++i) {
      k[i] = std::round(f.position[i] / kLayoutTol);
      k[3 + i] = std::round(f.normal[i] / kLayoutTol);
    }
    return k;
  };
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  return out;
}

bool same_layout(const std::vector<AttachmentFeature>& a, const std::vector<AttachmentFeature>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i].position - b[i].position).cwiseAbs().maxCoeff() > kLayoutTol) return false;
    if ((a[i].normal - b[i].normal).cwiseAbs().maxCoeff() > kLayoutTol) return false;
  }
  return true;
}

std::string edge_locus(const ConnectionEdge& e) { return "connection_edge " + e.id; }

}  // namespace

ValidationReport validate(const AssemblyGraph& g) {
  ValidationReport report;
  Reporter bad(report);

  // --- nodes ---------------------------------------------------------------
  std::map<NodeId, const GraphNode*> by_id;
  std::map<PartId, NodeId> part_owner;
  std::size_t roots = 0;
  for (const auto& n : g.nodes) {
    const std::string locus = "node " + n.id.str();
    if (n.id.empty()) bad("node.empty_id", "nodes", "node with empty id");
    if (!by_id.emplace(n.id, &n).second) bad("node.duplicate_id", locus, "node id used more than once");
    if (n.kind == NodeKind::Root) ++roots;
    if (n.kind == NodeKind::Part) {
      if (!n.children.empty()) bad("node.part_has_children", locus, "part nodes must be leaves");
      if (!n.part) {
        bad("node.part_missing", locus, "part node has no part reference");
      } else if (!g.parts.count(*n.part)) {
        bad("node.unknown_part", locus, "references unknown part ", *n.part);
      } else if (auto [it, fresh] = part_owner.emplace(*n.part, n.id); !fresh) {
        bad("node.part_reused", locus, "part ", *n.part, " already placed by node ", it->second);
      }
    } else {
      if (n.part) bad("node.unexpected_part", locus, "only part nodes may reference a part");
      if (n.children.size() < 2) bad("node.too_few_children", locus, "non-leaf nodes need at least two children");
    }
  }
  if (roots != 1) bad("tree.root_count", "nodes", "expected exactly one root, found ", roots);
  for (const auto& [pid, _] : g.parts)
    if (!part_owner.count(pid)) bad("part.unplaced", "part " + pid.str(), "part is not referenced by any node");

  // --- composition tree ----------------------------------------------------
  std::map<NodeId, NodeId> parent;
  bool tree_ok = roots == 1 && report.count("node.duplicate_id") == 0;
  for (const auto& n : g.nodes) {
    for (const auto& c : n.children) {
      const std::string locus = "composition " + n.id.str() + "->" + c.str();
      if (!by_id.count(c)) {
        bad("tree.unknown_child", locus, "child node does not exist");
        tree_ok = false;
      } else if (c == n.id) {
        bad("tree.self_child", locus, "node lists itself as a child");
        tree_ok = false;
      } else if (auto [it, fresh] = parent.emplace(c, n.id); !fresh) {
        bad("tree.multiple_parents", locus, "node already has parent ", it->second);
        tree_ok = false;
      } else if (by_id.at(c)->kind == NodeKind::Root) {
        bad("tree.root_has_parent", locus, "root cannot be a child");
        tree_ok = false;
      }
    }
  }
  if (tree_ok) {
    std::set<NodeId> seen;
    std::vector<NodeId> stack{g.root()->id};
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      if (!seen.insert(id).second) continue;
      for (const auto& c : by_id.at(id)->children) stack.push_back(c);
    }
    for (const auto& n : g.nodes) {
      if (!seen.count(n.id)) {
        bad("tree.unreachable", "node " + n.id.str(), "node is not reachable from the root");
        tree_ok = false;
      }
    }
    const auto comp = g.composition_edges().size();
    if (tree_ok && comp + 1 != g.nodes.size())
      bad("tree.edge_count", "nodes", "composition edges ", comp, " != nodes - 1 = ", g.nodes.size() - 1);
  }

  // --- parts & connectors --------------------------------------------------
  for (const auto& [pid, part] : g.parts) {
    if (pid.empty()) bad("part.empty_id", "parts", "part with empty id");
    for (const auto& [ptid, f] : part.points) {
      const std::string locus = "part " + pid.str() + " point " + ptid.str();
      if (ptid.empty()) bad("point.empty_id", locus, "attachment point with empty id");
      if (!f.position.allFinite() || !f.normal.allFinite()) bad("point.non_finite", locus, "non-finite feature");
      if (std::abs(f.normal.norm() - 1.0) > kUnitTol) bad("point.normal_not_unit", locus, "|normal| = ", f.normal.norm());
    }
  }
  for (const auto& [cid, _] : g.connectors)
    if (cid.empty()) bad("connector.empty_id", "connectors", "connector with empty id");

  // --- connection edges ----------------------------------------------------
  const GraphIndex idx(g);
  std::set<std::string> edge_ids;
  std::set<std::pair<NodeId, NodeId>> joined;
  std::map<ConnectorId, std::string> connector_use;
  std::map<Endpoint, std::string> point_use;
  std::map<std::string, NodeId> edge_owner;
  for (const auto& e : g.connection_edges) {
    const std::string locus = edge_locus(e);
    if (e.id.empty()) bad("conn.empty_id", locus, "connection edge with empty id");
    if (!edge_ids.insert(e.id).second) bad("conn.duplicate_id", locus, "edge id used more than once");
    const auto& [na, nb] = e.nodes;
    const bool nodes_known = by_id.count(na) && by_id.count(nb);
    if (!nodes_known) {
      bad("conn.unknown_node", locus, "joins unknown node(s) ", na, ", ", nb);
    } else if (na == nb) {
      bad("conn.self_loop", locus, "edge joins node ", na, " to itself");
    } else if (tree_ok) {
      auto pa = parent.find(na);
      auto pb = parent.find(nb);
      if (pa == parent.end() || pb == parent.end() || pa->second != pb->second)
        bad("conn.not_siblings", locus, "nodes ", na, " and ", nb, " do not share a parent");
      else
        edge_owner[e.id] = pa->second;
      auto key = std::minmax(na, nb);
      if (!joined.insert({key.first, key.second}).second)
        bad("conn.duplicate_pair", locus, "nodes ", na, " and ", nb, " are already joined by another edge");
    }
    if (e.instances.empty()) bad("conn.no_instances", locus, "edge has no connection instances");

    for (std::size_t i = 0; i < e.instances.size(); ++i) {
      const auto& inst = e.instances[i];
      const std::string il = locus + " instance " + std::to_string(i);
      for (const Endpoint* end : {&inst.end_a, &inst.end_b}) {
        if (!g.parts.count(end->part))
          bad("inst.unknown_part", il, "unknown part ", end->part);
        else if (!g.feature(*end))
          bad("inst.unknown_point", il, "part ", end->part, " has no attachment point ", end->point);
        else if (auto [it, fresh] = point_use.emplace(*end, e.id + ":" + std::to_string(i)); !fresh)
          bad("inst.point_reused", il, "attachment point ", end->point, " already used by ", it->second);
      }
      if (inst.end_a.part == inst.end_b.part) bad("inst.same_part", il, "both ends lie on part ", inst.end_a.part);
      if (nodes_known && tree_ok) {
        if (!idx.contains_part(na, inst.end_a.part))
          bad("inst.end_outside_node", il, "end_a part ", inst.end_a.part, " is not under node ", na);
        if (!idx.contains_part(nb, inst.end_b.part))
          bad("inst.end_outside_node", il, "end_b part ", inst.end_b.part, " is not under node ", nb);
      }
      const bool needs_connector = inst.type != ConnectorType::MortiseTenon;
      if (needs_connector && !inst.connector) {
        bad("inst.connector_missing", il, to_string(inst.type),
            " instances must carry a connector id (only mortise-tenon joints have none)");
      } else if (!needs_connector && inst.connector) {
        bad("inst.connector_unexpected", il, "mortise-tenon joints carry no connector id");
      }
      if (inst.connector) {
        auto reg = g.connectors.find(*inst.connector);
        if (reg == g.connectors.end())
          bad("inst.unknown_connector", il, "connector ", *inst.connector, " is not registered");
        else if (reg->second != inst.type)
          bad("inst.connector_type", il, "connector ", *inst.connector, " is a ", to_string(reg->second),
              ", instance says ", to_string(inst.type));
        if (auto [it, fresh] = connector_use.emplace(*inst.connector, e.id); !fresh)
          bad("inst.connector_reused", il, "connector ", *inst.connector, " already used by edge ", it->second);
      }
      if (inst.screw_lead) {
        if (inst.type != ConnectorType::Screw) bad("inst.lead_not_screw", il, "screw_lead only applies to screws");
        if (!(*inst.screw_lead > 0.0)) bad("inst.lead_nonpositive", il, "screw_lead must be positive");
      }
    }
  }

  // --- equivalence edges ---------------------------------------------------
  for (const auto& [a, b] : g.equivalence_edges) {
    const std::string locus = "equivalence " + a.str() + "~" + b.str();
    if (!by_id.count(a) || !by_id.count(b)) {
      bad("eqv.unknown_node", locus, "equivalence edge references an unknown node");
    } else if (a == b) {
      bad("eqv.self_loop", locus, "node is trivially equivalent to itself");
    } else if (tree_ok && !same_layout(layout_of(g, idx, a), layout_of(g, idx, b))) {
      bad("eqv.layout_mismatch", locus, "attachment-point layouts differ");
    }
  }

  // --- step order ----------------------------------------------------------
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < g.step_order.size(); ++i) {
    const auto& id = g.step_order[i];
    if (!g.find_edge(id))
      bad("order.unknown_edge", "step_order[" + std::to_string(i) + "]", "unknown connection edge ", id);
    else if (!pos.emplace(id, i).second)
      bad("order.duplicate", "step_order[" + std::to_string(i) + "]", "edge ", id, " listed twice");
  }
  for (const auto& e : g.connection_edges)
    if (!e.id.empty() && !pos.count(e.id)) bad("order.missing", edge_locus(e), "edge is missing from step_order");

  if (tree_ok) {
    // An edge may only be made once both components are assembled.
    for (const auto& e : g.connection_edges) {
      if (!pos.count(e.id)) continue;
      for (const NodeId& side : {e.nodes.first, e.nodes.second}) {
        if (!by_id.count(side)) continue;
        for (const auto& f : g.connection_edges) {
          auto owner = edge_owner.find(f.id);
          if (owner == edge_owner.end() || !pos.count(f.id)) continue;
          bool inside = false;
          for (NodeId cur = owner->second;;) {
            if (cur == side) {
              inside = true;
              break;
            }
            auto up = parent.find(cur);
            if (up == parent.end()) break;
            cur = up->second;
          }
          if (inside && pos.at(f.id) > pos.at(e.id))
            bad("order.component_incomplete", edge_locus(e), "edge ", f.id, " inside component ", side,
                " is scheduled after it");
        }
      }
    }

    // Children of every non-leaf node must be joined into one body.
    for (const auto& n : g.nodes) {
      if (n.kind == NodeKind::Part || n.children.size() < 2) continue;
      std::map<NodeId, NodeId> rep;
      for (const auto& c : n.children) rep[c] = c;
      std::function<NodeId(const NodeId&)> find = [&](const NodeId& x) -> NodeId {
        return rep[x] == x ? x : rep[x] = find(rep[x]);
      };
      for (const auto& e : g.connection_edges) {
        auto owner = edge_owner.find(e.id);
        if (owner == edge_owner.end() || owner->second != n.id) continue;
        rep[find(e.nodes.first)] = find(e.nodes.second);
      }
      std::set<NodeId> groups;
      for (const auto& c : n.children) groups.insert(find(c));
      if (groups.size() > 1)
        bad("conn.disconnected", "node " + n.id.str(), "children form ", groups.size(),
            " separate bodies; connection edges must join all of them");
    }
  }
  return report;
}

std::string ConnectionOperation::id() const { return edge_id + ":" + std::to_string(instance_index); }

std::vector<ConnectionOperation> plan_sequence(const AssemblyGraph& graph) {
  const auto report = validate(graph);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    throw InvalidGraph(std::to_string(report.violations.size()) + " violation(s); first: " + v.message, v.locus);
  }
  const GraphIndex idx(graph);
  std::set<PartId> connected;
  std::vector<ConnectionOperation> ops;
  for (const auto& edge_id : graph.step_order) {
    const ConnectionEdge& e = *graph.find_edge(edge_id);
    auto count_connected = [&](const NodeId& n) {
      const auto& parts = idx.parts_under(n);
      return std::count_if(parts.begin(), parts.end(), [&](const PartId& p) { return connected.count(p) > 0; });
    };
    const auto ca = count_connected(e.nodes.first);
    const auto cb = count_connected(e.nodes.second);
    const bool a_fixed = ca > cb || (ca == cb && e.nodes.first < e.nodes.second);
    for (std::size_t i = 0; i < e.instances.size(); ++i) {
      ConnectionOperation op;
      op.index = ops.size();
      op.edge_id = e.id;
      op.instance_index = i;
      op.instance = e.instances[i];
      op.fixed = a_fixed ? e.nodes.first : e.nodes.second;
      op.held = a_fixed ? e.nodes.second : e.nodes.first;
      op.fixed_end = a_fixed ? op.instance.end_a : op.instance.end_b;
      op.held_end = a_fixed ? op.instance.end_b : op.instance.end_a;
      ops.push_back(std::move(op));
    }
    for (const NodeId& n : {e.nodes.first, e.nodes.second})
      for (const auto& p : idx.parts_under(n)) connected.insert(p);
  }
  return ops;
}

}  // namespace connkit
