#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "connkit/geometry.hpp"
#include "connkit/ids.hpp"

namespace connkit {

enum class ConnectorType { MortiseTenon, Dowel, Screw };

inline constexpr ConnectorType kConnectorTypes[] = {ConnectorType::MortiseTenon, ConnectorType::Dowel,
                                                     ConnectorType::Screw};

// Canonical file names: "mortise_tenon", "dowel", "screw".
std::string_view to_string(ConnectorType type);
std::optional<ConnectorType> connector_type_from_string(std::string_view name);

// Position (meters) and outward unit normal of an attachment point, in the
// owning part's local frame.
struct AttachmentFeature {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();

  friend bool operator==(const AttachmentFeature&, const AttachmentFeature&) = default;
};

struct Part {
  std::string name;
  std::map<PointId, AttachmentFeature> points;

  friend bool operator==(const Part&, const Part&) = default;
};

struct Endpoint {
  PartId part;
  PointId point;

  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

struct ConnectionInstance {
  ConnectorType type = ConnectorType::MortiseTenon;
  std::optional<ConnectorId> connector;  // absent iff MortiseTenon
  Endpoint end_a;                        // lies under the edge's first node
  Endpoint end_b;                        // lies under the edge's second node
  std::optional<double> screw_lead;      // meters per revolution, Screw only

  friend bool operator==(const ConnectionInstance&, const ConnectionInstance&) = default;
};

struct ConnectionEdge {
  std::string id;
  std::pair<NodeId, NodeId> nodes;
  std::vector<ConnectionInstance> instances;

  friend bool operator==(const ConnectionEdge&, const ConnectionEdge&) = default;
};

enum class NodeKind { Root, Subassembly, Part };

std::string_view to_string(NodeKind kind);

struct GraphNode {
  NodeId id;
  NodeKind kind = NodeKind::Part;
  std::optional<PartId> part;  // set iff kind == Part
  std::vector<NodeId> children;

  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

// Connection-enriched hierarchical assembly graph. Composition edges are
// the parent->children lists stored on each node.
struct AssemblyGraph {
  std::string name;
  std::vector<GraphNode> nodes;
  std::vector<std::pair<NodeId, NodeId>> equivalence_edges;
  std::vector<ConnectionEdge> connection_edges;
  std::map<PartId, Part> parts;
  std::map<ConnectorId, ConnectorType> connectors;
  std::vector<std::string> step_order;  // connection edge ids in manual order

  friend bool operator==(const AssemblyGraph&, const AssemblyGraph&) = default;

  const GraphNode* find_node(const NodeId& id) const;
  const ConnectionEdge* find_edge(std::string_view id) const;
  const GraphNode* root() const;  // first Root node, nullptr if none
  std::vector<std::pair<NodeId, NodeId>> composition_edges() const;
  const AttachmentFeature* feature(const Endpoint& end) const;
};

// Parent lookup and subtree queries over a graph whose composition edges form
// a tree. Undefined results on malformed graphs; validate first.
class GraphIndex {
 public:
  explicit GraphIndex(const AssemblyGraph& graph);

  const GraphNode& node(const NodeId& id) const;
  std::optional<NodeId> parent(const NodeId& id) const;
  // Leaf parts under `id`, in depth-first child order.
  const std::vector<PartId>& parts_under(const NodeId& id) const;
  bool contains_part(const NodeId& id, const PartId& part) const;

 private:
  const AssemblyGraph* graph_;
  std::map<NodeId, const GraphNode*> by_id_;
  std::map<NodeId, NodeId> parent_;
  std::map<NodeId, std::vector<PartId>> parts_under_;
};

struct Violation {
  std::string rule;   // stable machine-readable code, e.g. "conn.not_siblings"
  std::string locus;  // node / edge / field the violation is anchored at
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(std::string_view rule) const;
};

// Checks every structural invariant; never throws.
ValidationReport validate(const AssemblyGraph& graph);

struct ConnectionOperation {
  std::size_t index = 0;  // 0-based position in the plan
  std::string edge_id;
  std::size_t instance_index = 0;
  NodeId fixed;  // component grounded on the table
  NodeId held;   // component (or its connector) brought in from above
  ConnectionInstance instance;
  Endpoint fixed_end;
  Endpoint held_end;

  std::string id() const;  // "<edge_id>:<instance_index>"
};

// One operation per connection instance, in step order then instance order.
// Throws InvalidGraph when validation fails.
std::vector<ConnectionOperation> plan_sequence(const AssemblyGraph& graph);

}  // namespace connkit
