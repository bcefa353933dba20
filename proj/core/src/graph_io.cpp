#include "connkit/graph_io.hpp"

#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace connkit {

using detail::json;

namespace {

NodeKind node_kind(const json& j, const std::string& locus) {
  const auto s = detail::as<std::string>(j, locus);
  for (auto k : {NodeKind::Root, NodeKind::Subassembly, NodeKind::Part})
    if (to_string(k) == s) return k;
  throw SchemaError("unknown node kind \"" + s + "\"", locus);
}

Endpoint endpoint(const json& j, const std::string& locus) {
  return {PartId(detail::get<std::string>(j, "part", locus)), PointId(detail::get<std::string>(j, "point", locus))};
}

json to_json(const Endpoint& e) { return {{"part", e.part.str()}, {"point", e.point.str()}}; }

}  // namespace

AssemblyGraph load_graph(std::string_view bytes) {
  const json doc = detail::parse_json(bytes, "graph");
  if (!doc.is_object()) throw ParseError("top level must be an object", "graph");
  detail::check_version(doc, kGraphFormatVersion, "");

  AssemblyGraph g;
  g.name = detail::get<std::string>(doc, "name", "");

  const json& parts = detail::at(doc, "parts", "");
  if (!parts.is_object()) throw ParseError("expected an object", "parts");
  for (const auto& [pid, pj] : parts.items()) {
    const std::string pl = "parts." + pid;
    Part part;
    if (const json* n = detail::maybe(pj, "name")) part.name = detail::as<std::string>(*n, pl + ".name");
    const json& points = detail::at(pj, "points", pl);
    if (!points.is_object()) throw ParseError("expected an object", pl + ".points");
    for (const auto& [ptid, fj] : points.items()) {
      const std::string fl = pl + ".points." + ptid;
      part.points.emplace(PointId(ptid), AttachmentFeature{detail::vec3(detail::at(fj, "position", fl), fl + ".position"),
                                                          detail::vec3(detail::at(fj, "normal", fl), fl + ".normal")});
    }
    g.parts.emplace(PartId(pid), std::move(part));
  }

  if (const json* conns = detail::maybe(doc, "connectors")) {
    if (!conns->is_object()) throw ParseError("expected an object", "connectors");
    for (const auto& [cid, tj] : conns->items())
      g.connectors.emplace(ConnectorId(cid), detail::connector_type(tj, "connectors." + cid));
  }

  const json& nodes = detail::at(doc, "nodes", "");
  if (!nodes.is_array()) throw ParseError("expected an array", "nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string nl = "nodes[" + std::to_string(i) + "]";
    const json& nj = nodes[i];
    GraphNode n;
    n.id = NodeId(detail::get<std::string>(nj, "id", nl));
    n.kind = node_kind(detail::at(nj, "kind", nl), nl + ".kind");
    if (const json* p = detail::maybe(nj, "part")) n.part = PartId(detail::as<std::string>(*p, nl + ".part"));
    if (const json* c = detail::maybe(nj, "children"))
      for (const auto& s : detail::as<std::vector<std::string>>(*c, nl + ".children")) n.children.emplace_back(s);
    g.nodes.push_back(std::move(n));
  }

  if (const json* eq = detail::maybe(doc, "equivalence_edges")) {
    for (const auto& pair : detail::as<std::vector<std::vector<std::string>>>(*eq, "equivalence_edges")) {
      if (pair.size() != 2) throw ParseError("expected node pairs", "equivalence_edges");
      g.equivalence_edges.emplace_back(NodeId(pair[0]), NodeId(pair[1]));
    }
  }

  const json& edges = detail::at(doc, "connection_edges", "");
  if (!edges.is_array()) throw ParseError("expected an array", "connection_edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string el = "connection_edges[" + std::to_string(i) + "]";
    const json& ej = edges[i];
    ConnectionEdge e;
    e.id = detail::get<std::string>(ej, "id", el);
    const auto ends = detail::get<std::vector<std::string>>(ej, "nodes", el);
    if (ends.size() != 2) throw ParseError("expected two nodes", el + ".nodes");
    e.nodes = {NodeId(ends[0]), NodeId(ends[1])};
    const json& insts = detail::at(ej, "instances", el);
    if (!insts.is_array()) throw ParseError("expected an array", el + ".instances");
    for (std::size_t k = 0; k < insts.size(); ++k) {
      const std::string il = el + ".instances[" + std::to_string(k) + "]";
      const json& ij = insts[k];
      ConnectionInstance inst;
      inst.type = detail::connector_type(detail::at(ij, "type", il), il + ".type");
      if (const json* c = detail::maybe(ij, "connector"))
        inst.connector = ConnectorId(detail::as<std::string>(*c, il + ".connector"));
      inst.end_a = endpoint(detail::at(ij, "end_a", il), il + ".end_a");
      inst.end_b = endpoint(detail::at(ij, "end_b", il), il + ".end_b");
      if (const json* l = detail::maybe(ij, "screw_lead")) inst.screw_lead = detail::number(*l, il + ".screw_lead");
      e.instances.push_back(std::move(inst));
    }
    g.connection_edges.push_back(std::move(e));
  }

  g.step_order = detail::get<std::vector<std::string>>(doc, "step_order", "");
  return g;
}

std::string save_graph(const AssemblyGraph& g) {
  json doc;
  doc["format_version"] = kGraphFormatVersion;
  doc["name"] = g.name;

  json parts = json::object();
  for (const auto& [pid, part] : g.parts) {
    json points = json::object();
    for (const auto& [ptid, f] : part.points)
      points[ptid.str()] = {{"position", detail::to_json(f.position)}, {"normal", detail::to_json(f.normal)}};
    parts[pid.str()] = {{"name", part.name}, {"points", points}};
  }
  doc["parts"] = parts;

  json conns = json::object();
  for (const auto& [cid, t] : g.connectors) conns[cid.str()] = to_string(t);
  doc["connectors"] = conns;

  json nodes = json::array();
  for (const auto& n : g.nodes) {
    json nj = {{"id", n.id.str()}, {"kind", to_string(n.kind)}};
    if (n.part) nj["part"] = n.part->str();
    if (!n.children.empty()) {
      json c = json::array();
      for (const auto& id : n.children) c.push_back(id.str());
      nj["children"] = c;
    }
    nodes.push_back(nj);
  }
  doc["nodes"] = nodes;

  json eq = json::array();
  for (const auto& [a, b] : g.equivalence_edges) eq.push_back({a.str(), b.str()});
  doc["equivalence_edges"] = eq;

  json edges = json::array();
  for (const auto& e : g.connection_edges) {
    json insts = json::array();
    for (const auto& inst : e.instances) {
      json ij = {{"type", to_string(inst.type)}, {"end_a", to_json(inst.end_a)}, {"end_b", to_json(inst.end_b)}};
      if (inst.connector) ij["connector"] = inst.connector->str();
      if (inst.screw_lead) ij["screw_lead"] = *inst.screw_lead;
      insts.push_back(ij);
    }
    edges.push_back({{"id", e.id}, {"nodes", {e.nodes.first.str(), e.nodes.second.str()}}, {"instances", insts}});
  }
  doc["connection_edges"] = edges;
  doc["step_order"] = g.step_order;
  return doc.dump(2) + "\n";
}

AssemblyGraph load_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingAsset("cannot open graph file", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_graph(ss.str());
}

void save_graph_file(const AssemblyGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingAsset("cannot write graph file", path.string());
  out << save_graph(graph);
}

}  // namespace connkit
