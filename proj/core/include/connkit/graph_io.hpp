#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "connkit/graph.hpp"

namespace connkit {

inline constexpr int kGraphFormatVersion = 1;

// UTF-8 JSON graph file. Throws ParseError (with line) on malformed JSON and
// missing/mistyped fields, SchemaError on unknown enum values or versions.
AssemblyGraph load_graph(std::string_view bytes);
std::string save_graph(const AssemblyGraph& graph);

AssemblyGraph load_graph_file(const std::filesystem::path& path);
void save_graph_file(const AssemblyGraph& graph, const std::filesystem::path& path);

}  // namespace connkit
