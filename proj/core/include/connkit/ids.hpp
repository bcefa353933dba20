#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>

namespace connkit {

// Opaque string identifier tagged by namespace so a PartId can never be
// passed where a NodeId is expected.
template <class Tag>
class Id {
 public:
  Id() = default;
  explicit Id(std::string value) : value_(std::move(value)) {}
  explicit Id(const char* value) : value_(value) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const Id&, const Id&) = default;
  friend bool operator==(const Id&, const Id&) = default;
  friend std::ostream& operator<<(std::ostream& os, const Id& id) { return os << id.value_; }

 private:
  std::string value_;
};

using PartId = Id<struct PartIdTag>;
using ConnectorId = Id<struct ConnectorIdTag>;
using NodeId = Id<struct NodeIdTag>;
// Attachment point labels follow manual style: part number + letter ("1B", "5E").
using PointId = Id<struct PointIdTag>;

}  // namespace connkit

template <class Tag>
struct std::hash<connkit::Id<Tag>> {
  std::size_t operator()(const connkit::Id<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
