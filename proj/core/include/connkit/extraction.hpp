#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "connkit/graph.hpp"

namespace connkit {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kPredictionsFormatVersion = 1;

// Unordered attachment-point pair joined by one connector. Constructed pairs
// are normalized so that a <= b.
struct PointPair {
  PointId a;
  PointId b;
  ConnectorType type = ConnectorType::Dowel;

  PointPair() = default;
  PointPair(PointId x, PointId y, ConnectorType t);

  friend auto operator<=>(const PointPair&, const PointPair&) = default;
};

struct StepComponent {
  NodeId node;
  std::string name;
  std::string image;  // opaque reference to the rendered component image
  std::vector<PointId> candidates;
};

struct ExtractionStep {
  int step_index = 1;
  std::vector<StepComponent> components;
  std::map<ConnectorType, int> connector_budget;
  std::vector<PointPair> truth_pairs;
  bool manual_present = true;
  std::string manual_image;
};

struct ExtractionDataset {
  std::string task;
  std::vector<ExtractionStep> steps;
};

struct StepPrediction {
  int step_index = 1;
  std::vector<PointPair> pairs;
  std::vector<std::string> flags;  // parser/pipeline diagnostics, not scored
};

struct ExtractionScore {
  double pair_f1 = 0.0;
  double pair_success = 0.0;
  double set_f1 = 0.0;
  double set_success = 0.0;
};

struct ScoreOptions {
  // A predicted pair only counts as a true positive when its connector type
  // also matches.
  bool match_connector_type = true;
};

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

// 2TP / (2TP + FP + FN); 1 when prediction and truth are both empty.
double f1_score(const MatchCounts& c);

MatchCounts pair_counts(const StepPrediction& pred, const ExtractionStep& truth, const ScoreOptions& opt = {});
MatchCounts set_counts(const StepPrediction& pred, const ExtractionStep& truth);

// Throws StepMismatch when step indices differ.
ExtractionScore score_step(const StepPrediction& pred, const ExtractionStep& truth, const ScoreOptions& opt = {});

struct DatasetScore {
  ExtractionScore mean;
  std::vector<ExtractionScore> per_step;  // dataset step order
};

// Missing predictions are scored as empty; predictions for unknown steps
// are ignored.
DatasetScore score_dataset(const std::vector<StepPrediction>& preds, const ExtractionDataset& dataset,
                           const ScoreOptions& opt = {});

// For each budgeted connector, draws two distinct components uniformly among
// those with unused candidates, then one unused candidate from each.
// Deterministic for a given seed. Throws InsufficientCandidates.
StepPrediction random_baseline(const ExtractionStep& step, std::uint64_t seed);

// One extraction step per connection edge in step order; candidates are the
// attachment points of each side not consumed by earlier steps.
ExtractionDataset derive_dataset(const AssemblyGraph& graph, std::string_view asset_prefix = "assets");

ExtractionDataset load_dataset(std::string_view bytes);
std::string save_dataset(const ExtractionDataset& dataset);

std::vector<StepPrediction> load_predictions(std::string_view bytes);
std::string save_predictions(const std::vector<StepPrediction>& preds, std::string_view task);

}  // namespace connkit
