#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "connkit/extraction.hpp"

namespace connkit::vlm {

enum class Stage { One = 1, Two = 2 };

struct ImageRef {
  std::string role;  // "manual" or "component"
  std::string path;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

struct PromptBundle {
  Stage stage = Stage::One;
  std::string task;
  int step_index = 0;
  std::string text;
  std::vector<ImageRef> images;  // manual first (when present), then components

  friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

using ConnectorGlossary = std::map<ConnectorType, std::string>;
const ConnectorGlossary& default_glossary();

struct StageOneEntry {
  std::string component;  // as named by the model
  int count = 0;
  ConnectorType type = ConnectorType::Dowel;
};

struct StageOneOutput {
  std::vector<StageOneEntry> entries;
  // Connectors implied by the counts (each joins two points), rounded down.
  int connector_total() const;
  // Σ counts is even for every connector type.
  bool consistent() const;
};

struct ParseOptions {
  bool strict = false;  // whole response must be bare JSON with canonical type names
};

struct StageTwoResult {
  StepPrediction prediction;
  std::vector<PointId> unknown_ids;  // ids not among the step's candidates
};

// Maps free-form connector names ("wooden dowel", "Screws") to a type.
std::optional<ConnectorType> normalize_connector_name(std::string_view name);

// Pulls the first JSON object/array out of a model response, tolerating code
// fences, surrounding prose, smart quotes and trailing commas. Returns the
// repaired JSON text.
std::optional<std::string> extract_json(std::string_view raw);

PromptBundle build_stage1_prompt(const ExtractionStep& step, std::string_view task,
                                 const ConnectorGlossary& glossary = default_glossary());
PromptBundle build_stage2_prompt(const ExtractionStep& step, std::string_view task, const StageOneOutput& stage1,
                                 const ConnectorGlossary& glossary = default_glossary());

StageOneOutput parse_stage1(std::string_view raw, const ParseOptions& opt = {});
StageTwoResult parse_stage2(std::string_view raw, const ExtractionStep& step, const StageOneOutput* stage1 = nullptr,
                            const ParseOptions& opt = {});

// --- model clients ---------------------------------------------------------

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual std::string send(const PromptBundle& prompt) = 0;
  // False when send() must not be called from several threads at once.
  virtual bool concurrent_safe() const { return false; }
};

// Returns canned responses keyed by (step, stage); unknown keys yield the
// fallback text.
class ScriptedClient final : public ModelClient {
 public:
  void set(int step_index, Stage stage, std::string response);
  void set_fallback(std::string response) { fallback_ = std::move(response); }
  std::string send(const PromptBundle& prompt) override;
  bool concurrent_safe() const override { return true; }
  std::size_t calls() const { return calls_; }

 private:
  std::map<std::pair<int, int>, std::string> responses_;
  std::string fallback_ = "[]";
  std::atomic<std::size_t> calls_{0};
};

// Scripts a ScriptedClient with responses derived from the dataset's ground
// truth.
std::unique_ptr<ScriptedClient> make_oracle_client(const ExtractionDataset& dataset);

// Recorded-response replay. File: JSON lines {"step":1,"stage":1,"response":"..."}.
class ReplayClient final : public ModelClient {
 public:
  explicit ReplayClient(std::string_view jsonl);
  std::string send(const PromptBundle& prompt) override;
  bool concurrent_safe() const override { return true; }

 private:
  std::map<std::pair<int, int>, std::string> responses_;
};

struct HttpClientConfig {
  std::string endpoint;  // e.g. https://host/v1/chat/completions
  std::string model;
  std::string api_key;   // defaults to $CONNKIT_MODEL_KEY
  std::chrono::seconds timeout{120};
  bool inline_images = true;  // send readable image files as base64 data URLs
};

// Chat-completions style JSON over HTTP(S). One request per send(); retries
// are the pipeline's job.
class HttpClient final : public ModelClient {
 public:
  explicit HttpClient(HttpClientConfig config);
  std::string send(const PromptBundle& prompt) override;
  bool concurrent_safe() const override { return true; }

  static std::string request_body(const HttpClientConfig& config, const PromptBundle& prompt);
  static std::string response_text(std::string_view body);

 private:
  HttpClientConfig config_;
};

// --- pipeline --------------------------------------------------------------

struct PipelineOptions {
  int max_attempts = 3;
  std::chrono::milliseconds backoff{500};  // doubled after each failed attempt
  int parallelism = 1;
  ParseOptions parse;
  ConnectorGlossary glossary = default_glossary();
  // Steps already present here are reused without querying the client.
  std::vector<StepPrediction> resume;
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to std::this_thread::sleep_for
};

struct StepDiagnostic {
  int step_index = 0;
  int attempts = 0;
  bool degraded = false;  // fell back to an empty prediction
  std::vector<std::string> messages;
};

struct PipelineResult {
  std::vector<StepPrediction> predictions;  // dataset step order
  std::vector<StepDiagnostic> diagnostics;
};

// Stage 1 then stage 2 for every step; a failing step degrades to an empty
// prediction and never aborts the batch.
PipelineResult run_pipeline(const ExtractionDataset& dataset, ModelClient& client, const PipelineOptions& opt = {});

}  // namespace connkit::vlm
