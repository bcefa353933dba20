#include "connkit/vlm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "connkit/error.hpp"
#include "connkit_prompts.hpp"
#include "json_util.hpp"

namespace connkit::vlm {

using detail::json;
using ordered = nlohmann::ordered_json;

const ConnectorGlossary& default_glossary() {
  static const ConnectorGlossary g = {
      {ConnectorType::MortiseTenon,
       "a tenon machined on one part slides into a mortise (slot or socket) on the other; no separate connector piece"},
      {ConnectorType::Dowel, "a cylindrical wooden pin pushed into matching holes on both parts"},
      {ConnectorType::Screw, "a threaded fastener driven through one part into the other by turning it"},
  };
  return g;
}

int StageOneOutput::connector_total() const {
  std::map<ConnectorType, int> sum;
  for (const auto& e : entries) sum[e.type] += e.count;
  int total = 0;
  for (const auto& [_, n] : sum) total += n / 2;
  return total;
}

bool StageOneOutput::consistent() const {
  std::map<ConnectorType, int> sum;
  for (const auto& e : entries) sum[e.type] += e.count;
  return std::all_of(sum.begin(), sum.end(), [](const auto& kv) { return kv.second % 2 == 0; });
}

namespace {

std::string lower_words(std::string_view s) {
  std::string out;
  bool space = false;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      if (space && !out.empty()) out += ' ';
      out += static_cast<char>(std::tolower(c));
      space = false;
    } else {
      space = true;
    }
  }
  return out;
}

bool has_word(const std::string& words, std::string_view w) {
  std::istringstream in(words);
  std::string tok;
  while (in >> tok)
    if (tok == w || (tok.size() == w.size() + 1 && tok.back() == 's' && tok.compare(0, w.size(), w) == 0)) return true;
  return false;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
  return s;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string excerpt(std::string_view raw) {
  constexpr std::size_t kMax = 120;
  std::string s = trim(raw);
  if (s.size() > kMax) s = s.substr(0, kMax) + "...";
  return s.empty() ? "<empty response>" : s;
}

// End of the bracketed value opening at `open`, honouring string literals.
std::optional<std::size_t> matching_close(const std::string& s, std::size_t open) {
  std::vector<char> stack;
  bool in_str = false;
  char quote = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == quote) in_str = false;
      continue;
    }
    if (c == '"' || c == '\'') {
      in_str = true;
      quote = c;
    } else if (c == '{' || c == '[') {
      stack.push_back(c == '{' ? '}' : ']');
    } else if (c == '}' || c == ']') {
      if (stack.empty() || stack.back() != c) return std::nullopt;
      stack.pop_back();
      if (stack.empty()) return i;
    }
  }
  return std::nullopt;
}

std::string drop_trailing_commas(const std::string& s) {
  std::string out;
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      out += c;
      if (c == '\\' && i + 1 < s.size()) out += s[++i];
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;
    }
    out += c;
  }
  return out;
}

// Python-style 'single quoted' strings become JSON strings.
std::string requote(const std::string& s) {
  std::string out;
  bool in_dq = false, in_sq = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_dq) {
      out += c;
      if (c == '\\' && i + 1 < s.size()) out += s[++i];
      else if (c == '"') in_dq = false;
    } else if (in_sq) {
      if (c == '\'') {
        out += '"';
        in_sq = false;
      } else if (c == '"') {
        out += "\\\"";
      } else {
        out += c;
      }
    } else if (c == '"') {
      in_dq = true;
      out += c;
    } else if (c == '\'') {
      in_sq = true;
      out += '"';
    } else {
      out += c;
    }
  }
  return out;
}

std::optional<std::string> first_json_in(const std::string& text) {
  for (std::size_t start = 0; start < text.size(); ++start) {
    if (text[start] != '{' && text[start] != '[') continue;
    auto close = matching_close(text, start);
    if (!close) continue;
    const std::string candidate = text.substr(start, *close - start + 1);
    for (const std::string& fixed : {drop_trailing_commas(candidate), drop_trailing_commas(requote(candidate))})
      if (json::accept(fixed)) return fixed;
  }
  return std::nullopt;
}

}  // namespace

std::optional<ConnectorType> normalize_connector_name(std::string_view name) {
  const std::string w = lower_words(name);
  if (w.empty()) return std::nullopt;
  if (has_word(w, "tenon") || has_word(w, "mortise") || w == "mortise tenon") return ConnectorType::MortiseTenon;
  if (has_word(w, "dowel") || has_word(w, "pin")) return ConnectorType::Dowel;
  if (has_word(w, "screw") || has_word(w, "bolt")) return ConnectorType::Screw;
  return std::nullopt;
}

std::optional<std::string> extract_json(std::string_view raw) {
  std::string text(raw);
  text = replace_all(text, "\xE2\x80\x9C", "\"");
  text = replace_all(text, "\xE2\x80\x9D", "\"");
  text = replace_all(text, "\xE2\x80\x98", "'");
  text = replace_all(text, "\xE2\x80\x99", "'");

  // Prefer the first fenced block when there is one.
  if (auto fence = text.find("```"); fence != std::string::npos) {
    auto body = text.find('\n', fence);
    auto end = body == std::string::npos ? std::string::npos : text.find("```", body);
    if (end != std::string::npos)
      if (auto j = first_json_in(text.substr(body + 1, end - body - 1))) return j;
  }
  return first_json_in(text);
}

// --- prompts ---------------------------------------------------------------

namespace {

void require_assets(const ExtractionStep& step) {
  const std::string locus = "step " + std::to_string(step.step_index);
  if (step.components.size() < 2)
    throw MissingAsset("a step needs at least two components, found " + std::to_string(step.components.size()), locus);
  if (step.manual_present && step.manual_image.empty()) throw MissingAsset("manual image reference is empty", locus);
  for (const auto& c : step.components)
    if (c.image.empty()) throw MissingAsset("component \"" + c.name + "\" has no image reference", locus);
}

std::string components_text(const ExtractionStep& step) {
  std::ostringstream os;
  std::size_t total = 0;
  for (std::size_t i = 0; i < step.components.size(); ++i) {
    const auto& c = step.components[i];
    total += c.candidates.size();
    os << "- Component " << i + 1 << ": \"" << c.name << "\" (image " << c.image << "), candidate attachment points:";
    for (std::size_t k = 0; k < c.candidates.size(); ++k) os << (k ? ", " : " ") << c.candidates[k];
    os << "\n";
  }
  os << total << " candidate attachment points in total.";
  return os.str();
}

std::string glossary_text(const ConnectorGlossary& g) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [t, text] : g) {
    os << (first ? "" : "\n") << "- " << to_string(t) << ": " << text;
    first = false;
  }
  return os.str();
}

std::string manual_note(const ExtractionStep& step) {
  if (step.manual_present)
    return "The manual page for this step is the first attached image (" + step.manual_image +
           "); the component renderings follow in the order listed below.";
  return "The manual page for this step is unavailable. Only the component renderings are attached; infer the "
         "connections from them and from your prior knowledge of how such products are assembled.";
}

PromptBundle bundle(Stage stage, const ExtractionStep& step, std::string_view task, std::string text) {
  PromptBundle b;
  b.stage = stage;
  b.task = std::string(task);
  b.step_index = step.step_index;
  b.text = std::move(text);
  if (step.manual_present) b.images.push_back({"manual", step.manual_image});
  for (const auto& c : step.components) b.images.push_back({"component", c.image});
  return b;
}

std::string fill_common(std::string_view tmpl, const ExtractionStep& step, std::string_view task,
                        const ConnectorGlossary& glossary) {
  std::string t(tmpl);
  t = replace_all(t, "{{task}}", task);
  t = replace_all(t, "{{step}}", std::to_string(step.step_index));
  t = replace_all(t, "{{manual_note}}", manual_note(step));
  t = replace_all(t, "{{components}}", components_text(step));
  t = replace_all(t, "{{glossary}}", glossary_text(glossary));
  return t;
}

}  // namespace

PromptBundle build_stage1_prompt(const ExtractionStep& step, std::string_view task, const ConnectorGlossary& glossary) {
  require_assets(step);
  return bundle(Stage::One, step, task, fill_common(prompts::kPrompt_stage1_v1, step, task, glossary));
}

PromptBundle build_stage2_prompt(const ExtractionStep& step, std::string_view task, const StageOneOutput& stage1,
                                 const ConnectorGlossary& glossary) {
  require_assets(step);
  std::ostringstream s1;
  for (std::size_t i = 0; i < stage1.entries.size(); ++i) {
    const auto& e = stage1.entries[i];
    s1 << (i ? "\n" : "") << "- \"" << e.component << "\": " << e.count << " " << to_string(e.type);
  }
  if (stage1.entries.empty()) s1 << "- (no connectors reported)";
  std::string text = fill_common(prompts::kPrompt_stage2_v1, step, task, glossary);
  text = replace_all(text, "{{stage1}}", s1.str());
  return bundle(Stage::Two, step, task, std::move(text));
}

// --- parsing ---------------------------------------------------------------

namespace {

ordered parse_response(std::string_view raw, const ParseOptions& opt) {
  if (opt.strict) {
    const std::string t = trim(raw);
    if (!json::accept(t)) throw UnparseableResponse("response is not bare JSON", excerpt(raw));
    return ordered::parse(t);
  }
  auto text = extract_json(raw);
  if (!text) throw UnparseableResponse("no JSON value found in response", excerpt(raw));
  return ordered::parse(*text);
}

ConnectorType type_name(const ordered& j, const ParseOptions& opt, const std::string& span) {
  if (!j.is_string()) throw UnparseableResponse("connector type must be a string", j.dump());
  const auto s = j.get<std::string>();
  std::optional<ConnectorType> t = opt.strict ? connector_type_from_string(s) : normalize_connector_name(s);
  if (!t) throw UnparseableResponse("unknown connector type \"" + s + "\"", span);
  return *t;
}

int count_value(const ordered& j, const std::string& span) {
  if (j.is_number_integer() && j.get<long long>() >= 0) return static_cast<int>(j.get<long long>());
  if (j.is_number_float()) {
    const double d = j.get<double>();
    if (d >= 0 && d == std::floor(d)) return static_cast<int>(d);
  }
  if (j.is_string()) {
    const auto s = trim(j.get<std::string>());
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
      return std::stoi(s);
  }
  throw UnparseableResponse("connector count must be a non-negative integer", span);
}

}  // namespace

StageOneOutput parse_stage1(std::string_view raw, const ParseOptions& opt) {
  const ordered doc = parse_response(raw, opt);
  if (!doc.is_object()) throw UnparseableResponse("expected an object of component -> [count, type]", excerpt(raw));
  StageOneOutput out;
  for (const auto& [name, v] : doc.items()) {
    StageOneEntry e;
    e.component = name;
    const std::string span = "\"" + name + "\": " + v.dump();
    if (v.is_array() && v.size() == 2) {
      e.count = count_value(v[0], span);
      e.type = type_name(v[1], opt, span);
    } else if (v.is_object() && v.contains("count") && v.contains("type")) {
      e.count = count_value(v["count"], span);
      e.type = type_name(v["type"], opt, span);
    } else {
      throw UnparseableResponse("expected [count, type]", span);
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

namespace {

struct RawPair {
  std::string a, b;
  std::optional<std::string> type;
};

std::string id_text(const ordered& j, const std::string& span) {
  if (j.is_string()) return trim(j.get<std::string>());
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw UnparseableResponse("attachment point id must be a string", span);
}

std::vector<RawPair> raw_pairs(const ordered& doc, std::string_view raw) {
  const ordered* list = &doc;
  if (doc.is_object()) {
    auto it = doc.find("pairs");
    if (it == doc.end()) throw UnparseableResponse("expected a list of pairs", excerpt(raw));
    list = &*it;
  }
  if (!list->is_array()) throw UnparseableResponse("expected a list of pairs", excerpt(raw));
  std::vector<RawPair> out;
  for (const auto& item : *list) {
    const std::string span = item.dump();
    RawPair p;
    if (item.is_array() && (item.size() == 2 || item.size() == 3)) {
      p.a = id_text(item[0], span);
      p.b = id_text(item[1], span);
      if (item.size() == 3) {
        if (!item[2].is_string()) throw UnparseableResponse("connector type must be a string", span);
        p.type = item[2].get<std::string>();
      }
    } else if (item.is_object()) {
      if (item.contains("pair") && item["pair"].is_array() && item["pair"].size() == 2) {
        p.a = id_text(item["pair"][0], span);
        p.b = id_text(item["pair"][1], span);
      } else if (item.contains("a") && item.contains("b")) {
        p.a = id_text(item["a"], span);
        p.b = id_text(item["b"], span);
      } else {
        throw UnparseableResponse("pair object needs \"pair\" or \"a\"/\"b\"", span);
      }
      if (item.contains("type")) {
        if (!item["type"].is_string()) throw UnparseableResponse("connector type must be a string", span);
        p.type = item["type"].get<std::string>();
      }
    } else {
      throw UnparseableResponse("expected a two-element pair", span);
    }
    out.push_back(std::move(p));
  }
  return out;
}

// Bare [1B, 5E] style pairs in prose, as models often write them.
std::vector<RawPair> prose_pairs(std::string_view raw) {
  static const std::regex re(R"(\[\s*["']?([A-Za-z0-9]+)["']?\s*,\s*["']?([A-Za-z0-9]+)["']?\s*(?:,\s*["']?([A-Za-z _-]+?)["']?\s*)?\])");
  std::vector<RawPair> out;
  const std::string text(raw);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    RawPair p{(*it)[1].str(), (*it)[2].str(), std::nullopt};
    if ((*it)[3].matched) p.type = (*it)[3].str();
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<std::size_t> owner_of(const ExtractionStep& step, const PointId& id) {
  for (std::size_t i = 0; i < step.components.size(); ++i) {
    const auto& c = step.components[i].candidates;
    if (std::find(c.begin(), c.end(), id) != c.end()) return i;
  }
  return std::nullopt;
}

std::optional<ConnectorType> stage1_type(const StageOneOutput* s1, const ExtractionStep& step, std::size_t comp) {
  if (!s1) return std::nullopt;
  const std::string want = lower_words(step.components[comp].name);
  for (const auto& e : s1->entries)
    if (e.count > 0 && lower_words(e.component) == want) return e.type;
  return std::nullopt;
}

ConnectorType budget_type(const ExtractionStep& step) {
  std::optional<ConnectorType> best;
  int most = 0;
  for (const auto& [t, n] : step.connector_budget)
    if (n > most) {
      most = n;
      best = t;
    }
  return best.value_or(ConnectorType::Dowel);
}

}  // namespace

StageTwoResult parse_stage2(std::string_view raw, const ExtractionStep& step, const StageOneOutput* stage1,
                            const ParseOptions& opt) {
  std::vector<RawPair> pairs;
  try {
    pairs = raw_pairs(parse_response(raw, opt), raw);
  } catch (const UnparseableResponse&) {
    if (opt.strict) throw;
    pairs = prose_pairs(raw);
    if (pairs.empty()) throw;
  }

  StageTwoResult out;
  out.prediction.step_index = step.step_index;
  auto& flags = out.prediction.flags;
  std::set<PointId> unknown;
  std::set<std::pair<PointId, PointId>> seen;
  for (const auto& rp : pairs) {
    const PointId a(rp.a), b(rp.b);
    const auto oa = owner_of(step, a), ob = owner_of(step, b);
    for (const auto& [id, owner] : {std::pair{a, oa}, std::pair{b, ob}})
      if (!owner && unknown.insert(id).second) {
        out.unknown_ids.push_back(id);
        flags.push_back("unknown_id:" + id.str());
      }
    if (oa && ob && *oa == *ob) flags.push_back("same_component:" + rp.a + "," + rp.b);

    ConnectorType type;
    if (rp.type) {
      const auto t = opt.strict ? connector_type_from_string(*rp.type) : normalize_connector_name(*rp.type);
      if (!t) throw UnparseableResponse("unknown connector type \"" + *rp.type + "\"", *rp.type);
      type = *t;
    } else if (auto t = oa ? stage1_type(stage1, step, *oa) : std::nullopt) {
      type = *t;
    } else if (auto t2 = ob ? stage1_type(stage1, step, *ob) : std::nullopt) {
      type = *t2;
    } else {
      type = budget_type(step);
    }
    PointPair p(a, b, type);
    if (!seen.insert({p.a, p.b}).second) flags.push_back("duplicate_pair:" + p.a.str() + "," + p.b.str());
    out.prediction.pairs.push_back(std::move(p));
  }

  int limit = 0;
  if (stage1) {
    limit = stage1->connector_total();
    if (!stage1->consistent()) flags.push_back("stage1_inconsistent");
  } else {
    for (const auto& [_, n] : step.connector_budget) limit += n;
  }
  if (static_cast<int>(out.prediction.pairs.size()) > limit)
    flags.push_back("over_budget:" + std::to_string(out.prediction.pairs.size()) + ">" + std::to_string(limit));
  return out;
}

// --- clients ---------------------------------------------------------------

void ScriptedClient::set(int step_index, Stage stage, std::string response) {
  responses_[{step_index, static_cast<int>(stage)}] = std::move(response);
}

std::string ScriptedClient::send(const PromptBundle& prompt) {
  ++calls_;
  auto it = responses_.find({prompt.step_index, static_cast<int>(prompt.stage)});
  return it == responses_.end() ? fallback_ : it->second;
}

std::unique_ptr<ScriptedClient> make_oracle_client(const ExtractionDataset& dataset) {
  auto client = std::make_unique<ScriptedClient>();
  for (const auto& step : dataset.steps) {
    ordered s1 = ordered::object();
    for (const auto& comp : step.components) {
      std::map<ConnectorType, int> per_type;
      for (const auto& p : step.truth_pairs)
        for (const auto& id : {p.a, p.b})
          if (std::find(comp.candidates.begin(), comp.candidates.end(), id) != comp.candidates.end()) ++per_type[p.type];
      int count = 0, most = 0;
      ConnectorType type = budget_type(step);
      for (const auto& [t, n] : per_type) {
        count += n;
        if (n > most) {
          most = n;
          type = t;
        }
      }
      s1[comp.name] = ordered::array({count, to_string(type)});
    }
    ordered s2 = ordered::array();
    for (const auto& p : step.truth_pairs) s2.push_back({p.a.str(), p.b.str(), to_string(p.type)});
    client->set(step.step_index, Stage::One, s1.dump());
    client->set(step.step_index, Stage::Two, s2.dump());
  }
  return client;
}

ReplayClient::ReplayClient(std::string_view jsonl) {
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    const std::string locus = "replay line " + std::to_string(n);
    const json j = detail::parse_json(line, locus);
    const int step = detail::get<int>(j, "step", locus);
    const int stage = detail::get<int>(j, "stage", locus);
    if (stage != 1 && stage != 2) throw SchemaError("stage must be 1 or 2", locus + ".stage");
    responses_[{step, stage}] = detail::get<std::string>(j, "response", locus);
  }
}

std::string ReplayClient::send(const PromptBundle& prompt) {
  auto it = responses_.find({prompt.step_index, static_cast<int>(prompt.stage)});
  if (it == responses_.end())
    throw TransportError("no recorded response", "step " + std::to_string(prompt.step_index) + " stage " +
                                                     std::to_string(static_cast<int>(prompt.stage)));
  return it->second;
}

// --- pipeline --------------------------------------------------------------

namespace {

struct StepOutcome {
  StepPrediction prediction;
  StepDiagnostic diagnostic;
};

StepOutcome run_step(const ExtractionStep& step, std::string_view task, ModelClient& client, const PipelineOptions& opt,
                     std::mutex* serial) {
  StepOutcome out;
  out.diagnostic.step_index = step.step_index;
  auto call = [&](const PromptBundle& p) {
    if (!serial) return client.send(p);
    std::lock_guard lock(*serial);
    return client.send(p);
  };
  auto delay = opt.backoff;
  const int attempts = std::max(1, opt.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    out.diagnostic.attempts = attempt;
    try {
      const StageOneOutput s1 = parse_stage1(call(build_stage1_prompt(step, task, opt.glossary)), opt.parse);
      StageTwoResult s2 = parse_stage2(call(build_stage2_prompt(step, task, s1, opt.glossary)), step, &s1, opt.parse);
      out.prediction = std::move(s2.prediction);
      return out;
    } catch (const MissingAsset& e) {
      out.diagnostic.messages.push_back(std::string("attempt ") + std::to_string(attempt) + ": " + e.what());
      break;  // retrying cannot produce the asset
    } catch (const std::exception& e) {
      out.diagnostic.messages.push_back(std::string("attempt ") + std::to_string(attempt) + ": " + e.what());
      if (attempt < attempts) {
        if (opt.sleep) opt.sleep(delay);
        else std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
  }
  out.diagnostic.degraded = true;
  out.prediction = StepPrediction{};
  out.prediction.step_index = step.step_index;
  out.prediction.flags.push_back("degraded");
  return out;
}

}  // namespace

PipelineResult run_pipeline(const ExtractionDataset& dataset, ModelClient& client, const PipelineOptions& opt) {
  const std::size_t n = dataset.steps.size();
  std::vector<StepOutcome> results(n);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& step = dataset.steps[i];
    auto done = std::find_if(opt.resume.begin(), opt.resume.end(),
                             [&](const StepPrediction& p) { return p.step_index == step.step_index; });
    if (done != opt.resume.end()) {
      results[i].prediction = *done;
      results[i].diagnostic.step_index = step.step_index;
      results[i].diagnostic.messages.push_back("resumed");
    } else {
      todo.push_back(i);
    }
  }

  const bool parallel = opt.parallelism > 1;
  std::mutex serial;
  std::mutex* lock = parallel && !client.concurrent_safe() ? &serial : nullptr;
  auto work = [&](std::size_t i) { results[i] = run_step(dataset.steps[i], dataset.task, client, opt, lock); };
  if (!parallel || todo.size() < 2) {
    for (auto i : todo) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(opt.parallelism), todo.size());
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t k; (k = next++) < todo.size();) work(todo[k]);
      });
    for (auto& t : pool) t.join();
  }

  PipelineResult out;
  for (auto& r : results) {
    out.predictions.push_back(std::move(r.prediction));
    out.diagnostics.push_back(std::move(r.diagnostic));
  }
  return out;
}

}  // namespace connkit::vlm
