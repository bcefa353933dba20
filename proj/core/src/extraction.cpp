#include "connkit/extraction.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "connkit/error.hpp"
#include "json_util.hpp"

namespace connkit {

using detail::json;

PointPair::PointPair(PointId x, PointId y, ConnectorType t) : a(std::move(x)), b(std::move(y)), type(t) {
  if (b < a) std::swap(a, b);
}

double f1_score(const MatchCounts& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

MatchCounts pair_counts(const StepPrediction& pred, const ExtractionStep& truth, const ScoreOptions& opt) {
  auto key = [&](const PointPair& p) {
    return std::tuple(p.a, p.b, opt.match_connector_type ? static_cast<int>(p.type) : -1);
  };
  std::multiset<decltype(key(PointPair{}))> open;
  for (const auto& p : truth.truth_pairs) open.insert(key(p));
  MatchCounts c;
  for (const auto& p : pred.pairs) {
    // Re-normalize in case the caller filled a/b directly.
    const PointPair n(p.a, p.b, p.type);
    auto it = open.find(key(n));
    if (it == open.end()) {
      ++c.fp;
    } else {
      ++c.tp;
      open.erase(it);
    }
  }
  c.fn = open.size();
  return c;
}

MatchCounts set_counts(const StepPrediction& pred, const ExtractionStep& truth) {
  std::set<PointId> p, t;
  for (const auto& x : pred.pairs) p.insert({x.a, x.b});
  for (const auto& x : truth.truth_pairs) t.insert({x.a, x.b});
  MatchCounts c;
  for (const auto& id : p) (t.count(id) ? c.tp : c.fp)++;
  c.fn = t.size() - c.tp;
  return c;
}

ExtractionScore score_step(const StepPrediction& pred, const ExtractionStep& truth, const ScoreOptions& opt) {
  if (pred.step_index != truth.step_index)
    throw StepMismatch("prediction for step " + std::to_string(pred.step_index) + " scored against step " +
                           std::to_string(truth.step_index),
                       "step " + std::to_string(truth.step_index));
  const MatchCounts pc = pair_counts(pred, truth, opt);
  const MatchCounts sc = set_counts(pred, truth);
  ExtractionScore s;
  s.pair_f1 = f1_score(pc);
  s.pair_success = pc.fp == 0 && pc.fn == 0 ? 1.0 : 0.0;
  s.set_f1 = f1_score(sc);
  s.set_success = sc.fp == 0 && sc.fn == 0 ? 1.0 : 0.0;
  return s;
}

DatasetScore score_dataset(const std::vector<StepPrediction>& preds, const ExtractionDataset& dataset,
                           const ScoreOptions& opt) {
  DatasetScore out;
  for (const auto& step : dataset.steps) {
    auto it = std::find_if(preds.begin(), preds.end(),
                           [&](const StepPrediction& p) { return p.step_index == step.step_index; });
    StepPrediction empty;
    empty.step_index = step.step_index;
    const ExtractionScore s = score_step(it == preds.end() ? empty : *it, step, opt);
    out.per_step.push_back(s);
    out.mean.pair_f1 += s.pair_f1;
    out.mean.pair_success += s.pair_success;
    out.mean.set_f1 += s.set_f1;
    out.mean.set_success += s.set_success;
  }
  if (!out.per_step.empty()) {
    const double n = static_cast<double>(out.per_step.size());
    out.mean.pair_f1 /= n;
    out.mean.pair_success /= n;
    out.mean.set_f1 /= n;
    out.mean.set_success /= n;
  }
  return out;
}

namespace {

// Unbiased index in [0, n) by rejection; unlike std::uniform_int_distribution
// the sequence is identical across standard libraries.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

}  // namespace

StepPrediction random_baseline(const ExtractionStep& step, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<PointId>> unused;
  for (const auto& c : step.components) unused.push_back(c.candidates);

  StepPrediction pred;
  pred.step_index = step.step_index;
  for (const auto& [type, count] : step.connector_budget) {
    for (int n = 0; n < count; ++n) {
      std::vector<std::size_t> open;
      for (std::size_t i = 0; i < unused.size(); ++i)
        if (!unused[i].empty()) open.push_back(i);
      if (open.size() < 2)
        throw InsufficientCandidates("budget of " + std::to_string(count) + " " + std::string(to_string(type)) +
                                         " connector(s) exceeds the free candidates",
                                     "step " + std::to_string(step.step_index));
      const std::size_t first = uniform_index(rng, open.size());
      std::size_t second = uniform_index(rng, open.size() - 1);
      if (second >= first) ++second;
      auto draw = [&](std::size_t comp) {
        auto& pool = unused[comp];
        const std::size_t k = uniform_index(rng, pool.size());
        PointId id = pool[k];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
        return id;
      };
      PointId a = draw(open[first]);
      PointId b = draw(open[second]);
      pred.pairs.emplace_back(std::move(a), std::move(b), type);
    }
  }
  return pred;
}

ExtractionDataset derive_dataset(const AssemblyGraph& graph, std::string_view asset_prefix) {
  const auto report = validate(graph);
  if (!report.ok()) throw InvalidGraph("cannot derive a dataset from an invalid graph", report.violations.front().locus);
  const GraphIndex idx(graph);
  ExtractionDataset ds;
  ds.task = graph.name;
  const std::string base = std::string(asset_prefix) + "/" + graph.name + "/";
  std::set<Endpoint> used;
  int step_index = 0;
  for (const auto& edge_id : graph.step_order) {
    const ConnectionEdge& e = *graph.find_edge(edge_id);
    ExtractionStep step;
    step.step_index = ++step_index;
    step.manual_image = base + "step" + std::to_string(step.step_index) + "_manual.png";
    for (const NodeId& n : {e.nodes.first, e.nodes.second}) {
      StepComponent comp;
      comp.node = n;
      const GraphNode& node = idx.node(n);
      comp.name = node.kind == NodeKind::Part && !graph.parts.at(*node.part).name.empty()
                      ? graph.parts.at(*node.part).name
                      : "subassembly " + n.str();
      comp.image = base + "step" + std::to_string(step.step_index) + "_" + n.str() + ".png";
      for (const auto& pid : idx.parts_under(n))
        for (const auto& [ptid, _] : graph.parts.at(pid).points)
          if (!used.count({pid, ptid})) comp.candidates.push_back(ptid);
      std::sort(comp.candidates.begin(), comp.candidates.end());
      step.components.push_back(std::move(comp));
    }
    for (const auto& inst : e.instances) {
      step.connector_budget[inst.type] += 1;
      step.truth_pairs.emplace_back(inst.end_a.point, inst.end_b.point, inst.type);
      used.insert(inst.end_a);
      used.insert(inst.end_b);
    }
    ds.steps.push_back(std::move(step));
  }
  return ds;
}

namespace {

json pair_json(const PointPair& p) { return {{"a", p.a.str()}, {"b", p.b.str()}, {"type", to_string(p.type)}}; }

PointPair pair_from(const json& j, const std::string& locus) {
  return PointPair(PointId(detail::get<std::string>(j, "a", locus)), PointId(detail::get<std::string>(j, "b", locus)),
                   detail::connector_type(detail::at(j, "type", locus), locus + ".type"));
}

std::vector<PointPair> pairs_from(const json& j, const std::string& locus) {
  if (!j.is_array()) throw ParseError("expected an array", locus);
  std::vector<PointPair> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(pair_from(j[i], locus + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace

ExtractionDataset load_dataset(std::string_view bytes) {
  const json doc = detail::parse_json(bytes, "dataset");
  detail::check_version(doc, kDatasetFormatVersion, "");
  ExtractionDataset ds;
  ds.task = detail::get<std::string>(doc, "task", "");
  const json& steps = detail::at(doc, "steps", "");
  if (!steps.is_array()) throw ParseError("expected an array", "steps");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string sl = "steps[" + std::to_string(i) + "]";
    const json& sj = steps[i];
    ExtractionStep s;
    s.step_index = detail::get<int>(sj, "step_index", sl);
    if (const json* m = detail::maybe(sj, "manual_present")) s.manual_present = detail::as<bool>(*m, sl + ".manual_present");
    if (const json* m = detail::maybe(sj, "manual_image")) s.manual_image = detail::as<std::string>(*m, sl + ".manual_image");
    const json& comps = detail::at(sj, "components", sl);
    if (!comps.is_array()) throw ParseError("expected an array", sl + ".components");
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const std::string cl = sl + ".components[" + std::to_string(c) + "]";
      StepComponent comp;
      comp.node = NodeId(detail::get<std::string>(comps[c], "node", cl));
      comp.name = detail::get<std::string>(comps[c], "name", cl);
      if (const json* im = detail::maybe(comps[c], "image")) comp.image = detail::as<std::string>(*im, cl + ".image");
      for (const auto& id : detail::get<std::vector<std::string>>(comps[c], "candidates", cl)) comp.candidates.emplace_back(id);
      s.components.push_back(std::move(comp));
    }
    const json& budget = detail::at(sj, "connector_budget", sl);
    if (!budget.is_object()) throw ParseError("expected an object", sl + ".connector_budget");
    for (const auto& [name, count] : budget.items()) {
      const std::string bl = sl + ".connector_budget." + name;
      auto t = connector_type_from_string(name);
      if (!t) throw SchemaError("unknown connector type \"" + name + "\"", bl);
      s.connector_budget[*t] = detail::as<int>(count, bl);
    }
    s.truth_pairs = pairs_from(detail::at(sj, "truth_pairs", sl), sl + ".truth_pairs");
    ds.steps.push_back(std::move(s));
  }
  return ds;
}

std::string save_dataset(const ExtractionDataset& ds) {
  json steps = json::array();
  for (const auto& s : ds.steps) {
    json comps = json::array();
    for (const auto& c : s.components) {
      json cand = json::array();
      for (const auto& id : c.candidates) cand.push_back(id.str());
      comps.push_back({{"node", c.node.str()}, {"name", c.name}, {"image", c.image}, {"candidates", cand}});
    }
    json budget = json::object();
    for (const auto& [t, n] : s.connector_budget) budget[std::string(to_string(t))] = n;
    json truth = json::array();
    for (const auto& p : s.truth_pairs) truth.push_back(pair_json(p));
    steps.push_back({{"step_index", s.step_index},
                     {"manual_present", s.manual_present},
                     {"manual_image", s.manual_image},
                     {"components", comps},
                     {"connector_budget", budget},
                     {"truth_pairs", truth}});
  }
  json doc = {{"format_version", kDatasetFormatVersion}, {"task", ds.task}, {"steps", steps}};
  return doc.dump(2) + "\n";
}

std::vector<StepPrediction> load_predictions(std::string_view bytes) {
  const json doc = detail::parse_json(bytes, "predictions");
  detail::check_version(doc, kPredictionsFormatVersion, "");
  const json& preds = detail::at(doc, "predictions", "");
  if (!preds.is_array()) throw ParseError("expected an array", "predictions");
  std::vector<StepPrediction> out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::string pl = "predictions[" + std::to_string(i) + "]";
    StepPrediction p;
    p.step_index = detail::get<int>(preds[i], "step_index", pl);
    p.pairs = pairs_from(detail::at(preds[i], "pairs", pl), pl + ".pairs");
    if (const json* f = detail::maybe(preds[i], "flags")) p.flags = detail::as<std::vector<std::string>>(*f, pl + ".flags");
    out.push_back(std::move(p));
  }
  return out;
}

std::string save_predictions(const std::vector<StepPrediction>& preds, std::string_view task) {
  json arr = json::array();
  for (const auto& p : preds) {
    json pairs = json::array();
    for (const auto& x : p.pairs) pairs.push_back(pair_json(x));
    arr.push_back({{"step_index", p.step_index}, {"pairs", pairs}, {"flags", p.flags}});
  }
  json doc = {{"format_version", kPredictionsFormatVersion}, {"task", task}, {"predictions", arr}};
  return doc.dump(2) + "\n";
}

}  // namespace connkit
