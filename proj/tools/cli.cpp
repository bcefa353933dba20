#include "cli.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "connkit/error.hpp"
#include "connkit/extraction.hpp"
#include "connkit/graph.hpp"
#include "connkit/graph_io.hpp"
#include "connkit/pose.hpp"
#include "connkit/sim.hpp"
#include "connkit/strategy.hpp"
#include "connkit/vlm.hpp"

namespace connkit::cli {
namespace {

using json = nlohmann::json;

constexpr int kConfigFormatVersion = 1;

constexpr const char* kSynopsis = R"(usage: connkit [-v] [--config FILE] <group> <command> [options]

  graph validate     --graph G
  graph plan         --graph G [--format json|text]
  pose solve         --graph G [--edge E] [--alpha A]
  pose eval          --pred P --truth T (--graph G | --clouds C) [--tau T]
  extract eval       --dataset D --pred P [--ignore-type]
  extract random-baseline --dataset D --seed S --samples N
  extract run-pipeline    --dataset D --client oracle|replay|http [--replay R]
                          [--endpoint URL --model M] [--resume P]
  extract derive-dataset  --graph G [--asset-prefix DIR]
  sim run            --graph G [--poses P] --strategy random|grid|hybrid|all
                     --trials N --seed S [--scenarios F] [--trace FILE]
  sim report         RESULTS [--csv FILE]

Every command accepts --out FILE; the effective configuration is then
written next to it as FILE.config.json and can be replayed with --config.
CONNKIT_CONFIG names a default config file.
)";

class Log {
 public:
  Log(std::ostream& err, bool verbose) : err_(err), verbose_(verbose) {}
  void info(const std::string& msg) const {
    if (verbose_) err_ << "connkit: " << msg << "\n";
  }
  void warn(const std::string& msg) const { err_ << "connkit: " << msg << "\n"; }

 private:
  std::ostream& err_;
  bool verbose_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingAsset("cannot open file", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw MissingAsset("cannot write file", path);
  f << data;
  if (!f) throw MissingAsset("write failed", path);
}

json transform_json(const RigidTransform& t) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)});
  return {{"rotation", rows}, {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

json score_json(const ExtractionScore& s) {
  return {{"pair_f1", s.pair_f1}, {"pair_success", s.pair_success}, {"set_f1", s.set_f1}, {"set_success", s.set_success}};
}

// Options of one leaf command, readable back as typed JSON for the config echo.
class Registry {
 public:
  explicit Registry(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* option(const std::string& names, const std::string& key, T& var, const std::string& desc) {
    getters_.emplace_back(key, [&var] { return json(var); });
    return app_->add_option(names, var, desc);
  }
  CLI::Option* optional(const std::string& names, const std::string& key, std::optional<double>& var,
                        const std::string& desc) {
    getters_.emplace_back(key, [&var] { return var ? json(*var) : json(nullptr); });
    return app_->add_option(names, var, desc);
  }
  CLI::Option* flag(const std::string& names, const std::string& key, bool& var, const std::string& desc) {
    getters_.emplace_back(key, [&var] { return json(var); });
    return app_->add_flag(names, var, desc);
  }

  json effective() const {
    json o = json::object();
    for (const auto& [key, get] : getters_) {
      json v = get();
      if (v.is_null() || (v.is_string() && v.get<std::string>().empty())) continue;
      o[key] = v;
    }
    return o;
  }

  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<json()>>> getters_;
};

struct Command {
  std::string name;  // "sim run"
  std::unique_ptr<Registry> reg;
  std::function<int()> action;
  std::string out;  // every command's --out
};

// Writes data to --out (or stdout) and echoes the effective config next to it.
class Emitter {
 public:
  Emitter(std::ostream& out, const Command& cmd) : out_(out), cmd_(cmd) {}

  void emit(const std::string& data) const {
    if (cmd_.out.empty()) {
      out_ << data;
      return;
    }
    write_file(cmd_.out, data);
    // The destination is left out so replaying the echo never clobbers this output.
    json options = cmd_.reg->effective();
    options.erase("out");
    json cfg = {{"format_version", kConfigFormatVersion}, {"command", cmd_.name}, {"options", options}};
    write_file(cmd_.out + ".config.json", cfg.dump(2) + "\n");
  }

 private:
  std::ostream& out_;
  const Command& cmd_;
};

struct Config {
  std::string command;
  json options;
};

Config load_config(const std::string& path) {
  const std::string bytes = read_file(path);
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), path);
  }
  if (!j.is_object()) throw SchemaError("config must be a JSON object", path);
  if (j.value("format_version", 0) != kConfigFormatVersion) throw SchemaError("unsupported format_version", path);
  Config c;
  c.command = j.value("command", std::string{});
  c.options = j.value("options", json::object());
  if (!c.options.is_object()) throw SchemaError("options must be an object", path);
  return c;
}

std::vector<std::string> config_tokens(const json& options) {
  std::vector<std::string> t;
  for (const auto& [key, v] : options.items()) {
    if (v.is_null()) continue;
    if (v.is_boolean()) {
      if (v.get<bool>()) t.push_back("--" + key);
      continue;
    }
    t.push_back("--" + key);
    t.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  }
  return t;
}

std::map<PartId, RigidTransform> poses_from_file(const std::string& path) { return load_poses(read_file(path)); }

// Attachment features plus points offset 1 cm along each normal plus the part
// origin: at least three points for every part.
std::vector<Vec3> cloud_from_part(const Part& part) {
  std::vector<Vec3> cloud{Vec3::Zero()};
  for (const auto& [id, f] : part.points) {
    cloud.push_back(f.position);
    cloud.push_back(f.position + 0.01 * f.normal);
  }
  return cloud;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  // --config is handled here: its options are spliced in right after the
  // command words so that explicit flags, which come later, win.
  std::vector<std::string> args;
  std::string config_path;
  bool config_explicit = false;
  for (std::size_t i = 0; i < raw_args.size(); ++i) {
    const std::string& a = raw_args[i];
    if (a == "--config") {
      if (i + 1 >= raw_args.size()) {
        err << "connkit: --config needs a file\n\n" << kSynopsis;
        return kUsage;
      }
      config_path = raw_args[++i];
      config_explicit = true;
    } else if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
      config_explicit = true;
    } else {
      args.push_back(a);
    }
  }
  if (!config_explicit)
    if (const char* env = std::getenv("CONNKIT_CONFIG"); env && *env) config_path = env;

  CLI::App app{"Connection-aware assembly toolkit", "connkit"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to standard error");

  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](CLI::App* group, const std::string& name, const std::string& desc) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->name = group->get_name() + " " + name;
    CLI::App* sub = group->add_subcommand(name, desc);
    cmd->reg = std::make_unique<Registry>(sub);
    cmd->reg->option("--out", "out", cmd->out, "Output file (default: standard output)");
    commands.push_back(std::move(cmd));
    return *commands.back();
  };
  auto logger = [&] { return Log(err, verbose); };

  // ---- graph ---------------------------------------------------------------
  CLI::App* graph = app.add_subcommand("graph", "Assembly graph checks")->require_subcommand(1);
  std::string graph_path;

  {
    Command& c = make(graph, "validate", "Check every structural invariant of a graph file");
    c.reg->option("--graph", "graph", graph_path, "Graph file")->required();
    c.action = [&, cp = &c] {
      const AssemblyGraph g = load_graph_file(graph_path);
      const ValidationReport rep = validate(g);
      json v = json::array();
      for (const auto& x : rep.violations) v.push_back({{"rule", x.rule}, {"locus", x.locus}, {"message", x.message}});
      json j = {{"graph", g.name}, {"ok", rep.ok()}, {"violations", v}};
      Emitter(out, *cp).emit(j.dump(2) + "\n");
      return rep.ok() ? kOk : kFailure;
    };
  }
  std::string plan_format = "json";
  {
    Command& c = make(graph, "plan", "List the connection operations in execution order");
    c.reg->option("--graph", "graph", graph_path, "Graph file")->required();
    c.reg->option("--format", "format", plan_format, "json or text")->check(CLI::IsMember({"json", "text"}));
    c.action = [&, cp = &c] {
      const AssemblyGraph g = load_graph_file(graph_path);
      const auto ops = plan_sequence(g);
      std::ostringstream s;
      if (plan_format == "text") {
        for (const auto& op : ops) {
          s << op.index + 1 << "  " << op.id() << "  " << to_string(op.instance.type) << "  fixed " << op.fixed << " ("
            << op.fixed_end.part << "/" << op.fixed_end.point << ")  held " << op.held << " (" << op.held_end.part
            << "/" << op.held_end.point << ")\n";
        }
        s << ops.size() << " operations\n";
      } else {
        json list = json::array();
        for (const auto& op : ops) {
          json o = {{"index", op.index},
                    {"id", op.id()},
                    {"edge", op.edge_id},
                    {"instance", op.instance_index},
                    {"type", to_string(op.instance.type)},
                    {"fixed", op.fixed.str()},
                    {"held", op.held.str()},
                    {"fixed_end", {{"part", op.fixed_end.part.str()}, {"point", op.fixed_end.point.str()}}},
                    {"held_end", {{"part", op.held_end.part.str()}, {"point", op.held_end.point.str()}}}};
          if (op.instance.connector) o["connector"] = op.instance.connector->str();
          list.push_back(o);
        }
        s << json{{"graph", g.name}, {"count", ops.size()}, {"operations", list}}.dump(2) << "\n";
      }
      Emitter(out, *cp).emit(s.str());
      return kOk;
    };
  }

  // ---- pose ----------------------------------------------------------------
  CLI::App* pose = app.add_subcommand("pose", "Pose alignment")->require_subcommand(1);
  double alpha = kDefaultAlpha;
  std::string edge_id;
  {
    Command& c = make(pose, "solve", "Solve one edge or every edge of a graph");
    c.reg->option("--graph", "graph", graph_path, "Graph file")->required();
    c.reg->option("--edge", "edge", edge_id, "Connection edge id (default: whole graph)");
    c.reg->option("--alpha", "alpha", alpha, "Weight of the normal term, m^2")->check(CLI::NonNegativeNumber);
    c.action = [&, cp = &c] {
      const AssemblyGraph g = load_graph_file(graph_path);
      if (edge_id.empty()) {
        Emitter(out, *cp).emit(save_poses(solve_graph_poses(g, alpha), g.name, alpha));
        return kOk;
      }
      const AlignmentResult r = solve_edge(g, edge_id, alpha);
      json j = {{"graph", g.name},
                {"edge", edge_id},
                {"alpha", alpha},
                {"transform", transform_json(r.transform)},
                {"residual", r.residual},
                {"degeneracy", to_string(r.degeneracy)}};
      Emitter(out, *cp).emit(j.dump(2) + "\n");
      return kOk;
    };
  }
  std::string pred_path, truth_path, clouds_path;
  double tau = kDefaultPartAccuracyTau;
  {
    Command& c = make(pose, "eval", "Score predicted part poses against ground truth");
    c.reg->option("--pred", "pred", pred_path, "Predicted poses file")->required();
    c.reg->option("--truth", "truth", truth_path, "Ground-truth poses file")->required();
    c.reg->option("--graph", "graph", graph_path, "Graph whose attachment features form the point clouds");
    c.reg->option("--clouds", "clouds", clouds_path, "Point clouds file {part: [[x,y,z],...]}");
    c.reg->option("--tau", "tau", tau, "Part accuracy threshold, m")->check(CLI::PositiveNumber);
    c.action = [&, cp = &c] {
      if (graph_path.empty() == clouds_path.empty())
        throw CLI::ValidationError("pose eval", "give exactly one of --graph and --clouds");
      const auto pred = poses_from_file(pred_path);
      const auto truth = poses_from_file(truth_path);
      std::map<PartId, std::vector<Vec3>> clouds;
      if (!graph_path.empty()) {
        const AssemblyGraph g = load_graph_file(graph_path);
        for (const auto& [id, part] : g.parts) clouds[id] = cloud_from_part(part);
      } else {
        json j;
        try {
          j = json::parse(read_file(clouds_path));
        } catch (const json::parse_error& e) {
          throw ParseError(e.what(), clouds_path);
        }
        for (const auto& [id, pts] : j.items()) {
          auto& cloud = clouds[PartId(id)];
          for (const auto& p : pts) cloud.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
        }
      }
      std::vector<RigidTransform> p, t;
      std::vector<std::vector<Vec3>> c2;
      for (const auto& [id, tr] : truth) {
        auto it = pred.find(id);
        if (it == pred.end()) throw UnsolvedPose("no predicted pose", id.str());
        auto ct = clouds.find(id);
        if (ct == clouds.end()) throw MissingAsset("no point cloud", id.str());
        p.push_back(it->second);
        t.push_back(tr);
        c2.push_back(ct->second);
      }
      const PoseMetrics m = pose_metrics(p, t, c2, tau);
      json j = {{"gd", m.gd}, {"rmse", m.rmse}, {"cd", m.cd}, {"pa", m.pa}, {"parts", p.size()}, {"tau", tau}};
      Emitter(out, *cp).emit(j.dump(2) + "\n");
      return kOk;
    };
  }

  // ---- extract -------------------------------------------------------------
  CLI::App* extract = app.add_subcommand("extract", "Connection extraction")->require_subcommand(1);
  std::string dataset_path;
  bool ignore_type = false;
  {
    Command& c = make(extract, "eval", "Score predictions against a dataset");
    c.reg->option("--dataset", "dataset", dataset_path, "Dataset file")->required();
    c.reg->option("--pred", "pred", pred_path, "Predictions file")->required();
    c.reg->flag("--ignore-type", "ignore-type", ignore_type, "Count pairs as matched regardless of connector type");
    c.action = [&, cp = &c] {
      const ExtractionDataset ds = load_dataset(read_file(dataset_path));
      const auto preds = load_predictions(read_file(pred_path));
      ScoreOptions opt;
      opt.match_connector_type = !ignore_type;
      const DatasetScore s = score_dataset(preds, ds, opt);
      json steps = json::array();
      for (std::size_t i = 0; i < s.per_step.size(); ++i) {
        json x = score_json(s.per_step[i]);
        x["step_index"] = ds.steps[i].step_index;
        steps.push_back(x);
      }
      json j = {{"task", ds.task}, {"match_connector_type", !ignore_type}, {"mean", score_json(s.mean)}, {"per_step", steps}};
      Emitter(out, *cp).emit(j.dump(2) + "\n");
      return kOk;
    };
  }
  std::uint64_t seed = 0;
  int samples = 1000;
  {
    Command& c = make(extract, "random-baseline", "Monte-Carlo score of the random-sampling baseline");
    c.reg->option("--dataset", "dataset", dataset_path, "Dataset file")->required();
    c.reg->option("--seed", "seed", seed, "Base seed");
    c.reg->option("--samples", "samples", samples, "Number of sampled prediction sets")->check(CLI::PositiveNumber);
    c.action = [&, cp = &c] {
      const ExtractionDataset ds = load_dataset(read_file(dataset_path));
      std::mt19937_64 rng(seed);
      std::array<double, 4> sum{}, sq{};
      for (int s = 0; s < samples; ++s) {
        std::vector<StepPrediction> preds;
        for (const auto& step : ds.steps) preds.push_back(random_baseline(step, rng()));
        const ExtractionScore m = score_dataset(preds, ds).mean;
        const std::array<double, 4> v{m.pair_f1, m.pair_success, m.set_f1, m.set_success};
        for (int k = 0; k < 4; ++k) {
          sum[k] += v[k];
          sq[k] += v[k] * v[k];
        }
      }
      const double n = samples;
      std::array<double, 4> mean{}, se{};
      for (int k = 0; k < 4; ++k) {
        mean[k] = sum[k] / n;
        const double var = samples > 1 ? std::max(0.0, (sq[k] - n * mean[k] * mean[k]) / (n - 1)) : 0.0;
        se[k] = std::sqrt(var / n);
      }
      auto obj = [](const std::array<double, 4>& a) {
        return json{{"pair_f1", a[0]}, {"pair_success", a[1]}, {"set_f1", a[2]}, {"set_success", a[3]}};
      };
      json j = {{"task", ds.task}, {"seed", seed}, {"samples", samples}, {"mean", obj(mean)}, {"std_error", obj(se)}};
      Emitter(out, *cp).emit(j.dump(2) + "\n");
      return kOk;
    };
  }
  std::string client_kind, replay_path, endpoint, model, resume_path;
  int attempts = 3, backoff_ms = 500, parallel = 1, timeout_s = 120;
  bool strict = false;
  {
    Command& c = make(extract, "run-pipeline", "Query a model for every step and write predictions");
    c.reg->option("--dataset", "dataset", dataset_path, "Dataset file")->required();
    c.reg->option("--client", "client", client_kind, "oracle, replay or http")
        ->required()
        ->check(CLI::IsMember({"oracle", "replay", "http"}));
    c.reg->option("--replay", "replay", replay_path, "Recorded responses (JSON lines)");
    c.reg->option("--endpoint", "endpoint", endpoint, "Chat-completions URL");
    c.reg->option("--model", "model", model, "Model name");
    c.reg->option("--timeout", "timeout", timeout_s, "Request timeout, s")->check(CLI::PositiveNumber);
    c.reg->option("--attempts", "attempts", attempts, "Attempts per step")->check(CLI::PositiveNumber);
    c.reg->option("--backoff-ms", "backoff-ms", backoff_ms, "First retry delay")->check(CLI::NonNegativeNumber);
    c.reg->option("--parallel", "parallel", parallel, "Concurrent steps")->check(CLI::PositiveNumber);
    c.reg->option("--resume", "resume", resume_path, "Reuse steps already present in this predictions file");
    c.reg->flag("--strict", "strict", strict, "Require bare JSON with canonical type names");
    c.action = [&, cp = &c] {
      const ExtractionDataset ds = load_dataset(read_file(dataset_path));
      std::unique_ptr<vlm::ModelClient> client;
      if (client_kind == "oracle") {
        client = vlm::make_oracle_client(ds);
      } else if (client_kind == "replay") {
        if (replay_path.empty()) throw CLI::ValidationError("extract run-pipeline", "--client replay needs --replay");
        client = std::make_unique<vlm::ReplayClient>(read_file(replay_path));
      } else {
        if (endpoint.empty() || model.empty())
          throw CLI::ValidationError("extract run-pipeline", "--client http needs --endpoint and --model");
        vlm::HttpClientConfig hc;
        hc.endpoint = endpoint;
        hc.model = model;
        hc.timeout = std::chrono::seconds(timeout_s);
        client = std::make_unique<vlm::HttpClient>(hc);
      }
      vlm::PipelineOptions opt;
      opt.max_attempts = attempts;
      opt.backoff = std::chrono::milliseconds(backoff_ms);
      opt.parallelism = parallel;
      opt.parse.strict = strict;
      if (!resume_path.empty()) opt.resume = load_predictions(read_file(resume_path));
      const vlm::PipelineResult r = vlm::run_pipeline(ds, *client, opt);
      const Log l = logger();
      for (const auto& d : r.diagnostics) {
        std::string msg = "step " + std::to_string(d.step_index) + ": " + std::to_string(d.attempts) + " attempt(s)";
        if (d.degraded) msg += ", degraded";
        for (const auto& m : d.messages) msg += "; " + m;
        if (d.degraded)
          l.warn(msg);
        else
          l.info(msg);
      }
      Emitter(out, *cp).emit(save_predictions(r.predictions, ds.task));
      return kOk;
    };
  }
  std::string asset_prefix = "assets";
  {
    Command& c = make(extract, "derive-dataset", "Build an extraction dataset from a graph");
    c.reg->option("--graph", "graph", graph_path, "Graph file")->required();
    c.reg->option("--asset-prefix", "asset-prefix", asset_prefix, "Prefix of image references");
    c.action = [&, cp = &c] {
      const AssemblyGraph g = load_graph_file(graph_path);
      Emitter(out, *cp).emit(save_dataset(derive_dataset(g, asset_prefix)));
      return kOk;
    };
  }

  // ---- sim -----------------------------------------------------------------
  CLI::App* simg = app.add_subcommand("sim", "Connection simulation")->require_subcommand(1);
  std::string poses_path, scenarios_path, strategy_name = "all", trace_path, trace_op, trace_strategy;
  int trials = 100, trace_trial = 0;
  std::size_t budget = 0;
  double lift = sim::TrialSetup{}.lift, perturbation = sim::TrialSetup{}.lateral_perturbation, orientation = 0.0;
  std::optional<double> grid_side, grid_resolution, perturb_radius, gain;
  {
    Command& c = make(simg, "run", "Run connection strategies on every planned operation");
    c.reg->option("--graph", "graph", graph_path, "Graph file")->required();
    c.reg->option("--poses", "poses", poses_path, "Solved poses (default: solve the graph)");
    c.reg->option("--truth", "truth", truth_path, "Ground-truth poses for the holes (default: --poses)");
    c.reg->option("--scenarios", "scenarios", scenarios_path, "Hole overrides file");
    c.reg->option("--strategy", "strategy", strategy_name, "random, grid, hybrid or all")
        ->check(CLI::IsMember({"random", "grid", "hybrid", "all"}));
    c.reg->option("--trials", "trials", trials, "Trials per operation and strategy")->check(CLI::NonNegativeNumber);
    c.reg->option("--seed", "seed", seed, "Base seed");
    c.reg->option("--parallel", "parallel", parallel, "Worker threads")->check(CLI::PositiveNumber);
    c.reg->option("--budget", "budget", budget, "Step budget per trial (0: strategy default)");
    c.reg->option("--lift", "lift", lift, "Start height above the target, m")->check(CLI::NonNegativeNumber);
    c.reg->option("--perturbation", "perturbation", perturbation, "Uniform lateral perturbation per axis, m")
        ->check(CLI::NonNegativeNumber);
    c.reg->option("--orientation-perturbation", "orientation-perturbation", orientation, "Max initial tilt, rad")
        ->check(CLI::NonNegativeNumber);
    c.reg->optional("--grid-side", "grid-side", grid_side, "Grid side length, m");
    c.reg->optional("--grid-resolution", "grid-resolution", grid_resolution, "Grid spacing, m");
    c.reg->optional("--perturb-radius", "perturb-radius", perturb_radius, "Random-search dither radius, m");
    c.reg->optional("--gain", "gain", gain, "Hybrid lateral gain");
    c.reg->option("--trace", "trace", trace_path, "Write the trajectory of one trial as JSON lines");
    c.reg->option("--trace-op", "trace-op", trace_op, "Operation id to trace (default: first)");
    c.reg->option("--trace-strategy", "trace-strategy", trace_strategy, "Strategy to trace (default: first)");
    c.reg->option("--trace-trial", "trace-trial", trace_trial, "Trial to trace")->check(CLI::NonNegativeNumber);
    c.action = [&, cp = &c] {
      const Log l = logger();
      const AssemblyGraph g = load_graph_file(graph_path);
      std::map<PartId, RigidTransform> solved, truth;
      if (poses_path.empty()) {
        l.info("solving poses for " + g.name);
        solved = solve_graph_poses(g).parts;
      } else {
        solved = poses_from_file(poses_path);
      }
      if (!truth_path.empty()) truth = poses_from_file(truth_path);
      const auto* truth_ptr = truth_path.empty() ? nullptr : &truth;

      strategy::BenchmarkOptions opt;
      for (const auto kind : {strategy::Kind::RandomSearch, strategy::Kind::GridSearch, strategy::Kind::ForcePositionHybrid}) {
        if (strategy_name != "all" && strategy_name != strategy::to_string(kind)) continue;
        strategy::StrategyConfig cfg = strategy::default_config(kind);
        if (budget > 0) cfg.budget = budget;
        if (grid_side) cfg.grid_side = *grid_side;
        if (grid_resolution) cfg.grid_resolution = *grid_resolution;
        if (perturb_radius) cfg.perturb_radius = *perturb_radius;
        if (gain) cfg.gain = *gain;
        cfg.check();
        opt.strategies.push_back(cfg);
      }
      opt.trials_per_op = trials;
      opt.seed = seed;
      opt.parallelism = parallel;
      opt.setup.lift = lift;
      opt.setup.lateral_perturbation = perturbation;
      opt.setup.orientation_perturbation = orientation;
      if (!scenarios_path.empty()) opt.scenarios = sim::load_scenarios(read_file(scenarios_path));

      l.info("running " + std::to_string(trials) + " trial(s) per operation");
      const strategy::BenchmarkResult res = strategy::run_benchmark(g, solved, opt, truth_ptr);
      std::string lines;
      for (const auto& r : res.reports) lines += strategy::report_to_json(r) + "\n";
      Emitter(out, *cp).emit(lines);
      err << strategy::summary_text(res.summary);

      if (!trace_path.empty()) {
        const auto ops = plan_sequence(g);
        std::size_t op_index = 0;
        if (!trace_op.empty()) {
          op_index = ops.size();
          for (const auto& op : ops)
            if (op.id() == trace_op) op_index = op.index;
          if (op_index == ops.size()) throw CLI::ValidationError("sim run", "unknown --trace-op " + trace_op);
        }
        strategy::StrategyConfig cfg = opt.strategies.front();
        if (!trace_strategy.empty()) {
          const auto kind = strategy::kind_from_string(trace_strategy);
          bool found = false;
          for (const auto& s : opt.strategies)
            if (kind && s.kind == *kind) {
              cfg = s;
              found = true;
            }
          if (!found) throw CLI::ValidationError("sim run", "--trace-strategy is not among the run strategies");
        }
        const std::uint64_t ts = strategy::trial_seed(seed, op_index, static_cast<std::size_t>(trace_trial));
        sim::World w = sim::init_trial(ops[op_index], g, solved, ts, opt.setup, opt.scenarios, truth_ptr);
        std::ostringstream trace;
        sim::JsonlTraceWriter writer(trace, ops[op_index].id());
        strategy::run_strategy(w, cfg, ts, &writer);
        write_file(trace_path, trace.str());
      }
      return kOk;
    };
  }
  std::string results_path, csv_path;
  {
    Command& c = make(simg, "report", "Summarize trial reports as a strategies-by-tasks table");
    c.reg->option("results,--results", "results", results_path, "Trial reports (JSON lines)")->required();
    c.reg->option("--csv", "csv", csv_path, "Also write the table as CSV");
    c.action = [&, cp = &c] {
      const auto rows = strategy::summarize(strategy::load_reports(read_file(results_path)));
      Emitter(out, *cp).emit(strategy::summary_text(rows));
      if (!csv_path.empty()) write_file(csv_path, strategy::summary_csv(rows));
      return kOk;
    };
  }

  // Splice config options after the command words.
  if (!config_path.empty()) {
    Config cfg;
    try {
      cfg = load_config(config_path);
    } catch (const Error& e) {
      err << "connkit: " << e.what() << "\n";
      return kFailure;
    }
    std::size_t pos = args.size();
    std::string given;
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (app.get_subcommand_no_throw(args[i]) != nullptr) {
        given = args[i] + " " + args[i + 1];
        pos = i + 2;
        break;
      }
    }
    if (given.empty()) {
      std::istringstream words(cfg.command);
      std::vector<std::string> w{std::istream_iterator<std::string>(words), std::istream_iterator<std::string>()};
      // Command words must precede any option that belongs to the subcommand.
      std::size_t front = 0;
      while (front < args.size() && (args[front] == "-v" || args[front] == "--verbose")) ++front;
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(front), w.begin(), w.end());
      pos = front + w.size();
      given = cfg.command;
    }
    if (given == cfg.command) {
      const auto t = config_tokens(cfg.options);
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(pos), t.begin(), t.end());
    } else if (config_explicit) {
      err << "connkit: config is for '" << cfg.command << "', not '" << given << "'\n\n" << kSynopsis;
      return kUsage;
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "connkit: " << e.what() << "\n\n" << kSynopsis;
    return kUsage;
  }

  for (const auto& cmd : commands) {
    if (!cmd->reg->app()->parsed()) continue;
    try {
      return cmd->action();
    } catch (const CLI::ValidationError& e) {
      err << "connkit: " << e.what() << "\n\n" << kSynopsis;
      return kUsage;
    } catch (const Error& e) {
      err << "connkit: " << e.what() << "\n";
      return kFailure;
    } catch (const std::exception& e) {
      err << "connkit: " << e.what() << "\n";
      return kFailure;
    }
  }
  err << kSynopsis;
  return kUsage;
}

}  // namespace connkit::cli
