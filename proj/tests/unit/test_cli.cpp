#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "support.hpp"

using namespace connkit;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string data(const std::string& rel) { return test::data_path(rel).string(); }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "connkit_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2") {
    CHECK(invoke({}).code == cli::kUsage);
    CHECK(invoke({"graph"}).code == cli::kUsage);
    CHECK(invoke({"graph", "plan"}).code == cli::kUsage);
    const Result r = invoke({"graph", "plan", "--graph", data("graphs/chair.json"), "--bogus"});
    CHECK(r.code == cli::kUsage);
    CHECK(r.err.find("connkit") != std::string::npos);
    CHECK(invoke({"graph", "plan", "--graph", data("graphs/chair.json"), "--format", "yaml"}).code == cli::kUsage);
    CHECK(invoke({"--help"}).code == cli::kOk);
  }

  TEST_CASE("graph commands") {
    Result r = invoke({"graph", "validate", "--graph", data("graphs/chair.json")});
    CHECK(r.code == cli::kOk);
    CHECK(nlohmann::json::parse(r.out)["ok"] == true);

    r = invoke({"graph", "plan", "--graph", data("graphs/chair.json")});
    CHECK(r.code == cli::kOk);
    const auto plan = nlohmann::json::parse(r.out);
    CHECK(plan["count"] == 22);
    CHECK(plan["operations"][0]["id"] == "E1:0");

    r = invoke({"graph", "plan", "--graph", data("graphs/lego_person.json"), "--format", "text"});
    CHECK(r.out.find("8 operations\n") != std::string::npos);

    auto g = nlohmann::json::parse(test::slurp(data("graphs/shoe_shelf.json")));
    g["step_order"].erase(g["step_order"].begin());
    const fs::path bad = scratch("bad_graph.json");
    write(bad, g.dump());
    r = invoke({"graph", "validate", "--graph", bad.string()});
    CHECK(r.code == cli::kFailure);
    CHECK(nlohmann::json::parse(r.out)["ok"] == false);
    CHECK(invoke({"graph", "plan", "--graph", bad.string()}).code == cli::kFailure);

    r = invoke({"graph", "plan", "--graph", scratch("does_not_exist.json").string()});
    CHECK(r.code == cli::kFailure);
    CHECK_FALSE(r.err.empty());
  }

  TEST_CASE("pose commands") {
    Result r = invoke({"pose", "solve", "--graph", data("graphs/chair.json"), "--edge", "E1"});
    REQUIRE(r.code == cli::kOk);
    const auto e = nlohmann::json::parse(r.out);
    CHECK(e["edge"] == "E1");
    CHECK(e["residual"].get<double>() < 1e-18);

    const fs::path poses = scratch("chair_poses.json");
    CHECK(invoke({"pose", "solve", "--graph", data("graphs/chair.json"), "--out", poses.string()}).code == cli::kOk);
    CHECK(fs::exists(fs::path(poses.string() + ".config.json")));
    r = invoke({"pose", "eval", "--pred", poses.string(), "--truth", data("graphs/chair.truth.json"), "--graph",
             data("graphs/chair.json")});
    REQUIRE(r.code == cli::kOk);
    const auto m = nlohmann::json::parse(r.out);
    CHECK(m["pa"] == 1.0);
    CHECK(m["gd"].get<double>() < 1e-9);
  }

  TEST_CASE("extraction commands") {
    const fs::path preds = scratch("chair_preds.json");
    Result r = invoke({"extract", "run-pipeline", "--dataset", data("datasets/chair.json"), "--client", "oracle", "--out",
                    preds.string()});
    REQUIRE(r.code == cli::kOk);
    r = invoke({"extract", "eval", "--dataset", data("datasets/chair.json"), "--pred", preds.string()});
    REQUIRE(r.code == cli::kOk);
    CHECK(nlohmann::json::parse(r.out)["mean"]["pair_f1"] == 1.0);

    const std::vector<std::string> rb = {"extract", "random-baseline", "--dataset", data("datasets/chair.json"),
                                         "--samples", "50", "--seed", "3"};
    const Result a = invoke(rb), b = invoke(rb);
    CHECK(a.code == cli::kOk);
    CHECK(a.out == b.out);
    auto rb4 = rb;
    rb4.back() = "4";
    CHECK(invoke(rb4).out != a.out);

    CHECK(invoke({"extract", "run-pipeline", "--dataset", data("datasets/chair.json"), "--client", "replay"}).code ==
          cli::kUsage);
    r = invoke({"extract", "derive-dataset", "--graph", data("graphs/chair.json")});
    CHECK(r.code == cli::kOk);
    CHECK(r.out == test::slurp(data("datasets/chair.json")));
  }

  TEST_CASE("sim run is deterministic and replays from its config echo") {
    const fs::path first = scratch("sim_a.jsonl");
    const fs::path second = scratch("sim_b.jsonl");
    const fs::path third = scratch("sim_c.jsonl");
    const std::vector<std::string> base = {"sim", "run", "--graph", data("graphs/lego_person.json"), "--trials", "2",
                                           "--seed", "5", "--strategy", "grid"};
    auto with_out = [&](const fs::path& p) {
      auto a = base;
      a.insert(a.end(), {"--out", p.string()});
      return a;
    };
    REQUIRE(invoke(with_out(first)).code == cli::kOk);
    REQUIRE(invoke(with_out(second)).code == cli::kOk);
    const std::string lines = test::slurp(first);
    CHECK(lines == test::slurp(second));
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 8 * 2);

    const auto cfg = nlohmann::json::parse(test::slurp(first.string() + ".config.json"));
    CHECK(cfg["command"] == "sim run");
    CHECK(cfg["options"]["trials"] == 2);
    CHECK(cfg["options"]["seed"] == 5);

    // Replaying the echoed config alone reproduces the output byte for byte.
    REQUIRE(invoke({"--config", first.string() + ".config.json", "--out", third.string()}).code == cli::kOk);
    CHECK(test::slurp(third) == test::slurp(first));

    // Explicit flags override the config.
    REQUIRE(invoke({"sim", "run", "--config", first.string() + ".config.json", "--seed", "6", "--out", third.string()})
                .code == cli::kOk);
    CHECK(test::slurp(third) != test::slurp(first));

    CHECK(invoke({"graph", "plan", "--config", first.string() + ".config.json"}).code == cli::kUsage);
    CHECK(invoke({"--config", scratch("missing.json").string()}).code == cli::kFailure);

    const fs::path csv = scratch("sim_a.csv");
    const Result rep = invoke({"sim", "report", first.string(), "--csv", csv.string()});
    CHECK(rep.code == cli::kOk);
    CHECK(rep.out.find("grid") != std::string::npos);
    CHECK(test::slurp(csv).rfind("strategy,LEGO Person\ngrid,", 0) == 0);
  }

  TEST_CASE("config from the environment") {
    const fs::path out = scratch("env_plan.json");
    REQUIRE(invoke({"graph", "plan", "--graph", data("graphs/plane_model.json"), "--out", out.string()}).code == cli::kOk);
    const std::string cfg = out.string() + ".config.json";
    ::setenv("CONNKIT_CONFIG", cfg.c_str(), 1);
    const Result r = invoke({});
    // A config for another command is ignored when it only comes from the environment.
    const Result other = invoke({"graph", "validate", "--graph", data("graphs/chair.json")});
    ::unsetenv("CONNKIT_CONFIG");
    CHECK(r.code == cli::kOk);
    CHECK(test::slurp(out) == r.out);
    CHECK(other.code == cli::kOk);
  }
}
