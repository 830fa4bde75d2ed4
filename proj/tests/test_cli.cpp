#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include <json.hpp>

#include "judge_stub.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "test_util.hpp"
#include "trace.hpp"

using nlohmann::json;
using testutil::TempDir;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args, const std::filesystem::path& log) {
  std::string cmd = std::string(STEPGUARD_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.output = testutil::read_text(log);
  return result;
}

std::string synth_config(uint64_t seed, size_t traces, size_t steps, double eps) {
  json cfg{{"seed", seed},
           {"trace_count", traces},
           {"steps", {{"fixed", steps}}},
           {"step_error_prob", eps},
           {"score_model",
            {{"correct", {{"alpha", 2.0}, {"beta", 8.0}}},
             {"incorrect", {{"alpha", 8.0}, {"beta", 2.0}}}}},
           {"hidden_model",
            {{"dim", 4}, {"sigma", 1.0}, {"mean_correct", -2.0}, {"mean_incorrect", 2.0}}},
           {"vocab_size", 8}};
  return cfg.dump();
}

json load_manifest(const std::filesystem::path& dir) {
  return json::parse(testutil::read_text(dir / "manifest.json"));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes traces, sidecar, config and manifest") {
  TempDir tmp;
  testutil::write_text(tmp.file("cfg.json"), synth_config(5, 20, 3, 0.2));
  RunResult r = run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " +
                            (tmp.path() / "out").string(),
                        tmp.file("log.txt"));
  CHECK(r.exit_code == 0);
  CHECK(std::filesystem::exists(tmp.path() / "out" / "traces.jsonl"));
  CHECK(std::filesystem::exists(tmp.path() / "out" / "traces.logits"));
  CHECK(std::filesystem::exists(tmp.path() / "out" / "config.json"));
  CHECK(stepguard::load_traces(tmp.path() / "out" / "traces.jsonl").size() == 20);

  json manifest = load_manifest(tmp.path() / "out");
  CHECK(manifest.at("command") == "synth");
  CHECK(manifest.at("seed") == 5);
  CHECK(manifest.contains("config_hash"));
  CHECK(manifest.contains("created_at"));
}

TEST_CASE("synth rerun with the same config overwrites identically") {
  TempDir tmp;
  testutil::write_text(tmp.file("cfg.json"), synth_config(9, 15, 4, 0.3));
  std::string out = (tmp.path() / "out").string();
  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " + out,
                  tmp.file("log1.txt"))
              .exit_code == 0);
  std::string traces1 = testutil::read_text(tmp.path() / "out" / "traces.jsonl");
  std::string logits1 = testutil::read_text(tmp.path() / "out" / "traces.logits");
  json manifest1 = load_manifest(tmp.path() / "out");

  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " + out,
                  tmp.file("log2.txt"))
              .exit_code == 0);
  CHECK(testutil::read_text(tmp.path() / "out" / "traces.jsonl") == traces1);
  CHECK(testutil::read_text(tmp.path() / "out" / "traces.logits") == logits1);
  json manifest2 = load_manifest(tmp.path() / "out");
  manifest1.erase("created_at");
  manifest2.erase("created_at");
  CHECK(manifest1 == manifest2);
}

TEST_CASE("manifest hash changes exactly when the config changes") {
  TempDir tmp;
  testutil::write_text(tmp.file("cfg.json"), synth_config(5, 10, 3, 0.2));
  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " +
                      (tmp.path() / "a").string(),
                  tmp.file("log.txt"))
              .exit_code == 0);
  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " +
                      (tmp.path() / "b").string(),
                  tmp.file("log.txt"))
              .exit_code == 0);
  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --set seed=6 --out " +
                      (tmp.path() / "c").string(),
                  tmp.file("log.txt"))
              .exit_code == 0);
  CHECK(load_manifest(tmp.path() / "a").at("config_hash") ==
        load_manifest(tmp.path() / "b").at("config_hash"));
  CHECK(load_manifest(tmp.path() / "a").at("config_hash") !=
        load_manifest(tmp.path() / "c").at("config_hash"));
  CHECK(load_manifest(tmp.path() / "c").at("seed") == 6);
}

TEST_CASE("score + evaluate end to end over synthetic data") {
  TempDir tmp;
  testutil::write_text(tmp.file("cfg.json"), synth_config(11, 60, 4, 0.25));
  std::string data_dir = (tmp.path() / "data").string();
  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " + data_dir,
                  tmp.file("log.txt"))
              .exit_code == 0);

  std::string traces = data_dir + "/traces.jsonl";
  RunResult score = run_cli("score --traces " + traces +
                                " --scorer precomputed:synthetic_step --granularity step"
                                " --granularity response --out " +
                                (tmp.path() / "scored").string(),
                            tmp.file("log.txt"));
  INFO(score.output);
  REQUIRE(score.exit_code == 0);
  // Two granularities produce two output files.
  std::string step_file =
      (tmp.path() / "scored" / "scored_precomputed_synthetic_step_step.jsonl").string();
  std::string resp_file =
      (tmp.path() / "scored" / "scored_precomputed_synthetic_step_response.jsonl").string();
  REQUIRE(std::filesystem::exists(step_file));
  REQUIRE(std::filesystem::exists(resp_file));

  // Row count equals trace count.
  size_t lines = 0;
  std::string contents = testutil::read_text(step_file);
  for (char c : contents) lines += size_t(c == '\n');
  CHECK(lines == 60);

  RunResult eval = run_cli("evaluate --traces " + traces + " --scored " + step_file +
                               " --scored " + resp_file + " --out " +
                               (tmp.path() / "eval").string(),
                           tmp.file("log.txt"));
  INFO(eval.output);
  REQUIRE(eval.exit_code == 0);
  std::string summary = testutil::read_text(tmp.path() / "eval" / "summary.csv");
  // Step and response rows for one scorer: the delta column is populated.
  CHECK(summary.find("precomputed:synthetic_step,step") != std::string::npos);
  CHECK(summary.find("precomputed:synthetic_step,response") != std::string::npos);
  CHECK(summary.find('%') != std::string::npos);
  CHECK(std::filesystem::exists(tmp.path() / "eval" /
                                "report_precomputed_synthetic_step_step.json"));
  CHECK(std::filesystem::exists(tmp.path() / "eval" /
                                "roc_precomputed_synthetic_step_step.csv"));
}

TEST_CASE("perfect planted scorer evaluates to auc 1") {
  TempDir tmp;
  json cfg = json::parse(synth_config(3, 40, 3, 0.3));
  cfg["score_model"] = {{"correct", {{"point", 0.1}}}, {"incorrect", {{"point", 0.9}}}};
  testutil::write_text(tmp.file("cfg.json"), cfg.dump());
  std::string data_dir = (tmp.path() / "data").string();
  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " + data_dir,
                  tmp.file("log.txt"))
              .exit_code == 0);
  REQUIRE(run_cli("score --traces " + data_dir + "/traces.jsonl" +
                      " --scorer precomputed:synthetic_step --granularity step --out " +
                      (tmp.path() / "scored").string(),
                  tmp.file("log.txt"))
              .exit_code == 0);
  RunResult eval = run_cli(
      "evaluate --traces " + data_dir + "/traces.jsonl --scored " +
          (tmp.path() / "scored" / "scored_precomputed_synthetic_step_step.jsonl").string() +
          " --out " + (tmp.path() / "eval").string(),
      tmp.file("log.txt"));
  REQUIRE(eval.exit_code == 0);
  json report = json::parse(
      testutil::read_text(tmp.path() / "eval" / "report_precomputed_synthetic_step_step.json"));
  CHECK(report.at("configured").at("metrics").at("auc_roc") == 1.0);
}

TEST_CASE("self_certainty without logits exits 2 naming the first trace") {
  TempDir tmp;
  std::vector<stepguard::InteractionTrace> traces{testutil::make_trace("nolog1", {0}),
                                                  testutil::make_trace("nolog2", {1})};
  stepguard::save_traces(traces, tmp.file("t.jsonl"));
  RunResult r = run_cli("score --traces " + tmp.file("t.jsonl").string() +
                            " --scorer self_certainty --granularity step --out " +
                            (tmp.path() / "scored").string(),
                        tmp.file("log.txt"));
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("nolog1") != std::string::npos);
}

TEST_CASE("evaluating scores against a different trace set reports orphans") {
  TempDir tmp;
  testutil::write_text(tmp.file("a.json"), synth_config(1, 10, 2, 0.3));
  testutil::write_text(tmp.file("b.json"), synth_config(2, 12, 2, 0.3));
  REQUIRE(run_cli("synth --config " + tmp.file("a.json").string() + " --out " +
                      (tmp.path() / "a").string(),
                  tmp.file("log.txt"))
              .exit_code == 0);
  REQUIRE(run_cli("synth --config " + tmp.file("b.json").string() + " --out " +
                      (tmp.path() / "b").string(),
                  tmp.file("log.txt"))
              .exit_code == 0);
  REQUIRE(run_cli("score --traces " + (tmp.path() / "a" / "traces.jsonl").string() +
                      " --scorer precomputed:synthetic_step --granularity step --out " +
                      (tmp.path() / "scored").string(),
                  tmp.file("log.txt"))
              .exit_code == 0);
  RunResult r = run_cli(
      "evaluate --traces " + (tmp.path() / "b" / "traces.jsonl").string() + " --scored " +
          (tmp.path() / "scored" / "scored_precomputed_synthetic_step_step.jsonl").string() +
          " --out " + (tmp.path() / "eval").string(),
      tmp.file("log.txt"));
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("do not match") != std::string::npos);
}

TEST_CASE("prepare-train reports emitted and skipped counts") {
  TempDir tmp;
  std::vector<stepguard::InteractionTrace> traces{testutil::make_trace("g1", {0, 1}),
                                                  testutil::make_trace("g2", {0})};
  traces[1].steps[0].gold_response.reset();
  stepguard::save_traces(traces, tmp.file("t.jsonl"));
  RunResult r = run_cli("prepare-train --traces " + tmp.file("t.jsonl").string() + " --out " +
                            (tmp.path() / "train").string(),
                        tmp.file("log.txt"));
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("emitted 2 examples") != std::string::npos);
  CHECK(r.output.find("skipped 1") != std::string::npos);
  json manifest = load_manifest(tmp.path() / "train");
  CHECK(manifest.at("stats").at("examples") == 2);
  CHECK(manifest.at("stats").at("skipped_traces") == 1);
}

TEST_CASE("train-probe then score with the activations scorer") {
  TempDir tmp;
  testutil::write_text(tmp.file("cfg.json"), synth_config(13, 120, 4, 0.4));
  std::string data_dir = (tmp.path() / "data").string();
  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " + data_dir,
                  tmp.file("log.txt"))
              .exit_code == 0);
  testutil::write_text(tmp.file("probe.json"),
                       R"({"epochs": 15, "seed": 4, "hidden": [16, 8, 4, 2]})");
  RunResult train = run_cli("train-probe --traces " + data_dir +
                                "/traces.jsonl --config " + tmp.file("probe.json").string() +
                                " --out " + (tmp.path() / "probe").string(),
                            tmp.file("log.txt"));
  INFO(train.output);
  REQUIRE(train.exit_code == 0);
  REQUIRE(std::filesystem::exists(tmp.path() / "probe" / "probe.sgpm"));
  REQUIRE(std::filesystem::exists(tmp.path() / "probe" / "curve.csv"));

  RunResult score = run_cli("score --traces " + data_dir +
                                "/traces.jsonl --scorer activations --granularity step"
                                " --set probe_model=" +
                                (tmp.path() / "probe" / "probe.sgpm").string() + " --out " +
                                (tmp.path() / "scored").string(),
                            tmp.file("log.txt"));
  INFO(score.output);
  CHECK(score.exit_code == 0);
  std::filesystem::path scored_path = tmp.path() / "scored" / "scored_activations_step.jsonl";
  REQUIRE(std::filesystem::exists(scored_path));

  // The synthetic hidden states are well separated, so the trained probe's
  // per-step scores must discriminate step labels strongly.
  auto scored = stepguard::pipeline::load_scored(scored_path);
  auto traces = stepguard::load_traces(data_dir + "/traces.jsonl");
  std::vector<stepguard::metrics::LabeledScore> labeled;
  for (const auto& s : scored) {
    const stepguard::InteractionTrace* trace = nullptr;
    for (const auto& t : traces) {
      if (t.id == s.trace_id) trace = &t;
    }
    REQUIRE(trace != nullptr);
    for (size_t i = 0; i < s.per_step.size(); ++i) {
      labeled.push_back({s.trace_id + ":" + std::to_string(i), s.per_step[i],
                         *trace->steps[i].step_label,
                         {}});
    }
  }
  CHECK(stepguard::metrics::auc_roc(labeled) >= 0.95);
}

TEST_CASE("report merges evaluation reports") {
  TempDir tmp;
  testutil::write_text(tmp.file("cfg.json"), synth_config(17, 30, 3, 0.3));
  std::string data_dir = (tmp.path() / "data").string();
  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " + data_dir,
                  tmp.file("log.txt"))
              .exit_code == 0);
  REQUIRE(run_cli("score --traces " + data_dir +
                      "/traces.jsonl --scorer precomputed:synthetic_step --granularity step"
                      " --scorer verbalized --out " +
                      (tmp.path() / "scored").string(),
                  tmp.file("log.txt"))
              .exit_code == 0);
  REQUIRE(run_cli(
              "evaluate --traces " + data_dir + "/traces.jsonl --scored " +
                  (tmp.path() / "scored" / "scored_precomputed_synthetic_step_step.jsonl").string() +
                  " --scored " + (tmp.path() / "scored" / "scored_verbalized_step.jsonl").string() +
                  " --out " + (tmp.path() / "eval").string(),
              tmp.file("log.txt"))
              .exit_code == 0);
  RunResult r = run_cli(
      "report --report " +
          (tmp.path() / "eval" / "report_precomputed_synthetic_step_step.json").string() +
          " --report " + (tmp.path() / "eval" / "report_verbalized_step.json").string() +
          " --out " + (tmp.path() / "merged").string(),
      tmp.file("log.txt"));
  CHECK(r.exit_code == 0);
  std::string summary = testutil::read_text(tmp.path() / "merged" / "summary.csv");
  CHECK(summary.find("precomputed:synthetic_step") != std::string::npos);
  CHECK(summary.find("verbalized") != std::string::npos);
}

TEST_CASE("judge scoring through the CLI against a stub endpoint") {
  TempDir tmp;
  testutil::write_text(tmp.file("cfg.json"), synth_config(23, 6, 2, 0.3));
  std::string data_dir = (tmp.path() / "data").string();
  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " + data_dir,
                  tmp.file("log.txt"))
              .exit_code == 0);

  judgestub::StubServer server = judgestub::always_reply("Confidence: 0.8");
  json run_config{{"traces", data_dir + "/traces.jsonl"},
                  {"scorers", json::array({"judge"})},
                  {"granularities", json::array({"response"})},
                  {"out_dir", (tmp.path() / "scored").string()},
                  {"judge",
                   {{"endpoint", server.endpoint()},
                    {"model", "stub"},
                    {"max_concurrency", 2},
                    {"retry_limit", 1},
                    {"initial_backoff_ms", 1}}}};
  testutil::write_text(tmp.file("run.json"), run_config.dump());
  RunResult r = run_cli("score --config " + tmp.file("run.json").string(), tmp.file("log.txt"));
  INFO(r.output);
  CHECK(r.exit_code == 0);
  auto scored =
      stepguard::pipeline::load_scored(tmp.path() / "scored" / "scored_judge_response.jsonl");
  REQUIRE(scored.size() == 6);
  for (const auto& s : scored) {
    CHECK(s.scorer == "judge:stub");
    CHECK(s.aggregate == doctest::Approx(0.2).epsilon(1e-12));
  }
  CHECK(server.calls() == 6);
}

TEST_CASE("unreachable judge endpoint exits 3") {
  TempDir tmp;
  testutil::write_text(tmp.file("cfg.json"), synth_config(24, 3, 2, 0.3));
  std::string data_dir = (tmp.path() / "data").string();
  REQUIRE(run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " + data_dir,
                  tmp.file("log.txt"))
              .exit_code == 0);
  json run_config{{"traces", data_dir + "/traces.jsonl"},
                  {"scorers", json::array({"judge"})},
                  {"granularities", json::array({"response"})},
                  {"out_dir", (tmp.path() / "scored").string()},
                  {"judge",
                   {{"endpoint", "http://127.0.0.1:9"},
                    {"model", "stub"},
                    {"retry_limit", 0},
                    {"timeout_s", 2.0},
                    {"initial_backoff_ms", 1}}}};
  testutil::write_text(tmp.file("run.json"), run_config.dump());
  RunResult r = run_cli("score --config " + tmp.file("run.json").string(), tmp.file("log.txt"));
  CHECK(r.exit_code == 3);
}

TEST_CASE("usage errors exit 1") {
  TempDir tmp;
  CHECK(run_cli("score --no-such-flag", tmp.file("log.txt")).exit_code == 1);
  CHECK(run_cli("synth --config /nonexistent.json --out " + (tmp.path() / "x").string(),
                tmp.file("log.txt"))
            .exit_code == 1);
  CHECK(run_cli("score --traces /nonexistent.jsonl --scorer verbalized --out " +
                    (tmp.path() / "y").string(),
                tmp.file("log.txt"))
            .exit_code == 1);
}

}  // TEST_SUITE("cli")
