#include <doctest.h>

#include <cstdlib>

#include "judge.hpp"
#include "judge_stub.hpp"
#include "pipeline.hpp"
#include "rng.hpp"
#include "synth.hpp"
#include "test_util.hpp"

using namespace stepguard;
using judge::JudgeConfig;
using scorers::Granularity;
using testutil::expect_error;

namespace {

JudgeConfig stub_config(const judgestub::StubServer& server, int retry_limit = 2) {
  JudgeConfig cfg;
  cfg.endpoint = server.endpoint();
  cfg.model = "stub-model";
  cfg.retry_limit = retry_limit;
  cfg.max_concurrency = 4;
  cfg.timeout_s = 10.0;
  cfg.initial_backoff_ms = 1;
  return cfg;
}

InteractionTrace three_step_trace() {
  InteractionTrace t = testutil::make_trace("j1", {0, 0, 0});
  for (size_t i = 0; i < 3; ++i) {
    t.steps[i].query = "QMARK" + std::to_string(i + 1);
    t.steps[i].response = "RMARK" + std::to_string(i + 1);
  }
  return t;
}

}  // namespace

TEST_SUITE("judge") {

TEST_CASE("render: step prompt for i=2 holds steps 1..2 and nothing later") {
  InteractionTrace t = three_step_trace();
  std::string prompt = judge::render_judge_prompt(t, Granularity::step, 2);
  CHECK(prompt.find("QMARK1") != std::string::npos);
  CHECK(prompt.find("RMARK1") != std::string::npos);
  CHECK(prompt.find("QMARK2") != std::string::npos);
  CHECK(prompt.find("RMARK2") != std::string::npos);
  CHECK(prompt.find("QMARK3") == std::string::npos);
  CHECK(prompt.find("RMARK3") == std::string::npos);
  CHECK(prompt.find(t.context) != std::string::npos);
  CHECK(prompt.find("Confidence: <number in [0,1]>") != std::string::npos);
}

TEST_CASE("render: response prompt for a 1-step trace holds C, Q1, R1") {
  InteractionTrace t = testutil::make_trace("j2", {0});
  std::string prompt = judge::render_judge_prompt(t, Granularity::response, std::nullopt);
  CHECK(prompt.find(t.context) != std::string::npos);
  CHECK(prompt.find(t.steps[0].query) != std::string::npos);
  CHECK(prompt.find(t.steps[0].response) != std::string::npos);
  CHECK(prompt.find("Confidence: <number in [0,1]>") != std::string::npos);
}

TEST_CASE("render: out-of-range step index errors") {
  InteractionTrace t = three_step_trace();
  expect_error(ErrorCode::invalid_argument, "out of range",
               [&] { judge::render_judge_prompt(t, Granularity::step, 4); });
}

TEST_CASE("render: byte-identical across calls") {
  InteractionTrace t = three_step_trace();
  CHECK(judge::render_judge_prompt(t, Granularity::step, 3) ==
        judge::render_judge_prompt(t, Granularity::step, 3));
  CHECK(judge::render_judge_prompt(t, Granularity::response, std::nullopt) ==
        judge::render_judge_prompt(t, Granularity::response, std::nullopt));
}

TEST_CASE("render: history sections extend as prefixes across steps") {
  synth::SynthConfig cfg;
  cfg.seed = 51;
  cfg.trace_count = 10;
  cfg.steps_min = 2;
  cfg.steps_max = 7;
  cfg.hidden_dim = 2;
  cfg.vocab_size = 4;
  synth::GeneratedData data = synth::generate(cfg);
  for (const InteractionTrace& t : data.traces) {
    for (size_t i = 2; i <= t.steps.size(); ++i) {
      std::string prev = judge::render_history(t, i - 1);
      std::string cur = judge::render_history(t, i);
      CHECK(cur.compare(0, prev.size(), prev) == 0);
    }
  }
}

TEST_CASE("builtin templates match the shipped template files") {
  judge::TemplateSet files = judge::load_templates(STEPGUARD_TEMPLATES_DIR, "v1");
  const judge::TemplateSet& builtin = judge::builtin_templates("v1");
  CHECK(files.step == builtin.step);
  CHECK(files.response == builtin.response);
  CHECK(files.label == builtin.label);
  CHECK(files.reask == builtin.reask);
  CHECK(files.label_reask == builtin.label_reask);
}

TEST_CASE("template_dir overrides the builtin set") {
  testutil::TempDir tmp;
  for (const char* kind : {"step", "response", "label", "reask", "label_reask"}) {
    testutil::write_text(tmp.file(std::string("judge_") + kind + ".v9.txt"),
                         std::string(kind) + " override: {context}|{history}|{response}|{gold}");
  }
  JudgeConfig cfg;
  cfg.endpoint = "http://h:1";
  cfg.model = "m";
  cfg.template_id = "v9";
  cfg.template_dir = tmp.path();
  judge::TemplateSet set = cfg.templates();
  CHECK(set.step.rfind("step override", 0) == 0);

  InteractionTrace t = testutil::make_trace("td", {0});
  std::string prompt = judge::render_judge_prompt(t, Granularity::step, 1, set);
  CHECK(prompt.find("step override: " + t.context) == 0);
  CHECK(prompt.find(t.steps[0].response) != std::string::npos);

  expect_error(ErrorCode::io, "", [&] { judge::load_templates(tmp.path(), "missing"); });
  expect_error(ErrorCode::invalid_argument, "template id",
               [&] { judge::builtin_templates("v9"); });
}

TEST_CASE("judge_score: clean confidence reply") {
  judgestub::StubServer server = judgestub::always_reply("Looks right. Confidence: 0.9");
  InteractionTrace t = testutil::make_trace("j3", {0});
  judge::JudgeResult r = judge::judge_score(stub_config(server), t, Granularity::response,
                                            std::nullopt);
  CHECK(r.failure == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(r.transcript.attempts == 1);
  CHECK(r.transcript.raw_reply == "Looks right. Confidence: 0.9");
}

TEST_CASE("judge_score: two 500s then success with retry limit 2 takes 3 attempts") {
  judgestub::StubServer server([](size_t index, const nlohmann::json&) {
    if (index < 2) return judgestub::Reply{500, ""};
    return judgestub::Reply{200, "Confidence: 0.5"};
  });
  InteractionTrace t = testutil::make_trace("j4", {0});
  judge::JudgeResult r =
      judge::judge_score(stub_config(server, 2), t, Granularity::response, std::nullopt);
  CHECK(r.failure == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.transcript.attempts == 3);
  CHECK(server.calls() == 3);
}

TEST_CASE("judge_score: prose-only replies exhaust into JudgeUnparseable") {
  judgestub::StubServer server = judgestub::always_reply("I cannot say.");
  InteractionTrace t = testutil::make_trace("j5", {0});
  try {
    judge::judge_score(stub_config(server, 1), t, Granularity::response, std::nullopt);
    FAIL("expected JudgeError");
  } catch (const judge::JudgeError& e) {
    CHECK(e.code() == ErrorCode::judge_unparseable);
    CHECK(e.transcript().attempts == 2);  // retry_limit 1 allows one re-ask
    CHECK(e.transcript().raw_reply == "I cannot say.");
  }
  CHECK(server.calls() == 2);
}

TEST_CASE("judge_score: re-ask sends a stricter instruction and parses its reply") {
  // The second call must carry the original exchange plus the re-ask.
  std::atomic<int> second_call_messages{0};
  judgestub::StubServer server([&](size_t index, const nlohmann::json& body) {
    if (index == 0) return judgestub::Reply{200, "thinking out loud, no value"};
    second_call_messages = int(body.at("messages").size());
    return judgestub::Reply{200, "Confidence: 0.25"};
  });
  InteractionTrace t = testutil::make_trace("j6", {0});
  judge::JudgeResult r =
      judge::judge_score(stub_config(server, 2), t, Granularity::response, std::nullopt);
  CHECK(r.failure == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.transcript.attempts == 2);
  CHECK(second_call_messages.load() == 3);
}

TEST_CASE("judge_score: unreachable endpoint raises JudgeUnavailable") {
  JudgeConfig cfg;
  cfg.endpoint = "http://127.0.0.1:9";  // discard port; nothing listens
  cfg.model = "stub";
  cfg.retry_limit = 1;
  cfg.timeout_s = 2.0;
  cfg.initial_backoff_ms = 1;
  InteractionTrace t = testutil::make_trace("j7", {0});
  try {
    judge::judge_score(cfg, t, Granularity::response, std::nullopt);
    FAIL("expected JudgeError");
  } catch (const judge::JudgeError& e) {
    CHECK(e.code() == ErrorCode::judge_unavailable);
    CHECK(e.transcript().attempts == 2);
  }
}

TEST_CASE("judge_score: requests are temperature 0 and carry the bearer token") {
  std::atomic<double> temperature{-1.0};
  std::atomic<bool> model_ok{false};
  judgestub::StubServer server([&](size_t, const nlohmann::json& body) {
    temperature = body.at("temperature").get<double>();
    model_ok = body.at("model").get<std::string>() == "stub-model";
    return judgestub::Reply{200, "Confidence: 1.0"};
  });
  JudgeConfig cfg = stub_config(server);
  cfg.auth_token = "sekrit";
  InteractionTrace t = testutil::make_trace("j8", {0});
  judge::judge_score(cfg, t, Granularity::response, std::nullopt);
  CHECK(server.auth_headers().at(0) == "Bearer sekrit");
  CHECK(temperature.load() == 0.0);
  CHECK(model_ok.load());
}

TEST_CASE("judge_label: CORRECT, INCORRECT and junk replies") {
  {
    judgestub::StubServer server = judgestub::always_reply("CORRECT");
    CHECK(judge::judge_label(stub_config(server), "resp", "gold", "ctx") == 0);
  }
  {
    judgestub::StubServer server = judgestub::always_reply("INCORRECT");
    CHECK(judge::judge_label(stub_config(server), "resp", "gold", "ctx") == 1);
  }
  {
    judgestub::StubServer server = judgestub::always_reply("The answer is INCORRECT.");
    CHECK(judge::judge_label(stub_config(server), "resp", "gold", "ctx") == 1);
  }
  {
    judgestub::StubServer server = judgestub::always_reply("maybe");
    expect_error(ErrorCode::label_unparseable, "", [&] {
      judge::judge_label(stub_config(server, 1), "resp", "gold", "ctx");
    });
  }
}

TEST_CASE("judge scorer: step granularity issues one call per step, keyed correctly") {
  judgestub::StubServer server([](size_t, const nlohmann::json& body) {
    // Echo a confidence derived from the step number in the prompt so the
    // result identifies which call went where.
    std::string prompt = body.at("messages").at(0).at("content").get<std::string>();
    double confidence = prompt.find("RMARK3") != std::string::npos   ? 0.3
                        : prompt.find("RMARK2") != std::string::npos ? 0.2
                                                                     : 0.1;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "Confidence: %.1f", confidence);
    return judgestub::Reply{200, buf};
  });

  InteractionTrace t = three_step_trace();
  Dataset ds = Dataset::from_memory({t}, std::nullopt);
  auto scorer = judge::make_judge_scorer(stub_config(server));
  auto results = scorer->score(ds, Granularity::step, 0);
  REQUIRE(results[0].output.has_value());
  REQUIRE(results[0].output->per_step.size() == 3);
  CHECK(results[0].output->per_step[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(results[0].output->per_step[1] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(results[0].output->per_step[2] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(results[0].output->scorer_name == "judge:stub-model");
  CHECK(server.calls() == 3);
}

TEST_CASE("judge scorer: in-flight requests never exceed max_concurrency") {
  judgestub::StubServer server([](size_t, const nlohmann::json&) {
    std::this_thread::sleep_for(std::chrono::milliseconds(3));
    return judgestub::Reply{200, "Confidence: 0.5"};
  });
  std::vector<InteractionTrace> traces;
  for (int i = 0; i < 40; ++i)
    traces.push_back(testutil::make_trace("c" + std::to_string(i + 10), {0}));
  Dataset ds = Dataset::from_memory(traces, std::nullopt);

  JudgeConfig cfg = stub_config(server);
  cfg.max_concurrency = 3;
  auto scorer = judge::make_judge_scorer(cfg);
  auto results = scorer->score(ds, Granularity::response, 0);
  for (const auto& r : results) CHECK(r.output.has_value());
  CHECK(server.calls() == 40);
  CHECK(server.max_inflight() <= 3);
  CHECK(server.max_inflight() >= 2);  // the pool actually ran concurrently
}

TEST_CASE("judge config: validation and env token pickup") {
  nlohmann::json j{{"endpoint", "http://h:1"}, {"model", "m"}};
  ::setenv(judge::kTokenEnvVar, "from-env", 1);
  JudgeConfig cfg = JudgeConfig::from_json(j);
  CHECK(cfg.auth_token == "from-env");
  ::unsetenv(judge::kTokenEnvVar);

  JudgeConfig bad = cfg;
  bad.max_concurrency = 0;
  expect_error(ErrorCode::invalid_argument, "max_concurrency", [&] { bad.validate(); });
  bad = cfg;
  bad.retry_limit = -1;
  expect_error(ErrorCode::invalid_argument, "retry_limit", [&] { bad.validate(); });
  bad = cfg;
  bad.timeout_s = 0.0;
  expect_error(ErrorCode::invalid_argument, "timeout", [&] { bad.validate(); });
}

}  // TEST_SUITE("judge")
