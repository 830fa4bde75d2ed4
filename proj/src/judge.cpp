#include "judge.hpp"

#include <chrono>
#include <cmath>
#include <regex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace stepguard::judge {

namespace {

using nlohmann::json;

// Single-pass placeholder substitution, so substituted content is never
// rescanned for placeholders.
std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  size_t pos = 0;
  while (pos < tmpl.size()) {
    size_t open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    size_t close = tmpl.find('}', open + 1);
    out.append(tmpl, pos, open - pos);
    if (close == std::string::npos) {
      out.append(tmpl, open, std::string::npos);
      break;
    }
    std::string key = tmpl.substr(open + 1, close - open - 1);
    auto it = values.find(key);
    if (it != values.end()) {
      out += it->second;
      pos = close + 1;
    } else {
      out.push_back('{');
      pos = open + 1;
    }
  }
  return out;
}

struct SplitEndpoint {
  std::string base;         // scheme://host[:port]
  std::string path_prefix;  // possibly empty, no trailing slash
};

SplitEndpoint split_endpoint(const std::string& endpoint) {
  size_t scheme = endpoint.find("://");
  if (scheme == std::string::npos)
    fail(ErrorCode::invalid_argument, "judge endpoint must include a scheme: " + endpoint);
  size_t path = endpoint.find('/', scheme + 3);
  SplitEndpoint split;
  if (path == std::string::npos) {
    split.base = endpoint;
  } else {
    split.base = endpoint.substr(0, path);
    split.path_prefix = endpoint.substr(path);
    while (!split.path_prefix.empty() && split.path_prefix.back() == '/')
      split.path_prefix.pop_back();
  }
  return split;
}

struct ChatReply {
  bool transport_ok = false;
  bool retryable = false;  // transport error or 429/5xx or malformed body
  int status = 0;
  std::string content;
  std::string error_detail;
};

ChatReply post_chat(const JudgeConfig& config, const json& messages) {
  SplitEndpoint endpoint = split_endpoint(config.endpoint);
  httplib::Client client(endpoint.base);
  int timeout_sec = int(config.timeout_s);
  int timeout_usec = int((config.timeout_s - timeout_sec) * 1e6);
  client.set_connection_timeout(timeout_sec, timeout_usec);
  client.set_read_timeout(timeout_sec, timeout_usec);
  client.set_write_timeout(timeout_sec, timeout_usec);

  httplib::Headers headers;
  if (!config.auth_token.empty())
    headers.emplace("Authorization", "Bearer " + config.auth_token);

  json body{{"model", config.model}, {"messages", messages}, {"temperature", 0}};

  ChatReply reply;
  httplib::Result res = client.Post(endpoint.path_prefix + "/chat/completions", headers,
                                    body.dump(), "application/json");
  if (!res) {
    reply.retryable = true;
    reply.error_detail = "transport error: " + httplib::to_string(res.error());
    return reply;
  }
  reply.status = res->status;
  if (res->status == 429 || res->status >= 500) {
    reply.retryable = true;
    reply.error_detail = "HTTP " + std::to_string(res->status);
    return reply;
  }
  if (res->status != 200) {
    reply.error_detail = "HTTP " + std::to_string(res->status);
    return reply;
  }
  try {
    json parsed = json::parse(res->body);
    reply.content = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    reply.transport_ok = true;
  } catch (const json::exception& e) {
    reply.retryable = true;
    reply.error_detail = std::string("malformed completion body: ") + e.what();
  }
  return reply;
}

void backoff_sleep(const JudgeConfig& config, int attempt) {
  double ms = double(config.initial_backoff_ms) * std::pow(2.0, double(attempt - 1));
  ms = std::min(ms, 10000.0);
  if (ms > 0)
    std::this_thread::sleep_for(std::chrono::microseconds(int64_t(ms * 1000.0)));
}

std::optional<int> parse_label_reply(const std::string& reply) {
  // Exact single-word answers first; then word-boundary search, checking
  // INCORRECT before CORRECT since the latter is a substring of the former.
  std::string trimmed;
  for (char c : reply) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '.' || c == '!') continue;
    trimmed.push_back((c >= 'a' && c <= 'z') ? char(c - 'a' + 'A') : c);
  }
  if (trimmed == "CORRECT") return 0;
  if (trimmed == "INCORRECT") return 1;
  static const std::regex incorrect_re(R"(\bINCORRECT\b)", std::regex::icase);
  static const std::regex correct_re(R"(\bCORRECT\b)", std::regex::icase);
  if (std::regex_search(reply, incorrect_re)) return 1;
  if (std::regex_search(reply, correct_re)) return 0;
  return std::nullopt;
}

// Shared retry loop: `interpret` returns a value, or nullopt for a content
// failure that warrants one stricter re-ask.
template <typename T>
T run_judge_call(const JudgeConfig& config, const std::string& prompt,
                 const std::string& reask_instruction, ErrorCode content_error_code,
                 const std::string& content_error_what, JudgeTranscript& transcript,
                 const std::function<std::optional<T>(const std::string&)>& interpret) {
  json messages = json::array({json{{"role", "user"}, {"content", prompt}}});
  transcript.prompt = prompt;
  bool reasked = false;
  std::string last_error;

  for (;;) {
    ++transcript.attempts;
    auto t0 = std::chrono::steady_clock::now();
    ChatReply reply = post_chat(config, messages);
    transcript.latency_ms +=
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    if (!reply.transport_ok) {
      last_error = reply.error_detail;
      if (reply.retryable && transcript.attempts <= config.retry_limit) {
        backoff_sleep(config, transcript.attempts);
        continue;
      }
      transcript.parse_error = last_error;
      throw JudgeError(ErrorCode::judge_unavailable,
                       "judge endpoint unavailable after " +
                           std::to_string(transcript.attempts) + " attempt(s): " + last_error,
                       transcript);
    }

    transcript.raw_reply = reply.content;
    std::optional<T> value = interpret(reply.content);
    if (value) return *value;

    if (!reasked && transcript.attempts <= config.retry_limit) {
      reasked = true;
      messages.push_back(json{{"role", "assistant"}, {"content", reply.content}});
      messages.push_back(json{{"role", "user"}, {"content", reask_instruction}});
      continue;
    }
    transcript.parse_error = content_error_what;
    throw JudgeError(content_error_code,
                     content_error_what + " after " + std::to_string(transcript.attempts) +
                         " attempt(s)",
                     transcript);
  }
}

class JudgeScorer final : public scorers::Scorer {
 public:
  explicit JudgeScorer(JudgeConfig config) : config_(std::move(config)) {
    config_.validate();
  }

  std::string name() const override { return "judge:" + config_.model; }

  std::vector<scorers::TraceResult> score(const Dataset& dataset,
                                          scorers::Granularity granularity,
                                          size_t /*workers*/) const override {
    // One unit per judge call, keyed back to (trace, step) so completion
    // order never affects outputs.
    struct Unit {
      size_t trace_index;
      std::optional<size_t> step_index;  // 1-based
    };
    std::vector<Unit> units;
    for (size_t t = 0; t < dataset.traces.size(); ++t) {
      if (granularity == scorers::Granularity::step) {
        for (size_t s = 1; s <= dataset.traces[t].steps.size(); ++s)
          units.push_back({t, s});
      } else {
        units.push_back({t, std::nullopt});
      }
    }

    std::vector<std::optional<double>> unit_scores(units.size());
    std::vector<std::optional<scorers::TraceError>> unit_errors(units.size());

    // The pool size is the in-flight bound: each worker runs one blocking
    // call at a time.
    scorers::parallel_for(units.size(), size_t(config_.max_concurrency), [&](size_t u) {
      const Unit& unit = units[u];
      try {
        JudgeResult r =
            judge_score(config_, dataset.traces[unit.trace_index], granularity, unit.step_index);
        unit_scores[u] = r.failure;
      } catch (const Error& e) {
        unit_errors[u] = scorers::TraceError{dataset.traces[unit.trace_index].id, e.code(),
                                             e.what()};
      }
    });

    std::vector<scorers::TraceResult> results(dataset.traces.size());
    std::vector<scorers::ScorerOutput> outputs(dataset.traces.size());
    for (size_t t = 0; t < dataset.traces.size(); ++t) {
      outputs[t].scorer_name = name();
      outputs[t].granularity = granularity;
    }
    for (size_t u = 0; u < units.size(); ++u) {
      size_t t = units[u].trace_index;
      if (results[t].error) continue;
      if (unit_errors[u]) {
        results[t].error = unit_errors[u];
        continue;
      }
      if (granularity == scorers::Granularity::step) {
        outputs[t].per_step.push_back(*unit_scores[u]);  // units are in step order per trace
      } else {
        outputs[t].whole = *unit_scores[u];
      }
    }
    for (size_t t = 0; t < dataset.traces.size(); ++t) {
      if (!results[t].error) results[t].output = std::move(outputs[t]);
    }
    return results;
  }

 private:
  JudgeConfig config_;
};

}  // namespace

void JudgeConfig::validate() const {
  if (endpoint.empty()) fail(ErrorCode::invalid_argument, "judge: endpoint must be set");
  if (model.empty()) fail(ErrorCode::invalid_argument, "judge: model must be set");
  if (max_concurrency < 1) fail(ErrorCode::invalid_argument, "judge: max_concurrency must be >= 1");
  if (retry_limit < 0) fail(ErrorCode::invalid_argument, "judge: retry_limit must be >= 0");
  if (!(timeout_s > 0.0)) fail(ErrorCode::invalid_argument, "judge: timeout must be > 0");
  if (initial_backoff_ms < 0)
    fail(ErrorCode::invalid_argument, "judge: initial_backoff_ms must be >= 0");
  split_endpoint(endpoint);
}

TemplateSet JudgeConfig::templates() const {
  if (template_dir) return load_templates(*template_dir, template_id);
  return builtin_templates(template_id);
}

JudgeConfig JudgeConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::parse, "judge config: expected object");
  JudgeConfig cfg;
  try {
    cfg.endpoint = j.at("endpoint").get<std::string>();
    cfg.model = j.at("model").get<std::string>();
    if (j.contains("max_concurrency")) cfg.max_concurrency = j.at("max_concurrency").get<int>();
    if (j.contains("retry_limit")) cfg.retry_limit = j.at("retry_limit").get<int>();
    if (j.contains("timeout_s")) cfg.timeout_s = j.at("timeout_s").get<double>();
    if (j.contains("template_id")) cfg.template_id = j.at("template_id").get<std::string>();
    if (j.contains("template_dir"))
      cfg.template_dir = std::filesystem::path(j.at("template_dir").get<std::string>());
    if (j.contains("scale")) {
      std::string s = j.at("scale").get<std::string>();
      if (s == "unit")
        cfg.scale = scorers::Scale::unit;
      else if (s == "percent")
        cfg.scale = scorers::Scale::percent;
      else
        fail(ErrorCode::parse, "judge config: scale must be \"unit\" or \"percent\"");
    }
    if (j.contains("initial_backoff_ms"))
      cfg.initial_backoff_ms = j.at("initial_backoff_ms").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("judge config: ") + e.what());
  }
  if (const char* token = std::getenv(kTokenEnvVar)) cfg.auth_token = token;
  cfg.validate();
  return cfg;
}

std::string render_history(const InteractionTrace& trace, size_t step_index) {
  if (step_index < 1 || step_index > trace.steps.size())
    fail(ErrorCode::invalid_argument,
         "trace " + trace.id + ": step index " + std::to_string(step_index) + " out of range [1, " +
             std::to_string(trace.steps.size()) + "]");
  std::string out;
  for (size_t k = 0; k + 1 < step_index; ++k) {
    out += "Query " + std::to_string(k + 1) + ":\n" + trace.steps[k].query + "\n";
    out += "Response " + std::to_string(k + 1) + ":\n" + trace.steps[k].response + "\n";
  }
  out += "Query " + std::to_string(step_index) + ":\n" + trace.steps[step_index - 1].query + "\n";
  return out;
}

std::string render_judge_prompt(const InteractionTrace& trace, scorers::Granularity granularity,
                                std::optional<size_t> step_index, const TemplateSet& templates) {
  if (granularity == scorers::Granularity::step) {
    if (!step_index)
      fail(ErrorCode::invalid_argument, "step granularity requires a step index");
    // render_history validates the index; keep it out of the braced
    // initializer so a throw cannot strand partially built pairs.
    std::string history = render_history(trace, *step_index);
    return render_template(templates.step,
                           {{"context", trace.context},
                            {"history", std::move(history)},
                            {"response", trace.steps[*step_index - 1].response}});
  }

  if (step_index)
    fail(ErrorCode::invalid_argument, "response granularity takes no step index");
  std::string history;
  for (size_t k = 0; k < trace.steps.size(); ++k) {
    history += "Query " + std::to_string(k + 1) + ":\n" + trace.steps[k].query + "\n";
    history += "Response " + std::to_string(k + 1) + ":\n" + trace.steps[k].response + "\n";
  }
  return render_template(templates.response, {{"context", trace.context}, {"history", history}});
}

JudgeResult judge_score(const JudgeConfig& config, const InteractionTrace& trace,
                        scorers::Granularity granularity, std::optional<size_t> step_index) {
  config.validate();
  TemplateSet templates = config.templates();
  std::string prompt = render_judge_prompt(trace, granularity, step_index, templates);

  JudgeResult result;
  result.failure = run_judge_call<double>(
      config, prompt, templates.reask, ErrorCode::judge_unparseable,
      "judge reply carried no parseable confidence", result.transcript,
      [&](const std::string& content) -> std::optional<double> {
        try {
          return scorers::parse_verbalized(content, config.scale).failure;
        } catch (const Error&) {
          return std::nullopt;
        }
      });
  result.transcript.parsed_failure = result.failure;
  return result;
}

int judge_label(const JudgeConfig& config, const std::string& response, const std::string& gold,
                const std::string& context) {
  config.validate();
  TemplateSet templates = config.templates();
  std::string prompt = render_template(
      templates.label, {{"context", context}, {"gold", gold}, {"response", response}});

  JudgeTranscript transcript;
  int label = run_judge_call<int>(
      config, prompt, templates.label_reask, ErrorCode::label_unparseable,
      "judge reply was neither CORRECT nor INCORRECT", transcript,
      [](const std::string& content) { return parse_label_reply(content); });
  return label;
}

std::unique_ptr<scorers::Scorer> make_judge_scorer(JudgeConfig config) {
  return std::make_unique<JudgeScorer>(std::move(config));
}

}  // namespace stepguard::judge
