#include "trace.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "error.hpp"

namespace stepguard {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void parse_fail(const std::string& where, const std::string& path,
                             const std::string& what) {
  fail(ErrorCode::parse, where + ": " + path + ": " + what);
}

void check_known_fields(const json& obj, std::initializer_list<const char*> known,
                        const std::string& where, const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool found = false;
    for (const char* k : known) {
      if (it.key() == k) {
        found = true;
        break;
      }
    }
    if (!found) parse_fail(where, path, "unknown field '" + it.key() + "'");
  }
}

// Absent and null are both treated as "not present".
const json* opt_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

std::string require_string(const json& obj, const char* key, const std::string& where,
                           const std::string& path) {
  const json* f = opt_field(obj, key);
  if (!f) parse_fail(where, path + "." + key, "missing required field");
  if (!f->is_string()) parse_fail(where, path + "." + key, "expected string");
  return f->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key,
                                           const std::string& where, const std::string& path) {
  const json* f = opt_field(obj, key);
  if (!f) return std::nullopt;
  if (!f->is_string()) parse_fail(where, path + "." + key, "expected string");
  return f->get<std::string>();
}

std::optional<int> optional_binary(const json& obj, const char* key, const std::string& where,
                                   const std::string& path) {
  const json* f = opt_field(obj, key);
  if (!f) return std::nullopt;
  if (!f->is_number_integer()) parse_fail(where, path + "." + key, "expected integer 0 or 1");
  int64_t v = f->get<int64_t>();
  if (v != 0 && v != 1) parse_fail(where, path + "." + key, "expected 0 or 1");
  return int(v);
}

uint64_t require_u64(const json& obj, const char* key, const std::string& where,
                     const std::string& path) {
  const json* f = opt_field(obj, key);
  if (!f) parse_fail(where, path + "." + key, "missing required field");
  if (!f->is_number_unsigned() && !(f->is_number_integer() && f->get<int64_t>() >= 0))
    parse_fail(where, path + "." + key, "expected non-negative integer");
  return f->get<uint64_t>();
}

StepRecord step_from_json(const json& j, const std::string& where, const std::string& path) {
  if (!j.is_object()) parse_fail(where, path, "expected object");
  check_known_fields(j,
                     {"query", "response", "gold_response", "step_label", "logits_ref",
                      "hidden_state", "verbalized_text", "precomputed_scores"},
                     where, path);

  StepRecord step;
  step.query = require_string(j, "query", where, path);
  step.response = require_string(j, "response", where, path);
  step.gold_response = optional_string(j, "gold_response", where, path);
  step.step_label = optional_binary(j, "step_label", where, path);
  step.verbalized_text = optional_string(j, "verbalized_text", where, path);

  if (const json* lr = opt_field(j, "logits_ref")) {
    if (!lr->is_object()) parse_fail(where, path + ".logits_ref", "expected object");
    check_known_fields(*lr, {"row_offset", "row_count"}, where, path + ".logits_ref");
    LogitsRef ref;
    ref.row_offset = require_u64(*lr, "row_offset", where, path + ".logits_ref");
    ref.row_count = require_u64(*lr, "row_count", where, path + ".logits_ref");
    step.logits_ref = ref;
  }

  if (const json* hs = opt_field(j, "hidden_state")) {
    if (!hs->is_array()) parse_fail(where, path + ".hidden_state", "expected array of numbers");
    std::vector<double> v;
    v.reserve(hs->size());
    for (size_t i = 0; i < hs->size(); ++i) {
      const json& e = (*hs)[i];
      if (!e.is_number())
        parse_fail(where, path + ".hidden_state[" + std::to_string(i) + "]", "expected number");
      double d = e.get<double>();
      if (!std::isfinite(d))
        parse_fail(where, path + ".hidden_state[" + std::to_string(i) + "]",
                   "expected finite number");
      v.push_back(d);
    }
    step.hidden_state = std::move(v);
  }

  if (const json* ps = opt_field(j, "precomputed_scores")) {
    if (!ps->is_object()) parse_fail(where, path + ".precomputed_scores", "expected object");
    for (auto it = ps->begin(); it != ps->end(); ++it) {
      const std::string entry_path = path + ".precomputed_scores." + it.key();
      if (!it->is_object()) parse_fail(where, entry_path, "expected object");
      check_known_fields(*it, {"value", "orientation"}, where, entry_path);
      const json* val = opt_field(*it, "value");
      if (!val || !val->is_number()) parse_fail(where, entry_path + ".value", "expected number");
      double d = val->get<double>();
      if (!std::isfinite(d)) parse_fail(where, entry_path + ".value", "expected finite number");
      std::string ostr = require_string(*it, "orientation", where, entry_path);
      PrecomputedScore score;
      score.value = d;
      if (ostr == "failure") {
        score.orientation = Orientation::failure;
      } else if (ostr == "confidence") {
        score.orientation = Orientation::confidence;
      } else {
        parse_fail(where, entry_path + ".orientation", "expected \"failure\" or \"confidence\"");
      }
      step.precomputed_scores.emplace(it.key(), score);
    }
  }

  return step;
}

ordered_json step_to_json(const StepRecord& step) {
  ordered_json j;
  j["query"] = step.query;
  j["response"] = step.response;
  if (step.gold_response) j["gold_response"] = *step.gold_response;
  if (step.step_label) j["step_label"] = *step.step_label;
  if (step.logits_ref) {
    j["logits_ref"] = {{"row_offset", step.logits_ref->row_offset},
                       {"row_count", step.logits_ref->row_count}};
  }
  if (step.hidden_state) j["hidden_state"] = *step.hidden_state;
  if (step.verbalized_text) j["verbalized_text"] = *step.verbalized_text;
  if (!step.precomputed_scores.empty()) {
    ordered_json ps = ordered_json::object();
    for (const auto& [name, score] : step.precomputed_scores) {
      ps[name] = {{"value", score.value}, {"orientation", orientation_name(score.orientation)}};
    }
    j["precomputed_scores"] = std::move(ps);
  }
  return j;
}

}  // namespace

const char* orientation_name(Orientation o) {
  return o == Orientation::failure ? "failure" : "confidence";
}

Orientation orientation_from(std::string_view name) {
  if (name == "failure") return Orientation::failure;
  if (name == "confidence") return Orientation::confidence;
  fail(ErrorCode::invalid_argument, "unknown orientation: " + std::string(name));
}

void validate_trace(const InteractionTrace& trace) {
  if (trace.id.empty()) fail(ErrorCode::validation, "trace with empty id");
  if (trace.steps.empty())
    fail(ErrorCode::validation, "trace " + trace.id + ": must have at least one step");
  for (auto label : {trace.response_label, trace.answer_label}) {
    if (label && *label != 0 && *label != 1)
      fail(ErrorCode::validation, "trace " + trace.id + ": labels must be 0 or 1");
  }
  bool all_steps_labeled = true;
  int max_step_label = 0;
  for (size_t i = 0; i < trace.steps.size(); ++i) {
    const StepRecord& step = trace.steps[i];
    if (step.step_label) {
      if (*step.step_label != 0 && *step.step_label != 1)
        fail(ErrorCode::validation, "trace " + trace.id + ": step " + std::to_string(i + 1) +
                                        ": step_label must be 0 or 1");
      max_step_label = std::max(max_step_label, *step.step_label);
    } else {
      all_steps_labeled = false;
    }
    if (step.logits_ref && step.logits_ref->row_count == 0)
      fail(ErrorCode::validation, "trace " + trace.id + ": step " + std::to_string(i + 1) +
                                      ": logits_ref must address at least one row");
  }
  if (all_steps_labeled && trace.response_label && max_step_label != *trace.response_label) {
    fail(ErrorCode::validation,
         "trace " + trace.id + ": response_label " + std::to_string(*trace.response_label) +
             " inconsistent with max step_label " + std::to_string(max_step_label));
  }
}

void validate_dataset(const std::vector<InteractionTrace>& traces, const LogitsSidecar* sidecar) {
  std::set<std::string> ids;
  std::optional<size_t> hidden_dim;
  std::string hidden_dim_origin;

  for (const InteractionTrace& trace : traces) {
    validate_trace(trace);
    if (!ids.insert(trace.id).second)
      fail(ErrorCode::validation, "duplicate trace id: " + trace.id);

    for (size_t i = 0; i < trace.steps.size(); ++i) {
      const StepRecord& step = trace.steps[i];
      if (step.hidden_state) {
        if (!hidden_dim) {
          hidden_dim = step.hidden_state->size();
          hidden_dim_origin = trace.id;
        } else if (step.hidden_state->size() != *hidden_dim) {
          fail(ErrorCode::validation,
               "trace " + trace.id + ": step " + std::to_string(i + 1) + ": hidden_state dim " +
                   std::to_string(step.hidden_state->size()) + " differs from dim " +
                   std::to_string(*hidden_dim) + " first seen in trace " + hidden_dim_origin);
        }
      }
      if (step.logits_ref && sidecar) {
        const LogitsRef& ref = *step.logits_ref;
        if (ref.row_offset > sidecar->row_count() ||
            sidecar->row_count() - ref.row_offset < ref.row_count) {
          fail(ErrorCode::bounds, "trace " + trace.id + ": step " + std::to_string(i + 1) +
                                      ": logits_ref rows [" + std::to_string(ref.row_offset) +
                                      ", " + std::to_string(ref.row_offset + ref.row_count) +
                                      ") exceed sidecar row count " +
                                      std::to_string(sidecar->row_count()));
        }
      }
    }
  }
}

InteractionTrace trace_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) parse_fail(where, "$", "expected object");
  check_known_fields(j, {"id", "context", "steps", "response_label", "answer_label"}, where, "$");

  InteractionTrace trace;
  trace.id = require_string(j, "id", where, "$");
  trace.context = require_string(j, "context", where, "$");
  trace.response_label = optional_binary(j, "response_label", where, "$");
  trace.answer_label = optional_binary(j, "answer_label", where, "$");

  const json* steps = opt_field(j, "steps");
  if (!steps) parse_fail(where, "$.steps", "missing required field");
  if (!steps->is_array()) parse_fail(where, "$.steps", "expected array");
  for (size_t i = 0; i < steps->size(); ++i) {
    trace.steps.push_back(
        step_from_json((*steps)[i], where, "$.steps[" + std::to_string(i) + "]"));
  }
  return trace;
}

nlohmann::ordered_json trace_to_json(const InteractionTrace& trace) {
  ordered_json j;
  j["id"] = trace.id;
  j["context"] = trace.context;
  ordered_json steps = ordered_json::array();
  for (const StepRecord& step : trace.steps) steps.push_back(step_to_json(step));
  j["steps"] = std::move(steps);
  if (trace.response_label) j["response_label"] = *trace.response_label;
  if (trace.answer_label) j["answer_label"] = *trace.answer_label;
  return j;
}

std::vector<InteractionTrace> load_traces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open trace file: " + path.string());

  std::vector<InteractionTrace> traces;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + " line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::parse, where + ": invalid JSON: " + e.what());
    }
    traces.push_back(trace_from_json(j, where));
  }
  validate_dataset(traces, nullptr);
  return traces;
}

void save_traces(const std::vector<InteractionTrace>& traces,
                 const std::filesystem::path& path) {
  for (const InteractionTrace& t : traces) validate_trace(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write trace file: " + path.string());
  for (const InteractionTrace& t : traces) {
    out << trace_to_json(t).dump() << '\n';
  }
  if (!out) fail(ErrorCode::io, "short write on trace file: " + path.string());
}

Dataset Dataset::open(const std::filesystem::path& traces_path,
                      const std::optional<std::filesystem::path>& sidecar_path) {
  Dataset ds;
  ds.traces = load_traces(traces_path);

  bool any_logits_ref = false;
  std::string first_ref_trace;
  for (const InteractionTrace& t : ds.traces) {
    for (const StepRecord& s : t.steps) {
      if (s.logits_ref) {
        any_logits_ref = true;
        if (first_ref_trace.empty()) first_ref_trace = t.id;
      }
    }
  }

  if (sidecar_path && std::filesystem::exists(*sidecar_path)) {
    ds.sidecar = LogitsSidecar::open(*sidecar_path);
  } else if (any_logits_ref) {
    std::string loc = sidecar_path ? sidecar_path->string() : "(no sidecar path given)";
    fail(ErrorCode::validation, "dangling logits reference: trace " + first_ref_trace +
                                    " references a logits sidecar but none was found at " + loc);
  }

  validate_dataset(ds.traces, ds.sidecar ? &*ds.sidecar : nullptr);
  return ds;
}

Dataset Dataset::from_memory(std::vector<InteractionTrace> traces,
                             std::optional<LogitsSidecar> sidecar) {
  Dataset ds;
  ds.traces = std::move(traces);
  ds.sidecar = std::move(sidecar);
  validate_dataset(ds.traces, ds.sidecar ? &*ds.sidecar : nullptr);
  return ds;
}

const InteractionTrace* Dataset::find(std::string_view id) const {
  for (const InteractionTrace& t : traces) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

}  // namespace stepguard
