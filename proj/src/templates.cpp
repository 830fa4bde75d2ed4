#include "templates.hpp"

#include <fstream>
#include <sstream>

#include "error.hpp"

namespace stepguard::judge {

namespace {

// Keep these byte-identical to the files under templates/; a unit test
// compares them.
constexpr const char* kStepV1 =
    R"(You are evaluating one step of an AI agent's multi-step interaction.

Context:
{context}

Interaction so far:
{history}

Response under evaluation (the agent's reply to the last query above):
{response}

Judge whether this response is correct given the context and the interaction so far. Give a one-sentence justification, then end your reply with a final line of exactly this form:
Confidence: <number in [0,1]>
where the number is your confidence that the response is correct.
)";

constexpr const char* kResponseV1 =
    R"(You are evaluating an AI agent's complete multi-step interaction.

Context:
{context}

Full interaction:
{history}

Judge whether the agent's responses are correct overall. Give a one-sentence justification, then end your reply with a final line of exactly this form:
Confidence: <number in [0,1]>
where the number is your confidence that the responses are correct overall.
)";

constexpr const char* kLabelV1 =
    R"(You are grading an AI agent's response against a ground-truth answer.

Context:
{context}

Ground-truth answer:
{gold}

Agent response:
{response}

Decide whether the agent response is correct with respect to the ground-truth answer. Reply with exactly one word: CORRECT or INCORRECT.
)";

constexpr const char* kReaskV1 =
    R"(Your previous reply did not contain a parseable confidence. Reply again with ONLY a single line of exactly this form, nothing else:
Confidence: <number in [0,1]>
)";

constexpr const char* kLabelReaskV1 =
    R"(Your previous reply was not a valid grade. Reply again with exactly one word and nothing else: CORRECT or INCORRECT.
)";

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open template file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const TemplateSet& builtin_templates(const std::string& id) {
  static const TemplateSet v1{"v1", kStepV1, kResponseV1, kLabelV1, kReaskV1, kLabelReaskV1};
  if (id == "v1") return v1;
  fail(ErrorCode::invalid_argument, "unknown builtin template id: " + id);
}

TemplateSet load_templates(const std::filesystem::path& dir, const std::string& id) {
  TemplateSet set;
  set.id = id;
  set.step = read_file(dir / ("judge_step." + id + ".txt"));
  set.response = read_file(dir / ("judge_response." + id + ".txt"));
  set.label = read_file(dir / ("judge_label." + id + ".txt"));
  set.reask = read_file(dir / ("judge_reask." + id + ".txt"));
  set.label_reask = read_file(dir / ("judge_label_reask." + id + ".txt"));
  return set;
}

}  // namespace stepguard::judge
