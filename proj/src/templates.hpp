#pragma once

#include <filesystem>
#include <string>

namespace stepguard::judge {

// Judge prompt templates are versioned data. The v1 set ships both as files
// under templates/ and as byte-identical built-ins here, so the library
// works without an install prefix; a template_dir in the judge config loads
// override files named judge_<kind>.<id>.txt instead.
struct TemplateSet {
  std::string id;
  std::string step;
  std::string response;
  std::string label;
  std::string reask;
  std::string label_reask;
};

const TemplateSet& builtin_templates(const std::string& id = "v1");
TemplateSet load_templates(const std::filesystem::path& dir, const std::string& id);

}  // namespace stepguard::judge
