// stepguard command-line tool. Everything goes through the public C API in
// stepguard/stepguard.h; config shaping, manifests and CSV rendering live
// here.

#include <stepguard/stepguard.h>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct CliError {
  int exit_code;
  std::string message;
};

[[noreturn]] void die(int exit_code, const std::string& message) {
  throw CliError{exit_code, message};
}

int code_for(sg_status status) {
  switch (status) {
    case SG_OK:
      return 0;
    case SG_ERR_JUDGE_UNAVAILABLE:
    case SG_ERR_JUDGE_UNPARSEABLE:
    case SG_ERR_LABEL_UNPARSEABLE:
      return 3;
    default:
      return 2;
  }
}

// Data-stage failure: exit 2 (or 3 for judge trouble).
void require_ok(sg_status status, const std::string& stage) {
  if (status == SG_OK) return;
  die(code_for(status), stage + ": " + sg_last_error());
}

// Config-stage failure: exit 1 regardless of the underlying code.
void require_config_ok(sg_status status, const std::string& stage) {
  if (status == SG_OK) return;
  die(1, stage + ": " + sg_last_error());
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct DatasetDeleter {
  void operator()(sg_dataset* p) const { sg_dataset_free(p); }
};
struct ScoredDeleter {
  void operator()(sg_scored* p) const { sg_scored_free(p); }
};
struct ReportDeleter {
  void operator()(sg_report* p) const { sg_report_free(p); }
};
struct ProbeDeleter {
  void operator()(sg_probe* p) const { sg_probe_free(p); }
};
using DatasetPtr = std::unique_ptr<sg_dataset, DatasetDeleter>;
using ScoredPtr = std::unique_ptr<sg_scored, ScoredDeleter>;
using ReportPtr = std::unique_ptr<sg_report, ReportDeleter>;
using ProbePtr = std::unique_ptr<sg_probe, ProbeDeleter>;

json load_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) die(1, what + ": cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    die(1, what + ": " + path.string() + ": " + e.what());
  }
}

// --set key.path=value overrides; the value is parsed as JSON when possible,
// else taken as a string.
void apply_overrides(json& config, const std::vector<std::string>& sets) {
  for (const std::string& set : sets) {
    size_t eq = set.find('=');
    if (eq == std::string::npos || eq == 0) die(1, "--set expects key=value, got: " + set);
    std::string key = set.substr(0, eq);
    std::string value = set.substr(eq + 1);
    std::string pointer = "/";
    for (char c : key) pointer.push_back(c == '.' ? '/' : c);
    json parsed = json::parse(value, nullptr, false);
    try {
      config[json::json_pointer(pointer)] = parsed.is_discarded() ? json(value) : parsed;
    } catch (const json::exception& e) {
      die(1, "--set " + set + ": " + e.what());
    }
  }
}

std::string file_digest(const fs::path& path) {
  char hex[65];
  require_ok(sg_sha256_file(path.string().c_str(), hex), "hashing " + path.string());
  return std::string("sha256:") + hex;
}

std::string config_hash(const json& effective) {
  std::string canonical = effective.dump();  // nlohmann sorts object keys
  char hex[65];
  require_ok(sg_sha256_bytes(canonical.data(), canonical.size(), hex), "hashing config");
  return std::string("sha256:") + hex;
}

std::string iso_now_utc() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) die(2, "cannot write " + path.string());
  out << content;
  if (!out) die(2, "short write on " + path.string());
}

// Every output directory gets a manifest: version, config hash, seed, input
// digests. created_at is the only wall-clock field anywhere in the outputs.
void write_manifest(const fs::path& out_dir, const std::string& command, const json& effective,
                    const json& seed, const std::vector<fs::path>& inputs,
                    const json& stats = json::object()) {
  ordered_json manifest;
  manifest["toolkit_version"] = sg_version();
  manifest["command"] = command;
  manifest["config_hash"] = config_hash(effective);
  manifest["seed"] = seed;
  ordered_json digests = ordered_json::object();
  for (const fs::path& input : inputs) digests[input.string()] = file_digest(input);
  manifest["inputs"] = std::move(digests);
  if (!stats.empty()) manifest["stats"] = stats;
  manifest["created_at"] = iso_now_utc();
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) die(1, "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    if (c == ':' || c == '/' || c == '\\' || c == ' ') c = '_';
  }
  return out;
}

DatasetPtr open_dataset(const std::string& traces, const std::string& sidecar) {
  // Default sidecar: sibling .logits file when present.
  std::string sidecar_path = sidecar;
  if (sidecar_path.empty()) {
    fs::path guess = fs::path(traces).replace_extension(".logits");
    if (fs::exists(guess)) sidecar_path = guess.string();
  }
  sg_dataset* raw = nullptr;
  require_ok(sg_dataset_open(traces.c_str(), sidecar_path.empty() ? nullptr : sidecar_path.c_str(),
                             &raw),
             "opening " + traces);
  return DatasetPtr(raw);
}

/* ---------------- CSV summary rendering ---------------- */

struct SummaryRow {
  std::string scorer;
  std::string granularity;
  std::string label_field;
  std::string config_label;  // "configured" or "default"
  std::string aggregator;
  double auc = 0.0;
  double fpr = 1.0;
  double recall_target = 0.9;
  bool achieved = false;
  double max_recall = 0.0;
  double ece = 0.0;
  int ece_bins = 10;
  json operating_threshold;  // number or null
  size_t positives = 0;
  size_t negatives = 0;
  json subset_recall;  // number or null
  std::string delta;   // filled when a matching response row exists
};

std::vector<SummaryRow> rows_from_report(const json& doc) {
  std::vector<SummaryRow> rows;
  for (const char* block_name : {"configured", "default"}) {
    if (!doc.contains(block_name)) continue;
    const json& block = doc.at(block_name);
    const json& m = block.at("metrics");
    SummaryRow row;
    row.scorer = doc.at("scorer").get<std::string>();
    row.granularity = doc.at("granularity").get<std::string>();
    row.label_field = doc.at("label_field").get<std::string>();
    row.config_label = block_name;
    row.aggregator = block.at("aggregator").get<std::string>();
    row.auc = m.at("auc_roc").get<double>();
    row.fpr = m.at("fpr_at_recall").at("fpr").get<double>();
    row.recall_target = m.at("fpr_at_recall").at("target").get<double>();
    row.achieved = m.at("fpr_at_recall").at("achieved").get<bool>();
    row.max_recall = m.at("fpr_at_recall").at("max_recall").get<double>();
    row.ece = m.at("ece").at("value").get<double>();
    row.ece_bins = m.at("ece").at("bins").get<int>();
    row.operating_threshold = m.at("operating_threshold");
    row.positives = m.at("counts").at("positives").get<size_t>();
    row.negatives = m.at("counts").at("negatives").get<size_t>();
    const json& subsets = m.at("subset_recalls");
    row.subset_recall = subsets.contains("flawed_reasoning_correct_answer")
                            ? subsets.at("flawed_reasoning_correct_answer")
                            : json(nullptr);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Relative AUC change of step rows against the matching response row,
// rendered like +62.3%.
void fill_deltas(std::vector<SummaryRow>& rows) {
  std::map<std::string, double> response_auc;
  for (const SummaryRow& row : rows) {
    if (row.granularity == "response")
      response_auc[row.scorer + "\x1f" + row.label_field + "\x1f" + row.config_label] = row.auc;
  }
  for (SummaryRow& row : rows) {
    if (row.granularity != "step") continue;
    auto it = response_auc.find(row.scorer + "\x1f" + row.label_field + "\x1f" + row.config_label);
    if (it == response_auc.end() || it->second == 0.0) continue;
    double pct = (row.auc - it->second) / it->second * 100.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.1f%%", pct);
    row.delta = buf;
  }
}

std::string render_summary_csv(std::vector<SummaryRow> rows) {
  fill_deltas(rows);
  std::ostringstream csv;
  csv << "scorer,granularity,label_field,config,aggregator,auc_roc,fpr_at_recall,recall_target,"
         "achieved,max_recall,ece,ece_bins,operating_threshold,positives,negatives,"
         "subset_recall_flawed_reasoning_correct_answer,auc_delta_vs_response_pct\n";
  for (const SummaryRow& row : rows) {
    csv << row.scorer << ',' << row.granularity << ',' << row.label_field << ','
        << row.config_label << ',' << row.aggregator << ',' << fmt_double(row.auc) << ','
        << fmt_double(row.fpr) << ',' << fmt_double(row.recall_target) << ','
        << (row.achieved ? "true" : "false") << ',' << fmt_double(row.max_recall) << ','
        << fmt_double(row.ece) << ',' << row.ece_bins << ','
        << (row.operating_threshold.is_number()
                ? fmt_double(row.operating_threshold.get<double>())
                : std::string())
        << ',' << row.positives << ',' << row.negatives << ','
        << (row.subset_recall.is_number() ? fmt_double(row.subset_recall.get<double>())
                                          : std::string())
        << ',' << row.delta << '\n';
  }
  return csv.str();
}

std::string render_roc_csv(const json& metrics_block) {
  std::ostringstream csv;
  csv << "threshold,fpr,tpr\n";
  for (const json& p : metrics_block.at("roc_points")) {
    csv << (p.at("threshold").is_number() ? fmt_double(p.at("threshold").get<double>()) : "inf")
        << ',' << fmt_double(p.at("fpr").get<double>()) << ','
        << fmt_double(p.at("tpr").get<double>()) << '\n';
  }
  return csv.str();
}

/* ---------------- subcommands ---------------- */

int cmd_synth(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& out) {
  json config = load_json_file(config_path, "synth config");
  apply_overrides(config, sets);
  fs::path out_dir = prepare_out_dir(out);

  fs::path traces = out_dir / "traces.jsonl";
  fs::path sidecar = out_dir / "traces.logits";
  sg_dataset* raw = nullptr;
  require_config_ok(
      sg_synth_generate(config.dump().c_str(), traces.string().c_str(),
                        sidecar.string().c_str(), &raw),
      "synth");
  DatasetPtr dataset(raw);

  write_text_file(out_dir / "config.json", config.dump(2) + "\n");
  write_manifest(out_dir, "synth", config, config.value("seed", json(0)), {});
  std::printf("generated %zu traces -> %s\n", sg_dataset_trace_count(dataset.get()),
              traces.string().c_str());
  return 0;
}

int cmd_score(json config, const std::vector<std::string>& sets,
              const std::vector<fs::path>& input_files) {
  apply_overrides(config, sets);
  if (!config.contains("traces")) die(1, "score: config needs \"traces\"");
  if (!config.contains("out_dir")) die(1, "score: config needs \"out_dir\" (or --out)");
  std::string traces = config.at("traces").get<std::string>();
  if (!fs::exists(traces)) die(1, "score: traces file does not exist: " + traces);
  std::vector<std::string> scorer_list =
      config.value("scorers", std::vector<std::string>{});
  std::vector<std::string> granularities =
      config.value("granularities", std::vector<std::string>{"step"});
  if (scorer_list.empty()) die(1, "score: select at least one scorer");
  if (granularities.empty()) die(1, "score: select at least one granularity");

  fs::path out_dir = prepare_out_dir(config.at("out_dir").get<std::string>());
  DatasetPtr dataset = open_dataset(traces, config.value("sidecar", ""));

  for (const std::string& scorer : scorer_list) {
    for (const std::string& granularity : granularities) {
      json options{{"scorer", scorer},
                   {"granularity", granularity},
                   {"aggregator", config.value("aggregator", "max_failure")},
                   {"max_error_fraction", config.value("max_error_fraction", 0.0)},
                   {"workers", config.value("workers", 0)}};
      if (config.contains("flag_threshold")) options["flag_threshold"] = config["flag_threshold"];
      if (config.contains("verbalized_scale"))
        options["verbalized_scale"] = config["verbalized_scale"];
      if (config.contains("probe_model")) options["probe_model"] = config["probe_model"];
      if (config.contains("judge")) options["judge"] = config["judge"];

      sg_scored* raw = nullptr;
      require_ok(sg_score_run(dataset.get(), options.dump().c_str(), &raw),
                 "scoring with " + scorer + " at " + granularity + " granularity");
      ScoredPtr scored(raw);
      fs::path out_file =
          out_dir / ("scored_" + sanitize(scorer) + "_" + granularity + ".jsonl");
      require_ok(sg_scored_save(scored.get(), out_file.string().c_str()),
                 "writing " + out_file.string());
      std::printf("%s: %zu interactions -> %s\n", scorer.c_str(),
                  sg_scored_count(scored.get()), out_file.string().c_str());
    }
  }

  std::vector<fs::path> inputs = input_files;
  inputs.push_back(traces);
  std::string sidecar = config.value("sidecar", "");
  if (sidecar.empty()) {
    fs::path guess = fs::path(traces).replace_extension(".logits");
    if (fs::exists(guess)) sidecar = guess.string();
  }
  if (!sidecar.empty() && fs::exists(sidecar)) inputs.push_back(sidecar);
  write_manifest(out_dir, "score", config, config.value("seed", json(nullptr)), inputs);
  return 0;
}

int cmd_evaluate(const std::string& traces, const std::vector<std::string>& scored_files,
                 const std::string& label_field, double recall_target, int ece_bins,
                 std::optional<double> threshold, const std::string& out) {
  if (!fs::exists(traces)) die(1, "evaluate: traces file does not exist: " + traces);
  if (scored_files.empty()) die(1, "evaluate: give at least one --scored file");
  fs::path out_dir = prepare_out_dir(out);
  DatasetPtr dataset = open_dataset(traces, "");

  json options{{"label_field", label_field},
               {"recall_target", recall_target},
               {"ece_bins", ece_bins}};
  if (threshold) options["threshold"] = *threshold;

  std::vector<SummaryRow> rows;
  std::vector<fs::path> inputs{traces};
  std::set<std::string> written_stems;
  for (const std::string& scored_path : scored_files) {
    if (!fs::exists(scored_path)) die(1, "evaluate: scored file does not exist: " + scored_path);
    inputs.push_back(scored_path);
    sg_scored* raw_scored = nullptr;
    require_ok(sg_scored_load(scored_path.c_str(), &raw_scored), "loading " + scored_path);
    ScoredPtr scored(raw_scored);

    sg_report* raw_report = nullptr;
    require_ok(sg_evaluate(scored.get(), dataset.get(), options.dump().c_str(), &raw_report),
               "evaluating " + scored_path);
    ReportPtr report(raw_report);

    char* report_json = nullptr;
    require_ok(sg_report_to_json(report.get(), &report_json), "rendering report");
    json doc = json::parse(report_json);
    sg_string_free(report_json);

    std::string stem = sanitize(doc.at("scorer").get<std::string>()) + "_" +
                       doc.at("granularity").get<std::string>();
    if (!written_stems.insert(stem).second)
      die(1, "evaluate: two scored inputs share scorer and granularity (" + stem + ")");
    write_text_file(out_dir / ("report_" + stem + ".json"), doc.dump(2) + "\n");
    write_text_file(out_dir / ("roc_" + stem + ".csv"),
                    render_roc_csv(doc.at("configured").at("metrics")));
    for (SummaryRow& row : rows_from_report(doc)) rows.push_back(std::move(row));
    std::printf("evaluated %s: auc=%s\n", scored_path.c_str(),
                fmt_double(doc.at("configured").at("metrics").at("auc_roc").get<double>()).c_str());
  }

  write_text_file(out_dir / "summary.csv", render_summary_csv(rows));
  write_manifest(out_dir, "evaluate", options, json(nullptr), inputs);
  return 0;
}

int cmd_prepare_train(const std::string& traces, const std::string& out) {
  if (!fs::exists(traces)) die(1, "prepare-train: traces file does not exist: " + traces);
  fs::path out_dir = prepare_out_dir(out);
  DatasetPtr dataset = open_dataset(traces, "");

  fs::path out_file = out_dir / "train.jsonl";
  size_t emitted = 0, skipped = 0;
  require_ok(
      sg_build_teacher_forced(dataset.get(), out_file.string().c_str(), &emitted, &skipped),
      "building teacher-forced examples");
  write_manifest(out_dir, "prepare-train", json{{"traces", traces}}, json(nullptr), {traces},
                 json{{"examples", emitted}, {"skipped_traces", skipped}});
  std::printf("emitted %zu examples (skipped %zu traces without gold) -> %s\n", emitted, skipped,
              out_file.string().c_str());
  return 0;
}

int cmd_train_probe(const std::string& traces, const std::string& config_path,
                    const std::vector<std::string>& sets, const std::string& out) {
  if (!fs::exists(traces)) die(1, "train-probe: traces file does not exist: " + traces);
  json config = config_path.empty() ? json::object()
                                    : load_json_file(config_path, "probe config");
  apply_overrides(config, sets);
  fs::path out_dir = prepare_out_dir(out);
  DatasetPtr dataset = open_dataset(traces, "");

  fs::path curve = out_dir / "curve.csv";
  sg_probe* raw_probe = nullptr;
  require_ok(sg_probe_train(dataset.get(), config.dump().c_str(), curve.string().c_str(),
                            &raw_probe),
             "training probe");
  ProbePtr probe(raw_probe);
  fs::path model_path = out_dir / "probe.sgpm";
  require_ok(sg_probe_save(probe.get(), model_path.string().c_str()),
             "writing " + model_path.string());

  std::vector<fs::path> inputs{traces};
  if (!config_path.empty()) inputs.push_back(config_path);
  write_manifest(out_dir, "train-probe", config, config.value("seed", json(0)), inputs);
  std::printf("probe model -> %s (curve: %s)\n", model_path.string().c_str(),
              curve.string().c_str());
  return 0;
}

int cmd_report(const std::vector<std::string>& report_files, const std::string& out) {
  if (report_files.empty()) die(1, "report: give at least one --report file");
  fs::path out_dir = prepare_out_dir(out);
  std::vector<SummaryRow> rows;
  std::vector<fs::path> inputs;
  for (const std::string& path : report_files) {
    if (!fs::exists(path)) die(1, "report: file does not exist: " + path);
    inputs.push_back(path);
    json doc = load_json_file(path, "report");
    if (!doc.contains("configured")) die(2, "report: " + path + " is not an evaluation report");
    for (SummaryRow& row : rows_from_report(doc)) rows.push_back(std::move(row));
  }
  write_text_file(out_dir / "summary.csv", render_summary_csv(rows));
  write_manifest(out_dir, "report", json{{"reports", report_files}}, json(nullptr), inputs);
  std::printf("summary of %zu report(s) -> %s\n", report_files.size(),
              (out_dir / "summary.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stepguard: failure detection for multi-step LLM interactions"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(sg_version()));

  std::vector<std::string> sets;
  app.add_option("--set", sets, "Override a config key, e.g. --set seed=7")
      ->take_all()
      ->expected(-1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic traces with planted ground truth");
  std::string synth_config, synth_out;
  synth->add_option("--config", synth_config, "Synth config JSON")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  // score
  auto* score = app.add_subcommand("score", "Score traces with selected scorers");
  std::string score_config, score_traces, score_sidecar, score_out, score_aggregator;
  std::vector<std::string> score_scorers, score_granularities;
  std::optional<double> score_threshold;
  std::optional<int> score_workers;
  score->add_option("--config", score_config, "Run config JSON");
  score->add_option("--traces", score_traces, "Trace JSONL path");
  score->add_option("--sidecar", score_sidecar, "Logits sidecar path");
  score->add_option("--scorer", score_scorers, "Scorer (repeatable)");
  score->add_option("--granularity", score_granularities, "step or response (repeatable)");
  score->add_option("--aggregator", score_aggregator, "max_failure, mean or noisy_or");
  score->add_option("--threshold", score_threshold, "Flagging threshold to stamp on outputs");
  score->add_option("--workers", score_workers, "Worker threads");
  score->add_option("--out", score_out, "Output directory");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Compute the metric suite over scored files");
  std::string eval_traces, eval_label_field = "response", eval_out;
  std::vector<std::string> eval_scored;
  double eval_recall_target = 0.9;
  int eval_ece_bins = 10;
  std::optional<double> eval_threshold;
  evaluate->add_option("--traces", eval_traces, "Trace JSONL carrying the labels")->required();
  evaluate->add_option("--scored", eval_scored, "Scored JSONL (repeatable)")->required();
  evaluate->add_option("--label-field", eval_label_field, "response or answer");
  evaluate->add_option("--recall-target", eval_recall_target, "Recall target for FPR@recall");
  evaluate->add_option("--ece-bins", eval_ece_bins, "ECE bin count");
  evaluate->add_option("--threshold", eval_threshold, "Operating threshold override");
  evaluate->add_option("--out", eval_out, "Output directory")->required();

  // prepare-train
  auto* prepare = app.add_subcommand("prepare-train", "Emit teacher-forced training examples");
  std::string prep_traces, prep_out;
  prepare->add_option("--traces", prep_traces, "Trace JSONL with gold responses")->required();
  prepare->add_option("--out", prep_out, "Output directory")->required();

  // train-probe
  auto* train = app.add_subcommand("train-probe", "Train the activations probe");
  std::string train_traces, train_config, train_out;
  train->add_option("--traces", train_traces, "Trace JSONL with hidden states and step labels")
      ->required();
  train->add_option("--config", train_config, "Probe training config JSON");
  train->add_option("--out", train_out, "Output directory")->required();

  // report
  auto* report = app.add_subcommand("report", "Merge evaluation reports into one summary");
  std::vector<std::string> report_files;
  std::string report_out;
  report->add_option("--report", report_files, "Evaluation report JSON (repeatable)")->required();
  report->add_option("--out", report_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_config, sets, synth_out);
    if (score->parsed()) {
      json config = score_config.empty() ? json::object()
                                         : load_json_file(score_config, "score config");
      std::vector<fs::path> input_files;
      if (!score_config.empty()) input_files.push_back(score_config);
      if (!score_traces.empty()) config["traces"] = score_traces;
      if (!score_sidecar.empty()) config["sidecar"] = score_sidecar;
      if (!score_scorers.empty()) config["scorers"] = score_scorers;
      if (!score_granularities.empty()) config["granularities"] = score_granularities;
      if (!score_aggregator.empty()) config["aggregator"] = score_aggregator;
      if (score_threshold) config["flag_threshold"] = *score_threshold;
      if (score_workers) config["workers"] = *score_workers;
      if (!score_out.empty()) config["out_dir"] = score_out;
      return cmd_score(std::move(config), sets, input_files);
    }
    if (evaluate->parsed())
      return cmd_evaluate(eval_traces, eval_scored, eval_label_field, eval_recall_target,
                          eval_ece_bins, eval_threshold, eval_out);
    if (prepare->parsed()) return cmd_prepare_train(prep_traces, prep_out);
    if (train->parsed()) return cmd_train_probe(train_traces, train_config, sets, train_out);
    if (report->parsed()) return cmd_report(report_files, report_out);
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return e.exit_code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
