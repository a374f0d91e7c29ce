#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bencao/common/io.h"
#include "bencao/common/rational.h"
#include "bencao/gateway/gateway.h"

namespace bencao::eval {

enum class EvalTask { SingleChoice, HerbRecognition, ConstitutionClassification };
inline constexpr std::array<EvalTask, 3> kAllTasks = {EvalTask::SingleChoice, EvalTask::HerbRecognition,
                                                      EvalTask::ConstitutionClassification};

std::string_view to_string(EvalTask t);
std::optional<EvalTask> parse_task(std::string_view s);

// Five named disciplines plus two configurable slots.
std::vector<std::string> default_categories();

struct EvalItem {
  std::string item_id;
  EvalTask task = EvalTask::SingleChoice;
  std::string category;  // required for SingleChoice
  std::string stem;
  std::vector<std::string> options;
  int gold = 0;
  std::optional<std::string> image_ref;
  friend bool operator==(const EvalItem&, const EvalItem&) = default;
};

json to_json(const EvalItem& item);

// Parses JSON lines. Every problem is reported as SchemaError naming the
// line. When `categories` is non-empty, SingleChoice categories must be in it.
std::vector<EvalItem> parse_benchmark(const std::string& content, const std::string& source_name,
                                      const std::vector<std::string>& categories = {});
std::vector<EvalItem> load_benchmark(const std::filesystem::path& path,
                                     const std::vector<std::string>& categories = {});

// Option letter token first, then unique option-text containment; nullopt
// means Unparseable.
std::optional<int> extract_answer(const std::string& reply, const std::vector<std::string>& options);

struct PromptTemplate {
  std::string version;
  std::string system;
  std::string user;  // {stem}, {options} and {image} are substituted

  static PromptTemplate from_json(const json& j);
  static PromptTemplate load(const std::filesystem::path& path);
  static PromptTemplate builtin();

  gateway::PromptBundle render(const EvalItem& item) const;
};

struct Prediction {
  std::optional<int> choice;  // nullopt: Unparseable
  std::string raw;
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct EvalRun {
  std::string run_id;
  std::string model_label;
  std::string template_version;
  std::vector<std::string> item_ids;  // sorted
  std::map<std::string, Prediction> predictions;
  std::string started_at;
  std::optional<std::string> finished_at;

  bool complete() const { return predictions.size() == item_ids.size(); }
};

// On-disk layout: <dir>/run.json plus <dir>/predictions.jsonl.
EvalRun load_run(const std::filesystem::path& dir);

struct RunOptions {
  std::string model_label;
  PromptTemplate prompt = PromptTemplate::builtin();
  std::filesystem::path out_dir;  // the run lives in out_dir/<run_id>
  std::optional<std::string> run_id;
  std::optional<std::string> resume;  // run id to continue
  int parallel = 1;
  std::shared_ptr<Clock> clock;
};

// One completion per item, dispatched in item-id order. GatewayUnavailable
// stops dispatch, persists what finished and propagates; resuming the run
// executes only the missing items.
EvalRun run_eval(const std::vector<EvalItem>& items, const gateway::Gateway& gateway, const RunOptions& options);

struct Tally {
  std::int64_t correct = 0;
  std::int64_t total = 0;
  Rational accuracy() const { return total ? Rational(correct, total) : Rational(0); }
  friend bool operator==(const Tally&, const Tally&) = default;
};

struct EvalReport {
  std::string model_label;
  std::map<std::string, Tally> per_category;  // SingleChoice items only; empty categories omitted
  std::map<EvalTask, Tally> per_task;         // tasks without items omitted
  Tally overall;
  std::int64_t unparseable = 0;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Throws ItemMismatch when the run and items disagree or the run is partial.
EvalReport score(const EvalRun& run, const std::vector<EvalItem>& items);

// Percentage with two decimals, rounded half up, computed exactly.
std::string percent(Rational r);

json to_json(const EvalReport& r);
EvalReport report_from_json(const json& j);
std::string report_csv(const EvalReport& r);

// Published or previously measured task accuracies, kept as strings so they
// render exactly as recorded.
struct ComparisonRow {
  std::string model_label;
  std::map<EvalTask, std::string> task_percent;
};

struct Comparison {
  std::vector<EvalTask> tasks;
  std::vector<ComparisonRow> rows;

  static Comparison from_json(const json& j);
  static Comparison load(const std::filesystem::path& path);
  void add(const EvalReport& report);
  // Markdown table: one row per model, one column per task, "n/a" when absent.
  std::string render_table() const;
};

// Category-vs-accuracy series per model.
json category_plot(const std::vector<EvalReport>& reports);
// One (x, y) point per model that has both tasks.
json task_scatter(const Comparison& c, EvalTask x, EvalTask y);

enum class ReportFormat { Csv, Json, PlotData };
std::optional<ReportFormat> parse_format(std::string_view s);
// Throws IoError.
void emit_report(const EvalReport& r, ReportFormat format, const std::filesystem::path& path);

}  // namespace bencao::eval
