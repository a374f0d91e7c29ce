#include "bencao/eval/eval.h"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "bencao/common/error.h"
#include "bencao/common/text.h"

namespace bencao::eval {

namespace {

constexpr std::array<std::string_view, 3> kTaskNames = {"SingleChoice", "HerbRecognition",
                                                        "ConstitutionClassification"};

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t at = s.find(from); at != std::string::npos; at = s.find(from, at + to.size()))
    s.replace(at, from.size(), to);
}

bool ascii_alnum(unsigned char c) { return std::isalnum(c) != 0; }

}  // namespace

std::string_view to_string(EvalTask t) { return kTaskNames[static_cast<int>(t)]; }

std::optional<EvalTask> parse_task(std::string_view s) {
  for (auto t : kAllTasks)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

std::vector<std::string> default_categories() {
  return {"Diagnostics", "Pharmacognosy", "Surgery", "Herbal Formulas", "Internal Medicine", "Discipline 6",
          "Discipline 7"};
}

json to_json(const EvalItem& item) {
  json j{{"item_id", item.item_id}, {"task", to_string(item.task)}, {"stem", item.stem},
         {"options", item.options}, {"gold", item.gold}};
  if (!item.category.empty()) j["category"] = item.category;
  if (item.image_ref) j["image_ref"] = *item.image_ref;
  return j;
}

// ---------------------------------------------------------------- loading

std::vector<EvalItem> parse_benchmark(const std::string& content, const std::string& source_name,
                                      const std::vector<std::string>& categories) {
  std::vector<EvalItem> items;
  std::set<std::string> seen;
  std::istringstream in(content);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto where = source_name + ":" + std::to_string(line_no) + ": ";
    auto bad = [&](const std::string& msg) { fail(ErrorCode::SchemaError, where + msg); };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      bad(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) bad("expected an object");
    auto str = [&](const char* key, bool required) -> std::string {
      if (!j.contains(key)) {
        if (required) bad(std::string("missing field '") + key + "'");
        return {};
      }
      if (!j[key].is_string()) bad(std::string("field '") + key + "' must be a string");
      return j[key].get<std::string>();
    };

    EvalItem item;
    item.item_id = str("item_id", true);
    if (item.item_id.empty()) bad("item_id is empty");
    auto task = parse_task(str("task", true));
    if (!task) bad("unknown task '" + j["task"].get<std::string>() + "'");
    item.task = *task;
    item.category = str("category", false);
    item.stem = str("stem", true);
    if (text::trim(item.stem).empty()) bad("stem is empty");
    if (!j.contains("options") || !j["options"].is_array()) bad("missing field 'options'");
    for (const auto& o : j["options"]) {
      if (!o.is_string() || text::trim(o.get<std::string>()).empty()) bad("options must be non-empty strings");
      item.options.push_back(o.get<std::string>());
    }
    if (item.options.size() < 2) bad("at least two options are required");
    if (!j.contains("gold") || !j["gold"].is_number_integer()) bad("missing integer field 'gold'");
    auto gold = j["gold"].get<std::int64_t>();
    if (gold < 0 || gold >= static_cast<std::int64_t>(item.options.size()))
      bad("gold index " + std::to_string(gold) + " out of range for " + std::to_string(item.options.size()) +
          " options");
    item.gold = static_cast<int>(gold);
    if (j.contains("image_ref") && !j["image_ref"].is_null()) item.image_ref = str("image_ref", true);

    if (item.task == EvalTask::SingleChoice) {
      if (item.category.empty()) bad("SingleChoice items need a category");
      if (!categories.empty() && std::find(categories.begin(), categories.end(), item.category) == categories.end())
        bad("unknown category '" + item.category + "'");
    }
    if (!seen.insert(item.item_id).second) bad("duplicate item_id '" + item.item_id + "'");
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<EvalItem> load_benchmark(const std::filesystem::path& path, const std::vector<std::string>& categories) {
  return parse_benchmark(read_file(path), path.string(), categories);
}

// ---------------------------------------------------------------- extraction

std::optional<int> extract_answer(const std::string& reply, const std::vector<std::string>& options) {
  const int n = static_cast<int>(std::min<std::size_t>(options.size(), 5));
  const auto* s = reinterpret_cast<const unsigned char*>(reply.data());
  const std::size_t len = reply.size();
  for (std::size_t i = 0; i < len; ++i) {
    int letter = -1;
    std::size_t width = 1;
    if (s[i] >= 'A' && s[i] <= 'E') {
      letter = s[i] - 'A';
    } else if (i + 2 < len && s[i] == 0xEF && s[i + 1] == 0xBC && s[i + 2] >= 0xA1 && s[i + 2] <= 0xA5) {
      letter = s[i + 2] - 0xA1;  // fullwidth A-E
      width = 3;
    }
    if (letter < 0 || letter >= n) continue;
    bool left_ok = i == 0 || !ascii_alnum(s[i - 1]);
    bool right_ok = i + width >= len || !ascii_alnum(s[i + width]);
    if (left_ok && right_ok) return letter;
  }
  std::optional<int> found;
  for (int k = 0; k < static_cast<int>(options.size()); ++k) {
    if (reply.find(options[k]) == std::string::npos) continue;
    if (found) return std::nullopt;  // ambiguous
    found = k;
  }
  return found;
}

// ---------------------------------------------------------------- prompting

PromptTemplate PromptTemplate::from_json(const json& j) {
  PromptTemplate t;
  t.version = j.at("version").get<std::string>();
  t.system = j.at("system").get<std::string>();
  t.user = j.at("user").get<std::string>();
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

PromptTemplate PromptTemplate::builtin() {
  return {"eval-prompt-1",
          "You are answering a single-choice examination question on Traditional Chinese Medicine.",
          "{image}{stem}\n{options}\nReply with the letter of the one correct option."};
}

gateway::PromptBundle PromptTemplate::render(const EvalItem& item) const {
  std::string opts;
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    if (i) opts += "\n";
    opts += std::string(1, static_cast<char>('A' + i)) + ". " + item.options[i];
  }
  auto user_text = user;
  replace_all(user_text, "{image}", item.image_ref ? "Image: " + *item.image_ref + "\n" : "");
  replace_all(user_text, "{stem}", item.stem);
  replace_all(user_text, "{options}", opts);
  gateway::PromptBundle b;
  b.system_sections.push_back({"eval_instruction", system});
  b.user_turn = user_text;
  return b;
}

// ---------------------------------------------------------------- runs

namespace {

json run_meta(const EvalRun& r) {
  return {{"run_id", r.run_id},
          {"model_label", r.model_label},
          {"template_version", r.template_version},
          {"item_ids", r.item_ids},
          {"started_at", r.started_at},
          {"finished_at", r.finished_at ? json(*r.finished_at) : json(nullptr)}};
}

json prediction_json(const std::string& id, const Prediction& p) {
  return {{"item_id", id}, {"choice", p.choice ? json(*p.choice) : json(nullptr)}, {"raw", p.raw}};
}

std::string slug(const std::string& s) {
  std::string out;
  for (unsigned char c : s) out += ascii_alnum(c) ? static_cast<char>(std::tolower(c)) : '-';
  return out;
}

}  // namespace

EvalRun load_run(const std::filesystem::path& dir) {
  auto meta_path = dir / "run.json";
  if (!std::filesystem::exists(meta_path)) fail(ErrorCode::NotFound, "no run at " + dir.string());
  auto meta = read_json_file(meta_path);
  EvalRun r;
  r.run_id = meta.at("run_id").get<std::string>();
  r.model_label = meta.at("model_label").get<std::string>();
  r.template_version = meta.value("template_version", "");
  r.item_ids = meta.at("item_ids").get<std::vector<std::string>>();
  r.started_at = meta.value("started_at", "");
  if (!meta.at("finished_at").is_null()) r.finished_at = meta.at("finished_at").get<std::string>();
  auto preds = dir / "predictions.jsonl";
  if (std::filesystem::exists(preds)) {
    for (const auto& line : read_lines(preds)) {
      auto j = json::parse(line);
      Prediction p;
      if (!j.at("choice").is_null()) p.choice = j.at("choice").get<int>();
      p.raw = j.at("raw").get<std::string>();
      r.predictions[j.at("item_id").get<std::string>()] = std::move(p);
    }
  }
  return r;
}

EvalRun run_eval(const std::vector<EvalItem>& items, const gateway::Gateway& gateway, const RunOptions& options) {
  if (options.parallel < 1) fail(ErrorCode::InvalidArgument, "parallel must be at least 1");
  auto clock = options.clock ? options.clock : std::make_shared<SystemClock>();

  std::vector<const EvalItem*> order;
  for (const auto& it : items) order.push_back(&it);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->item_id < b->item_id; });
  std::vector<std::string> ids;
  for (auto* it : order) ids.push_back(it->item_id);

  EvalRun run;
  std::filesystem::path dir;
  if (options.resume) {
    dir = options.out_dir / *options.resume;
    run = load_run(dir);
    if (run.item_ids != ids) fail(ErrorCode::ItemMismatch, "run " + run.run_id + " covers a different item set");
  } else {
    run.started_at = clock->now_iso8601();
    run.run_id = options.run_id.value_or("run-" + slug(run.started_at) + "-" + slug(options.model_label));
    run.model_label = options.model_label;
    run.template_version = options.prompt.version;
    run.item_ids = ids;
    dir = options.out_dir / run.run_id;
    try {
      std::filesystem::create_directories(dir);
    } catch (const std::filesystem::filesystem_error& e) {
      fail(ErrorCode::IoError, e.what());
    }
    write_file_atomic(dir / "run.json", run_meta(run).dump(2));
    write_file_atomic(dir / "predictions.jsonl", "");
  }

  std::vector<const EvalItem*> todo;
  for (auto* it : order)
    if (!run.predictions.count(it->item_id)) todo.push_back(it);

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;
  auto worker = [&] {
    while (!stop) {
      auto k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const auto& item = *todo[k];
      try {
        auto response = gateway.complete(options.prompt.render(item));
        Prediction p{extract_answer(response.text, item.options), response.text};
        std::lock_guard lock(mu);
        append_lines(dir / "predictions.jsonl", {prediction_json(item.item_id, p).dump()});
        run.predictions[item.item_id] = std::move(p);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first_error) first_error = std::current_exception();
        stop = true;
        return;
      }
    }
  };
  int threads = std::min<int>(options.parallel, static_cast<int>(std::max<std::size_t>(todo.size(), 1)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  run.finished_at = clock->now_iso8601();
  write_file_atomic(dir / "run.json", run_meta(run).dump(2));
  return run;
}

// ---------------------------------------------------------------- scoring

EvalReport score(const EvalRun& run, const std::vector<EvalItem>& items) {
  std::vector<std::string> ids;
  for (const auto& it : items) ids.push_back(it.item_id);
  std::sort(ids.begin(), ids.end());
  if (ids != run.item_ids) fail(ErrorCode::ItemMismatch, "run " + run.run_id + " covers a different item set");
  if (!run.complete()) fail(ErrorCode::ItemMismatch, "run " + run.run_id + " is incomplete");

  EvalReport r;
  r.model_label = run.model_label;
  for (const auto& item : items) {
    const auto& p = run.predictions.at(item.item_id);
    bool ok = p.choice && *p.choice == item.gold;
    if (!p.choice) ++r.unparseable;
    auto bump = [ok](Tally& t) {
      ++t.total;
      if (ok) ++t.correct;
    };
    bump(r.per_task[item.task]);
    if (item.task == EvalTask::SingleChoice) bump(r.per_category[item.category]);
    bump(r.overall);
  }
  return r;
}

std::string percent(Rational r) {
  // round(num * 10000 / den), half up, in integer arithmetic
  __int128 scaled = static_cast<__int128>(r.num()) * 10000 * 2 + r.den();
  auto hundredths = static_cast<std::int64_t>(scaled / (2 * static_cast<__int128>(r.den())));
  auto frac = hundredths % 100;
  return std::to_string(hundredths / 100) + "." + (frac < 10 ? "0" : "") + std::to_string(frac);
}

namespace {

json tally_json(const Tally& t) {
  return {{"correct", t.correct},
          {"total", t.total},
          {"accuracy", t.accuracy().to_string()},
          {"percent", percent(t.accuracy())}};
}

Tally tally_from(const json& j) { return {j.at("correct").get<std::int64_t>(), j.at("total").get<std::int64_t>()}; }

}  // namespace

json to_json(const EvalReport& r) {
  json cats = json::object(), tasks = json::object();
  for (const auto& [c, t] : r.per_category) cats[c] = tally_json(t);
  for (const auto& [k, t] : r.per_task) tasks[std::string(to_string(k))] = tally_json(t);
  return {{"model_label", r.model_label},
          {"per_category", cats},
          {"per_task", tasks},
          {"overall", tally_json(r.overall)},
          {"unparseable", r.unparseable}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.model_label = j.value("model_label", "");
  for (const auto& [c, t] : j.at("per_category").items()) r.per_category[c] = tally_from(t);
  for (const auto& [k, t] : j.at("per_task").items()) {
    auto task = parse_task(k);
    if (!task) fail(ErrorCode::SchemaError, "unknown task " + k);
    r.per_task[*task] = tally_from(t);
  }
  r.overall = tally_from(j.at("overall"));
  r.unparseable = j.at("unparseable").get<std::int64_t>();
  return r;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

std::string report_csv(const EvalReport& r) {
  std::string out = "task,category,correct,total,accuracy\n";
  auto row = [&](EvalTask task, const std::string& category, const Tally& t) {
    out += std::string(to_string(task)) + "," + csv_field(category) + "," + std::to_string(t.correct) + "," +
           std::to_string(t.total) + "," + percent(t.accuracy()) + "\n";
  };
  for (const auto& [c, t] : r.per_category) row(EvalTask::SingleChoice, c, t);
  for (const auto& [k, t] : r.per_task)
    if (k != EvalTask::SingleChoice) row(k, "", t);
  return out;
}

// ---------------------------------------------------------------- comparison

Comparison Comparison::from_json(const json& j) {
  Comparison c;
  for (const auto& t : j.at("tasks")) {
    auto task = parse_task(t.get<std::string>());
    if (!task) fail(ErrorCode::SchemaError, "unknown task " + t.get<std::string>());
    c.tasks.push_back(*task);
  }
  for (const auto& m : j.at("models")) {
    ComparisonRow row{m.at("label").get<std::string>(), {}};
    for (const auto& [k, v] : m.at("accuracy").items()) {
      auto task = parse_task(k);
      if (!task) fail(ErrorCode::SchemaError, "unknown task " + k);
      row.task_percent[*task] = v.get<std::string>();
    }
    c.rows.push_back(std::move(row));
  }
  return c;
}

Comparison Comparison::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

void Comparison::add(const EvalReport& report) {
  ComparisonRow row{report.model_label, {}};
  for (auto t : tasks)
    if (auto it = report.per_task.find(t); it != report.per_task.end())
      row.task_percent[t] = percent(it->second.accuracy());
  rows.push_back(std::move(row));
}

std::string Comparison::render_table() const {
  std::string out = "| Model |";
  std::string rule = "|---|";
  for (auto t : tasks) {
    out += " " + std::string(to_string(t)) + " (%) |";
    rule += "---:|";
  }
  out += "\n" + rule + "\n";
  for (const auto& r : rows) {
    out += "| " + r.model_label + " |";
    for (auto t : tasks) {
      auto it = r.task_percent.find(t);
      out += " " + (it == r.task_percent.end() ? std::string("n/a") : it->second) + " |";
    }
    out += "\n";
  }
  return out;
}

json category_plot(const std::vector<EvalReport>& reports) {
  std::set<std::string> cats;
  for (const auto& r : reports)
    for (const auto& [c, _] : r.per_category) cats.insert(c);
  json series = json::array();
  for (const auto& r : reports) {
    json y = json::array();
    for (const auto& c : cats) {
      auto it = r.per_category.find(c);
      y.push_back(it == r.per_category.end() ? json(nullptr) : json(it->second.accuracy().to_double()));
    }
    series.push_back({{"label", r.model_label}, {"y", y}});
  }
  return {{"kind", "category_accuracy"}, {"x", std::vector<std::string>(cats.begin(), cats.end())}, {"series", series}};
}

json task_scatter(const Comparison& c, EvalTask x, EvalTask y) {
  json points = json::array();
  for (const auto& r : c.rows) {
    auto ix = r.task_percent.find(x), iy = r.task_percent.find(y);
    if (ix == r.task_percent.end() || iy == r.task_percent.end()) continue;
    points.push_back({{"label", r.model_label}, {"x", ix->second}, {"y", iy->second}});
  }
  return {{"kind", "task_scatter"}, {"x_task", to_string(x)}, {"y_task", to_string(y)}, {"points", points}};
}

std::optional<ReportFormat> parse_format(std::string_view s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  if (s == "plot" || s == "plot-data") return ReportFormat::PlotData;
  return std::nullopt;
}

void emit_report(const EvalReport& r, ReportFormat format, const std::filesystem::path& path) {
  std::string content;
  switch (format) {
    case ReportFormat::Csv: content = report_csv(r); break;
    case ReportFormat::Json: content = to_json(r).dump(2) + "\n"; break;
    case ReportFormat::PlotData: {
      Comparison c{{EvalTask::HerbRecognition, EvalTask::ConstitutionClassification}, {}};
      c.add(r);
      content = json{{"categories", category_plot({r})},
                     {"tasks", task_scatter(c, EvalTask::HerbRecognition, EvalTask::ConstitutionClassification)}}
                    .dump(2) +
                "\n";
      break;
    }
  }
  write_file_atomic(path, content);
}

}  // namespace bencao::eval
