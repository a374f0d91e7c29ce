#include "bencao/feedback/feedback.h"

#include <algorithm>
#include <cstdio>
#include <set>

#include "bencao/common/error.h"
#include "bencao/common/text.h"

namespace bencao::feedback {

namespace {

std::string numbered(const char* prefix, int width, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%0*zu", prefix, width, n);
  return buf;
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

// Store writes surface as StorageUnavailable so callers can retry.
template <typename F>
void storage_write(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) fail(ErrorCode::StorageUnavailable, e.what());
    throw;
  }
}

std::shared_ptr<Clock> or_system(std::shared_ptr<Clock> c) {
  return c ? std::move(c) : std::make_shared<SystemClock>();
}

InstructionVersion version_from_json(const json& j) {
  InstructionVersion v;
  v.version_id = j.at("version_id").get<std::string>();
  if (j.contains("parent") && !j.at("parent").is_null()) v.parent = j.at("parent").get<std::string>();
  v.scenario = scenario_from(j.at("scenario").get<std::string>());
  v.instruction_text = j.at("instruction_text").get<std::string>();
  v.changelog = j.value("changelog", "");
  v.linked_feedback = j.value("linked_feedback", std::vector<std::string>{});
  v.active = j.value("active", false);
  v.created_at = j.value("created_at", "");
  return v;
}

}  // namespace

std::string_view to_string(Polarity p) { return p == Polarity::Critical ? "Critical" : "Positive"; }
std::string_view to_string(AuthorRole r) { return r == AuthorRole::Practitioner ? "Practitioner" : "Reviewer"; }

Polarity polarity_from(std::string_view s) {
  if (s == "Critical") return Polarity::Critical;
  if (s == "Positive") return Polarity::Positive;
  fail(ErrorCode::ValidationError, "unknown polarity: " + std::string(s));
}

AuthorRole author_role_from(std::string_view s) {
  if (s == "Practitioner") return AuthorRole::Practitioner;
  if (s == "Reviewer") return AuthorRole::Reviewer;
  fail(ErrorCode::ValidationError, "unknown author role: " + std::string(s));
}

json to_json(const FeedbackRecord& r) {
  return {{"record_id", r.record_id},     {"session_id", r.session_id},
          {"turn", r.turn},               {"polarity", to_string(r.polarity)},
          {"body", r.body},               {"author_role", to_string(r.author_role)},
          {"created_at", r.created_at}};
}

FeedbackRecord feedback_from_json(const json& j) {
  FeedbackRecord r;
  r.record_id = j.at("record_id").get<std::string>();
  r.session_id = j.at("session_id").get<std::string>();
  r.turn = j.at("turn").get<int>();
  r.polarity = polarity_from(j.at("polarity").get<std::string>());
  r.body = j.at("body").get<std::string>();
  r.author_role = author_role_from(j.at("author_role").get<std::string>());
  r.created_at = j.value("created_at", "");
  return r;
}

// ---------------------------------------------------------------- feedback

FeedbackStore::FeedbackStore(std::optional<std::filesystem::path> log_path, std::shared_ptr<Clock> clock)
    : path_(std::move(log_path)), clock_(or_system(std::move(clock))) {
  if (!path_ || !std::filesystem::exists(*path_)) return;
  int line_no = 0;
  for (const auto& line : read_lines(*path_)) {
    ++line_no;
    try {
      records_.push_back(feedback_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      fail(ErrorCode::CorruptLog, path_->string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string FeedbackStore::record(const SessionLookup& sessions, const std::string& session_id, int turn,
                                  Polarity polarity, const std::string& body, AuthorRole role) {
  if (blank(body)) fail(ErrorCode::ValidationError, "feedback body is empty");
  auto length = sessions ? sessions(session_id) : std::nullopt;
  if (!length) fail(ErrorCode::UnknownSession, "unknown session " + session_id);
  if (turn < 0 || turn >= *length)
    fail(ErrorCode::ValidationError, "session " + session_id + " has no turn " + std::to_string(turn));

  std::unique_lock lock(mu_);
  FeedbackRecord r{numbered("fb", 6, records_.size() + 1), session_id, turn, polarity, body, role,
                   clock_->now_iso8601()};
  if (path_) storage_write([&] { append_lines(*path_, {to_json(r).dump()}); });
  records_.push_back(r);
  return r.record_id;
}

std::optional<FeedbackRecord> FeedbackStore::get(const std::string& record_id) const {
  std::shared_lock lock(mu_);
  for (const auto& r : records_)
    if (r.record_id == record_id) return r;
  return std::nullopt;
}

bool FeedbackStore::exists(const std::string& record_id) const { return get(record_id).has_value(); }

std::vector<FeedbackRecord> FeedbackStore::all() const {
  std::shared_lock lock(mu_);
  return records_;
}

std::size_t FeedbackStore::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

// ---------------------------------------------------------------- versions

json to_json(const InstructionVersion& v) {
  return {{"version_id", v.version_id},
          {"parent", v.parent ? json(*v.parent) : json(nullptr)},
          {"scenario", to_string(v.scenario)},
          {"instruction_text", v.instruction_text},
          {"changelog", v.changelog},
          {"linked_feedback", v.linked_feedback},
          {"active", v.active},
          {"created_at", v.created_at}};
}

InstructionStore::InstructionStore(const scenario::PolicyCatalog& defaults,
                                   std::shared_ptr<const FeedbackStore> feedback,
                                   std::optional<std::filesystem::path> dir, std::shared_ptr<Clock> clock)
    : dir_(std::move(dir)), feedback_(std::move(feedback)), clock_(or_system(std::move(clock))) {
  if (dir_) {
    std::filesystem::create_directories(*dir_);
    auto snap = *dir_ / "instructions.snapshot.json";
    if (std::filesystem::exists(snap)) {
      auto snapshot = read_json_file(snap);
      for (const auto& v : snapshot.at("versions")) apply_op({{"op", "publish"}, {"version", v}});
    }
    auto log = *dir_ / "instructions.jsonl";
    if (std::filesystem::exists(log)) {
      int line_no = 0;
      for (const auto& line : read_lines(log)) {
        ++line_no;
        try {
          apply_op(json::parse(line));
        } catch (const std::exception& e) {
          fail(ErrorCode::CorruptLog, log.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
      }
    }
  }
  for (auto s : kAllScenarios) {
    if (active_.count(s)) continue;
    InstructionVersion root;
    root.version_id = numbered("iv", 4, versions_.size() + 1);
    root.scenario = s;
    root.instruction_text = defaults.policy_for(s).instruction_text;
    root.changelog = "initial";
    root.created_at = clock_->now_iso8601();
    json pub{{"op", "publish"}, {"version", to_json(root)}};
    json act{{"op", "activate"}, {"version_id", root.version_id}};
    persist(pub);
    apply_op(pub);
    persist(act);
    apply_op(act);
  }
}

void InstructionStore::apply_op(const json& op) {
  const auto kind = op.at("op").get<std::string>();
  if (kind == "publish") {
    auto v = version_from_json(op.at("version"));
    bool active = v.active;
    v.active = false;
    versions_.push_back(v);
    if (active) apply_op({{"op", "activate"}, {"version_id", v.version_id}});
  } else if (kind == "activate") {
    auto& v = at(op.at("version_id").get<std::string>());
    auto it = active_.find(v.scenario);
    if (it != active_.end()) at(it->second).active = false;
    v.active = true;
    active_[v.scenario] = v.version_id;
  } else {
    fail(ErrorCode::CorruptLog, "unknown instruction op " + kind);
  }
}

void InstructionStore::persist(const json& op) {
  if (dir_) storage_write([&] { append_lines(*dir_ / "instructions.jsonl", {op.dump()}); });
}

InstructionVersion& InstructionStore::at(const std::string& version_id) {
  for (auto& v : versions_)
    if (v.version_id == version_id) return v;
  fail(ErrorCode::UnknownVersion, "unknown instruction version " + version_id);
}

std::string InstructionStore::publish(ScenarioId scenario, const std::string& text, const std::string& changelog,
                                      const std::vector<std::string>& linked_feedback,
                                      const std::optional<std::string>& parent) {
  if (blank(text)) fail(ErrorCode::ValidationError, "instruction text is empty");
  for (const auto& id : linked_feedback)
    if (!feedback_ || !feedback_->exists(id)) fail(ErrorCode::UnknownFeedback, "unknown feedback record " + id);

  std::unique_lock lock(mu_);
  if (parent) {
    auto it = std::find_if(versions_.begin(), versions_.end(),
                           [&](const InstructionVersion& v) { return v.version_id == *parent; });
    if (it == versions_.end()) fail(ErrorCode::UnknownParent, "unknown parent version " + *parent);
    if (it->scenario != scenario)
      fail(ErrorCode::ValidationError, "parent " + *parent + " belongs to " + std::string(to_string(it->scenario)));
  }
  InstructionVersion v;
  v.version_id = numbered("iv", 4, versions_.size() + 1);
  v.parent = parent;
  v.scenario = scenario;
  v.instruction_text = text;
  v.changelog = changelog;
  v.linked_feedback = linked_feedback;
  v.created_at = clock_->now_iso8601();
  json op{{"op", "publish"}, {"version", to_json(v)}};
  persist(op);
  apply_op(op);
  return v.version_id;
}

void InstructionStore::activate(const std::string& version_id, const std::optional<std::string>& expected_active) {
  std::unique_lock lock(mu_);
  auto& v = at(version_id);
  const auto& current = active_.at(v.scenario);
  if (expected_active && *expected_active != current)
    fail(ErrorCode::StaleActivation,
         "active version of " + std::string(to_string(v.scenario)) + " is " + current + ", not " + *expected_active);
  if (current == version_id) return;
  json op{{"op", "activate"}, {"version_id", version_id}};
  persist(op);
  apply_op(op);
}

std::optional<scenario::ActiveInstruction> InstructionStore::active_instruction(ScenarioId scenario) const {
  std::shared_lock lock(mu_);
  auto it = active_.find(scenario);
  if (it == active_.end()) return std::nullopt;
  for (const auto& v : versions_)
    if (v.version_id == it->second) return scenario::ActiveInstruction{v.version_id, v.instruction_text};
  return std::nullopt;
}

std::string InstructionStore::active_id(ScenarioId scenario) const {
  std::shared_lock lock(mu_);
  return active_.at(scenario);
}

std::optional<InstructionVersion> InstructionStore::get(const std::string& version_id) const {
  std::shared_lock lock(mu_);
  for (const auto& v : versions_)
    if (v.version_id == version_id) return v;
  return std::nullopt;
}

std::vector<InstructionVersion> InstructionStore::versions() const {
  std::shared_lock lock(mu_);
  return versions_;
}

json InstructionStore::export_graph() const {
  std::shared_lock lock(mu_);
  json nodes = json::array(), edges = json::array(), active = json::object();
  for (const auto& v : versions_) {
    nodes.push_back(to_json(v));
    if (v.parent) edges.push_back({{"from", *v.parent}, {"to", v.version_id}});
  }
  for (const auto& [s, id] : active_) active[std::string(to_string(s))] = id;
  return {{"versions", nodes}, {"edges", edges}, {"active", active}};
}

void InstructionStore::compact() {
  if (!dir_) return;
  std::unique_lock lock(mu_);
  json versions = json::array();
  for (const auto& v : versions_) versions.push_back(to_json(v));
  storage_write([&] {
    write_file_atomic(*dir_ / "instructions.snapshot.json", json{{"versions", versions}}.dump(2));
    write_file_atomic(*dir_ / "instructions.jsonl", "");
  });
}

std::optional<scenario::ActiveInstruction> PinnedInstructions::active_instruction(ScenarioId scenario) const {
  if (scenario == pinned_.scenario) return scenario::ActiveInstruction{pinned_.version_id, pinned_.instruction_text};
  return base_ ? base_->active_instruction(scenario) : std::nullopt;
}

// ---------------------------------------------------------------- replay

RecordedTranscript transcript_from_events(const std::string& id, const std::vector<consult::SessionEvent>& events) {
  RecordedTranscript t;
  t.id = id;
  for (const auto& e : events) {
    if (e.kind == consult::EventKind::SessionCreated) {
      const auto& hint = e.payload.value("scenario_hint", json(nullptr));
      if (!hint.is_null()) t.scenario_hint = scenario_from(hint.get<std::string>());
    } else if (e.kind == consult::EventKind::UserTurn) {
      consult::TurnInput in{e.payload.at("text").get<std::string>(), std::nullopt};
      const auto& img = e.payload.value("image_ref", json(nullptr));
      if (!img.is_null()) in.image_ref = img.get<std::string>();
      t.turns.push_back(std::move(in));
    }
  }
  return t;
}

json to_json(const ReplayDiff& d) {
  json turns = json::array();
  for (const auto& t : d.turns)
    turns.push_back({{"turn", t.turn},
                     {"old_reply", t.old_reply},
                     {"new_reply", t.new_reply},
                     {"old_violations", t.old_violations},
                     {"new_violations", t.new_violations},
                     {"compliance_delta", t.compliance_delta},
                     {"changed", t.changed}});
  return {{"transcript_id", d.transcript_id}, {"turns", turns}};
}

namespace {

struct ReplayedTurn {
  std::string reply;
  int violations = 0;
};

std::vector<ReplayedTurn> run_under(const RecordedTranscript& t, const InstructionVersion& version,
                                    const std::shared_ptr<gateway::Provider>& provider,
                                    const consult::EngineDeps& base,
                                    const std::shared_ptr<const scenario::InstructionSource>& fallback) {
  auto deps = base;
  deps.clock = std::make_shared<SteppingClock>();
  deps.instructions = std::make_shared<PinnedInstructions>(version, fallback);
  if (base.gateway)
    deps.gateway = std::make_shared<gateway::Gateway>(base.gateway->config(), provider, [](auto) {});
  consult::Engine engine(deps);

  auto created = engine.created_event("replay-" + t.id, t.scenario_hint);
  created.seq = 1;
  auto state = consult::apply(consult::DialogueState{}, created);
  std::vector<ReplayedTurn> out;
  for (const auto& in : t.turns) {
    auto r = engine.run_turn(state, in);
    state = std::move(r.state);
    out.push_back({r.reply.text, static_cast<int>(r.draft_report.violations.size())});
  }
  return out;
}

}  // namespace

std::vector<ReplayDiff> replay_regression(const std::vector<RecordedTranscript>& transcripts,
                                          const InstructionStore& store, const std::string& old_version,
                                          const std::string& new_version,
                                          std::shared_ptr<gateway::Provider> provider,
                                          const consult::EngineDeps& base) {
  auto old_v = store.get(old_version);
  if (!old_v) fail(ErrorCode::UnknownVersion, "unknown instruction version " + old_version);
  auto new_v = store.get(new_version);
  if (!new_v) fail(ErrorCode::UnknownVersion, "unknown instruction version " + new_version);
  if (old_v->scenario != new_v->scenario)
    fail(ErrorCode::ValidationError, old_version + " and " + new_version + " belong to different scenarios");

  // Other scenarios see the store's currently active versions, read through a
  // non-owning pointer so the store itself is never touched.
  std::shared_ptr<const scenario::InstructionSource> fallback(&store, [](const scenario::InstructionSource*) {});

  std::vector<ReplayDiff> diffs;
  for (const auto& t : transcripts) {
    auto before = run_under(t, *old_v, provider, base, fallback);
    auto after = run_under(t, *new_v, provider, base, fallback);
    ReplayDiff d{t.id, {}};
    for (std::size_t i = 0; i < before.size(); ++i) {
      TurnDiff td;
      td.turn = static_cast<int>(i);
      td.old_reply = before[i].reply;
      td.new_reply = after[i].reply;
      td.old_violations = before[i].violations;
      td.new_violations = after[i].violations;
      td.compliance_delta = td.old_violations - td.new_violations;
      td.changed = td.old_reply != td.new_reply;
      d.turns.push_back(std::move(td));
    }
    diffs.push_back(std::move(d));
  }
  return diffs;
}

}  // namespace bencao::feedback
