#include "bencao/service/service.h"

#include <spdlog/spdlog.h>

#include <random>

#include "bencao/common/error.h"
#include "bencao/common/text.h"
#include "bencao/corpus/knowledge_base.h"

namespace bencao::service {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::chrono::milliseconds ms(const json& j, const char* key, std::chrono::milliseconds fallback) {
  return j.contains(key) ? std::chrono::milliseconds(j.at(key).get<std::int64_t>()) : fallback;
}

tools::ToolEndpointConfig endpoint_config(const json& j) {
  tools::ToolEndpointConfig c;
  c.endpoint = j.at("endpoint").get<std::string>();
  c.timeout = ms(j, "timeout_ms", c.timeout);
  c.max_retries = j.value("max_retries", c.max_retries);
  return c;
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const json& j, const fs::path& base) {
  ServiceConfig c;
  c.data_dir = resolve(base, j.value("data_dir", "data"));
  c.storage_dir = resolve(base, j.value("storage_dir", "var"));
  if (j.contains("server")) {
    c.host = j["server"].value("host", c.host);
    c.port = j["server"].value("port", c.port);
  }
  if (j.contains("provider") && !j["provider"].is_null()) {
    const auto& p = j["provider"];
    if (p.contains("scripted")) {
      c.scripted_provider = resolve(base, p["scripted"].get<std::string>());
    } else {
      gateway::ProviderConfig pc;
      pc.endpoint = p.at("endpoint").get<std::string>();
      pc.model = p.value("model", pc.model);
      pc.timeout = ms(p, "timeout_ms", pc.timeout);
      pc.max_retries = p.value("max_retries", pc.max_retries);
      pc.api_key_env = p.value("api_key_env", pc.api_key_env);
      pc.initial_backoff = ms(p, "initial_backoff_ms", pc.initial_backoff);
      pc.validate();
      c.provider = pc;
    }
  }
  if (j.contains("tools")) {
    const auto& t = j["tools"];
    if (t.contains("tongue")) {
      tools::TongueClientConfig tc;
      static_cast<tools::ToolEndpointConfig&>(tc) = endpoint_config(t["tongue"]);
      tc.max_image_bytes = t["tongue"].value("max_image_bytes", tc.max_image_bytes);
      c.tongue = tc;
    }
    if (t.contains("knowledge_db")) c.knowledge_db = endpoint_config(t["knowledge_db"]);
  }
  if (j.contains("corpus") && j["corpus"].contains("knowledge_dir"))
    c.knowledge_dir = resolve(base, j["corpus"]["knowledge_dir"].get<std::string>());
  if (j.contains("consult")) {
    const auto& k = j["consult"];
    if (k.contains("coverage_threshold"))
      c.consult.coverage_threshold = Rational::from_decimal(k["coverage_threshold"].get<double>());
    if (k.contains("gain_threshold"))
      c.consult.gain_threshold = Rational::from_decimal(k["gain_threshold"].get<double>());
    if (k.contains("question_budget") && !k["question_budget"].is_null())
      c.consult.question_budget = k["question_budget"].get<int>();
    c.consult.stickiness = k.value("stickiness", c.consult.stickiness);
    c.consult.retrieval_k = k.value("retrieval_k", c.consult.retrieval_k);
    c.consult.context_budget_chars = k.value("context_budget_chars", c.consult.context_budget_chars);
    c.consult.max_tool_rounds = k.value("max_tool_rounds", c.consult.max_tool_rounds);
  }
  c.consult.validate();
  c.disclaimers = j.value("disclaimers", json::object());
  if (j.contains("uploads")) c.max_image_bytes = j["uploads"].value("max_image_bytes", c.max_image_bytes);
  if (j.contains("storage")) c.snapshot_every = j["storage"].value("snapshot_every", c.snapshot_every);
  if (j.contains("eval")) c.eval_parallel = j["eval"].value("parallel", c.eval_parallel);
  return c;
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const json::exception& e) {
    fail(ErrorCode::ValidationError, path.string() + ": " + e.what());
  }
  try {
    return from_json(j, fs::absolute(path).parent_path());
  } catch (const json::exception& e) {
    fail(ErrorCode::ValidationError, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- wire formats

json to_json(const QuestionView& q) {
  json targets = json::array();
  for (auto e : q.targets) targets.push_back(to_string(e));
  return {{"id", q.id}, {"text", q.text}, {"targets", targets}};
}

namespace {

json opt_str(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

template <typename E>
json opt_enum(const std::optional<E>& e) {
  return e ? json(std::string(to_string(*e))) : json(nullptr);
}

json coverage_json(Rational r) {
  return {{"fraction", r.to_string()}, {"value", r.to_double()}};
}

bool chinese_session(const consult::DialogueState& s) {
  for (auto it = s.transcript.rbegin(); it != s.transcript.rend(); ++it)
    if (it->role == "user") return text::mostly_cjk(it->text);
  return false;
}

}  // namespace

json to_json(const SessionSummary& s, bool include_transcript) {
  const auto& st = s.state;
  json pending = json::array();
  for (const auto& q : s.pending_questions) pending.push_back(to_json(q));
  json history = json::array();
  for (const auto& c : st.coverage_history) history.push_back(coverage_json(c));
  json safeguard = nullptr;
  if (st.safeguard) safeguard = {{"kind", to_string(st.safeguard->kind)}, {"evidence", st.safeguard->evidence}};
  json j{{"session_id", st.session_id},
         {"created_at", st.created_at},
         {"scenario", opt_enum(st.scenario)},
         {"scenario_hint", opt_enum(st.scenario_hint)},
         {"stage", to_string(st.stage)},
         {"mode", to_string(st.mode)},
         {"coverage", coverage_json(st.coverage())},
         {"known_elements", st.ledger.known_count()},
         {"coverage_history", history},
         {"inquiry_rounds", st.inquiry_rounds},
         {"termination", opt_enum(st.termination)},
         {"safeguard", safeguard},
         {"pending_questions", pending},
         {"disclaimer", s.disclaimer ? scenario::localized_json(*s.disclaimer) : json(nullptr)},
         {"user_turns", st.user_turns()},
         {"event_offset", s.offset}};
  if (include_transcript) {
    json t = json::array();
    for (std::size_t i = 0; i < st.transcript.size(); ++i) {
      const auto& turn = st.transcript[i];
      t.push_back({{"index", i}, {"role", turn.role}, {"text", turn.text}, {"image_ref", opt_str(turn.image_ref)}});
    }
    j["transcript"] = t;
    j["ledger"] = consult::to_json(st.ledger);
  }
  return j;
}

json to_json(const MessageResult& r) {
  json questions = json::array();
  for (const auto& q : r.questions) questions.push_back(to_json(q));
  return {{"reply",
           {{"text", r.reply.text},
            {"applied_fixes", r.reply.applied_fixes},
            {"regeneration_count", r.reply.regeneration_count}}},
          {"questions", questions},
          {"routing", scenario::to_json(r.routing)},
          {"state", to_json(r.summary, false)}};
}

// ---------------------------------------------------------------- service

namespace {

std::function<std::string()> random_ids() {
  auto rng = std::make_shared<std::mt19937_64>(std::random_device{}());
  auto mu = std::make_shared<std::mutex>();
  return [rng, mu] {
    std::lock_guard lock(*mu);
    char buf[24];
    std::snprintf(buf, sizeof buf, "s-%012llx", static_cast<unsigned long long>((*rng)() & 0xffffffffffffULL));
    return std::string(buf);
  };
}

bool plain_name(const std::string& s) {
  return !s.empty() && s.find('/') == std::string::npos && s.find('\\') == std::string::npos &&
         s.find("..") == std::string::npos;
}

std::string extension_of(tools::ImageFormat f) {
  switch (f) {
    case tools::ImageFormat::Jpeg: return "jpg";
    case tools::ImageFormat::Png: return "png";
    case tools::ImageFormat::Gif: return "gif";
    case tools::ImageFormat::Webp: return "webp";
    case tools::ImageFormat::Bmp: return "bmp";
  }
  return "bin";
}

}  // namespace

std::shared_ptr<const gateway::Gateway> make_gateway(const ServiceConfig& config,
                                                     std::shared_ptr<gateway::Provider> provider, std::string* mode) {
  std::string m = provider ? "injected" : "offline";
  if (!provider && config.scripted_provider) {
    provider = gateway::ScriptedProvider::load(config.scripted_provider->string());
    m = "scripted";
  }
  if (!provider && config.provider) {
    provider = std::make_shared<gateway::HttpProvider>(*config.provider, std::make_shared<net::HttplibTransport>());
    m = "live";
  }
  if (mode) *mode = m;
  if (!provider) return nullptr;
  auto pc = config.provider.value_or(gateway::ProviderConfig{});
  if (pc.endpoint.empty()) pc.endpoint = "http://scripted.invalid/v1/chat/completions";
  return std::make_shared<gateway::Gateway>(pc, provider);
}

Service::Service(ServiceConfig config, ServiceOverrides o) : config_(std::move(config)) {
  clock_ = o.clock ? o.clock : std::make_shared<SystemClock>();
  resources_ = o.resources ? o.resources : consult::EngineResources::load(config_.data_dir, config_.disclaimers);
  session_ids_ = o.session_ids ? o.session_ids : random_ids();

  gateway_ = make_gateway(config_, o.provider, &gateway_mode_);

  store_ = std::make_shared<SessionStore>(config_.storage_dir, config_.snapshot_every);
  feedback_ = std::make_shared<feedback::FeedbackStore>(config_.storage_dir / "feedback.jsonl", clock_);
  instructions_ = std::make_shared<feedback::InstructionStore>(resources_->policies, feedback_,
                                                               config_.storage_dir / "instructions", clock_);

  std::shared_ptr<const corpus::KnowledgeBase> knowledge;
  if (config_.knowledge_dir) knowledge = corpus::load_knowledge_base(*config_.knowledge_dir);

  auto transport = o.tool_transport ? o.tool_transport : std::make_shared<net::HttplibTransport>();
  tools::ToolSuite suite;
  if (config_.tongue)
    suite.tongue = std::make_shared<tools::TongueClient>(*config_.tongue, resources_->tongue_labels, transport);
  if (config_.knowledge_db) suite.kdb = std::make_shared<tools::KnowledgeDbClient>(*config_.knowledge_db, transport);
  std::function<std::vector<tools::KnowledgeEntry>(const std::string&)> local;
  if (knowledge) {
    local = [knowledge](const std::string& q) {
      return tools::local_entries(knowledge->index.retrieve(q, 5),
                                  [&](const std::string& id) { return knowledge->title_of(id); });
    };
  }
  auto store = store_;
  auto registry = std::make_shared<tools::ToolRegistry>(tools::make_registry(
      (config_.data_dir / "tools" / "schemas").string(), suite,
      [store](const std::string& ref) { return store->load_image(ref); }, local));

  consult::EngineDeps deps;
  deps.resources = resources_;
  deps.gateway = gateway_;
  deps.knowledge = knowledge;
  deps.tools = (suite.tongue || suite.kdb) ? registry : nullptr;
  deps.instructions = instructions_;
  deps.clock = clock_;
  deps.finding_source = o.finding_source;
  deps.config = config_.consult;
  deps.llm_routing = o.llm_routing;
  engine_ = std::make_unique<consult::Engine>(std::move(deps));
}

Service::~Service() {
  for (auto& t : eval_threads_)
    if (t.joinable()) t.join();
}

SessionSummary Service::summarize(const SessionRecord& r) const {
  SessionSummary s{r.state, r.offset, {}, std::nullopt};
  bool zh = chinese_session(r.state);
  for (const auto& id : r.state.pending_questions) {
    if (const auto* q = resources_->pool.find(id)) s.pending_questions.push_back({q->id, q->text.pick(zh), q->targets});
  }
  auto scenario = r.state.scenario ? r.state.scenario : r.state.scenario_hint;
  if (scenario) {
    auto policy = engine_->policy_for(*scenario);
    safety::SafetyContext ctx{r.state.conservative(), r.state.safeguard.has_value(), r.state.worsening, {}};
    s.disclaimer = resources_->guard.disclaimer_for(policy, ctx);
  }
  return s;
}

SessionSummary Service::create_session(std::optional<ScenarioId> hint) {
  auto rec = store_->create(engine_->created_event(session_ids_(), hint));
  spdlog::info("session {} created", rec.session_id);
  return summarize(rec);
}

MessageResult Service::post_message(const std::string& session_id, const std::string& text,
                                    const std::optional<std::string>& image) {
  auto lease = store_->acquire(session_id);
  auto rec = store_->get(session_id);
  if (!rec) fail(ErrorCode::UnknownSession, "unknown session " + session_id);
  if (text::trim(text).empty()) fail(ErrorCode::InvalidArgument, "message text must be non-empty");

  consult::TurnInput input{text, std::nullopt};
  if (image) {
    if (image->size() > config_.max_image_bytes)
      fail(ErrorCode::ImageTooLarge, "image of " + std::to_string(image->size()) + " bytes exceeds the cap of " +
                                         std::to_string(config_.max_image_bytes));
    auto format = tools::sniff_image(*image);
    input.image_ref = store_->save_image(lease, *image, extension_of(format));
  }

  auto out = engine_->run_turn(rec->state, input);
  auto committed = store_->commit(lease, out.events);
  if (!(committed.state == out.state))
    fail(ErrorCode::CorruptLog, "session " + session_id + ": committed events do not reproduce the step state");

  MessageResult r;
  r.reply = out.reply;
  r.routing = out.routing;
  bool zh = text::mostly_cjk(text);
  for (const auto& q : out.questions) r.questions.push_back({q.id, q.text.pick(zh), q.targets});
  r.summary = summarize(committed);
  return r;
}

SessionSummary Service::get_session(const std::string& session_id) const {
  auto rec = store_->get(session_id);
  if (!rec) fail(ErrorCode::UnknownSession, "unknown session " + session_id);
  return summarize(*rec);
}

consult::DialogueState Service::replay(const std::string& session_id) const { return store_->replay(session_id); }

std::string Service::record_feedback(const std::string& session_id, int turn, feedback::Polarity polarity,
                                     const std::string& body, feedback::AuthorRole role) {
  auto lookup = [this](const std::string& id) -> std::optional<int> {
    auto rec = store_->get(id);
    if (!rec) return std::nullopt;
    return static_cast<int>(rec->state.transcript.size());
  };
  if (!store_->exists(session_id)) fail(ErrorCode::UnknownSession, "unknown session " + session_id);
  auto lease = store_->acquire(session_id, std::chrono::seconds(5));
  auto id = feedback_->record(lookup, session_id, turn, polarity, body, role);
  consult::SessionEvent linked{0, consult::EventKind::FeedbackLinked, clock_->now_iso8601(),
                               {{"feedback_id", id}, {"turn_index", turn}}};
  store_->commit(lease, {linked});
  return id;
}

std::string Service::publish_instruction(ScenarioId scenario, const std::string& text, const std::string& changelog,
                                         const std::vector<std::string>& linked_feedback,
                                         const std::optional<std::string>& parent) {
  return instructions_->publish(scenario, text, changelog, linked_feedback, parent);
}

void Service::activate_instruction(const std::string& version_id, const std::optional<std::string>& expected_active) {
  instructions_->activate(version_id, expected_active);
}

json Service::instruction_graph() const { return instructions_->export_graph(); }

// ---------------------------------------------------------------- eval jobs

std::string Service::start_eval(const EvalRequest& request) {
  if (!gateway_) fail(ErrorCode::GatewayUnavailable, "no model provider is configured");
  std::vector<eval::EvalItem> items;
  std::string run_id;
  {
    std::lock_guard lock(eval_mu_);
    run_id = request.resume.value_or("run-" + std::to_string(++eval_counter_) + "-" +
                                     fnv1a64_hex(clock_->now_iso8601() + request.model_label).substr(0, 8));
    if (eval_jobs_.count(run_id) && eval_jobs_[run_id].status == "running")
      fail(ErrorCode::SessionBusy, "run " + run_id + " is already running");
  }
  if (!plain_name(run_id)) fail(ErrorCode::InvalidArgument, "invalid run id " + run_id);
  auto run_dir = eval_dir() / run_id;
  if (request.bench) {
    if (!plain_name(*request.bench)) fail(ErrorCode::InvalidArgument, "bench must be a file name under data/eval");
    items = eval::load_benchmark(config_.data_dir / "eval" / *request.bench);
  } else if (!request.items.empty()) {
    items = request.items;
  } else if (request.resume && fs::exists(run_dir / "items.jsonl")) {
    items = eval::load_benchmark(run_dir / "items.jsonl");
  } else {
    fail(ErrorCode::InvalidArgument, "an eval run needs a bench file or inline items");
  }
  if (request.resume && !fs::exists(run_dir / "run.json")) fail(ErrorCode::NotFound, "no run " + run_id);

  if (!request.resume) {
    std::string lines;
    for (const auto& it : items) lines += eval::to_json(it).dump() + "\n";
    try {
      fs::create_directories(run_dir);
      write_file_atomic(run_dir / "items.jsonl", lines);
    } catch (const fs::filesystem_error& e) {
      fail(ErrorCode::StorageUnavailable, e.what());
    } catch (const Error& e) {
      fail(ErrorCode::StorageUnavailable, e.what());
    }
  }

  eval::RunOptions opts;
  opts.model_label = request.model_label;
  auto tmpl = config_.data_dir / "eval" / "prompt_template.json";
  if (fs::exists(tmpl)) opts.prompt = eval::PromptTemplate::load(tmpl);
  opts.out_dir = eval_dir();
  opts.run_id = run_id;
  opts.resume = request.resume;
  opts.parallel = request.parallel.value_or(config_.eval_parallel);
  opts.clock = clock_;

  std::lock_guard lock(eval_mu_);
  eval_jobs_[run_id] = {run_id, "running", std::nullopt, std::nullopt};
  eval_threads_.emplace_back([this, run_id, items = std::move(items), opts] {
    EvalJobStatus done{run_id, "complete", std::nullopt, std::nullopt};
    try {
      auto run = eval::run_eval(items, *gateway_, opts);
      done.report = eval::score(run, items);
    } catch (const Error& e) {
      done.status = "failed";
      done.error = e;
      spdlog::warn("eval run {} failed: {}", run_id, e.what());
    } catch (const std::exception& e) {
      done.status = "failed";
      done.error = Error(ErrorCode::IoError, e.what());
    }
    std::lock_guard lock(eval_mu_);
    eval_jobs_[run_id] = done;
    eval_cv_.notify_all();
  });
  return run_id;
}

EvalJobStatus Service::eval_status(const std::string& run_id) const {
  {
    std::lock_guard lock(eval_mu_);
    if (auto it = eval_jobs_.find(run_id); it != eval_jobs_.end()) return it->second;
  }
  if (!plain_name(run_id) || !fs::exists(eval_dir() / run_id / "run.json"))
    fail(ErrorCode::NotFound, "no eval run " + run_id);
  auto run = eval::load_run(eval_dir() / run_id);
  EvalJobStatus s{run_id, "incomplete", std::nullopt, std::nullopt};
  if (run.complete() && fs::exists(eval_dir() / run_id / "items.jsonl")) {
    s.report = eval::score(run, eval::load_benchmark(eval_dir() / run_id / "items.jsonl"));
    s.status = "complete";
  }
  return s;
}

EvalJobStatus Service::wait_eval(const std::string& run_id) const {
  std::unique_lock lock(eval_mu_);
  eval_cv_.wait(lock, [&] {
    auto it = eval_jobs_.find(run_id);
    return it == eval_jobs_.end() || it->second.status != "running";
  });
  lock.unlock();
  return eval_status(run_id);
}

json Service::health() const {
  bool storage = store_->writable();
  return {{"status", storage ? "ok" : "degraded"},
          {"storage", storage},
          {"gateway", gateway_mode_},
          {"sessions", store_->list().size()},
          {"instruction_versions", instructions_->versions().size()},
          {"feedback_records", feedback_->size()}};
}

}  // namespace bencao::service
