#include <gtest/gtest.h>

#include <future>
#include <random>
#include <thread>

#include "bencao/common/error.h"
#include "bencao/common/text.h"
#include "bencao/service/http_api.h"
#include "bencao/service/service.h"
#include "httplib.h"
#include "support/simulated_model.h"
#include "support/stub_server.h"
#include "support/test_support.h"

using namespace bencao;
using namespace bencao::service;
namespace bt = bencao::testing;
namespace fs = std::filesystem;

namespace {

const std::string kJpeg = std::string("\xFF\xD8\xFF\xE0", 4) + "fake jpeg body";

std::shared_ptr<const consult::EngineResources> resources() {
  static auto r = consult::EngineResources::load(bt::data_path(""));
  return r;
}

ServiceConfig config_in(const fs::path& storage) {
  ServiceConfig c;
  c.data_dir = bt::data_path("");
  c.storage_dir = storage;
  return c;
}

std::function<std::string()> counter_ids() {
  auto n = std::make_shared<std::atomic<int>>(0);
  return [n] { return "s-" + std::to_string(++*n); };
}

ServiceOverrides offline() {
  ServiceOverrides o;
  o.resources = resources();
  o.clock = std::make_shared<SteppingClock>();
  o.session_ids = counter_ids();
  return o;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

int count_kind(const std::vector<consult::SessionEvent>& log, consult::EventKind kind) {
  return static_cast<int>(std::count_if(log.begin(), log.end(), [&](const auto& e) { return e.kind == kind; }));
}

const std::string kMildDisclaimer =
    "The following content is for reference only and cannot replace professional diagnosis or prescription.";

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

// ---------------------------------------------------------------- sessions

TEST(Service, NewSessionHasZeroCoverageAndHint) {
  bt::TempDir dir;
  Service svc(config_in(dir.path()), offline());
  auto s = svc.create_session(ScenarioId::MildDiscomfort);
  EXPECT_EQ(s.state.session_id, "s-1");
  EXPECT_EQ(s.state.coverage(), Rational(0));
  EXPECT_EQ(s.state.scenario_hint, ScenarioId::MildDiscomfort);
  EXPECT_EQ(s.offset, 1);
  ASSERT_TRUE(s.disclaimer);
  EXPECT_EQ(s.disclaimer->en, kMildDisclaimer);
  auto j = to_json(s, false);
  EXPECT_EQ(j["coverage"]["fraction"], "0/1");
  EXPECT_TRUE(j["scenario"].is_null());
  EXPECT_FALSE(j.contains("transcript"));
}

TEST(Service, TwoTurnsPersistFourTranscriptEntries) {
  bt::TempDir dir;
  Service svc(config_in(dir.path()), offline());
  auto id = svc.create_session().state.session_id;
  auto r1 = svc.post_message(id, "I have had a headache for a week");
  EXPECT_FALSE(r1.questions.empty());
  EXPECT_EQ(r1.summary.pending_questions.size(), r1.questions.size());
  svc.post_message(id, "It is dull and I feel cold");
  auto s = svc.get_session(id);
  ASSERT_EQ(s.state.transcript.size(), 4u);
  EXPECT_EQ(to_json(s, true)["transcript"].size(), 4u);
  EXPECT_EQ(svc.replay(id), s.state);
  EXPECT_EQ(static_cast<std::int64_t>(svc.store().events(id).size()), s.offset);

  // A fresh process sees the same state from disk.
  Service again(config_in(dir.path()), offline());
  EXPECT_EQ(again.get_session(id).state, s.state);
}

TEST(Service, EveryEmittedReplyPassesTheGuard) {
  bt::TempDir dir;
  Service svc(config_in(dir.path()), offline());
  const std::vector<std::string> turns = {"I have a headache and cold hands", "No more questions please, just tell me",
                                          "I am pregnant, is that a problem?", "What should I eat?"};
  auto id = svc.create_session().state.session_id;
  for (const auto& t : turns) svc.post_message(id, t);
  auto log = svc.store().events(id);
  consult::DialogueState st;
  int replies = 0;
  for (const auto& e : log) {
    if (e.kind == consult::EventKind::ReplyEmitted) {
      auto scenario = st.scenario.value_or(ScenarioId::MildDiscomfort);
      safety::SafetyContext ctx{st.conservative(), st.safeguard.has_value(), st.worsening, {}};
      auto text = e.payload.at("text").get<std::string>();
      EXPECT_TRUE(resources()->guard.check(text, svc.engine().policy_for(scenario), ctx).passed()) << text;
      ++replies;
    }
    st = consult::apply(std::move(st), e);
  }
  EXPECT_EQ(replies, 4);
}

TEST(Service, UnknownSession) {
  bt::TempDir dir;
  Service svc(config_in(dir.path()), offline());
  EXPECT_EQ(code_of([&] { svc.post_message("s-404", "hello"); }), ErrorCode::UnknownSession);
  EXPECT_EQ(code_of([&] { svc.get_session("s-404"); }), ErrorCode::UnknownSession);
  EXPECT_EQ(code_of([&] { svc.get_session("../etc"); }), ErrorCode::UnknownSession);
}

TEST(Service, BlankMessageIsRejectedWithoutCommit) {
  bt::TempDir dir;
  Service svc(config_in(dir.path()), offline());
  auto id = svc.create_session().state.session_id;
  EXPECT_EQ(code_of([&] { svc.post_message(id, "   "); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(svc.get_session(id).offset, 1);
}

TEST(Service, ConcurrentStepOnOneSessionIsBusy) {
  bt::TempDir dir;
  auto model = std::make_shared<bt::SimulatedModel>(resources());
  auto provider = std::make_shared<gateway::ScriptedProvider>();
  auto entered = std::make_shared<std::promise<void>>();
  auto once = std::make_shared<std::once_flag>();
  provider->add_rule([entered, once](const json&) -> std::optional<std::string> {
    std::call_once(*once, [&] { entered->set_value(); });
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    return std::nullopt;
  });
  model->install(*provider);
  auto o = offline();
  o.provider = provider;
  Service svc(config_in(dir.path()), o);
  auto id = svc.create_session().state.session_id;
  auto other = svc.create_session().state.session_id;

  auto first = std::async(std::launch::async, [&] { return svc.post_message(id, "I have a headache"); });
  entered->get_future().wait();
  EXPECT_EQ(code_of([&] { svc.post_message(id, "Are you there?"); }), ErrorCode::SessionBusy);
  // Other sessions are unaffected.
  EXPECT_NO_THROW(svc.post_message(other, "I have a headache"));
  auto r = first.get();
  EXPECT_EQ(r.summary.state.user_turns(), 1);
  EXPECT_EQ(svc.get_session(id).state.transcript.size(), 2u);
}

TEST(Service, TongueImageInvokesClassifierTool) {
  bt::StubServer stub;
  stub.on("POST", "/classify", [](const bt::StubRequest&) {
    return bt::StubResponse{
        200, R"({"labels":{"color":"pale","coating":"thin_white","shape":"tooth_marked","moisture":"moist"}})"};
  });
  stub.start();
  bt::TempDir dir;
  auto cfg = config_in(dir.path());
  tools::TongueClientConfig tc;
  tc.endpoint = stub.url("/classify");
  tc.max_retries = 0;
  cfg.tongue = tc;
  Service svc(cfg, offline());
  auto id = svc.create_session(ScenarioId::ConstitutionTongue).state.session_id;
  auto r = svc.post_message(id, "Here is my tongue, what is my constitution?", kJpeg);
  EXPECT_TRUE(r.summary.state.tongue.has_value());
  EXPECT_GT(r.summary.state.coverage(), Rational(0));
  auto log = svc.store().events(id);
  EXPECT_EQ(count_kind(log, consult::EventKind::ToolInvoked), 1);
  ASSERT_EQ(stub.requests().size(), 1u);
  auto ref = r.summary.state.transcript[0].image_ref;
  ASSERT_TRUE(ref);
  EXPECT_EQ(svc.store().load_image(*ref), kJpeg);
}

TEST(Service, ImageChecksRunBeforeTheStep) {
  bt::TempDir dir;
  auto cfg = config_in(dir.path());
  cfg.max_image_bytes = 64;
  Service svc(cfg, offline());
  auto id = svc.create_session().state.session_id;
  EXPECT_EQ(code_of([&] { svc.post_message(id, "tongue", kJpeg + std::string(100, 'x')); }),
            ErrorCode::ImageTooLarge);
  EXPECT_EQ(code_of([&] { svc.post_message(id, "tongue", std::string("plain text")); }),
            ErrorCode::ImageUndecodable);
  EXPECT_EQ(svc.get_session(id).offset, 1);
}

TEST(Service, StorageFailureIsRetryableAndLeavesStateUnchanged) {
  bt::TempDir dir;
  auto storage = dir / "store";
  Service svc(config_in(storage), offline());
  auto id = svc.create_session().state.session_id;
  auto before = svc.get_session(id);

  // Replace the session directory with a plain file so appends fail.
  auto sdir = storage / "sessions" / id;
  fs::remove_all(sdir);
  write_file_atomic(sdir, "x");
  try {
    svc.post_message(id, "I have a headache");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StorageUnavailable);
    EXPECT_TRUE(e.retryable());
    EXPECT_TRUE(api_error(e)["error"]["retryable"].get<bool>());
    EXPECT_EQ(http_status(e.code()), 503);
  }
  EXPECT_EQ(svc.get_session(id).state, before.state);

  fs::remove_all(storage);
  write_file_atomic(storage, "not a directory");
  EXPECT_EQ(code_of([&] { svc.create_session(); }), ErrorCode::StorageUnavailable);
  EXPECT_EQ(svc.health()["status"], "degraded");
}

TEST(Service, GapInLogIsCorrupt) {
  bt::TempDir dir;
  std::string id;
  {
    Service svc(config_in(dir.path()), offline());
    id = svc.create_session().state.session_id;
    svc.post_message(id, "I have a headache");
  }
  auto log = dir.path() / "sessions" / id / "events.jsonl";
  auto lines = read_lines(log);
  ASSERT_GT(lines.size(), 3u);
  lines.erase(lines.begin() + 1);
  fs::remove(log);
  append_lines(log, lines);
  fs::remove(dir.path() / "sessions" / id / "snapshot.json");
  Service fresh(config_in(dir.path()), offline());
  EXPECT_EQ(code_of([&] { fresh.get_session(id); }), ErrorCode::CorruptLog);

  fs::create_directories(dir.path() / "sessions" / "s-empty");
  write_file_atomic(dir.path() / "sessions" / "s-empty" / "events.jsonl", "");
  EXPECT_EQ(code_of([&] { fresh.get_session("s-empty"); }), ErrorCode::CorruptLog);
}

TEST(Service, StaleSnapshotIsRebuiltFromLog) {
  bt::TempDir dir;
  std::string id;
  consult::DialogueState expected;
  {
    auto cfg = config_in(dir.path());
    cfg.snapshot_every = 100;  // snapshot only at creation
    Service svc(cfg, offline());
    id = svc.create_session().state.session_id;
    svc.post_message(id, "I have a headache");
    expected = svc.get_session(id).state;
  }
  Service fresh(config_in(dir.path()), offline());
  EXPECT_EQ(fresh.get_session(id).state, expected);
}

TEST(Service, FeedbackIsLinkedIntoTheSessionLog) {
  bt::TempDir dir;
  Service svc(config_in(dir.path()), offline());
  auto id = svc.create_session().state.session_id;
  svc.post_message(id, "I have a headache");
  auto fb = svc.record_feedback(id, 1, feedback::Polarity::Critical, "too vague", feedback::AuthorRole::Reviewer);
  EXPECT_EQ(fb, "fb-000001");
  auto log = svc.store().events(id);
  ASSERT_EQ(log.back().kind, consult::EventKind::FeedbackLinked);
  EXPECT_EQ(log.back().payload["feedback_id"], fb);
  EXPECT_EQ(code_of([&] { svc.record_feedback(id, 9, feedback::Polarity::Positive, "x", {}); }),
            ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { svc.record_feedback("s-none", 0, feedback::Polarity::Positive, "x", {}); }),
            ErrorCode::UnknownSession);

  auto root = svc.instructions().active_id(ScenarioId::MildDiscomfort);
  auto v = svc.publish_instruction(ScenarioId::MildDiscomfort, "Be more specific.", "from review", {fb}, root);
  EXPECT_EQ(code_of([&] { svc.activate_instruction(v, std::string("iv-9999")); }), ErrorCode::StaleActivation);
  svc.activate_instruction(v, root);
  EXPECT_EQ(svc.instructions().active_id(ScenarioId::MildDiscomfort), v);
}

// ---------------------------------------------------------------- eval jobs

namespace {

std::shared_ptr<gateway::ScriptedProvider> always_answer(const std::string& letter) {
  auto p = std::make_shared<gateway::ScriptedProvider>();
  p->set_default(gateway::ScriptedProvider::reply_body("Answer: " + letter));
  return p;
}

}  // namespace

TEST(Service, EvalJobScoresAgainstIndependentCount) {
  bt::TempDir dir;
  auto o = offline();
  o.provider = always_answer("A");
  Service svc(config_in(dir.path()), o);
  EvalRequest req;
  req.bench = "demo_bench.jsonl";
  req.model_label = "always-A";
  req.parallel = 3;
  auto run = svc.start_eval(req);
  auto status = svc.wait_eval(run);
  ASSERT_EQ(status.status, "complete");
  ASSERT_TRUE(status.report);

  auto items = eval::load_benchmark(bt::data_path("eval/demo_bench.jsonl"));
  int gold_a = 0;
  for (const auto& it : items) gold_a += it.gold == 0;
  EXPECT_EQ(status.report->overall.correct, gold_a);
  EXPECT_EQ(status.report->overall.total, static_cast<int>(items.size()));

  // The report is recoverable from disk by a later process.
  Service later(config_in(dir.path()), offline());
  auto again = later.eval_status(run);
  EXPECT_EQ(again.status, "complete");
  EXPECT_EQ(eval::to_json(*again.report), eval::to_json(*status.report));
  EXPECT_EQ(code_of([&] { later.eval_status("run-missing"); }), ErrorCode::NotFound);
}

TEST(Service, EvalWithoutProviderIsUnavailable) {
  bt::TempDir dir;
  Service svc(config_in(dir.path()), offline());
  EvalRequest req;
  req.bench = "demo_bench.jsonl";
  EXPECT_EQ(code_of([&] { svc.start_eval(req); }), ErrorCode::GatewayUnavailable);
}

TEST(Service, FailedEvalReportsError) {
  bt::TempDir dir;
  auto o = offline();
  o.provider = std::make_shared<gateway::ScriptedProvider>();  // no script at all
  Service svc(config_in(dir.path()), o);
  EvalRequest req;
  req.bench = "demo_bench.jsonl";
  auto status = svc.wait_eval(svc.start_eval(req));
  EXPECT_EQ(status.status, "failed");
  ASSERT_TRUE(status.error);
  EXPECT_EQ(status.error->code(), ErrorCode::MissingScript);
  req.bench = "../secrets";
  EXPECT_EQ(code_of([&] { svc.start_eval(req); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------- config

TEST(ServiceConfig, ParsesAndResolvesRelativePaths) {
  auto j = json::parse(R"({
    "data_dir": "d", "storage_dir": "/abs/var",
    "server": {"host": "0.0.0.0", "port": 9000},
    "provider": {"endpoint": "http://127.0.0.1:1/v1/chat/completions", "model": "m", "timeout_ms": 500},
    "tools": {"tongue": {"endpoint": "http://127.0.0.1:2/classify", "max_retries": 0}},
    "consult": {"coverage_threshold": 0.75, "gain_threshold": 0.2, "question_budget": 4},
    "disclaimers": {"MildDiscomfort": {"en": "Ask a doctor.", "zh": "请咨询医生。"}},
    "storage": {"snapshot_every": 5}
  })");
  auto c = ServiceConfig::from_json(j, "/etc/bencao");
  EXPECT_EQ(c.data_dir, fs::path("/etc/bencao/d"));
  EXPECT_EQ(c.storage_dir, fs::path("/abs/var"));
  EXPECT_EQ(c.port, 9000);
  ASSERT_TRUE(c.provider);
  EXPECT_EQ(c.provider->timeout, std::chrono::milliseconds(500));
  ASSERT_TRUE(c.tongue);
  EXPECT_EQ(c.tongue->max_retries, 0);
  EXPECT_EQ(c.consult.coverage_threshold, Rational(3, 4));
  EXPECT_EQ(c.consult.gain_threshold, Rational(1, 5));
  EXPECT_EQ(c.consult.question_budget, 4);
  EXPECT_EQ(c.snapshot_every, 5);

  j["consult"]["coverage_threshold"] = 1.5;
  EXPECT_THROW(ServiceConfig::from_json(j, "/"), Error);
}

TEST(ServiceConfig, DisclaimerOverrideReachesReplies) {
  bt::TempDir dir;
  auto cfg = config_in(dir.path());
  cfg.disclaimers = {{"MildDiscomfort", {{"en", "Please see a licensed practitioner."}, {"zh", "请就医。"}}}};
  auto o = offline();
  o.resources = nullptr;
  Service svc(cfg, o);
  auto id = svc.create_session().state.session_id;
  auto r = svc.post_message(id, "I have a headache");
  EXPECT_TRUE(contains(r.reply.text, "Please see a licensed practitioner."));
  EXPECT_FALSE(contains(r.reply.text, kMildDisclaimer));
}

// ---------------------------------------------------------------- wire helpers

TEST(HttpApi, StatusMappingCoversEveryCode) {
  EXPECT_EQ(http_status(ErrorCode::ValidationError), 400);
  EXPECT_EQ(http_status(ErrorCode::ImageTooLarge), 413);
  EXPECT_EQ(http_status(ErrorCode::UnknownSession), 404);
  EXPECT_EQ(http_status(ErrorCode::SessionBusy), 409);
  EXPECT_EQ(http_status(ErrorCode::StaleActivation), 409);
  EXPECT_EQ(http_status(ErrorCode::GatewayUnavailable), 503);
  EXPECT_EQ(http_status(ErrorCode::CorruptLog), 500);
  // Retryable codes are exactly the 503 ones plus SessionBusy.
  for (int c = 0; c <= static_cast<int>(ErrorCode::NotFound); ++c) {
    auto code = static_cast<ErrorCode>(c);
    int s = http_status(code);
    EXPECT_TRUE(s == 400 || s == 404 || s == 409 || s == 413 || s == 500 || s == 502 || s == 503);
    if (s == 503) EXPECT_TRUE(is_retryable(code)) << error_code_name(code);
  }
}

TEST(HttpApi, ReplyChunksReassembleOnCodepointBoundaries) {
  std::mt19937 rng(7);
  const std::vector<std::string> atoms = {"a", "Z", " ", "舌", "质", "淡", "\xF0\x9F\x8C\xBF", "é", "\n"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    int len = std::uniform_int_distribution<int>(0, 120)(rng);
    for (int i = 0; i < len; ++i) s += atoms[rng() % atoms.size()];
    std::size_t n = 1 + rng() % 30;
    auto chunks = reply_chunks(s, n);
    std::string joined;
    for (const auto& c : chunks) {
      EXPECT_FALSE(c.empty());
      EXPECT_LE(text::utf8_length(c), n);
      EXPECT_EQ(text::utf8_floor(c, c.size()), c.size());
      joined += c;
    }
    EXPECT_EQ(joined, s);
  }
}

// ---------------------------------------------------------------- HTTP

namespace {

struct HttpFixture {
  bt::TempDir dir;
  std::unique_ptr<Service> svc;
  std::unique_ptr<ApiServer> api;
  std::unique_ptr<httplib::Client> client;

  explicit HttpFixture(ServiceOverrides o = offline(), std::function<void(ServiceConfig&)> tweak = {}) {
    auto cfg = config_in(dir.path());
    if (tweak) tweak(cfg);
    svc = std::make_unique<Service>(cfg, std::move(o));
    api = std::make_unique<ApiServer>(*svc);
    int port = api->start("127.0.0.1", 0);
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(10, 0);
  }

  json post(const std::string& path, const json& body, int expect) {
    auto r = client->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << r->body;
    return r->body.empty() ? json() : json::parse(r->body);
  }

  json get(const std::string& path, int expect) {
    auto r = client->Get(path);
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << r->body;
    return json::parse(r->body);
  }
};

struct SseEvent {
  std::string name;
  json data;
};

std::vector<SseEvent> parse_sse(const std::string& body) {
  std::vector<SseEvent> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto end = body.find("\n\n", pos);
    if (end == std::string::npos) break;
    std::string block = body.substr(pos, end - pos);
    SseEvent e;
    for (const auto& line : text::split_lines(block)) {
      if (text::starts_with(line, "event: ")) e.name = line.substr(7);
      if (text::starts_with(line, "data: ")) e.data = json::parse(line.substr(6));
    }
    out.push_back(e);
    pos = end + 2;
  }
  return out;
}

}  // namespace

TEST(HttpApi, SessionLifecycle) {
  HttpFixture fx;
  auto created = fx.post("/v1/sessions", {{"scenario_hint", "MildDiscomfort"}}, 201);
  auto id = created["session_id"].get<std::string>();
  EXPECT_EQ(created["coverage"]["value"], 0.0);
  EXPECT_EQ(created["scenario_hint"], "MildDiscomfort");

  auto r = fx.post("/v1/sessions/" + id + "/messages", {{"text", "I have had a headache for a week"}}, 200);
  EXPECT_TRUE(contains(r["reply"]["text"].get<std::string>(), kMildDisclaimer));
  EXPECT_FALSE(r["questions"].empty());
  EXPECT_EQ(r["routing"]["scenario"], "MildDiscomfort");
  EXPECT_EQ(r["state"]["stage"], "SymptomRecognition");

  auto s = fx.get("/v1/sessions/" + id, 200);
  EXPECT_EQ(s["transcript"].size(), 2u);
  EXPECT_EQ(s["transcript"][0]["role"], "user");
  EXPECT_EQ(s["pending_questions"].size(), r["questions"].size());

  auto err = fx.get("/v1/sessions/s-nope", 404);
  EXPECT_EQ(err["error"]["code"], "UnknownSession");
  EXPECT_EQ(err["error"]["retryable"], false);
  EXPECT_EQ(fx.post("/v1/sessions", {{"scenario_hint", "Nope"}}, 400)["error"]["code"], "ValidationError");
  EXPECT_EQ(fx.post("/v1/sessions/" + id + "/messages", {{"text", ""}}, 400)["error"]["code"], "InvalidArgument");
  auto bad = fx.client->Post("/v1/sessions", "{not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(fx.get("/v1/nothing", 404)["error"]["code"], "NotFound");
  auto health = fx.get("/healthz", 200);
  EXPECT_EQ(health["status"], "ok");
  EXPECT_EQ(health["sessions"], 1);
}

TEST(HttpApi, StreamedReplyMatchesFinalResult) {
  HttpFixture fx;
  auto id = fx.post("/v1/sessions", json::object(), 201)["session_id"].get<std::string>();
  httplib::Headers h{{"Accept", "text/event-stream"}};
  auto r = fx.client->Post("/v1/sessions/" + id + "/messages", h, json{{"text", "我头痛一周了"}}.dump(),
                           "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_TRUE(contains(r->get_header_value("Content-Type"), "text/event-stream"));
  auto events = parse_sse(r->body);
  ASSERT_GE(events.size(), 2u);
  std::string joined;
  for (std::size_t i = 0; i + 1 < events.size(); ++i) {
    EXPECT_EQ(events[i].name, "reply_delta");
    joined += events[i].data["text"].get<std::string>();
  }
  EXPECT_EQ(events.back().name, "done");
  EXPECT_EQ(joined, events.back().data["reply"]["text"].get<std::string>());
  EXPECT_TRUE(text::contains_cjk(joined));

  auto e = fx.client->Post("/v1/sessions/s-gone/messages?stream=1", json{{"text", "hi"}}.dump(), "application/json");
  ASSERT_TRUE(e);
  auto err = parse_sse(e->body);
  ASSERT_EQ(err.size(), 1u);
  EXPECT_EQ(err[0].name, "error");
  EXPECT_EQ(err[0].data["error"]["code"], "UnknownSession");
}

TEST(HttpApi, MultipartUploadReachesTongueTool) {
  bt::StubServer stub;
  stub.on("POST", "/classify", [](const bt::StubRequest&) {
    return bt::StubResponse{200, R"({"labels":{"color":"red","coating":"yellow","shape":"normal","moisture":"dry"}})"};
  });
  stub.start();
  HttpFixture fx(offline(), [&](ServiceConfig& c) {
    tools::TongueClientConfig tc;
    tc.endpoint = stub.url("/classify");
    tc.max_retries = 0;
    c.tongue = tc;
    c.max_image_bytes = 4096;
  });
  auto id = fx.post("/v1/sessions", {{"scenario_hint", "ConstitutionTongue"}}, 201)["session_id"].get<std::string>();
  httplib::MultipartFormDataItems form = {{"text", "Here is my tongue photo", "", ""},
                                          {"image", kJpeg, "tongue.jpg", "image/jpeg"}};
  auto r = fx.client->Post("/v1/sessions/" + id + "/messages", form);
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  auto s = fx.get("/v1/sessions/" + id, 200);
  EXPECT_TRUE(s["transcript"][0]["image_ref"].is_string());
  EXPECT_EQ(stub.requests().size(), 1u);

  httplib::MultipartFormDataItems big = {{"text", "again", "", ""},
                                         {"image", kJpeg + std::string(5000, 'x'), "t.jpg", "image/jpeg"}};
  auto too_big = fx.client->Post("/v1/sessions/" + id + "/messages", big);
  ASSERT_TRUE(too_big);
  EXPECT_EQ(too_big->status, 413);
  EXPECT_EQ(json::parse(too_big->body)["error"]["code"], "ImageTooLarge");
}

TEST(HttpApi, FeedbackAndInstructionVersions) {
  HttpFixture fx;
  auto id = fx.post("/v1/sessions", json::object(), 201)["session_id"].get<std::string>();
  fx.post("/v1/sessions/" + id + "/messages", {{"text", "I have a headache"}}, 200);
  auto fb = fx.post("/v1/feedback",
                    {{"session_id", id}, {"turn", 1}, {"polarity", "Critical"}, {"body", "Too generic"},
                     {"author_role", "Reviewer"}},
                    201)["feedback_id"];
  fx.post("/v1/feedback", {{"session_id", id}, {"turn", 1}, {"polarity", "Meh"}, {"body", "x"}}, 400);

  auto graph = fx.get("/v1/instructions/versions", 200);
  auto root = graph["active"]["MildDiscomfort"].get<std::string>();
  auto v = fx.post("/v1/instructions/versions",
                   {{"scenario", "MildDiscomfort"}, {"instruction_text", "Name one concrete habit."},
                    {"changelog", "review"}, {"linked_feedback", {fb}}, {"parent", root}},
                   201)["version_id"]
               .get<std::string>();
  fx.post("/v1/instructions/versions",
          {{"scenario", "MildDiscomfort"}, {"instruction_text", "x"}, {"linked_feedback", {"fb-999999"}}}, 404);
  auto stale = fx.post("/v1/instructions/versions/" + v + "/activate", {{"expected_active", "iv-9999"}}, 409);
  EXPECT_EQ(stale["error"]["code"], "StaleActivation");
  auto after = fx.post("/v1/instructions/versions/" + v + "/activate", {{"expected_active", root}}, 200);
  EXPECT_EQ(after["active"]["MildDiscomfort"], v);
  fx.post("/v1/instructions/versions/iv-9999/activate", json::object(), 404);
}

TEST(HttpApi, EvalRunReportInJsonAndCsv) {
  auto o = offline();
  o.provider = always_answer("B");
  HttpFixture fx(o);
  auto items = json::array();
  for (int i = 0; i < 4; ++i) {
    items.push_back({{"item_id", "q" + std::to_string(i)},
                     {"task", "SingleChoice"},
                     {"category", "Diagnostics"},
                     {"stem", "Which one?"},
                     {"options", {"first", "second", "third"}},
                     {"gold", i == 3 ? 0 : 1}});
  }
  auto run = fx.post("/v1/eval/runs", {{"items", items}, {"model_label", "always-B"}}, 202)["run_id"]
                 .get<std::string>();
  fx.svc->wait_eval(run);
  auto report = fx.get("/v1/eval/runs/" + run + "/report", 200);
  EXPECT_EQ(report["overall"]["correct"], 3);
  EXPECT_EQ(report["overall"]["total"], 4);
  auto csv = fx.client->Get("/v1/eval/runs/" + run + "/report?format=csv");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->status, 200);
  EXPECT_TRUE(text::starts_with(csv->body, "task,category,correct,total,accuracy"));
  fx.get("/v1/eval/runs/run-x/report", 404);
  fx.get("/v1/eval/runs/" + run + "/report?format=xml", 400);
  items[0]["gold"] = 7;
  EXPECT_EQ(fx.post("/v1/eval/runs", {{"items", items}}, 400)["error"]["code"], "SchemaError");
}
