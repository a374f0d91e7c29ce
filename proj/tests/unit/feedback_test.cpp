#include <gtest/gtest.h>

#include <barrier>
#include <thread>

#include "bencao/common/error.h"
#include "bencao/feedback/feedback.h"
#include "support/simulated_model.h"
#include "support/test_support.h"

using namespace bencao;
using namespace bencao::feedback;
namespace bt = bencao::testing;

namespace {

std::shared_ptr<const consult::EngineResources> resources() {
  static auto r = consult::EngineResources::load(bt::data_path(""));
  return r;
}

SessionLookup sessions_with(std::map<std::string, int> lengths) {
  return [lengths](const std::string& id) -> std::optional<int> {
    auto it = lengths.find(id);
    if (it == lengths.end()) return std::nullopt;
    return it->second;
  };
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

const std::string kMildDisclaimer =
    "The following content is for reference only and cannot replace professional diagnosis or prescription.";

struct Stores {
  std::shared_ptr<FeedbackStore> feedback = std::make_shared<FeedbackStore>(std::nullopt,
                                                                            std::make_shared<SteppingClock>());
  InstructionStore instructions{resources()->policies, feedback, std::nullopt, std::make_shared<SteppingClock>()};
};

}  // namespace

// ---------------------------------------------------------------- feedback records

TEST(FeedbackStore, ValidCriticalFeedbackGrowsStore) {
  FeedbackStore store;
  auto id = store.record(sessions_with({{"s-1", 4}}), "s-1", 1, Polarity::Critical,
                         "The reply named a formula; it should not.", AuthorRole::Practitioner);
  EXPECT_EQ(id, "fb-000001");
  EXPECT_EQ(store.size(), 1u);
  auto r = store.get(id);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->polarity, Polarity::Critical);
  EXPECT_EQ(r->turn, 1);
}

TEST(FeedbackStore, EmptyBodyRejected) {
  FeedbackStore store;
  EXPECT_EQ(code_of([&] {
              store.record(sessions_with({{"s-1", 2}}), "s-1", 1, Polarity::Positive, "  \n", AuthorRole::Reviewer);
            }),
            ErrorCode::ValidationError);
  EXPECT_EQ(store.size(), 0u);
}

TEST(FeedbackStore, UnknownSessionRejected) {
  FeedbackStore store;
  EXPECT_EQ(code_of([&] {
              store.record(sessions_with({}), "nope", 0, Polarity::Critical, "x", AuthorRole::Reviewer);
            }),
            ErrorCode::UnknownSession);
}

TEST(FeedbackStore, TurnOutsideSessionRejected) {
  FeedbackStore store;
  EXPECT_EQ(code_of([&] {
              store.record(sessions_with({{"s-1", 2}}), "s-1", 2, Polarity::Critical, "x", AuthorRole::Reviewer);
            }),
            ErrorCode::ValidationError);
}

TEST(FeedbackStore, PersistsAcrossReopen) {
  bt::TempDir dir;
  auto lookup = sessions_with({{"s-1", 6}});
  {
    FeedbackStore store(dir / "feedback.jsonl");
    store.record(lookup, "s-1", 1, Polarity::Critical, "too long", AuthorRole::Practitioner);
    store.record(lookup, "s-1", 3, Polarity::Positive, "clear advice", AuthorRole::Reviewer);
  }
  FeedbackStore reopened(dir / "feedback.jsonl");
  ASSERT_EQ(reopened.size(), 2u);
  EXPECT_EQ(reopened.all()[1].body, "clear advice");
  EXPECT_EQ(reopened.record(lookup, "s-1", 5, Polarity::Positive, "ok", AuthorRole::Reviewer), "fb-000003");
}

TEST(FeedbackStore, UnwritableLogIsStorageUnavailable) {
  bt::TempDir dir;
  FeedbackStore store(dir / "missing-dir" / "feedback.jsonl");
  EXPECT_EQ(code_of([&] {
              store.record(sessions_with({{"s-1", 2}}), "s-1", 0, Polarity::Critical, "x", AuthorRole::Reviewer);
            }),
            ErrorCode::StorageUnavailable);
  EXPECT_EQ(store.size(), 0u);
}

// ---------------------------------------------------------------- versions

TEST(InstructionStore, SeedsOneActiveRootPerScenario) {
  Stores s;
  auto all = s.instructions.versions();
  ASSERT_EQ(all.size(), 4u);
  for (auto sc : kAllScenarios) {
    auto active = s.instructions.active_instruction(sc);
    ASSERT_TRUE(active);
    EXPECT_EQ(active->text, resources()->policies.policy_for(sc).instruction_text);
  }
}

TEST(InstructionStore, PublishAndActivateChild) {
  Stores s;
  auto v1 = s.instructions.active_id(ScenarioId::MildDiscomfort);
  auto fb = s.feedback->record(sessions_with({{"s-1", 2}}), "s-1", 1, Polarity::Critical, "be gentler",
                               AuthorRole::Practitioner);
  auto v2 = s.instructions.publish(ScenarioId::MildDiscomfort, "Be gentle.", "softer tone", {fb}, v1);
  EXPECT_FALSE(s.instructions.get(v2)->active);
  EXPECT_EQ(s.instructions.active_id(ScenarioId::MildDiscomfort), v1);

  s.instructions.activate(v2, v1);
  EXPECT_TRUE(s.instructions.get(v2)->active);
  EXPECT_FALSE(s.instructions.get(v1)->active);
  EXPECT_EQ(s.instructions.get(v2)->parent, v1);
  EXPECT_EQ(s.instructions.get(v2)->linked_feedback, std::vector<std::string>{fb});
  EXPECT_EQ(resources()->policies.policy_for(ScenarioId::MildDiscomfort, &s.instructions).instruction_text,
            "Be gentle.");
}

TEST(InstructionStore, PublishErrors) {
  Stores s;
  auto v1 = s.instructions.active_id(ScenarioId::MildDiscomfort);
  EXPECT_EQ(code_of([&] { s.instructions.publish(ScenarioId::MildDiscomfort, "x", "", {"fb-999999"}, v1); }),
            ErrorCode::UnknownFeedback);
  EXPECT_EQ(code_of([&] { s.instructions.publish(ScenarioId::MildDiscomfort, "x", "", {}, "iv-9999"); }),
            ErrorCode::UnknownParent);
  EXPECT_EQ(code_of([&] { s.instructions.publish(ScenarioId::TheoryLearning, "x", "", {}, v1); }),
            ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { s.instructions.publish(ScenarioId::MildDiscomfort, "", "", {}, v1); }),
            ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { s.instructions.activate("iv-9999"); }), ErrorCode::UnknownVersion);
  EXPECT_EQ(s.instructions.versions().size(), 4u);
}

TEST(InstructionStore, ConcurrentActivationsExactlyOneWins) {
  for (int trial = 0; trial < 50; ++trial) {
    Stores s;
    auto v1 = s.instructions.active_id(ScenarioId::SeasonalWellness);
    auto a = s.instructions.publish(ScenarioId::SeasonalWellness, "A", "", {}, v1);
    auto b = s.instructions.publish(ScenarioId::SeasonalWellness, "B", "", {}, v1);
    std::barrier sync(2);
    std::atomic<int> wins{0}, stale{0};
    auto attempt = [&](const std::string& id) {
      sync.arrive_and_wait();
      try {
        s.instructions.activate(id, v1);
        ++wins;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::StaleActivation) ++stale;
      }
    };
    std::thread t1(attempt, a), t2(attempt, b);
    t1.join();
    t2.join();
    EXPECT_EQ(wins.load(), 1);
    EXPECT_EQ(stale.load(), 1);
    int active = 0;
    for (const auto& v : s.instructions.versions())
      if (v.scenario == ScenarioId::SeasonalWellness && v.active) ++active;
    EXPECT_EQ(active, 1);
  }
}

TEST(InstructionStore, ExactlyOneActivePerScenarioAfterRandomActivations) {
  Stores s;
  std::mt19937 rng(7);
  std::vector<std::string> ids;
  for (const auto& v : s.instructions.versions()) ids.push_back(v.version_id);
  for (int i = 0; i < 200; ++i) {
    if (rng() % 3 == 0) {
      auto sc = kAllScenarios[rng() % 4];
      ids.push_back(s.instructions.publish(sc, "text " + std::to_string(i), "", {}, s.instructions.active_id(sc)));
    } else {
      s.instructions.activate(ids[rng() % ids.size()]);
    }
    std::map<ScenarioId, int> active;
    for (const auto& v : s.instructions.versions())
      if (v.active) ++active[v.scenario];
    for (auto sc : kAllScenarios) ASSERT_EQ(active[sc], 1);
  }
}

TEST(InstructionStore, ReopenAndCompactPreserveGraph) {
  bt::TempDir dir;
  auto fb = std::make_shared<FeedbackStore>();
  json graph;
  {
    InstructionStore store(resources()->policies, fb, dir.path(), std::make_shared<SteppingClock>());
    auto v1 = store.active_id(ScenarioId::ConstitutionTongue);
    auto v2 = store.publish(ScenarioId::ConstitutionTongue, "New", "edit", {}, v1);
    store.activate(v2);
    graph = store.export_graph();
  }
  {
    InstructionStore store(resources()->policies, fb, dir.path());
    EXPECT_EQ(store.export_graph(), graph);
    store.compact();
  }
  InstructionStore store(resources()->policies, fb, dir.path());
  EXPECT_EQ(store.export_graph(), graph);
  EXPECT_EQ(graph["edges"].size(), 1u);
  EXPECT_EQ(read_file(dir / "instructions.jsonl"), "");
}

// ---------------------------------------------------------------- replay

namespace {

struct ReplayFixture {
  Stores stores;
  std::shared_ptr<bt::SimulatedModel> model = std::make_shared<bt::SimulatedModel>(resources());
  std::shared_ptr<gateway::ScriptedProvider> provider = bt::simulated_provider(model);
  consult::EngineDeps deps;

  ReplayFixture() {
    gateway::ProviderConfig cfg;
    cfg.endpoint = "http://scripted.invalid/v1/chat/completions";
    deps.resources = resources();
    deps.gateway = std::make_shared<gateway::Gateway>(cfg, provider, [](std::chrono::milliseconds) {});
    deps.instructions = std::shared_ptr<const scenario::InstructionSource>(
        &stores.instructions, [](const scenario::InstructionSource*) {});
    deps.clock = std::make_shared<SteppingClock>();
  }
};

std::vector<RecordedTranscript> mild_transcripts() {
  return {{"t-headache",
           ScenarioId::MildDiscomfort,
           {{"I have had a headache and I feel cold", std::nullopt},
            {"It is a dull ache, came on gradually, I have a dry mouth and feel dizzy", std::nullopt},
            {"Please go on about my headache", std::nullopt}}},
          {"t-decline",
           std::nullopt,
           {{"I have a headache, cold hands and loose stools", std::nullopt},
            {"I'd rather not answer more, just tell me", std::nullopt}}}};
}

}  // namespace

TEST(ReplayRegression, IdenticalVersionsNeverChange) {
  ReplayFixture fx;
  auto v1 = fx.stores.instructions.active_id(ScenarioId::MildDiscomfort);
  auto v2 = fx.stores.instructions.publish(ScenarioId::MildDiscomfort,
                                           fx.stores.instructions.get(v1)->instruction_text, "no-op", {}, v1);
  auto before = fx.stores.instructions.export_graph();
  auto diffs = replay_regression(mild_transcripts(), fx.stores.instructions, v1, v2, fx.provider, fx.deps);
  ASSERT_EQ(diffs.size(), 2u);
  EXPECT_EQ(diffs[0].turns.size(), 3u);
  for (const auto& d : diffs)
    for (const auto& t : d.turns) {
      EXPECT_FALSE(t.changed);
      EXPECT_EQ(t.compliance_delta, 0);
    }
  EXPECT_EQ(fx.stores.instructions.export_graph(), before);
}

TEST(ReplayRegression, StricterDisclaimerNeverLowersCompliance) {
  ReplayFixture fx;
  auto v1 = fx.stores.instructions.active_id(ScenarioId::MildDiscomfort);
  auto text = fx.stores.instructions.get(v1)->instruction_text + "\nEnd every reply with: " + kMildDisclaimer;
  auto v2 = fx.stores.instructions.publish(ScenarioId::MildDiscomfort, text, "explicit disclaimer", {}, v1);
  auto transcripts = mild_transcripts();
  auto diffs = replay_regression(transcripts, fx.stores.instructions, v1, v2, fx.provider, fx.deps);

  // Oracle: drive the engine directly under each version and re-check the drafts.
  auto drafts_under = [&](const RecordedTranscript& t, const std::string& vid) {
    auto deps = fx.deps;
    deps.clock = std::make_shared<SteppingClock>();
    deps.instructions = std::make_shared<PinnedInstructions>(*fx.stores.instructions.get(vid), nullptr);
    consult::Engine engine(deps);
    auto created = engine.created_event("oracle", t.scenario_hint);
    created.seq = 1;
    auto state = consult::apply({}, created);
    std::vector<int> counts;
    for (const auto& in : t.turns) {
      auto out = engine.run_turn(state, in);
      counts.push_back(static_cast<int>(
          resources()->guard.check(out.draft_text, out.policy, out.safety_context).violations.size()));
      state = out.state;
    }
    return counts;
  };

  int improved = 0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    auto old_counts = drafts_under(transcripts[i], v1);
    auto new_counts = drafts_under(transcripts[i], v2);
    ASSERT_EQ(diffs[i].turns.size(), old_counts.size());
    for (std::size_t k = 0; k < old_counts.size(); ++k) {
      const auto& t = diffs[i].turns[k];
      EXPECT_EQ(t.compliance_delta, old_counts[k] - new_counts[k]);
      EXPECT_GE(t.compliance_delta, 0);
      if (t.compliance_delta > 0) ++improved;
    }
  }
  EXPECT_GT(improved, 0);
}

TEST(ReplayRegression, UnscriptedFingerprintIsMissingScript) {
  ReplayFixture fx;
  auto empty = std::make_shared<gateway::ScriptedProvider>();
  auto v1 = fx.stores.instructions.active_id(ScenarioId::MildDiscomfort);
  EXPECT_EQ(code_of([&] { replay_regression(mild_transcripts(), fx.stores.instructions, v1, v1, empty, fx.deps); }),
            ErrorCode::MissingScript);
}

TEST(ReplayRegression, TranscriptFromEventsKeepsUserTurns) {
  ReplayFixture fx;
  consult::Engine engine(fx.deps);
  auto created = engine.created_event("s-x", ScenarioId::MildDiscomfort);
  created.seq = 1;
  std::vector<consult::SessionEvent> log{created};
  auto state = consult::apply({}, created);
  auto transcripts = mild_transcripts();
  for (const auto& in : transcripts[0].turns) {
    auto out = engine.run_turn(state, in);
    for (auto e : out.events) {
      e.seq = static_cast<std::int64_t>(log.size()) + 1;
      log.push_back(e);
    }
    state = out.state;
  }
  auto t = transcript_from_events("s-x", log);
  EXPECT_EQ(t.scenario_hint, ScenarioId::MildDiscomfort);
  ASSERT_EQ(t.turns.size(), 3u);
  EXPECT_EQ(t.turns[2].text, "Please go on about my headache");
}
