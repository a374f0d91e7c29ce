#include <gtest/gtest.h>

#include <set>

#include "bencao/service/session_store.h"
#include "support/fixture_sessions.h"
#include "support/test_support.h"

using namespace bencao;
namespace bt = bencao::testing;
namespace fs = std::filesystem;

TEST(Fixtures, CorpusCoversScenariosModesAndTerminations) {
  auto fixtures = bt::all_fixtures();
  ASSERT_GE(fixtures.size(), 10u);
  std::set<ScenarioId> scenarios;
  std::set<ModeKind> modes;
  std::set<SafeguardKind> safeguards;
  std::set<TerminationReason> terminations;
  for (const auto& f : fixtures) {
    auto s = bt::read_fixture_snapshot(f);
    if (s.scenario) scenarios.insert(*s.scenario);
    for (const auto& e : bt::read_fixture_events(f))
      if (e.kind == consult::EventKind::UserTurn && e.payload.contains("routing"))
        scenarios.insert(scenario_from(e.payload["routing"]["scenario"].get<std::string>()));
    modes.insert(s.mode);
    if (s.safeguard) safeguards.insert(s.safeguard->kind);
    if (s.termination) terminations.insert(*s.termination);
  }
  EXPECT_EQ(scenarios.size(), 4u);
  EXPECT_EQ(modes.size(), 3u);
  EXPECT_EQ(safeguards.size(), 4u);
  EXPECT_EQ(terminations.size(), 3u);
}

class FixtureReplay : public ::testing::TestWithParam<std::string> {};

TEST_P(FixtureReplay, IsSound) {
  auto spec = bt::FixtureSpec::load(bt::fixture_path("sessions/" + GetParam()));
  auto problems = bt::check_fixture(spec);
  for (const auto& p : problems) ADD_FAILURE() << spec.name << ": " << p;
}

TEST_P(FixtureReplay, SessionStoreLoadsTheRecordedLog) {
  auto spec = bt::FixtureSpec::load(bt::fixture_path("sessions/" + GetParam()));
  bt::TempDir dir;
  auto target = dir / "sessions" / spec.session_id;
  fs::create_directories(target);
  fs::copy_file(spec.dir / "events.jsonl", target / "events.jsonl");
  service::SessionStore store(dir.path());
  auto rec = store.get(spec.session_id);
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->state, bt::read_fixture_snapshot(spec));
  EXPECT_EQ(store.replay(spec.session_id), rec->state);
}

INSTANTIATE_TEST_SUITE_P(All, FixtureReplay, ::testing::ValuesIn([] {
                           std::vector<std::string> names;
                           for (const auto& f : bt::all_fixtures()) names.push_back(f.name);
                           return names;
                         }()),
                         [](const auto& info) {
                           std::string n = info.param;
                           std::replace(n.begin(), n.end(), '-', '_');
                           return n;
                         });
