// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <bit>
#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "bencao/common/text.h"
#include "bencao/consult/engine.h"
#include "bencao/corpus/knowledge_base.h"
#include "bencao/eval/eval.h"
#include "support/fixture_sessions.h"
#include "support/generators.h"
#include "support/simulated_model.h"
#include "support/test_support.h"

using namespace bencao;
using namespace bencao::consult;
namespace bt = bencao::testing;
using Clock_ = std::chrono::steady_clock;

namespace {

// Tolerances and limits, pinned.
constexpr double kTerminationBudgetSeconds = 10.0;
constexpr int kMaxInquiryRounds = 14;
constexpr double kPlannerBudgetSeconds = 5.0;
constexpr int kPlannerPools = 200;
constexpr int kGeneratedReplies = 500;
constexpr int kRandomEvalRuns = 100;
constexpr int kPropertyDocs = 20;
constexpr std::size_t kMinFixtures = 10;
constexpr double kSuiteBudgetSeconds = 120.0;

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock_::time_point t0) {
  return std::chrono::duration<double>(Clock_::now() - t0).count();
}

EvidenceLedger ledger_of(int mask) {
  std::vector<Finding> f;
  for (int i = 0; i < kElementCount; ++i)
    if (mask & (1 << i)) f.push_back({kAllElements[i], "given", 1.0});
  return update_ledger({}, f, 0);
}

// ---------------------------------------------------------------- 1

Outcome termination_exhaustiveness() {
  Outcome o;
  auto t0 = Clock_::now();
  EngineDeps deps;
  deps.resources = bt::fixture_resources();
  deps.clock = std::make_shared<SteppingClock>();
  // "initial <mask>" states the opening findings; "reveal <k>" answers k of
  // the remaining Unknown elements.
  deps.finding_source = [](const std::string& text, const DialogueState& st) {
    std::vector<Finding> out;
    if (text::starts_with(text, "initial ")) {
      int mask = std::stoi(text.substr(8));
      for (int i = 0; i < kElementCount; ++i)
        if (mask & (1 << i)) out.push_back({kAllElements[i], "initial", 1.0});
      return out;
    }
    int k = std::stoi(text.substr(7));
    for (auto e : st.ledger.unknown()) {
      if (static_cast<int>(out.size()) == k) break;
      out.push_back({e, "answer", 1.0});
    }
    return out;
  };
  Engine engine(deps);

  long runs = 0;
  int worst = 0;
  std::function<void(const DialogueState&, int)> explore = [&](const DialogueState& s, int depth) {
    if (!o.pass) return;
    if (s.termination) {
      ++runs;
      worst = std::max(worst, s.inquiry_rounds);
      o.require(s.inquiry_rounds <= kMaxInquiryRounds, "run exceeded the round limit");
      o.require(s.pending_questions.empty(), "terminated run still has pending questions");
      return;
    }
    o.require(depth <= kMaxInquiryRounds, "no termination within the round limit");
    if (!o.pass) return;
    for (int k = 0; k <= 2; ++k) explore(engine.run_turn(s, {"reveal " + std::to_string(k), std::nullopt}).state, depth + 1);
  };
  for (int mask = 0; mask < 64; ++mask) {
    auto created = engine.created_event("s-term", ScenarioId::MildDiscomfort);
    auto s = apply({}, created);
    explore(engine.run_turn(s, {"initial " + std::to_string(mask), std::nullopt}).state, 0);
  }

  // Priority on constructed overlaps.
  DialogueState all;
  all.user_declined = true;
  all.ledger = ledger_of(0b011111);
  all.baseline_coverage = Rational(5, 6);
  all.coverage_history = {Rational(5, 6), Rational(5, 6)};
  all.inquiry_rounds = 2;
  o.require(check_termination(all) == TerminationReason::UserDeclined, "declined must outrank the rest");
  all.user_declined = false;
  o.require(check_termination(all) == TerminationReason::SufficientCoverage, "sufficient must outrank stalled gain");
  all.ledger = ledger_of(0b001111);
  all.baseline_coverage = Rational(4, 6);
  all.coverage_history = {Rational(4, 6), Rational(4, 6)};
  o.require(check_termination(all) == TerminationReason::DiminishingGain, "stalled gain alone");
  DialogueState declined_empty;
  declined_empty.user_declined = true;
  o.require(check_termination(declined_empty) == TerminationReason::UserDeclined, "decline at coverage 0");

  double secs = seconds_since(t0);
  o.require(secs < kTerminationBudgetSeconds, "runtime over budget");
  if (o.pass) {
    std::ostringstream d;
    d << runs << " runs from 64 ledgers, max " << worst << " rounds, " << secs << " s";
    o.detail = d.str();
  }
  return o;
}

// ---------------------------------------------------------------- 2

Outcome threshold_exactness() {
  Outcome o;
  o.require(Rational(5, 6) > Rational(4, 5), "5/6 > 4/5");
  o.require(!(Rational(4, 6) > Rational(4, 5)), "4/6 <= 4/5");

  DialogueState five;
  five.ledger = ledger_of(0b011111);
  o.require(five.coverage() == Rational(5, 6), "five Known is 5/6");
  o.require(check_termination(five) == TerminationReason::SufficientCoverage, "5/6 must be sufficient");

  DialogueState four;
  four.ledger = ledger_of(0b001111);
  four.baseline_coverage = Rational(2, 6);
  four.coverage_history = {Rational(4, 6)};
  four.inquiry_rounds = 1;
  o.require(check_termination(four) == std::nullopt, "4/6 must not be sufficient");

  // Gain of exactly 1/10 over two rounds keeps the loop going; 1/10 minus
  // the smallest step stops it.
  DialogueState gain;
  gain.baseline_coverage = Rational(3, 10);
  gain.coverage_history = {Rational(7, 20), Rational(2, 5)};
  gain.inquiry_rounds = 2;
  o.require(check_termination(gain) == std::nullopt, "gain of exactly 1/10 must continue");
  gain.coverage_history.back() = Rational(2, 5) - Rational(1, 1000000);
  o.require(check_termination(gain) == TerminationReason::DiminishingGain, "gain just under 1/10 must stop");
  gain.inquiry_rounds = 3;
  gain.coverage_history = {Rational(2, 5), Rational(9, 20), Rational(1, 2)};
  o.require(check_termination(gain) == std::nullopt, "later rounds compare t with t-2");
  if (o.pass) o.detail = "5/6 fires, 4/6 does not, gain 1/10 continues (exact rationals)";
  return o;
}

// ---------------------------------------------------------------- 3

Outcome planner_optimality() {
  Outcome o;
  auto t0 = Clock_::now();
  std::mt19937 rng(42);
  int greedy_short = 0;
  for (int p = 0; p < kPlannerPools && o.pass; ++p) {
    int n = 1 + static_cast<int>(rng() % 10);
    std::vector<InquiryQuestion> pool;
    for (int i = 0; i < n; ++i) {
      int targets = 1 + static_cast<int>(rng() % 3);
      std::set<DiagnosticElement> t;
      while (static_cast<int>(t.size()) < targets) t.insert(kAllElements[rng() % kElementCount]);
      char id[8];
      std::snprintf(id, sizeof id, "q%02d", i);
      pool.push_back({id, {id, id}, {t.begin(), t.end()}});
    }
    int budget = 1 + static_cast<int>(rng() % 5);
    auto ledger = ledger_of(static_cast<int>(rng() % 64));

    int best = 0;
    for (int subset = 0; subset < (1 << n); ++subset) {
      if (std::popcount(static_cast<unsigned>(subset)) > budget) continue;
      int mask = 0;
      for (int i = 0; i < n; ++i)
        if (subset & (1 << i))
          for (auto e : pool[i].targets) mask |= 1 << index_of(e);
      best = std::max(best, std::popcount(static_cast<unsigned>(mask & ledger.unknown_mask())));
    }
    if (ledger.unknown_mask() == 0) {
      o.require(plan_inquiry(ledger, pool, budget).empty(), "nothing to ask when all Known");
      continue;
    }
    auto chosen = plan_inquiry(ledger, pool, budget);
    o.require(static_cast<int>(chosen.size()) <= budget, "plan exceeds budget");
    o.require(covered_unknown(ledger, chosen) == best, "pool " + std::to_string(p) + ": plan covers " +
                                                           std::to_string(covered_unknown(ledger, chosen)) +
                                                           ", exhaustive " + std::to_string(best));
    if (covered_unknown(ledger, greedy_plan(ledger, pool, budget)) < best) ++greedy_short;
  }
  double secs = seconds_since(t0);
  o.require(secs < kPlannerBudgetSeconds, "runtime over budget");
  if (o.pass) {
    std::ostringstream d;
    d << kPlannerPools << " pools match exhaustive search (plain greedy alone fell short on " << greedy_short
      << "), " << secs << " s";
    o.detail = d.str();
  }
  return o;
}

// ---------------------------------------------------------------- 4

Outcome safety_fixpoint() {
  Outcome o;
  auto res = bt::fixture_resources();
  const auto& guard = res->guard;
  Engine policy_engine([&] {
    EngineDeps d;
    d.resources = res;
    return d;
  }());
  int checked = 0;

  auto corpus = read_json_file(bt::fixture_path("safety/violation_corpus.json"));
  o.require(corpus.at("cases").size() == 50, "seeded corpus must have 50 cases");
  for (const auto& c : corpus.at("cases")) {
    auto policy = policy_engine.policy_for(scenario_from(c.at("scenario").get<std::string>()));
    safety::SafetyContext ctx{c["context"]["conservative"].get<bool>(), c["context"]["safeguard"].get<bool>(),
                              c["context"]["worsening"].get<bool>(), {}};
    auto out = guard.enforce(c.at("reply").get<std::string>(), policy, ctx);
    o.require(guard.check(out.text, policy, ctx).passed(), "seeded case " + c.at("id").get<std::string>());
    ++checked;
  }

  std::mt19937 rng(2025);
  std::bernoulli_distribution coin(0.3);
  int idempotent = 0;
  for (int i = 0; i < kGeneratedReplies && o.pass; ++i) {
    auto reply = bt::adversarial_reply(rng);
    auto s = kAllScenarios[rng() % kAllScenarios.size()];
    auto policy = policy_engine.policy_for(s);
    safety::SafetyContext ctx{coin(rng), coin(rng), coin(rng), {}};
    auto out = guard.enforce(reply, policy, ctx);
    o.require(guard.check(out.text, policy, ctx).passed(), "generated reply " + std::to_string(i));
    ++checked;
    // The enforced text is compliant, so a second pass must not touch it.
    auto again = guard.enforce(out.text, policy, ctx);
    o.require(again.text == out.text && again.applied_fixes.empty(), "enforce not idempotent on reply " +
                                                                         std::to_string(i));
    if (guard.check(reply, policy, ctx).passed()) {
      o.require(guard.enforce(reply, policy, ctx).text == reply, "compliant input altered");
      ++idempotent;
    }
  }

  // Full pipeline with the scripted model.
  const std::vector<std::pair<ScenarioId, std::vector<std::string>>> conversations = {
      {ScenarioId::MildDiscomfort, {"I have a headache and cold hands", "It started last week, dull, I feel thirsty",
                                    "Please continue", "What should I eat?"}},
      {ScenarioId::MildDiscomfort, {"我头痛，怕冷", "不想回答了，直接告诉我吧"}},
      {ScenarioId::MildDiscomfort, {"I am pregnant and my back aches", "It is getting worse"}},
      {ScenarioId::ConstitutionTongue, {"What is my constitution? I tire easily and feel cold",
                                        "My tongue looks pale and swollen", "Just tell me"}},
      {ScenarioId::SeasonalWellness, {"What foods suit the autumn season?", "How should I sleep in winter?"}},
      {ScenarioId::SeasonalWellness, {"我的孩子秋天应该吃什么？"}},
  };
  int pipeline_replies = 0;
  for (int variant = 0; variant < 2; ++variant) {
    for (const auto& [scenario, turns] : conversations) {
      auto model = std::make_shared<bt::SimulatedModel>(res);
      model->prescribe_once = variant == 1;
      model->always_diagnose = variant == 1;
      model->routing_answer = scenario;
      gateway::ProviderConfig cfg;
      cfg.endpoint = "http://scripted.invalid/v1/chat/completions";
      cfg.max_retries = 0;
      EngineDeps d;
      d.resources = res;
      d.clock = std::make_shared<SteppingClock>();
      d.gateway = std::make_shared<gateway::Gateway>(cfg, bt::simulated_provider(model),
                                                     [](std::chrono::milliseconds) {});
      Engine engine(d);
      auto state = apply({}, engine.created_event("s-pipe", scenario));
      for (const auto& t : turns) {
        auto out = engine.run_turn(state, {t, std::nullopt});
        state = out.state;
        // The applied scenario, after stickiness; the raw routing may differ.
        if (!state.scenario || *state.scenario == ScenarioId::TheoryLearning) continue;
        auto s = *state.scenario;
        auto disclaimer = guard.disclaimer_for(out.policy, out.safety_context);
        o.require(disclaimer.has_value(), "no disclaimer configured for " + std::string(to_string(s)));
        if (!disclaimer) continue;
        const auto& r = out.reply.text;
        o.require(r.find(disclaimer->en) != std::string::npos || r.find(disclaimer->zh) != std::string::npos,
                  std::string(to_string(s)) + " reply lacks its disclaimer: " + out.reply.text);
        o.require(guard.check(out.reply.text, out.policy, out.safety_context).passed(), "pipeline reply fails check");
        ++pipeline_replies;
      }
    }
  }
  if (o.pass) {
    std::ostringstream d;
    d << checked << " enforced replies pass check, " << idempotent << " compliant inputs unchanged, "
      << pipeline_replies << " pipeline replies carry the exact disclaimer";
    o.detail = d.str();
  }
  return o;
}

// ---------------------------------------------------------------- 5

Outcome eval_oracle() {
  Outcome o;
  auto items = eval::load_benchmark(bt::data_path("eval/demo_bench.jsonl"));
  o.require(items.size() == 40, "fixture must have 40 items");
  std::vector<eval::EvalItem> sorted = items;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.item_id < b.item_id; });

  // Every fourth item (by id) is answered wrongly. Some items share a stem,
  // so a request is matched on the stem plus all of its options.
  struct Scripted {
    std::vector<std::string> needles;
    std::string reply;
  };
  auto escaped = [](const std::string& s) {
    auto d = json(s).dump();
    return d.substr(1, d.size() - 2);
  };
  std::vector<Scripted> script;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    int n = static_cast<int>(sorted[i].options.size());
    int choice = i % 4 == 3 ? (sorted[i].gold + 1) % n : sorted[i].gold;
    Scripted sc{{escaped(sorted[i].stem)}, std::string("Answer: ") + static_cast<char>('A' + choice)};
    for (const auto& opt : sorted[i].options) sc.needles.push_back(escaped(opt));
    script.push_back(std::move(sc));
  }
  auto provider = std::make_shared<gateway::ScriptedProvider>();
  provider->add_rule([script](const json& request) -> std::optional<std::string> {
    auto body = request.dump();
    const Scripted* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& sc : script) {
      std::size_t len = 0;
      bool all = true;
      for (const auto& n : sc.needles) {
        all = all && body.find(n) != std::string::npos;
        len += n.size();
      }
      if (all && len > best_len) {
        best = &sc;
        best_len = len;
      }
    }
    if (!best) return std::nullopt;
    return gateway::ScriptedProvider::reply_body(best->reply);
  });
  gateway::ProviderConfig cfg;
  cfg.endpoint = "http://scripted.invalid/v1/chat/completions";
  cfg.max_retries = 0;
  gateway::Gateway gw(cfg, provider, [](std::chrono::milliseconds) {});
  bt::TempDir dir;
  eval::RunOptions opts;
  opts.model_label = "pattern-75";
  opts.out_dir = dir.path();
  opts.run_id = "acceptance";
  opts.parallel = 4;
  opts.clock = std::make_shared<SteppingClock>();
  auto report = eval::score(eval::run_eval(items, gw, opts), items);
  o.require(report.overall.accuracy() == Rational(3, 4),
            "overall accuracy " + report.overall.accuracy().to_string() + ", want 3/4");

  // Brute-force counter over random runs.
  std::mt19937 rng(99);
  for (int r = 0; r < kRandomEvalRuns && o.pass; ++r) {
    eval::EvalRun run;
    run.run_id = "r" + std::to_string(r);
    for (const auto& it : items) {
      run.item_ids.push_back(it.item_id);
      int pick = static_cast<int>(rng() % (it.options.size() + 1)) - 1;
      run.predictions[it.item_id] = {pick < 0 ? std::nullopt : std::optional<int>(pick), "raw"};
    }
    std::sort(run.item_ids.begin(), run.item_ids.end());
    std::map<std::string, std::pair<long, long>> cat;
    std::map<eval::EvalTask, std::pair<long, long>> task;
    long correct = 0, unparseable = 0;
    for (const auto& it : items) {
      const auto& p = run.predictions[it.item_id];
      bool ok = p.choice && *p.choice == it.gold;
      correct += ok;
      unparseable += !p.choice;
      task[it.task].first += ok;
      task[it.task].second += 1;
      if (it.task == eval::EvalTask::SingleChoice) {
        cat[it.category].first += ok;
        cat[it.category].second += 1;
      }
    }
    auto got = eval::score(run, items);
    o.require(got.overall.correct == correct && got.overall.total == static_cast<long>(items.size()),
              "overall mismatch on run " + std::to_string(r));
    o.require(got.unparseable == unparseable, "unparseable mismatch");
    o.require(got.per_category.size() == cat.size() && got.per_task.size() == task.size(), "group count mismatch");
    for (const auto& [k, v] : cat)
      o.require(got.per_category.count(k) && got.per_category.at(k).correct == v.first &&
                    got.per_category.at(k).total == v.second,
                "category " + k + " mismatch");
    for (const auto& [k, v] : task)
      o.require(got.per_task.count(k) && got.per_task.at(k).correct == v.first && got.per_task.at(k).total == v.second,
                "task mismatch");
  }

  auto table = eval::Comparison::load(bt::data_path("eval/reference_figures.json")).render_table();
  for (const char* row : {"| BenCao | 82.18 | 63.42 |", "| Gemini 2.5 Pro | 77.78 | 54.15 |", "| Qwen3 | n/a | 57.86 |",
                          "| GPT-4o | n/a | 52.90 |"})
    o.require(table.find(row) != std::string::npos, std::string("reference table lacks ") + row);
  if (o.pass)
    o.detail = "40-item run scores exactly 3/4, " + std::to_string(kRandomEvalRuns) +
               " random runs match the counter, reference figures verbatim";
  return o;
}

// ---------------------------------------------------------------- 6

std::string random_document(std::mt19937& rng, int i) {
  static const std::vector<std::string> words = {"Yin", "Yang", "Qi", "Blood", "spleen", "阴阳", "气血", "notes"};
  std::string out;
  int lines = 1 + static_cast<int>(rng() % 10);
  for (int l = 0; l < lines; ++l) {
    switch (rng() % 6) {
      case 0: out += "PREFACE\nthanks to everyone\nEND-PREFACE\n"; break;
      case 1: out += "\n\n \t \n"; break;
      case 2: out += "  leading and trailing  \t\n"; break;
      default: break;
    }
    int n = static_cast<int>(rng() % 7);
    for (int w = 0; w < n; ++w) out += words[rng() % words.size()] + ((w % 2) ? "\t " : " ");
    out += "line\r\n";
  }
  return out + "document " + std::to_string(i) + "\n";
}

Outcome corpus_routing() {
  Outcome o;
  auto patterns = corpus::strip_patterns_from_json(read_json_file(bt::data_path("corpus/strip_patterns.json")));
  bt::TempDir out;
  corpus::run_ingest(bt::data_path("corpus/fixture/manifest.json"), out.path(), std::nullopt, patterns);
  auto kb = corpus::load_knowledge_base(out.path());
  auto theory = corpus::route_category(kb->registry, "FundamentalTheory");
  auto tongue = corpus::route_category(kb->registry, "TongueDiagnosis");
  o.require(theory.size() == 1 && kb->title_of(theory[0]) == "Huangdi Neijing", "FundamentalTheory routing");
  o.require(tongue.size() == 1 && kb->title_of(tongue[0]) == "Atlas of TCM Tongue Diagnosis", "TongueDiagnosis routing");
  o.require(!kb->registry.entries.empty() && kb->registry.entries[0].doc_id == theory.front(), "attachment 1");
  o.require(kb->registry.entries.size() > 1 && kb->registry.entries[1].doc_id == tongue.front(), "attachment 2");

  std::mt19937 rng(11);
  for (int trial = 0; trial < 25 && o.pass; ++trial) {
    std::vector<corpus::KnowledgeDoc> docs;
    for (int i = 0; i < kPropertyDocs; ++i) {
      auto d = corpus::ingest_document(random_document(rng, i), "doc " + std::to_string(i),
                                       {"tag" + std::to_string(rng() % 5)}, patterns);
      auto again = corpus::ingest_document(d.body, d.title, d.category_tags, patterns);
      o.require(again.body == d.body, "cleaning not idempotent for doc " + std::to_string(i));
      docs.push_back(d);
    }
    std::multiset<std::string> before, after;
    for (const auto& d : docs)
      for (const auto& l : text::split_lines(d.body)) before.insert(l);
    auto reg = corpus::merge_documents(docs, 5 + rng() % 10);
    for (const auto& e : reg.entries)
      for (const auto& l : text::split_lines(reg.doc(e.doc_id).body))
        if (!corpus::is_separator_line(l)) after.insert(l);
    o.require(before == after, "merge lost or duplicated content");
    for (const auto& d : docs)
      o.require(!corpus::route_category(reg, d.category_tags.front()).empty(), "tag without routing");
  }
  if (o.pass) o.detail = "theory -> Huangdi Neijing, tongue -> Atlas; idempotence and merge preservation on 25x20 docs";
  return o;
}

// ---------------------------------------------------------------- 7

Outcome replay_determinism() {
  Outcome o;
  auto fixtures = bt::all_fixtures();
  o.require(fixtures.size() >= kMinFixtures, "fewer than 10 fixture sessions");
  std::set<ScenarioId> scenarios;
  bool safeguard = false, conservative = false;
  for (const auto& f : fixtures) {
    for (const auto& p : bt::check_fixture(f)) o.require(false, f.name + ": " + p);
    auto s = bt::read_fixture_snapshot(f);
    for (const auto& e : bt::read_fixture_events(f))
      if (e.kind == EventKind::UserTurn && e.payload.contains("routing"))
        scenarios.insert(scenario_from(e.payload["routing"]["scenario"].get<std::string>()));
    safeguard = safeguard || s.safeguard.has_value();
    conservative = conservative || s.mode == ModeKind::ConservativeCompliant;
  }
  o.require(scenarios.size() == 4, "fixtures do not cover all four scenarios");
  o.require(safeguard, "no safeguard fixture");
  o.require(conservative, "no conservative-mode fixture");
  if (o.pass)
    o.detail = std::to_string(fixtures.size()) + " fixtures replay to their snapshots and rerun byte-identically";
  return o;
}

}  // namespace

int main() {
  auto t0 = Clock_::now();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"termination-exhaustiveness", termination_exhaustiveness},
      {"threshold-exactness", threshold_exactness},
      {"planner-optimality", planner_optimality},
      {"safety-fixpoint", safety_fixpoint},
      {"eval-oracle-equivalence", eval_oracle},
      {"corpus-routing", corpus_routing},
      {"replay-determinism", replay_determinism},
  };
  bool all = true;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  // Everything above used scripted providers, in-process tools and temp
  // directories only.
  double secs = seconds_since(t0);
  bool offline_ok = all && secs < kSuiteBudgetSeconds;
  std::ostringstream d;
  d << "scripted providers only, acceptance run " << secs << " s (budget " << kSuiteBudgetSeconds
    << " s; ctest enforces the same limit per test)";
  std::cout << (offline_ok ? "PASS " : "FAIL ") << "offline-and-fast: " << d.str() << std::endl;
  return all && offline_ok ? 0 : 1;
}
