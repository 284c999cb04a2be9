#include <filesystem>

#include "doctest.h"
#include "lams/engine.hpp"

using namespace lams;
using AD = ActionDirection;
namespace fs = std::filesystem;

namespace {

// Always proposes the same mapping with full confidence.
CompletionResult fixed_completion(const ModeMapping& m) {
  GroupDistributions d;
  for (auto g : kAllGroups) {
    d[static_cast<std::size_t>(g)].group = g;
    d[static_cast<std::size_t>(g)].probs[*m.slot(g)] = 1.0;
  }
  return synthesize_mode_completion(d);
}

EngineConfig config(StrategyKind s, TaskKind t = TaskKind::WaterPouring) {
  EngineConfig c;
  c.task = t;
  c.strategy = s;
  c.layout_seed = 4;
  c.seed = 9;
  c.heuristic_dir = std::string(LAMS_ASSET_DIR) + "/heuristics";
  return c;
}

const ModeMapping kTarget(AD::PitchUp, AD::CloseGripper, AD::RollLeft, AD::YawRight);

std::vector<nlohmann::json> of_kind(const EventLog& log, const std::string& kind) {
  std::vector<nlohmann::json> out;
  for (const auto& r : log.records())
    if (r.at("kind") == kind) out.push_back(r);
  return out;
}

}  // namespace

TEST_CASE("start switch is handed out as a job and applied on completion") {
  EventLog log;
  TeleopEngine e(config(StrategyKind::Lams), nullptr, log);
  e.begin();
  CHECK(e.switch_pending());
  auto jobs = e.take_jobs();
  REQUIRE(jobs.size() == 1);
  CHECK(jobs[0].request.role == CompletionRole::ModeSwitch);
  CHECK(e.mode() == grouped_mapping(1));
  e.finish_job(jobs[0].id, fixed_completion(kTarget));
  CHECK(e.mode() == kTarget);
  CHECK_FALSE(e.switch_pending());
  auto h = e.take_highlights();
  CHECK(h == std::array<SlotHighlight, 4>{SlotHighlight::Auto, SlotHighlight::Auto, SlotHighlight::Auto,
                                          SlotHighlight::Auto});
  CHECK(e.take_highlights() == std::array<SlotHighlight, 4>{});
  auto sw = of_kind(log, "auto_switch");
  REQUIRE(sw.size() == 1);
  CHECK(sw[0]["trigger"] == "start");
  CHECK(sw[0]["prompt"].get<std::string>().find("### Current Task") != std::string::npos);
  CHECK_THROWS_AS(e.finish_job(jobs[0].id, fixed_completion(kTarget)), std::invalid_argument);
}

TEST_CASE("pause triggers exactly one switch and only one call is in flight") {
  EventLog log;
  TeleopEngine e(config(StrategyKind::StaticLlm), nullptr, log);
  e.begin();
  auto start = e.take_jobs();
  for (int i = 0; i < 40; ++i) e.tick({});
  CHECK(e.take_jobs().empty());  // the start call is still pending
  e.finish_job(start[0].id, fixed_completion(kTarget));

  e.tick({0.0, 0.5});
  for (int i = 0; i < 14; ++i) e.tick({});
  CHECK(e.take_jobs().empty());
  e.tick({});
  auto jobs = e.take_jobs();
  REQUIRE(jobs.size() == 1);
  for (int i = 0; i < 30; ++i) e.tick({});
  CHECK(e.take_jobs().empty());
  CHECK(of_kind(log, "llm_request").back()["trigger"] == "pause");
}

TEST_CASE("manual press during a pending call makes that slot stale") {
  EventLog log;
  TeleopEngine e(config(StrategyKind::Lams), nullptr, log);
  e.begin();
  auto jobs = e.take_jobs();
  e.manual_press(DirectionGroup::Up);  // MoveForward -> MoveUp
  CHECK(e.mode().slot(DirectionGroup::Up) == AD::MoveUp);
  e.finish_job(jobs[0].id, fixed_completion(kTarget));
  CHECK(e.mode().slot(DirectionGroup::Up) == AD::MoveUp);
  CHECK(e.mode().slot(DirectionGroup::Down) == AD::CloseGripper);
  CHECK(e.mode().slot(DirectionGroup::Left) == AD::RollLeft);
  auto sw = of_kind(log, "auto_switch").back();
  CHECK(sw["stale"]["up"] == true);
  CHECK(sw["proposed"]["up"] == "pitch_up");
  CHECK(e.highlights()[0] == SlotHighlight::Manual);
  CHECK(e.manual_switches() == 1);
}

TEST_CASE("grouped cycle only on grouped sessions") {
  EventLog log;
  TeleopEngine lams(config(StrategyKind::Lams), nullptr, log);
  lams.begin();
  CHECK_THROWS_AS(lams.grouped_cycle(), WrongStrategy);

  EventLog glog;
  TeleopEngine g(config(StrategyKind::GroupedMapping), nullptr, glog);
  g.begin();
  CHECK(g.mode() == grouped_mapping(1));
  CHECK(g.take_jobs().empty());
  CHECK_THROWS_AS(g.manual_press(DirectionGroup::Up), WrongStrategy);
  g.grouped_cycle();
  CHECK(g.mode() == grouped_mapping(2));
  CHECK(g.manual_switches() == 1);
  for (auto h : g.highlights()) CHECK(h == SlotHighlight::Manual);
  for (int i = 0; i < 40; ++i) g.tick({});  // no pause-triggered calls
  CHECK(g.take_jobs().empty());
  g.end();
  CHECK_THROWS_AS(g.tick({}), SessionClosed);
}

TEST_CASE("finalized corrections feed examples and rule generation") {
  EventLog log;
  auto store = std::make_shared<LearningHandle>(TaskKind::WaterPouring);
  TeleopEngine e(config(StrategyKind::Lams), store, log);
  e.begin();
  e.finish_job(e.take_jobs()[0].id, fixed_completion(grouped_mapping(1)));

  e.manual_press(DirectionGroup::Left);
  e.manual_press(DirectionGroup::Left);
  CHECK(store->store.examples().empty());
  e.tick({-1.0, 0.0});  // driving ends the correction
  REQUIRE(store->store.examples().size() == 1);
  CHECK(store->store.examples()[0].chosen == AD::YawLeft);
  auto ex = of_kind(log, "example");
  REQUIRE(ex.size() == 1);
  CHECK(ex[0]["press_count"] == 2);
  CHECK(e.manual_switches() == 2);

  auto jobs = e.take_jobs();
  REQUIRE(jobs.size() == 1);
  CHECK(jobs[0].request.role == CompletionRole::RuleGeneration);
  CHECK(jobs[0].request.prompt.find("\"Group 3\": \"C: Yaw left\"") != std::string::npos);
  e.finish_job(jobs[0].id, synthesize_text_completion("1. Rule alpha.\n2. Rule beta."));
  CHECK(store->store.rules().size() == 2);

  // The next prompt carries both rules.
  e.tick({1.0, 0.0});
  for (int i = 0; i < 15; ++i) e.tick({});
  jobs = e.take_jobs();
  REQUIRE(jobs.size() == 1);
  CHECK(jobs[0].request.prompt.find("Rule alpha.") != std::string::npos);
  CHECK(jobs[0].request.prompt.find("Rule beta.") != std::string::npos);

  // Window expiry also finalizes, on the first tick after 20 idle ones.
  e.manual_press(DirectionGroup::Up);
  for (int i = 0; i < 20; ++i) e.tick({});
  CHECK(store->store.examples().size() == 1);
  e.tick({});
  CHECK(store->store.examples().size() == 2);
}

TEST_CASE("static strategy keeps no examples") {
  EventLog log;
  auto store = std::make_shared<LearningHandle>(TaskKind::WaterPouring);
  TeleopEngine e(config(StrategyKind::StaticLlm), store, log);
  e.begin();
  e.manual_press(DirectionGroup::Right);
  e.tick({1.0, 0.0});
  CHECK(store->store.examples().empty());
}

TEST_CASE("failed calls leave the mode and flag degraded") {
  EventLog log;
  TeleopEngine e(config(StrategyKind::Lams), nullptr, log);
  e.begin();
  e.fail_job(e.take_jobs()[0].id, "timeout: no answer");
  CHECK(e.degraded());
  CHECK(e.mode() == grouped_mapping(1));
  CHECK(of_kind(log, "error").size() == 1);
  CHECK(of_kind(log, "auto_switch").back()["degraded"] == true);

  // A garbled completion degrades the same way.
  e.tick({0.0, 1.0});
  for (int i = 0; i < 15; ++i) e.tick({});
  e.finish_job(e.take_jobs()[0].id, synthesize_text_completion("no letters here"));
  CHECK(e.degraded());
  CHECK(e.mode() == grouped_mapping(1));
}

TEST_CASE("heuristic engine switches on grasp") {
  EventLog log;
  TeleopEngine e(config(StrategyKind::Heuristic), nullptr, log);
  e.begin();
  auto table = load_heuristic_table(TaskKind::WaterPouring, config(StrategyKind::Heuristic).heuristic_dir);
  CHECK(e.mode() == table.phases[0].mapping);
  CHECK(of_kind(log, "auto_switch").size() == 1);
}

TEST_CASE("log replay reproduces the live state and detects tampering") {
  EventLog log;
  TeleopEngine e(config(StrategyKind::Lams, TaskKind::BookStorage), nullptr, log);
  e.begin();
  e.finish_job(e.take_jobs()[0].id, fixed_completion(kTarget));
  e.tick({0.0, 1.0});
  e.tick({0.0, 1.0});
  e.manual_press(DirectionGroup::Right);
  e.tick({0.7, 0.0});
  e.tick({0.7, -0.3});
  e.end();
  auto s = replay_log(log.records());
  CHECK(s.world == e.world());
  CHECK(s.mode == e.mode());
  CHECK(s.manual_switches == 1);
  CHECK(s.ended);

  auto records = log.records();
  for (auto& r : records)
    if (r["kind"] == "input") {
      r["longitudinal"] = 0.5;
      break;
    }
  CHECK_THROWS_AS(replay_log(records), IncompleteLog);
  CHECK_THROWS_AS(replay_log({}), IncompleteLog);

  auto text = log.to_jsonl();
  CHECK(parse_event_log(text) == log.records());
}

TEST_CASE("event log invariants") {
  auto path = fs::temp_directory_path() / "lams_event_log_test.jsonl";
  fs::remove(path);
  {
    EventLog log(path.string());
    log.append("a", 0, 0.0);
    log.append("b", 1, 0.1, {{"x", 1}});
    CHECK_THROWS(log.append("c", 2, 0.05));
    CHECK_THROWS(log.append("c", 2, 0.2, nlohmann::json::array()));
    CHECK(log.records()[1]["seq"] == 1);
    CHECK(log.records()[1]["v"] == kEventSchemaVersion);
  }
  auto back = read_event_log(path.string());
  REQUIRE(back.size() == 2);
  CHECK(back[1]["x"] == 1);
  CHECK_THROWS(parse_event_log("{\"v\": 99}\n"));
  CHECK_THROWS(split_trials(back));
  fs::remove(path);
}

TEST_CASE("engine config json round trip") {
  auto c = config(StrategyKind::NumState, TaskKind::BookStorage);
  c.debounce_seconds = 1.0;
  auto back = nlohmann::json(c).get<EngineConfig>();
  CHECK(back.strategy == StrategyKind::NumState);
  CHECK(back.task == TaskKind::BookStorage);
  CHECK(back.debounce_ticks() == 10);
  CHECK(back.encoding() == PoseEncoding::Numeric);
  c.debounce_seconds = 0.01;
  CHECK_THROWS(c.debounce_ticks());
}
