#pragma once

// Headless evaluation: a scripted stand-in for the human operator, the trial
// and experiment runners, log-derived metrics, shadow replay and reports.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lams/engine.hpp"

namespace lams {

inline constexpr double kPositionTolerance = 0.005;  // m
inline constexpr double kAngleTolerance = 2.0;       // deg
inline constexpr std::int64_t kDefaultTickBudget = 20000;

/// One out-of-tolerance component of the operator's current goal.
struct Need {
  ActionDirection direction = ActionDirection::MoveForward;
  double error = 0.0;      // signed, in the component's units
  double magnitude = 1.0;  // joystick deflection that lands on the target
};

/// The operator's plan as a pure function of the world: every open need in
/// priority order, the first being the one acted on. Empty once the task is
/// complete.
std::vector<Need> plan_needs(const WorldState& w, const VelocityProfile& v = {}, const SimConfig& sim = {});

/// Perfect predictor: gives each open need its group, highest priority first;
/// groups without a need get their first letter.
DirectionAdvisor oracle_advisor(VelocityProfile v = {}, SimConfig sim = {});

/// Joystick sample that drives `d` at `magnitude`.
UserAction drive_input(ActionDirection d, double magnitude);

class PlanStuck : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct UserDecision {
  enum class Kind : std::uint8_t { Drive, Pause, ManualSwitch, GroupedCycle, Done };
  Kind kind = Kind::Done;
  UserAction input;
  DirectionGroup slot = DirectionGroup::Up;
  std::optional<ActionDirection> need;
};

struct ScriptedUserConfig {
  /// Idle ticks to wait for an automatic switch before pressing; negative
  /// means the pause window plus five ticks.
  int patience_ticks = -1;
  /// Ticks one need may stay open before the plan counts as stuck.
  std::int64_t stuck_ticks = 3000;
};

class ScriptedUser {
 public:
  ScriptedUser(StrategyKind strategy, VelocityProfile v = {}, SimConfig sim = {}, SessionClock clock = {},
               ScriptedUserConfig cfg = {});

  /// Decision for one tick. `auto_switches` is the engine's running count.
  UserDecision decide(const WorldState& w, const ModeMapping& mode, int auto_switches);

 private:
  StrategyKind strategy_;
  VelocityProfile v_;
  SimConfig sim_;
  int patience_;
  ScriptedUserConfig cfg_;
  std::optional<ActionDirection> paused_for_;
  int switches_at_pause_ = 0;
  int waited_ = 0;
  std::optional<ActionDirection> current_need_;
  std::int64_t need_since_ = 0;
};

struct RotationTally {
  int correct = 0;
  int required = 0;

  friend bool operator==(const RotationTally&, const RotationTally&) = default;
};

struct RotationAccuracy {
  RotationTally pitch, yaw, roll;

  friend bool operator==(const RotationAccuracy&, const RotationAccuracy&) = default;
};

struct TrialConfig {
  TaskKind task = TaskKind::WaterPouring;
  StrategyKind strategy = StrategyKind::Lams;
  std::uint64_t layout_seed = 0;
  std::uint64_t seed = 0;
  int trial = 1;
  std::int64_t max_ticks = kDefaultTickBudget;
  std::string log_path;  // JSONL output; empty keeps the log in memory only
  std::string heuristic_dir;
  ScriptedUserConfig user;
};

struct TrialResult {
  int trial = 1;
  TaskKind task = TaskKind::WaterPouring;
  StrategyKind strategy = StrategyKind::Lams;
  std::uint64_t layout_seed = 0;
  int manual_switch_count = 0;
  std::array<int, 4> slot_switches{};
  int false_gripper_mappings = 0;
  RotationAccuracy rotation;
  bool completed = false;
  std::int64_t completion_tick = 0;
  std::string failure;
  std::string log_path;
  std::vector<nlohmann::json> events;
};

void to_json(nlohmann::json& j, const TrialResult& r);

/// One trial against `gateway`. `learning` carries stores between trials.
TrialResult run_trial(const TrialConfig& cfg, const Gateway& gateway, std::shared_ptr<LearningHandle> learning);

struct ExperimentConfig {
  TaskKind task = TaskKind::WaterPouring;
  StrategyKind strategy = StrategyKind::Lams;
  int trials = 3;
  std::uint64_t seed = 0;
  std::int64_t max_ticks = kDefaultTickBudget;
  std::string out_dir;  // one JSONL log per trial when set
  std::string heuristic_dir;
  ScriptedUserConfig user;
};

/// Layout seed of trial `trial` (1-based) in an experiment seeded `seed`.
std::uint64_t trial_layout_seed(std::uint64_t seed, int trial) noexcept;

/// Consecutive trials with fresh layouts; learning stores persist across them
/// for strategies that keep examples.
std::vector<TrialResult> run_experiment(const ExperimentConfig& cfg, const Gateway& gateway);

// ---- metrics over one trial's log ----

int count_manual_switches(const std::vector<nlohmann::json>& log);
int count_false_gripper_mappings(const std::vector<nlohmann::json>& log);
RotationAccuracy rotation_accuracy(const std::vector<nlohmann::json>& log);

// ---- shadow replay ----

struct ShadowTrial {
  int trial = 1;
  int recorded = 0;
  int simulated = 0;
  int switch_points = 0;
};

/// Replays recorded trials (in order) under `variant`, counting the presses
/// the operator would have needed whenever a drive deviated from the
/// variant's mapping.
std::vector<ShadowTrial> shadow_replay(const std::vector<std::vector<nlohmann::json>>& trials, StrategyKind variant,
                                       const Gateway& gateway, const std::string& heuristic_dir = {});

// ---- reports ----

struct ReportRow {
  std::string file;
  TaskKind task = TaskKind::WaterPouring;
  StrategyKind strategy = StrategyKind::Lams;
  int trial = 1;
  std::uint64_t seed = 0;
  std::uint64_t layout_seed = 0;
  int manual_switches = 0;
  int false_gripper_mappings = 0;
  RotationAccuracy rotation;
  bool completed = false;
  std::int64_t ticks = 0;
};

ReportRow report_row(const std::vector<nlohmann::json>& trial_log, const std::string& file = {});
/// Rows for every trial of every *.jsonl file under `dir`, sorted by file name.
std::vector<ReportRow> collect_report(const std::string& dir);
std::string report_csv(const std::vector<ReportRow>& rows);
/// Mean manual switches per task, strategy and trial index.
std::string report_markdown(const std::vector<ReportRow>& rows);

}  // namespace lams
