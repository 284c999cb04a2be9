#pragma once

// The teleoperation loop for one trial: world, mode, pause detection, manual
// corrections, learning hooks and event logging. Model calls are handed out
// as jobs so the caller decides whether they run inline or on another thread.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lams/core_model.hpp"
#include "lams/event_log.hpp"
#include "lams/learning.hpp"
#include "lams/llm_gateway.hpp"
#include "lams/mode_switcher.hpp"
#include "lams/simulator.hpp"

namespace lams {

/// Learning stores shared by every trial (or session) of one run.
struct LearningHandle {
  explicit LearningHandle(TaskKind task, std::string path = {}) : store(task), path(std::move(path)) {}

  std::mutex mutex;
  LearningStore store;
  std::string path;  // written after each mutation when nonempty

  void persist() const {
    if (!path.empty()) store.save(path);
  }
};

struct EngineConfig {
  TaskKind task = TaskKind::WaterPouring;
  StrategyKind strategy = StrategyKind::Lams;
  std::uint64_t layout_seed = 0;
  std::uint64_t seed = 0;  // prompt and rule shuffles
  int trial = 1;
  SimConfig sim;
  VelocityProfile velocity;
  SessionClock clock;
  double debounce_seconds = kDebounceSeconds;
  std::string heuristic_dir;  // needed by the heuristic strategy

  [[nodiscard]] std::int64_t debounce_ticks() const;
  [[nodiscard]] PoseEncoding encoding() const noexcept {
    return strategy == StrategyKind::NumState ? PoseEncoding::Numeric : PoseEncoding::Language;
  }
};

void to_json(nlohmann::json& j, const EngineConfig& c);
void from_json(const nlohmann::json& j, EngineConfig& c);

class WrongStrategy : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class SessionClosed : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class SlotHighlight : std::uint8_t { None, Auto, Manual };
std::string_view to_string(SlotHighlight h) noexcept;

struct LlmJob {
  std::uint64_t id = 0;
  CompletionRequest request;
};

class TeleopEngine {
 public:
  using TimeSource = std::function<double(std::int64_t tick)>;

  TeleopEngine(EngineConfig cfg, std::shared_ptr<LearningHandle> learning, EventLog& log, TimeSource time = {});

  /// Logs the trial start and sets the initial mode (the first model call for
  /// model-driven strategies).
  void begin();
  /// One control tick with joystick sample `u`.
  void tick(const UserAction& u);
  /// D-pad press: cycles `slot` to the next direction of its group.
  void manual_press(DirectionGroup slot);
  /// Cycling-button press; only for the grouped strategy.
  void grouped_cycle();
  /// Finalizes a pending correction without waiting for the window.
  void settle();
  void end(const std::string& failure = {});

  std::vector<LlmJob> take_jobs();
  void finish_job(std::uint64_t id, const CompletionResult& result);
  void fail_job(std::uint64_t id, const std::string& error);

  [[nodiscard]] const EngineConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const WorldState& world() const noexcept { return world_; }
  [[nodiscard]] const ModeMapping& mode() const noexcept { return mode_; }
  [[nodiscard]] int manual_switches() const noexcept { return manual_switches_; }
  [[nodiscard]] const std::array<int, 4>& slot_switches() const noexcept { return slot_switches_; }
  [[nodiscard]] int auto_switches() const noexcept { return auto_switches_; }
  [[nodiscard]] const TaskProgress& progress() const noexcept { return progress_; }
  [[nodiscard]] bool ended() const noexcept { return ended_; }
  [[nodiscard]] bool switch_pending() const noexcept { return switch_job_.has_value(); }
  [[nodiscard]] bool degraded() const noexcept { return degraded_; }
  [[nodiscard]] int grouped_index() const noexcept { return grouped_.index; }
  [[nodiscard]] const std::array<SlotHighlight, 4>& highlights() const noexcept { return highlights_; }
  /// Returns the highlights accumulated since the last call and clears them.
  std::array<SlotHighlight, 4> take_highlights();
  [[nodiscard]] const std::shared_ptr<LearningHandle>& learning() const noexcept { return learning_; }
  [[nodiscard]] double now() const { return time_(world_.tick); }

 private:
  struct PendingJob {
    CompletionRole role = CompletionRole::ModeSwitch;
    CompletionRequest request;
    int switch_index = 0;
    std::string trigger;
    SlotArray last_executed{};
  };

  void log(std::string_view kind, nlohmann::json fields);
  void require_live() const;
  void request_switch(const std::string& trigger);
  std::string guidance(int switch_index);
  void apply_auto(const SwitchOutcome& out, const PendingJob* job, const std::string& trigger);
  void finalize(const SwitchDebouncer::Finalized& f);

  EngineConfig cfg_;
  std::shared_ptr<LearningHandle> learning_;
  EventLog& log_;
  TimeSource time_;

  WorldState world_;
  ModeMapping mode_;
  SwitchContext ctx_;
  PauseDetector pause_;
  SwitchDebouncer debouncer_;
  GroupedState grouped_;
  std::optional<HeuristicPhaseTable> heuristics_;
  HeuristicState heuristic_state_;
  TaskProgress progress_;

  int manual_switches_ = 0;
  std::array<int, 4> slot_switches_{};
  int auto_switches_ = 0;
  int switch_index_ = 0;
  bool degraded_ = false;
  bool begun_ = false;
  bool ended_ = false;
  std::array<SlotHighlight, 4> highlights_{};
  std::array<bool, 4> stale_{};
  std::vector<ActionDirection> last_driven_;

  std::uint64_t next_job_ = 1;
  std::map<std::uint64_t, PendingJob> jobs_;
  std::vector<LlmJob> outbox_;
  std::optional<std::uint64_t> switch_job_;
};

/// Runs every queued job inline through `gateway`, including jobs queued by
/// completions. Returns how many ran.
std::size_t drain_jobs(TeleopEngine& engine, const Gateway& gateway);

/// State rebuilt from a trial's event log alone.
struct ReplayState {
  WorldState world;
  ModeMapping mode;
  int manual_switches = 0;
  int auto_switches = 0;
  bool degraded = false;
  int grouped_index = 1;
  bool ended = false;
};

class IncompleteLog : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Re-simulates a trial from its log, checking every recorded world snapshot.
ReplayState replay_log(const std::vector<nlohmann::json>& records);

}  // namespace lams
