#pragma once

// Example and rule stores behind the incremental-improvement loop: manual
// corrections become examples, examples become rules via a second model role.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lams/core_model.hpp"
#include "lams/grounding.hpp"
#include "lams/llm_gateway.hpp"
#include "lams/simulator.hpp"

namespace lams {

/// Manual presses on one slot within this many seconds form one correction.
inline constexpr double kDebounceSeconds = 2.0;

/// Mixes values into a 64-bit seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept;

/// Fisher-Yates permutation of 0..n-1, identical on every platform.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

struct ManualSwitchEvent {
  std::int64_t tick = 0;
  DirectionGroup slot = DirectionGroup::Up;
  ActionDirection old_direction = ActionDirection::MoveForward;
  ActionDirection new_direction = ActionDirection::MoveForward;
  int press_count = 0;
};

void to_json(nlohmann::json& j, const ManualSwitchEvent& e);

struct ExampleRecord {
  std::int64_t tick = 0;
  DirectionGroup slot = DirectionGroup::Up;
  ActionDirection chosen = ActionDirection::MoveForward;
  WorldState world;  // state the correction was made in
};

void to_json(nlohmann::json& j, const ExampleRecord& e);
void from_json(const nlohmann::json& j, ExampleRecord& e);

/// One example in the correction-example layout, numbered `index`.
std::string render_example(const ExampleRecord& e, std::size_t index, PoseEncoding enc = PoseEncoding::Language);

/// All examples in a seeded shuffled order, numbered from 0.
std::string render_examples(const std::vector<ExampleRecord>& examples, std::uint64_t seed,
                            PoseEncoding enc = PoseEncoding::Language);

struct Rule {
  std::string text;
  int origin = 0;  // generation batch

  friend bool operator==(const Rule&, const Rule&) = default;
};

void to_json(nlohmann::json& j, const Rule& r);
void from_json(const nlohmann::json& j, Rule& r);

/// Splits a rule-generation completion into top-level numbered or bulleted
/// items; indented lines stay with their item.
std::vector<std::string> parse_rules(const std::string& completion);

/// Rules under the rule-section preamble in a seeded shuffled order; empty
/// input gives an empty string.
std::string compose_rule_section(const std::vector<Rule>& rules, std::uint64_t seed);

/// Raw examples section used by the example-prompting ablation.
std::string compose_example_section(const std::vector<ExampleRecord>& examples, std::uint64_t seed,
                                    PoseEncoding enc = PoseEncoding::Language);

/// Rule-generation prompt over a shuffled copy of `examples`.
CompletionRequest make_rule_request(const std::vector<ExampleRecord>& examples, std::uint64_t seed,
                                    PoseEncoding enc = PoseEncoding::Language);

class LearningStore {
 public:
  explicit LearningStore(TaskKind task = TaskKind::WaterPouring) : task_(task) {}

  [[nodiscard]] TaskKind task() const noexcept { return task_; }
  [[nodiscard]] const std::vector<ExampleRecord>& examples() const noexcept { return examples_; }
  [[nodiscard]] const std::vector<Rule>& rules() const noexcept { return rules_; }

  void add_example(ExampleRecord e);
  /// Appends a batch and returns its id.
  int append_rules(const std::vector<std::string>& texts);

  /// Empties both stores for `task`. When `archive_path` is given and the
  /// stores hold anything, their contents are written there first.
  void reset_for_task(TaskKind task, const std::string& archive_path = {});

  void save(const std::string& path) const;
  static LearningStore load(const std::string& path);

  friend void to_json(nlohmann::json& j, const LearningStore& s);
  friend void from_json(const nlohmann::json& j, LearningStore& s);

 private:
  TaskKind task_;
  std::vector<ExampleRecord> examples_;
  std::vector<Rule> rules_;
  int batches_ = 0;
};

/// One rule-generation call; appends parsed rules and returns how many were
/// added. Gateway failures leave the store unchanged and return nullopt.
std::optional<std::size_t> synthesize_rules(LearningStore& store, const Gateway& gateway, std::uint64_t seed,
                                            PoseEncoding enc = PoseEncoding::Language);

/// Coalesces consecutive presses on a slot into one correction.
class SwitchDebouncer {
 public:
  struct Finalized {
    ManualSwitchEvent event;
    WorldState world;  // state at the first press
  };

  explicit SwitchDebouncer(std::int64_t window_ticks) : window_(window_ticks) {}

  /// A press; returns the previous correction if this press ends it.
  std::optional<Finalized> press(std::int64_t tick, DirectionGroup slot, ActionDirection old_direction,
                                 ActionDirection new_direction, const WorldState& world);
  /// A joystick sample; nonzero input ends the pending correction.
  std::optional<Finalized> input(const UserAction& u);
  /// Ends the pending correction once the window has passed since its last press.
  std::optional<Finalized> advance(std::int64_t tick);
  std::optional<Finalized> flush();

  [[nodiscard]] bool pending() const noexcept { return pending_.has_value(); }
  [[nodiscard]] std::optional<DirectionGroup> pending_slot() const noexcept;

 private:
  struct Pending {
    Finalized data;
    std::int64_t last_press = 0;
  };
  std::optional<Finalized> take();

  std::int64_t window_;
  std::optional<Pending> pending_;
};

}  // namespace lams
