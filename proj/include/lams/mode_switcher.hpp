#pragma once

// Turns group distributions into a mode mapping, and the non-learning
// switching strategies (grouped cycling, heuristic phase tables).

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lams/core_model.hpp"
#include "lams/grounding.hpp"
#include "lams/llm_gateway.hpp"
#include "lams/simulator.hpp"

namespace lams {

/// Second-best fallback threshold; the runner-up must strictly exceed it.
inline constexpr double kFallbackThreshold = 0.2;

enum class StrategyKind : std::uint8_t {
  Lams,
  StaticLlm,
  TopAction,
  DirectExamples,
  NumState,
  GroupedMapping,
  Heuristic,
};

inline constexpr std::array<StrategyKind, 7> kAllStrategies = {
    StrategyKind::Lams,      StrategyKind::StaticLlm,      StrategyKind::TopAction, StrategyKind::DirectExamples,
    StrategyKind::NumState,  StrategyKind::GroupedMapping, StrategyKind::Heuristic};

std::string_view to_string(StrategyKind s) noexcept;
StrategyKind parse_strategy(std::string_view s);

bool uses_llm(StrategyKind s) noexcept;
/// Strategies whose prompt carries synthesized rules.
bool uses_rules(StrategyKind s) noexcept;
/// Strategies that keep an example store at all.
bool keeps_examples(StrategyKind s) noexcept;
PromptMode prompt_mode(StrategyKind s);

using SlotArray = std::array<std::optional<ActionDirection>, 4>;

struct SwitchContext {
  SlotArray last_executed{};  // per group, most recent driven direction
  ModeMapping current_mode;
  double threshold = kFallbackThreshold;

  void note_driven(ActionDirection d) noexcept { last_executed[static_cast<std::size_t>(group_of(d))] = d; }
  void clear_executed() noexcept { last_executed = {}; }
};

class EmptyDistribution : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

ActionDirection select_direction(const GroupDistribution& dist, const SwitchContext& ctx);

struct ProvenanceRecord {
  StrategyKind strategy = StrategyKind::Lams;
  std::string prompt;
  std::string completion;
  std::optional<GroupDistributions> distributions;
  ModeMapping before;
  ModeMapping after;
  std::array<bool, 4> changed{};
  bool degraded = false;
  std::string error;
};

void to_json(nlohmann::json& j, const ProvenanceRecord& p);

struct SwitchOutcome {
  ModeMapping mapping;
  ProvenanceRecord provenance;
};

/// Prompt and request for one mode-switch call. `guidance` is the rule or
/// example section for the strategy.
CompletionRequest make_switch_request(StrategyKind s, const WorldState& world, const std::string& guidance);

/// Mapping from a completion. Throws GatewayError when it cannot be read.
SwitchOutcome resolve_switch(StrategyKind s, const SwitchContext& ctx, const CompletionRequest& request,
                             const CompletionResult& result);

/// Mapping kept unchanged after a failed call.
SwitchOutcome degraded_switch(StrategyKind s, const SwitchContext& ctx, const CompletionRequest& request,
                              const std::string& error);

/// One full call: request, gateway, resolution, with errors folded into a
/// degraded outcome. Grouped and heuristic strategies keep the current mode.
SwitchOutcome switch_modes(StrategyKind s, const WorldState& world, const SwitchContext& ctx, const Gateway& gateway,
                           const std::string& guidance);

// ---- grouped cycling ----

inline constexpr int kGroupCount = 4;

/// Fixed mapping of cycling group `index` (1..4).
ModeMapping grouped_mapping(int index);

struct GroupedState {
  int index = 1;
};

GroupedState grouped_cycle(GroupedState s) noexcept;
/// Group index whose table binds `d`.
int grouped_index_of(ActionDirection d) noexcept;

// ---- heuristic phases ----

enum class TriggerKind : std::uint8_t { Always, Grasp, Release };

struct KinematicEvent {
  TriggerKind kind = TriggerKind::Grasp;
  ObjectKind object = ObjectKind::Bottle;

  friend bool operator==(const KinematicEvent&, const KinematicEvent&) = default;
};

/// Grasp and release events between two consecutive world states.
std::vector<KinematicEvent> kinematic_events(const WorldState& before, const WorldState& after);

struct HeuristicPhase {
  std::string name;
  TriggerKind trigger = TriggerKind::Always;
  std::optional<ObjectKind> object;
  ModeMapping mapping;
};

struct HeuristicPhaseTable {
  TaskKind task = TaskKind::WaterPouring;
  std::vector<HeuristicPhase> phases;

  void validate() const;
};

void from_json(const nlohmann::json& j, HeuristicPhaseTable& t);
void to_json(nlohmann::json& j, const HeuristicPhaseTable& t);

/// Loads `<dir>/<task>.json`.
HeuristicPhaseTable load_heuristic_table(TaskKind task, const std::string& dir);

struct HeuristicState {
  int phase = -1;  // -1 before the first call
  std::optional<ObjectKind> held;

  friend bool operator==(const HeuristicState&, const HeuristicState&) = default;
};

struct HeuristicStep {
  std::optional<ModeMapping> mapping;
  HeuristicState state;
};

/// Emits the next phase's mapping once when its trigger fires.
HeuristicStep heuristic_step(const WorldState& world, const HeuristicPhaseTable& table, HeuristicState state);

}  // namespace lams
