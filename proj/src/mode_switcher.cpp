#include "lams/mode_switcher.hpp"

#include <fstream>

namespace lams {

namespace {

using AD = ActionDirection;

constexpr std::array<std::string_view, 7> kStrategyIds = {
    "lams", "static", "top_action", "direct_examples", "num_state", "grouped", "heuristic"};

std::string_view trigger_id(TriggerKind k) {
  switch (k) {
    case TriggerKind::Always: return "always";
    case TriggerKind::Grasp: return "grasp";
    case TriggerKind::Release: return "release";
  }
  return "always";
}

TriggerKind parse_trigger(std::string_view s) {
  if (s == "always") return TriggerKind::Always;
  if (s == "grasp") return TriggerKind::Grasp;
  if (s == "release") return TriggerKind::Release;
  throw std::invalid_argument("unknown trigger: " + std::string(s));
}

std::array<bool, 4> changed_slots(const ModeMapping& a, const ModeMapping& b) {
  std::array<bool, 4> out{};
  for (auto g : kAllGroups) out[static_cast<std::size_t>(g)] = a.slot(g) != b.slot(g);
  return out;
}

}  // namespace

std::string_view to_string(StrategyKind s) noexcept { return kStrategyIds[static_cast<std::size_t>(s)]; }

StrategyKind parse_strategy(std::string_view s) {
  for (std::size_t i = 0; i < kStrategyIds.size(); ++i)
    if (kStrategyIds[i] == s) return static_cast<StrategyKind>(i);
  throw std::invalid_argument("unknown strategy: " + std::string(s));
}

bool uses_llm(StrategyKind s) noexcept {
  return s != StrategyKind::GroupedMapping && s != StrategyKind::Heuristic;
}

bool uses_rules(StrategyKind s) noexcept {
  return s == StrategyKind::Lams || s == StrategyKind::TopAction || s == StrategyKind::NumState;
}

bool keeps_examples(StrategyKind s) noexcept { return uses_rules(s) || s == StrategyKind::DirectExamples; }

PromptMode prompt_mode(StrategyKind s) {
  switch (s) {
    case StrategyKind::Lams:
    case StrategyKind::TopAction: return PromptMode::Lams;
    case StrategyKind::StaticLlm: return PromptMode::Static;
    case StrategyKind::DirectExamples: return PromptMode::DirectExamples;
    case StrategyKind::NumState: return PromptMode::NumState;
    default: break;
  }
  throw std::invalid_argument("strategy " + std::string(to_string(s)) + " does not prompt a model");
}

ActionDirection select_direction(const GroupDistribution& dist, const SwitchContext& ctx) {
  auto ranked = dist.ranked();
  if (ranked.empty()) throw EmptyDistribution("empty distribution for group " + std::string(to_string(dist.group)));
  for (const auto& [d, p] : ranked)
    if (group_of(d) != dist.group) throw std::invalid_argument("distribution holds an out-of-group direction");
  auto best = ranked[0].first;
  if (ranked.size() > 1 && ctx.last_executed[static_cast<std::size_t>(dist.group)] == best &&
      ranked[1].second > ctx.threshold)
    return ranked[1].first;
  return best;
}

void to_json(nlohmann::json& j, const ProvenanceRecord& p) {
  j = {{"strategy", to_string(p.strategy)},
       {"prompt", p.prompt},
       {"completion", p.completion},
       {"before", p.before},
       {"after", p.after},
       {"changed", p.changed},
       {"degraded", p.degraded},
       {"error", p.error}};
  if (p.distributions) {
    j["distributions"] = nlohmann::json::array();
    for (const auto& d : *p.distributions) j["distributions"].push_back(d);
  } else {
    j["distributions"] = nullptr;
  }
}

CompletionRequest make_switch_request(StrategyKind s, const WorldState& world, const std::string& guidance) {
  CompletionRequest r;
  r.role = CompletionRole::ModeSwitch;
  r.prompt = assemble_prompt(guidance, world, prompt_mode(s)).text();
  r.max_tokens = 128;
  r.world = std::make_shared<const WorldState>(world);
  return r;
}

SwitchOutcome resolve_switch(StrategyKind s, const SwitchContext& ctx, const CompletionRequest& request,
                             const CompletionResult& result) {
  SwitchOutcome out;
  out.provenance.strategy = s;
  out.provenance.prompt = request.prompt;
  out.provenance.completion = result.text;
  out.provenance.before = ctx.current_mode;

  if (s == StrategyKind::TopAction) {
    auto written = parse_written_directions(result.text);
    out.mapping = ModeMapping(written[0], written[1], written[2], written[3]);
    try {
      out.provenance.distributions = extract_group_distributions(result);
    } catch (const GatewayError&) {
      // The written letters are all this strategy needs.
    }
  } else {
    auto dists = extract_group_distributions(result);
    for (auto g : kAllGroups) out.mapping.set(g, select_direction(dists[static_cast<std::size_t>(g)], ctx));
    out.provenance.distributions = dists;
  }
  out.provenance.after = out.mapping;
  out.provenance.changed = changed_slots(ctx.current_mode, out.mapping);
  return out;
}

SwitchOutcome degraded_switch(StrategyKind s, const SwitchContext& ctx, const CompletionRequest& request,
                              const std::string& error) {
  SwitchOutcome out;
  out.mapping = ctx.current_mode;
  out.provenance.strategy = s;
  out.provenance.prompt = request.prompt;
  out.provenance.before = ctx.current_mode;
  out.provenance.after = ctx.current_mode;
  out.provenance.degraded = true;
  out.provenance.error = error;
  return out;
}

SwitchOutcome switch_modes(StrategyKind s, const WorldState& world, const SwitchContext& ctx, const Gateway& gateway,
                           const std::string& guidance) {
  if (!uses_llm(s)) {
    SwitchOutcome out;
    out.mapping = ctx.current_mode;
    out.provenance.strategy = s;
    out.provenance.before = out.provenance.after = ctx.current_mode;
    return out;
  }
  auto request = make_switch_request(s, world, guidance);
  try {
    return resolve_switch(s, ctx, request, gateway.complete(request));
  } catch (const GatewayError& e) {
    return degraded_switch(s, ctx, request, e.what());
  }
}

ModeMapping grouped_mapping(int index) {
  switch (index) {
    case 1: return ModeMapping(AD::MoveForward, AD::MoveBackward, AD::MoveLeft, AD::MoveRight);
    case 2: return ModeMapping(AD::MoveUp, AD::MoveDown, AD::RollLeft, AD::RollRight);
    case 3: return ModeMapping(AD::PitchUp, AD::PitchDown, AD::YawLeft, AD::YawRight);
    case 4: {
      ModeMapping m;
      m.set(DirectionGroup::Up, AD::OpenGripper);
      m.set(DirectionGroup::Down, AD::CloseGripper);
      return m;
    }
    default: break;
  }
  throw std::out_of_range("grouped index must be 1..4");
}

GroupedState grouped_cycle(GroupedState s) noexcept { return {s.index % kGroupCount + 1}; }

int grouped_index_of(ActionDirection d) noexcept {
  for (int i = 1; i <= kGroupCount; ++i)
    if (grouped_mapping(i).exposes(d)) return i;
  return 1;
}

std::vector<KinematicEvent> kinematic_events(const WorldState& before, const WorldState& after) {
  std::vector<KinematicEvent> out;
  const auto* a = before.held_object();
  const auto* b = after.held_object();
  std::optional<ObjectKind> ka = a ? std::optional(a->kind) : std::nullopt;
  std::optional<ObjectKind> kb = b ? std::optional(b->kind) : std::nullopt;
  if (ka == kb) return out;
  if (ka) out.push_back({TriggerKind::Release, *ka});
  if (kb) out.push_back({TriggerKind::Grasp, *kb});
  return out;
}

void HeuristicPhaseTable::validate() const {
  if (phases.empty()) throw std::invalid_argument("heuristic table has no phases");
  if (phases.front().trigger != TriggerKind::Always)
    throw std::invalid_argument("first heuristic phase must trigger always");
  for (std::size_t i = 1; i < phases.size(); ++i) {
    if (phases[i].trigger == TriggerKind::Always || !phases[i].object)
      throw std::invalid_argument("phase '" + phases[i].name + "' needs a grasp or release trigger on an object");
  }
}

void from_json(const nlohmann::json& j, HeuristicPhaseTable& t) {
  t.task = parse_task(j.at("task").get<std::string>());
  t.phases.clear();
  for (const auto& p : j.at("phases")) {
    HeuristicPhase ph;
    ph.name = p.at("name").get<std::string>();
    ph.trigger = parse_trigger(p.at("trigger").get<std::string>());
    if (p.contains("object")) ph.object = parse_object_kind(p["object"].get<std::string>());
    ph.mapping = p.at("mapping").get<ModeMapping>();
    t.phases.push_back(std::move(ph));
  }
  t.validate();
}

void to_json(nlohmann::json& j, const HeuristicPhaseTable& t) {
  j = {{"task", to_string(t.task)}, {"phases", nlohmann::json::array()}};
  for (const auto& p : t.phases) {
    nlohmann::json ph = {{"name", p.name}, {"trigger", trigger_id(p.trigger)}, {"mapping", p.mapping}};
    if (p.object) ph["object"] = to_string(*p.object);
    j["phases"].push_back(ph);
  }
}

HeuristicPhaseTable load_heuristic_table(TaskKind task, const std::string& dir) {
  std::string path = dir + "/" + std::string(to_string(task)) + ".json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open heuristic table: " + path);
  auto t = nlohmann::json::parse(in).get<HeuristicPhaseTable>();
  if (t.task != task) throw std::invalid_argument("heuristic table " + path + " is for another task");
  return t;
}

HeuristicStep heuristic_step(const WorldState& world, const HeuristicPhaseTable& table, HeuristicState state) {
  HeuristicStep out;
  const auto* h = world.held_object();
  std::optional<ObjectKind> held = h ? std::optional(h->kind) : std::nullopt;

  std::vector<KinematicEvent> events;
  if (state.held != held) {
    if (state.held) events.push_back({TriggerKind::Release, *state.held});
    if (held) events.push_back({TriggerKind::Grasp, *held});
  }
  out.state = state;
  out.state.held = held;

  if (state.phase < 0) {
    out.state.phase = 0;
    out.mapping = table.phases.front().mapping;
    return out;
  }
  auto next = static_cast<std::size_t>(state.phase) + 1;
  if (next >= table.phases.size()) return out;
  const auto& ph = table.phases[next];
  for (const auto& e : events) {
    if (e.kind == ph.trigger && ph.object == e.object) {
      out.state.phase = static_cast<int>(next);
      out.mapping = ph.mapping;
      break;
    }
  }
  return out;
}

}  // namespace lams
