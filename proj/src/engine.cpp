#include "lams/engine.hpp"

#include <cmath>

namespace lams {

namespace {

nlohmann::json slot_json(const SlotArray& s) {
  auto j = nlohmann::json::object();
  for (auto g : kAllGroups) {
    auto d = s[static_cast<std::size_t>(g)];
    j[std::string(to_string(g))] = d ? nlohmann::json(std::string(to_string(*d))) : nlohmann::json();
  }
  return j;
}

nlohmann::json flags_json(const std::array<bool, 4>& f) {
  auto j = nlohmann::json::object();
  for (auto g : kAllGroups) j[std::string(to_string(g))] = f[static_cast<std::size_t>(g)];
  return j;
}

std::optional<ActionDirection> opt_direction(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return parse_direction(j.get<std::string>());
}

}  // namespace

std::int64_t EngineConfig::debounce_ticks() const {
  double r = debounce_seconds / clock.tick_duration;
  if (!(r >= 1.0)) throw std::invalid_argument("debounce window shorter than a tick");
  return static_cast<std::int64_t>(std::llround(r));
}

void to_json(nlohmann::json& j, const EngineConfig& c) {
  j = {{"task", to_string(c.task)},
       {"strategy", to_string(c.strategy)},
       {"layout_seed", c.layout_seed},
       {"seed", c.seed},
       {"trial", c.trial},
       {"sim", c.sim},
       {"velocity", c.velocity},
       {"clock", {{"tick_duration", c.clock.tick_duration}, {"pause_threshold", c.clock.pause_threshold}}},
       {"debounce_seconds", c.debounce_seconds}};
}

void from_json(const nlohmann::json& j, EngineConfig& c) {
  c.task = parse_task(j.at("task").get<std::string>());
  c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  c.layout_seed = j.value("layout_seed", std::uint64_t{0});
  c.seed = j.value("seed", std::uint64_t{0});
  c.trial = j.value("trial", 1);
  if (j.contains("sim")) c.sim = j["sim"].get<SimConfig>();
  if (j.contains("velocity")) c.velocity = j["velocity"].get<VelocityProfile>();
  if (j.contains("clock")) {
    c.clock.tick_duration = j["clock"].value("tick_duration", c.clock.tick_duration);
    c.clock.pause_threshold = j["clock"].value("pause_threshold", c.clock.pause_threshold);
  }
  c.debounce_seconds = j.value("debounce_seconds", c.debounce_seconds);
}

std::string_view to_string(SlotHighlight h) noexcept {
  switch (h) {
    case SlotHighlight::Auto: return "auto";
    case SlotHighlight::Manual: return "manual";
    default: return "none";
  }
}

TeleopEngine::TeleopEngine(EngineConfig cfg, std::shared_ptr<LearningHandle> learning, EventLog& log,
                           TimeSource time)
    : cfg_(std::move(cfg)),
      learning_(std::move(learning)),
      log_(log),
      time_(std::move(time)),
      pause_(cfg_.clock),
      debouncer_(cfg_.debounce_ticks()) {
  cfg_.velocity.validate();
  if (!time_) {
    double dt = cfg_.clock.tick_duration;
    time_ = [dt](std::int64_t tick) { return static_cast<double>(tick) * dt; };
  }
  if (!learning_) learning_ = std::make_shared<LearningHandle>(cfg_.task);
  {
    std::lock_guard lock(learning_->mutex);
    if (learning_->store.task() != cfg_.task) throw std::invalid_argument("learning store belongs to another task");
  }
  if (cfg_.strategy == StrategyKind::Heuristic) heuristics_ = load_heuristic_table(cfg_.task, cfg_.heuristic_dir);
  world_ = generate_layout(cfg_.task, cfg_.layout_seed);
  mode_ = grouped_mapping(1);
  ctx_.current_mode = mode_;
}

void TeleopEngine::log(std::string_view kind, nlohmann::json fields) { log_.append(kind, world_.tick, now(), std::move(fields)); }

void TeleopEngine::require_live() const {
  if (!begun_) throw std::logic_error("engine not started");
  if (ended_) throw SessionClosed("trial has ended");
}

void TeleopEngine::begin() {
  if (begun_) throw std::logic_error("engine already started");
  begun_ = true;
  log("trial_start", {{"trial", cfg_.trial},
                      {"task", to_string(cfg_.task)},
                      {"strategy", to_string(cfg_.strategy)},
                      {"layout_seed", cfg_.layout_seed},
                      {"seed", cfg_.seed},
                      {"config", cfg_},
                      {"mode", mode_},
                      {"world", world_}});
  progress_ = task_progress(world_, task_spec(cfg_.task), cfg_.sim);
  if (cfg_.strategy == StrategyKind::Heuristic) {
    auto step = heuristic_step(world_, *heuristics_, heuristic_state_);
    heuristic_state_ = step.state;
    if (step.mapping) {
      SwitchOutcome out;
      out.mapping = *step.mapping;
      out.provenance.strategy = cfg_.strategy;
      apply_auto(out, nullptr, "heuristic");
    }
  } else if (uses_llm(cfg_.strategy)) {
    request_switch("start");
  }
}

std::string TeleopEngine::guidance(int switch_index) {
  auto seed = derive_seed(cfg_.seed, static_cast<std::uint64_t>(cfg_.trial), static_cast<std::uint64_t>(switch_index));
  std::lock_guard lock(learning_->mutex);
  if (uses_rules(cfg_.strategy)) return compose_rule_section(learning_->store.rules(), seed);
  if (cfg_.strategy == StrategyKind::DirectExamples)
    return compose_example_section(learning_->store.examples(), seed, cfg_.encoding());
  return {};
}

void TeleopEngine::request_switch(const std::string& trigger) {
  if (!uses_llm(cfg_.strategy) || switch_job_) return;
  ++switch_index_;
  PendingJob job;
  job.role = CompletionRole::ModeSwitch;
  job.request = make_switch_request(cfg_.strategy, world_, guidance(switch_index_));
  job.switch_index = switch_index_;
  job.trigger = trigger;
  job.last_executed = ctx_.last_executed;
  auto id = next_job_++;
  outbox_.push_back({id, job.request});
  jobs_.emplace(id, std::move(job));
  switch_job_ = id;
  stale_ = {};
  log("llm_request", {{"job", id}, {"role", "mode_switch"}, {"switch_index", switch_index_}, {"trigger", trigger}});
}

void TeleopEngine::apply_auto(const SwitchOutcome& out, const PendingJob* job, const std::string& trigger) {
  ModeMapping before = mode_;
  ModeMapping next = mode_;
  for (auto g : kAllGroups) {
    auto i = static_cast<std::size_t>(g);
    if (job && stale_[i]) continue;  // a manual press during the call wins
    next.set(g, out.mapping.slot(g));
  }
  std::array<bool, 4> changed{};
  for (auto g : kAllGroups) {
    auto i = static_cast<std::size_t>(g);
    changed[i] = before.slot(g) != next.slot(g);
    if (changed[i]) highlights_[i] = SlotHighlight::Auto;
  }
  mode_ = next;
  ctx_.current_mode = mode_;
  ++auto_switches_;
  degraded_ = out.provenance.degraded;

  nlohmann::json fields = out.provenance;
  fields["trigger"] = trigger;
  fields["before"] = before;
  fields["after"] = mode_;
  fields["proposed"] = out.mapping;
  fields["changed"] = flags_json(changed);
  fields["switch_index"] = job ? job->switch_index : 0;
  if (job) {
    fields["world"] = *job->request.world;
    fields["last_executed"] = slot_json(job->last_executed);
    fields["stale"] = flags_json(stale_);
  } else {
    fields["world"] = world_;
    fields.erase("prompt");
    fields.erase("completion");
  }
  log("auto_switch", std::move(fields));
}

void TeleopEngine::finalize(const SwitchDebouncer::Finalized& f) {
  ExampleRecord ex{f.event.tick, f.event.slot, f.event.new_direction, f.world};
  std::size_t n = 0;
  std::optional<CompletionRequest> rule_request;
  {
    std::lock_guard lock(learning_->mutex);
    learning_->store.add_example(ex);
    learning_->persist();
    n = learning_->store.examples().size();
    if (uses_rules(cfg_.strategy))
      rule_request = make_rule_request(learning_->store.examples(), derive_seed(cfg_.seed, n), cfg_.encoding());
  }
  nlohmann::json ev = f.event;
  ev["world"] = f.world;
  ev["examples"] = n;
  log("example", std::move(ev));
  if (rule_request) {
    PendingJob job;
    job.role = CompletionRole::RuleGeneration;
    job.request = std::move(*rule_request);
    auto id = next_job_++;
    outbox_.push_back({id, job.request});
    jobs_.emplace(id, std::move(job));
    log("llm_request", {{"job", id}, {"role", "rule_generation"}, {"examples", n}});
  }
}

void TeleopEngine::tick(const UserAction& u) {
  require_live();
  if (auto f = debouncer_.input(u)) finalize(*f);
  if (auto f = debouncer_.advance(world_.tick)) finalize(*f);
  if (uses_llm(cfg_.strategy) && pause_.push(u)) request_switch("pause");

  std::vector<ActionDirection> driven;
  for (auto g : {engaged_longitudinal(u), engaged_lateral(u)}) {
    if (!g) continue;
    if (auto d = mode_.slot(*g)) {
      driven.push_back(*d);
      ctx_.note_driven(*d);
    }
  }
  nlohmann::json in = {{"lateral", u.lateral}, {"longitudinal", u.longitudinal}, {"driven", nlohmann::json::array()}};
  for (auto d : driven) in["driven"].push_back(to_string(d));
  if (driven != last_driven_) in["world"] = world_;  // segment start
  last_driven_ = driven;
  log("input", std::move(in));

  WorldState before = world_;
  world_ = step(world_, apply_mode(mode_, u, cfg_.velocity), cfg_.sim);

  for (const auto& e : kinematic_events(before, world_))
    log(e.kind == TriggerKind::Grasp ? "grasp" : "release", {{"object", to_string(e.object)}, {"world", world_}});

  if (heuristics_) {
    auto step = heuristic_step(world_, *heuristics_, heuristic_state_);
    heuristic_state_ = step.state;
    if (step.mapping) {
      SwitchOutcome out;
      out.mapping = *step.mapping;
      out.provenance.strategy = cfg_.strategy;
      apply_auto(out, nullptr, "heuristic");
    }
  }

  auto p = task_progress(world_, task_spec(cfg_.task), cfg_.sim);
  if (p.stage_index > progress_.stage_index) {
    const auto& stages = task_spec(cfg_.task).stages;
    for (auto i = progress_.stage_index; i < p.stage_index; ++i)
      log("stage", {{"stage_index", i + 1}, {"name", stages[i].name}, {"completed", i + 1 == stages.size()}});
  }
  progress_ = p;
}

void TeleopEngine::manual_press(DirectionGroup slot) {
  require_live();
  if (cfg_.strategy == StrategyKind::GroupedMapping)
    throw WrongStrategy("the grouped strategy switches with the cycle button only");
  auto i = static_cast<std::size_t>(slot);
  auto old = mode_.slot(slot);
  auto next = old ? next_in_group(*old) : group_members(slot)[0];
  mode_.set(slot, next);
  ctx_.current_mode = mode_;
  ++manual_switches_;
  ++slot_switches_[i];
  highlights_[i] = SlotHighlight::Manual;
  if (switch_job_) stale_[i] = true;
  log("manual_switch", {{"slot", to_string(slot)},
                        {"old", old ? nlohmann::json(std::string(to_string(*old))) : nlohmann::json()},
                        {"new", to_string(next)},
                        {"count", manual_switches_},
                        {"during_call", switch_job_.has_value()}});
  if (keeps_examples(cfg_.strategy)) {
    if (auto f = debouncer_.press(world_.tick, slot, old.value_or(next), next, world_)) finalize(*f);
  }
}

void TeleopEngine::grouped_cycle() {
  require_live();
  if (cfg_.strategy != StrategyKind::GroupedMapping)
    throw WrongStrategy("cycle button is only available with the grouped strategy");
  ModeMapping before = mode_;
  grouped_ = lams::grouped_cycle(grouped_);
  mode_ = grouped_mapping(grouped_.index);
  ctx_.current_mode = mode_;
  ++manual_switches_;
  for (auto g : kAllGroups)
    if (before.slot(g) != mode_.slot(g)) highlights_[static_cast<std::size_t>(g)] = SlotHighlight::Manual;
  log("grouped_cycle", {{"index", grouped_.index}, {"before", before}, {"after", mode_}, {"count", manual_switches_}});
}

void TeleopEngine::settle() {
  require_live();
  if (auto f = debouncer_.flush()) finalize(*f);
}

void TeleopEngine::end(const std::string& failure) {
  require_live();
  settle();
  ended_ = true;
  log("trial_end", {{"completed", progress_.completed},
                    {"ticks", world_.tick},
                    {"manual_switches", manual_switches_},
                    {"failure", failure}});
}

std::vector<LlmJob> TeleopEngine::take_jobs() {
  std::vector<LlmJob> out;
  out.swap(outbox_);
  return out;
}

void TeleopEngine::finish_job(std::uint64_t id, const CompletionResult& result) {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw std::invalid_argument("unknown job " + std::to_string(id));
  PendingJob job = std::move(it->second);
  jobs_.erase(it);

  if (job.role == CompletionRole::RuleGeneration) {
    auto rules = parse_rules(result.text);
    std::size_t total = 0;
    {
      std::lock_guard lock(learning_->mutex);
      if (!rules.empty()) learning_->store.append_rules(rules);
      learning_->persist();
      total = learning_->store.rules().size();
    }
    log("llm_response", {{"job", id}, {"role", "rule_generation"}});
    log("rule_generation", {{"job", id},
                            {"prompt", job.request.prompt},
                            {"completion", result.text},
                            {"rules_added", rules.size()},
                            {"rules_total", total}});
    return;
  }

  switch_job_.reset();
  if (ended_) return;
  SwitchContext ctx = ctx_;
  ctx.last_executed = job.last_executed;
  SwitchOutcome out;
  try {
    out = resolve_switch(cfg_.strategy, ctx, job.request, result);
  } catch (const GatewayError& e) {
    out = degraded_switch(cfg_.strategy, ctx, job.request, e.what());
    out.provenance.completion = result.text;
  } catch (const EmptyDistribution& e) {
    out = degraded_switch(cfg_.strategy, ctx, job.request, e.what());
    out.provenance.completion = result.text;
  }
  log("llm_response", {{"job", id}, {"role", "mode_switch"}});
  apply_auto(out, &job, job.trigger);
  ctx_.clear_executed();
}

void TeleopEngine::fail_job(std::uint64_t id, const std::string& error) {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw std::invalid_argument("unknown job " + std::to_string(id));
  PendingJob job = std::move(it->second);
  jobs_.erase(it);
  log("error", {{"job", id}, {"role", to_string(job.role)}, {"error", error}});
  if (job.role != CompletionRole::ModeSwitch) return;  // rules retry with the next example
  switch_job_.reset();
  if (ended_) return;
  SwitchContext ctx = ctx_;
  ctx.last_executed = job.last_executed;
  apply_auto(degraded_switch(cfg_.strategy, ctx, job.request, error), &job, job.trigger);
  ctx_.clear_executed();
}

std::array<SlotHighlight, 4> TeleopEngine::take_highlights() {
  auto out = highlights_;
  highlights_ = {};
  return out;
}

std::size_t drain_jobs(TeleopEngine& engine, const Gateway& gateway) {
  std::size_t n = 0;
  for (auto jobs = engine.take_jobs(); !jobs.empty(); jobs = engine.take_jobs()) {
    for (const auto& job : jobs) {
      ++n;
      try {
        engine.finish_job(job.id, gateway.complete(job.request));
      } catch (const GatewayError& e) {
        engine.fail_job(job.id, e.what());
      }
    }
  }
  return n;
}

ReplayState replay_log(const std::vector<nlohmann::json>& records) {
  if (records.empty() || records.front().at("kind") != "trial_start")
    throw IncompleteLog("log does not start with trial_start");
  auto cfg = records.front().at("config").get<EngineConfig>();
  ReplayState s;
  s.world = records.front().at("world").get<WorldState>();
  s.mode = records.front().at("mode").get<ModeMapping>();
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& kind = r.at("kind").get_ref<const std::string&>();
    if (kind == "trial_start") throw IncompleteLog("second trial_start in one trial");
    if (kind == "input") {
      if (r.contains("world") && r["world"].get<WorldState>() != s.world)
        throw IncompleteLog("replayed world diverges from the log at seq " + r.at("seq").dump());
      UserAction u{r.at("lateral").get<double>(), r.at("longitudinal").get<double>()};
      s.world = step(s.world, apply_mode(s.mode, u, cfg.velocity), cfg.sim);
    } else if (kind == "auto_switch") {
      s.mode = r.at("after").get<ModeMapping>();
      s.degraded = r.at("degraded").get<bool>();
      ++s.auto_switches;
    } else if (kind == "manual_switch") {
      s.mode.set(parse_group(r.at("slot").get<std::string>()), opt_direction(r.at("new")));
      s.manual_switches = r.at("count").get<int>();
    } else if (kind == "grouped_cycle") {
      s.mode = r.at("after").get<ModeMapping>();
      s.grouped_index = r.at("index").get<int>();
      s.manual_switches = r.at("count").get<int>();
    } else if (kind == "grasp" || kind == "release") {
      if (r.at("world").get<WorldState>() != s.world) throw IncompleteLog("replayed world diverges at a grasp event");
    } else if (kind == "trial_end") {
      s.ended = true;
    }
  }
  return s;
}

}  // namespace lams
