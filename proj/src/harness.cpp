#include "lams/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <sstream>

namespace lams {

namespace fs = std::filesystem;

namespace {

using AD = ActionDirection;
using K = ObjectKind;

const ObjectState& object(const WorldState& w, ObjectKind k) {
  const auto* o = w.find(k);
  if (!o) throw std::invalid_argument("world has no " + std::string(to_string(k)));
  return *o;
}

double component(const Pose6& p, Component c) {
  switch (c) {
    case Component::X: return p.x;
    case Component::Y: return p.y;
    case Component::Z: return p.z;
    case Component::Roll: return p.roll;
    case Component::Pitch: return p.pitch;
    case Component::Yaw: return p.yaw;
    default: break;
  }
  throw std::invalid_argument("not a pose component");
}

bool angular(Component c) { return c == Component::Roll || c == Component::Pitch || c == Component::Yaw; }

AD direction_for(Component c, double error) {
  int sign = error > 0 ? 1 : -1;
  for (auto d : kAllDirections) {
    auto e = effect_of(d);
    if (e.component == c && e.sign == sign) return d;
  }
  throw std::logic_error("no direction for component");
}

struct Target {
  Component c;
  double value;
};

// Appends needs for targets on `frame` (the held object, or the end effector).
void pose_needs(std::vector<Need>& out, const Pose6& frame, std::initializer_list<Target> targets,
                const VelocityProfile& v) {
  for (const auto& t : targets) {
    double cur = component(frame, t.c);
    double err = angular(t.c) ? shortest_arc(cur, t.value) : t.value - cur;
    double tol = angular(t.c) ? kAngleTolerance : kPositionTolerance;
    if (std::abs(err) <= tol) continue;
    double speed = angular(t.c) ? v.v_ro : v.v_tr;
    out.push_back({direction_for(t.c, err), err, std::min(1.0, std::abs(err) / speed)});
  }
}

void gripper_need(std::vector<Need>& out, double aperture, double target, const VelocityProfile& v) {
  double err = target - aperture;
  out.push_back({err > 0 ? AD::OpenGripper : AD::CloseGripper, err, std::min(1.0, std::abs(err) / v.v_gr)});
}

std::vector<Need> align_needs(const Pose6& ee, const Pose6& obj, const VelocityProfile& v) {
  std::vector<Need> out;
  pose_needs(out, ee,
             {{Component::X, obj.x},
              {Component::Y, obj.y},
              {Component::Z, obj.z},
              {Component::Roll, obj.roll},
              {Component::Pitch, obj.pitch},
              {Component::Yaw, obj.yaw}},
             v);
  return out;
}

// Approach `obj`, then close on it. Opens first if the gripper is partly closed.
std::vector<Need> pick_needs(const WorldState& w, const ObjectState& obj, const VelocityProfile& v) {
  std::vector<Need> out;
  auto align = align_needs(w.ee_pose, obj.pose, v);
  if (align.empty()) {
    gripper_need(out, w.gripper_aperture, 0.0, v);
  } else if (w.gripper_aperture < 1.0) {
    gripper_need(out, w.gripper_aperture, 1.0, v);
  } else {
    out = std::move(align);
  }
  return out;
}

std::vector<Need> water_needs(const WorldState& w, const VelocityProfile& v) {
  const auto& cap = object(w, K::BottleCap);
  const auto& bottle = object(w, K::Bottle);
  const auto& bowl = object(w, K::Bowl);
  std::vector<Need> out;
  if (bottle.held) {
    pose_needs(out, bottle.pose,
               {{Component::Z, bowl.pose.z + 0.14}, {Component::X, bowl.pose.x}, {Component::Y, bowl.pose.y}}, v);
    if (out.empty()) pose_needs(out, bottle.pose, {{Component::Roll, bottle.initial_pose.roll - 70.0}}, v);
    return out;
  }
  if (cap.held) {
    // Lifted past the drop distance so that letting go sets the cap aside.
    pose_needs(out, cap.pose, {{Component::Z, cap.initial_pose.z + 0.13}}, v);
    if (out.empty()) gripper_need(out, w.gripper_aperture, 1.0, v);
    return out;
  }
  return pick_needs(w, cap.dropped ? bottle : cap, v);
}

std::vector<Need> book_needs(const WorldState& w, const VelocityProfile& v) {
  const auto& book = object(w, K::Book);
  const auto& shelf = object(w, K::Shelf);
  std::vector<Need> out;
  if (!book.held) return pick_needs(w, book, v);
  pose_needs(out, book.pose,
             {{Component::Z, shelf.pose.z}, {Component::Y, shelf.pose.y}, {Component::Yaw, shelf.pose.yaw}}, v);
  if (out.empty()) pose_needs(out, book.pose, {{Component::X, shelf.pose.x + 0.11}}, v);
  return out;
}

std::optional<AD> opt_direction(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return parse_direction(j.get<std::string>());
}

std::vector<AD> driven_of(const nlohmann::json& r) {
  std::vector<AD> out;
  for (const auto& d : r.at("driven")) out.push_back(parse_direction(d.get<std::string>()));
  return out;
}

std::size_t slot_index(DirectionGroup g) { return static_cast<std::size_t>(g); }

RotationTally& tally_for(RotationAccuracy& acc, AD d) {
  switch (effect_of(d).component) {
    case Component::Pitch: return acc.pitch;
    case Component::Yaw: return acc.yaw;
    default: return acc.roll;
  }
}

SlotArray parse_slots(const nlohmann::json& j) {
  SlotArray s{};
  for (auto g : kAllGroups) s[slot_index(g)] = opt_direction(j.at(std::string(to_string(g))));
  return s;
}

}  // namespace

std::vector<Need> plan_needs(const WorldState& w, const VelocityProfile& v, const SimConfig& sim) {
  if (task_progress(w, task_spec(w.task), sim).completed) return {};
  return w.task == TaskKind::WaterPouring ? water_needs(w, v) : book_needs(w, v);
}

DirectionAdvisor oracle_advisor(VelocityProfile v, SimConfig sim) {
  return [v, sim](const WorldState& w) {
    std::array<std::optional<AD>, 4> out{};
    for (const auto& n : plan_needs(w, v, sim)) {
      auto& slot = out[slot_index(group_of(n.direction))];
      if (!slot) slot = n.direction;
    }
    for (auto g : kAllGroups)
      if (!out[slot_index(g)]) out[slot_index(g)] = group_members(g)[0];
    return out;
  };
}

UserAction drive_input(AD d, double magnitude) {
  switch (group_of(d)) {
    case DirectionGroup::Up: return {0.0, magnitude};
    case DirectionGroup::Down: return {0.0, -magnitude};
    case DirectionGroup::Left: return {-magnitude, 0.0};
    case DirectionGroup::Right: return {magnitude, 0.0};
  }
  return {};
}

ScriptedUser::ScriptedUser(StrategyKind strategy, VelocityProfile v, SimConfig sim, SessionClock clock,
                           ScriptedUserConfig cfg)
    : strategy_(strategy),
      v_(v),
      sim_(sim),
      patience_(cfg.patience_ticks >= 0 ? cfg.patience_ticks : static_cast<int>(clock.window_ticks()) + 5),
      cfg_(cfg) {}

UserDecision ScriptedUser::decide(const WorldState& w, const ModeMapping& mode, int auto_switches) {
  using Kind = UserDecision::Kind;
  auto needs = plan_needs(w, v_, sim_);
  if (needs.empty()) return {};
  const auto& need = needs.front();
  auto d = need.direction;

  if (current_need_ != d) {
    current_need_ = d;
    need_since_ = w.tick;
  } else if (w.tick - need_since_ > cfg_.stuck_ticks) {
    throw PlanStuck("no progress on " + std::string(to_string(d)) + " since tick " + std::to_string(need_since_));
  }

  UserDecision out;
  out.need = d;
  if (mode.exposes(d)) {
    out.kind = Kind::Drive;
    out.input = drive_input(d, need.magnitude);
    return out;
  }
  if (strategy_ == StrategyKind::GroupedMapping) {
    out.kind = Kind::GroupedCycle;
    return out;
  }
  if (uses_llm(strategy_)) {
    if (paused_for_ != d) {
      paused_for_ = d;
      switches_at_pause_ = auto_switches;
      waited_ = 1;
      out.kind = Kind::Pause;
      return out;
    }
    if (auto_switches == switches_at_pause_ && waited_ < patience_) {
      ++waited_;
      out.kind = Kind::Pause;
      return out;
    }
  }
  out.kind = Kind::ManualSwitch;
  out.slot = group_of(d);
  return out;
}

void to_json(nlohmann::json& j, const TrialResult& r) {
  auto tally = [](const RotationTally& t) { return nlohmann::json{{"correct", t.correct}, {"required", t.required}}; };
  j = {{"trial", r.trial},
       {"task", to_string(r.task)},
       {"strategy", to_string(r.strategy)},
       {"layout_seed", r.layout_seed},
       {"manual_switch_count", r.manual_switch_count},
       {"slot_switches", r.slot_switches},
       {"false_gripper_mappings", r.false_gripper_mappings},
       {"rotation",
        {{"pitch", tally(r.rotation.pitch)}, {"yaw", tally(r.rotation.yaw)}, {"roll", tally(r.rotation.roll)}}},
       {"completed", r.completed},
       {"completion_tick", r.completion_tick},
       {"failure", r.failure},
       {"log_path", r.log_path}};
}

TrialResult run_trial(const TrialConfig& cfg, const Gateway& gateway, std::shared_ptr<LearningHandle> learning) {
  EngineConfig ec;
  ec.task = cfg.task;
  ec.strategy = cfg.strategy;
  ec.layout_seed = cfg.layout_seed;
  ec.seed = cfg.seed;
  ec.trial = cfg.trial;
  ec.heuristic_dir = cfg.heuristic_dir;

  std::unique_ptr<EventLog> log = cfg.log_path.empty() ? std::make_unique<EventLog>()
                                                       : std::make_unique<EventLog>(cfg.log_path);
  TeleopEngine engine(ec, std::move(learning), *log);
  ScriptedUser user(cfg.strategy, ec.velocity, ec.sim, ec.clock, cfg.user);

  engine.begin();
  drain_jobs(engine, gateway);
  std::string failure;
  try {
    while (!engine.progress().completed) {
      if (engine.world().tick >= cfg.max_ticks) {
        failure = "tick budget exhausted";
        break;
      }
      auto d = user.decide(engine.world(), engine.mode(), engine.auto_switches());
      UserAction u;
      using Kind = UserDecision::Kind;
      if (d.kind == Kind::Done) {
        failure = "plan finished before the task";
        break;
      }
      if (d.kind == Kind::Drive) u = d.input;
      if (d.kind == Kind::ManualSwitch) engine.manual_press(d.slot);
      if (d.kind == Kind::GroupedCycle) engine.grouped_cycle();
      drain_jobs(engine, gateway);
      engine.tick(u);
      drain_jobs(engine, gateway);
    }
  } catch (const PlanStuck& e) {
    failure = std::string("plan stuck: ") + e.what();
  }
  engine.settle();
  drain_jobs(engine, gateway);
  engine.end(failure);

  TrialResult r;
  r.trial = cfg.trial;
  r.task = cfg.task;
  r.strategy = cfg.strategy;
  r.layout_seed = cfg.layout_seed;
  r.events = log->records();
  r.manual_switch_count = count_manual_switches(r.events);
  r.slot_switches = engine.slot_switches();
  r.false_gripper_mappings = count_false_gripper_mappings(r.events);
  r.rotation = rotation_accuracy(r.events);
  r.completed = engine.progress().completed;
  r.completion_tick = engine.world().tick;
  r.failure = failure;
  r.log_path = cfg.log_path;
  return r;
}

std::uint64_t trial_layout_seed(std::uint64_t seed, int trial) noexcept {
  return derive_seed(seed, static_cast<std::uint64_t>(trial), 1);
}

std::vector<TrialResult> run_experiment(const ExperimentConfig& cfg, const Gateway& gateway) {
  if (cfg.trials < 1) throw std::invalid_argument("an experiment needs at least one trial");
  std::string stem = std::string(to_string(cfg.task)) + "_" + std::string(to_string(cfg.strategy)) + "_seed" +
                     std::to_string(cfg.seed);
  std::string log_path, store_path;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    log_path = (fs::path(cfg.out_dir) / (stem + ".jsonl")).string();
    store_path = (fs::path(cfg.out_dir) / (stem + "_store.json")).string();
    fs::remove(log_path);
  }
  auto learning = std::make_shared<LearningHandle>(cfg.task, store_path);
  std::vector<TrialResult> out;
  for (int t = 1; t <= cfg.trials; ++t) {
    if (!keeps_examples(cfg.strategy)) learning = std::make_shared<LearningHandle>(cfg.task);
    TrialConfig tc;
    tc.task = cfg.task;
    tc.strategy = cfg.strategy;
    tc.layout_seed = trial_layout_seed(cfg.seed, t);
    tc.seed = cfg.seed;
    tc.trial = t;
    tc.max_ticks = cfg.max_ticks;
    tc.log_path = log_path;
    tc.heuristic_dir = cfg.heuristic_dir;
    tc.user = cfg.user;
    out.push_back(run_trial(tc, gateway, learning));
  }
  return out;
}

int count_manual_switches(const std::vector<nlohmann::json>& log) {
  return static_cast<int>(std::count_if(log.begin(), log.end(), [](const nlohmann::json& r) {
    const auto& k = r.at("kind");
    return k == "manual_switch" || k == "grouped_cycle";
  }));
}

int count_false_gripper_mappings(const std::vector<nlohmann::json>& log) {
  std::array<bool, 4> flagged{};
  int count = 0;
  for (const auto& r : log) {
    const auto& kind = r.at("kind");
    if (kind == "auto_switch") {
      auto after = r.at("after").get<ModeMapping>();
      for (auto g : {DirectionGroup::Up, DirectionGroup::Down}) {
        auto d = after.slot(g);
        flagged[slot_index(g)] = d && is_gripper(*d);
      }
    } else if (kind == "manual_switch") {
      auto i = slot_index(parse_group(r.at("slot").get<std::string>()));
      if (flagged[i]) ++count;
      flagged[i] = false;
    } else if (kind == "input") {
      for (auto d : driven_of(r)) flagged[slot_index(group_of(d))] = false;
    }
  }
  return count;
}

RotationAccuracy rotation_accuracy(const std::vector<nlohmann::json>& log) {
  RotationAccuracy acc;
  SlotArray offered{}, chosen{};
  for (const auto& r : log) {
    const auto& kind = r.at("kind");
    if (kind == "auto_switch") {
      auto after = r.at("after").get<ModeMapping>();
      for (auto g : kAllGroups) {
        auto d = after.slot(g);
        offered[slot_index(g)] = d && is_rotation(*d) ? d : std::nullopt;
        chosen[slot_index(g)].reset();
      }
    } else if (kind == "manual_switch") {
      auto i = slot_index(parse_group(r.at("slot").get<std::string>()));
      offered[i].reset();
      auto d = opt_direction(r.at("new"));
      chosen[i] = d && is_rotation(*d) ? d : std::nullopt;
    } else if (kind == "input") {
      for (auto d : driven_of(r)) {
        auto i = slot_index(group_of(d));
        if (offered[i] == d) {
          auto& t = tally_for(acc, d);
          ++t.correct;
          ++t.required;
        } else if (chosen[i] == d) {
          ++tally_for(acc, d).required;
        }
        offered[i].reset();
        chosen[i].reset();
      }
    }
  }
  return acc;
}

std::vector<ShadowTrial> shadow_replay(const std::vector<std::vector<nlohmann::json>>& trials, StrategyKind variant,
                                       const Gateway& gateway, const std::string& heuristic_dir) {
  std::vector<ShadowTrial> out;
  std::shared_ptr<LearningHandle> learning;
  for (const auto& log : trials) {
    if (log.empty() || log.front().at("kind") != "trial_start") throw IncompleteLog("trial log without trial_start");
    const auto& start = log.front();
    auto cfg = start.at("config").get<EngineConfig>();
    cfg.strategy = variant;
    if (!learning || learning->store.task() != cfg.task || !keeps_examples(variant))
      learning = std::make_shared<LearningHandle>(cfg.task);
    auto& store = learning->store;

    ShadowTrial st;
    st.trial = cfg.trial;
    st.recorded = count_manual_switches(log);

    ModeMapping v = grouped_mapping(1);
    GroupedState grouped;
    std::optional<HeuristicPhaseTable> table;
    HeuristicState hstate;
    auto world = start.at("world").get<WorldState>();
    if (variant == StrategyKind::Heuristic) {
      table = load_heuristic_table(cfg.task, heuristic_dir);
      auto s = heuristic_step(world, *table, hstate);
      hstate = s.state;
      if (s.mapping) v = *s.mapping;
    }
    auto is_switch_point = [](const nlohmann::json& r) {
      return r.at("kind") == "auto_switch" && (r.at("trigger") == "start" || r.at("trigger") == "pause");
    };
    if (uses_llm(variant) && std::none_of(log.begin(), log.end(), is_switch_point))
      throw IncompleteLog("log has no model switch points to replay");

    for (const auto& r : log) {
      const auto& kind = r.at("kind");
      if (uses_llm(variant) && is_switch_point(r)) {
        if (!r.contains("world") || !r.contains("last_executed") || !r.contains("switch_index"))
          throw IncompleteLog("switch point without a world snapshot");
        auto snapshot = r["world"].get<WorldState>();
        auto seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(cfg.trial), r["switch_index"].get<std::uint64_t>());
        std::string guidance;
        if (uses_rules(variant)) guidance = compose_rule_section(store.rules(), seed);
        if (variant == StrategyKind::DirectExamples) guidance = compose_example_section(store.examples(), seed, cfg.encoding());
        SwitchContext ctx;
        ctx.current_mode = v;
        ctx.last_executed = parse_slots(r["last_executed"]);
        auto request = make_switch_request(variant, snapshot, guidance);
        try {
          v = resolve_switch(variant, ctx, request, gateway.complete(request)).mapping;
        } catch (const GatewayError&) {
          // A failed call keeps the mapping, as in a live session.
        } catch (const EmptyDistribution&) {
        }
        ++st.switch_points;
      } else if (table && (kind == "grasp" || kind == "release")) {
        auto s = heuristic_step(r.at("world").get<WorldState>(), *table, hstate);
        hstate = s.state;
        if (s.mapping) {
          v = *s.mapping;
          ++st.switch_points;
        }
      } else if (kind == "input") {
        if (r.contains("world")) world = r["world"].get<WorldState>();
        for (auto d : driven_of(r)) {
          auto g = group_of(d);
          if (variant == StrategyKind::GroupedMapping) {
            while (!v.exposes(d)) {
              grouped = grouped_cycle(grouped);
              v = grouped_mapping(grouped.index);
              ++st.simulated;
            }
            continue;
          }
          auto cur = v.slot(g);
          if (cur == d) continue;
          st.simulated += cur ? cycle_distance(*cur, d) : (letter_of(d) - 'A' + 1);
          v.set(g, d);
          if (!keeps_examples(variant)) continue;
          store.add_example({world.tick, g, d, world});
          if (!uses_rules(variant)) continue;
          try {
            auto req = make_rule_request(store.examples(), derive_seed(cfg.seed, store.examples().size()),
                                         cfg.encoding());
            auto rules = parse_rules(gateway.complete(req).text);
            if (!rules.empty()) store.append_rules(rules);
          } catch (const GatewayError&) {
          }
        }
      }
    }
    out.push_back(st);
  }
  return out;
}

ReportRow report_row(const std::vector<nlohmann::json>& log, const std::string& file) {
  if (log.empty() || log.front().at("kind") != "trial_start") throw IncompleteLog("trial log without trial_start");
  const auto& start = log.front();
  ReportRow row;
  row.file = file;
  row.task = parse_task(start.at("task").get<std::string>());
  row.strategy = parse_strategy(start.at("strategy").get<std::string>());
  row.trial = start.at("trial").get<int>();
  row.seed = start.at("seed").get<std::uint64_t>();
  row.layout_seed = start.at("layout_seed").get<std::uint64_t>();
  row.manual_switches = count_manual_switches(log);
  row.false_gripper_mappings = count_false_gripper_mappings(log);
  row.rotation = rotation_accuracy(log);
  for (const auto& r : log) {
    if (r.at("kind") == "trial_end") {
      row.completed = r.at("completed").get<bool>();
      row.ticks = r.at("ticks").get<std::int64_t>();
    }
  }
  return row;
}

std::vector<ReportRow> collect_report(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ReportRow> rows;
  for (const auto& f : files)
    for (const auto& trial : split_trials(read_event_log(f.string())))
      rows.push_back(report_row(trial, f.filename().string()));
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "file,task,strategy,trial,seed,layout_seed,manual_switches,false_gripper_mappings,"
        "pitch_correct,pitch_required,yaw_correct,yaw_required,roll_correct,roll_required,completed,ticks\n";
  for (const auto& r : rows) {
    os << r.file << ',' << to_string(r.task) << ',' << to_string(r.strategy) << ',' << r.trial << ',' << r.seed << ','
       << r.layout_seed << ',' << r.manual_switches << ',' << r.false_gripper_mappings << ','
       << r.rotation.pitch.correct << ',' << r.rotation.pitch.required << ',' << r.rotation.yaw.correct << ','
       << r.rotation.yaw.required << ',' << r.rotation.roll.correct << ',' << r.rotation.roll.required << ','
       << (r.completed ? 1 : 0) << ',' << r.ticks << '\n';
  }
  return os.str();
}

std::string report_markdown(const std::vector<ReportRow>& rows) {
  // task -> strategy -> trial -> (sum, n)
  std::map<std::string, std::map<std::string, std::map<int, std::pair<double, int>>>> table;
  int max_trial = 0;
  for (const auto& r : rows) {
    auto& cell = table[std::string(to_string(r.task))][std::string(to_string(r.strategy))][r.trial];
    cell.first += r.manual_switches;
    ++cell.second;
    max_trial = std::max(max_trial, r.trial);
  }
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  for (const auto& [task, strategies] : table) {
    os << "### " << task << "\n\nMean manual switches per trial (runs in parentheses).\n\n| strategy |";
    for (int t = 1; t <= max_trial; ++t) os << " trial " << t << " |";
    os << "\n|---|";
    for (int t = 1; t <= max_trial; ++t) os << "---|";
    os << "\n";
    for (const auto& [strategy, trials] : strategies) {
      os << "| " << strategy << " |";
      for (int t = 1; t <= max_trial; ++t) {
        auto it = trials.find(t);
        if (it == trials.end()) {
          os << " - |";
        } else {
          os << ' ' << it->second.first / it->second.second << " (" << it->second.second << ") |";
        }
      }
      os << "\n";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace lams
