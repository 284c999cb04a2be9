#include "lams/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace lams {

namespace {

constexpr std::array<std::string_view, 2> kTaskIds = {"water_pouring", "book_storage"};
constexpr std::array<std::string_view, 5> kKindIds = {"bottle_cap", "bottle", "bowl", "book", "shelf"};
constexpr std::array<std::string_view, 5> kKindNames = {"bottle cap", "bottle", "bowl", "book", "shelf"};

// Uniform doubles from a fully specified engine so layouts are identical
// across standard library implementations.
class LayoutRng {
 public:
  explicit LayoutRng(std::uint64_t seed) : eng_(seed) {}
  double uniform(double lo, double hi) {
    double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }
  bool coin() { return (eng_() >> 63) != 0; }

 private:
  std::mt19937_64 eng_;
};

ObjectState make_object(ObjectKind k, Pose6 p) {
  ObjectState o;
  o.id = std::string(to_string(k));
  o.kind = k;
  o.pose = p.normalized();
  o.initial_pose = o.pose;
  return o;
}

const ObjectState& need(const WorldState& w, ObjectKind k) {
  const auto* o = w.find(k);
  if (!o) throw std::logic_error("world is missing object " + std::string(to_string(k)));
  return *o;
}

double planar_distance(const Pose6& a, const Pose6& b) { return std::hypot(a.x - b.x, a.y - b.y); }

double distance(const Pose6& a, const Pose6& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

bool above_bowl(const WorldState& w, const SimConfig& c) {
  const auto& bottle = need(w, ObjectKind::Bottle);
  const auto& bowl = need(w, ObjectKind::Bowl);
  return bottle.held && planar_distance(bottle.pose, bowl.pose) <= c.bowl_lateral_tol &&
         bottle.pose.z > bowl.pose.z + c.bowl_rim_height;
}

bool aligned_with_slot(const WorldState& w, const SimConfig& c) {
  const auto& book = need(w, ObjectKind::Book);
  const auto& shelf = need(w, ObjectKind::Shelf);
  return book.held && std::abs(book.pose.y - shelf.pose.y) <= c.slot_position_tol &&
         std::abs(book.pose.z - shelf.pose.z) <= c.slot_position_tol &&
         std::abs(shortest_arc(shelf.pose.yaw, book.pose.yaw)) <= c.slot_yaw_tol;
}

TaskSpec make_water_pouring() {
  using K = ObjectKind;
  TaskSpec s;
  s.kind = TaskKind::WaterPouring;
  s.task_line = "Open the cap of a bottle, then pick up the bottle and pour what's inside into a bowl.";
  s.relevant_objects = {K::BottleCap, K::Bottle, K::Bowl};
  s.stages = {
      {"align_cap",
       [](const WorldState& w, const SimConfig& c) {
         const auto& cap = need(w, K::BottleCap);
         return cap.held || cap.dropped || within_grasp(w.ee_pose, cap, c);
       }},
      {"grasp_cap",
       [](const WorldState& w, const SimConfig&) {
         const auto& cap = need(w, K::BottleCap);
         return cap.held || cap.dropped;
       }},
      {"lift_cap",
       [](const WorldState& w, const SimConfig& c) {
         const auto& cap = need(w, K::BottleCap);
         return cap.dropped || (cap.held && cap.pose.z >= cap.initial_pose.z + c.lift_height);
       }},
      {"release_cap", [](const WorldState& w, const SimConfig&) { return need(w, K::BottleCap).dropped; }},
      {"align_bottle",
       [](const WorldState& w, const SimConfig& c) {
         const auto& bottle = need(w, K::Bottle);
         return bottle.held || within_grasp(w.ee_pose, bottle, c);
       }},
      {"grasp_bottle", [](const WorldState& w, const SimConfig&) { return need(w, K::Bottle).held; }},
      {"above_bowl", above_bowl},
      {"pour",
       [](const WorldState& w, const SimConfig& c) {
         const auto& bottle = need(w, K::Bottle);
         return above_bowl(w, c) &&
                std::abs(shortest_arc(bottle.initial_pose.roll, bottle.pose.roll)) >= c.pour_angle;
       }},
  };
  return s;
}

TaskSpec make_book_storage() {
  using K = ObjectKind;
  TaskSpec s;
  s.kind = TaskKind::BookStorage;
  s.task_line = "Pick up a book lying on the table with its spine facing up, then put it into a bookshelf.";
  s.relevant_objects = {K::Book, K::Shelf};
  s.stages = {
      {"align_book",
       [](const WorldState& w, const SimConfig& c) {
         const auto& book = need(w, K::Book);
         return book.held || within_grasp(w.ee_pose, book, c);
       }},
      {"grasp_book", [](const WorldState& w, const SimConfig&) { return need(w, K::Book).held; }},
      {"lift_book",
       [](const WorldState& w, const SimConfig& c) {
         const auto& book = need(w, K::Book);
         return book.held && book.pose.z >= book.initial_pose.z + c.lift_height;
       }},
      {"align_slot", aligned_with_slot},
      {"insert",
       [](const WorldState& w, const SimConfig& c) {
         return aligned_with_slot(w, c) &&
                need(w, K::Book).pose.x >= need(w, K::Shelf).pose.x + c.insert_depth;
       }},
  };
  return s;
}

bool inside_shelf(const WorldState& w, const ObjectState& o, const SimConfig& c) {
  const auto* shelf = w.find(ObjectKind::Shelf);
  return shelf && o.kind == ObjectKind::Book && o.pose.x >= shelf->pose.x &&
         std::abs(o.pose.y - shelf->pose.y) <= c.slot_position_tol &&
         std::abs(o.pose.z - shelf->pose.z) <= c.slot_position_tol;
}

Pose6 follow(const Pose6& ee, const Pose6& offset) {
  return Pose6{ee.x + offset.x,       ee.y + offset.y,         ee.z + offset.z,
               ee.roll + offset.roll, ee.pitch + offset.pitch, ee.yaw + offset.yaw}
      .normalized();
}

}  // namespace

std::string_view to_string(TaskKind t) noexcept { return kTaskIds[static_cast<std::size_t>(t)]; }

TaskKind parse_task(std::string_view s) {
  for (std::size_t i = 0; i < kTaskIds.size(); ++i)
    if (kTaskIds[i] == s) return static_cast<TaskKind>(i);
  throw UnknownTask("unknown task: " + std::string(s));
}

std::string_view to_string(ObjectKind k) noexcept { return kKindIds[static_cast<std::size_t>(k)]; }
std::string_view display_name(ObjectKind k) noexcept { return kKindNames[static_cast<std::size_t>(k)]; }

ObjectKind parse_object_kind(std::string_view s) {
  for (std::size_t i = 0; i < kKindIds.size(); ++i)
    if (kKindIds[i] == s) return static_cast<ObjectKind>(i);
  throw std::invalid_argument("unknown object kind: " + std::string(s));
}

bool graspable(ObjectKind k) noexcept {
  return k == ObjectKind::BottleCap || k == ObjectKind::Bottle || k == ObjectKind::Book;
}

const ObjectState* WorldState::find(ObjectKind k) const noexcept {
  for (const auto& o : objects)
    if (o.kind == k) return &o;
  return nullptr;
}

const ObjectState* WorldState::held_object() const noexcept {
  for (const auto& o : objects)
    if (o.held) return &o;
  return nullptr;
}

double SimConfig::rest_height(ObjectKind k) const noexcept {
  switch (k) {
    case ObjectKind::BottleCap: return 0.02;
    case ObjectKind::Bottle: return 0.10;
    case ObjectKind::Bowl: return 0.04;
    case ObjectKind::Book: return 0.03;
    case ObjectKind::Shelf: return 0.30;
  }
  return 0.0;
}

void to_json(nlohmann::json& j, const SimConfig& c) {
  j = {{"workspace_min", c.workspace_min},
       {"workspace_max", c.workspace_max},
       {"grasp_position_tol", c.grasp_position_tol},
       {"grasp_orientation_tol", c.grasp_orientation_tol},
       {"drop_displacement", c.drop_displacement},
       {"lift_height", c.lift_height},
       {"bowl_lateral_tol", c.bowl_lateral_tol},
       {"bowl_rim_height", c.bowl_rim_height},
       {"pour_angle", c.pour_angle},
       {"slot_position_tol", c.slot_position_tol},
       {"slot_yaw_tol", c.slot_yaw_tol},
       {"insert_depth", c.insert_depth}};
}

void from_json(const nlohmann::json& j, SimConfig& c) {
  auto get = [&](const char* k, double& v) { v = j.value(k, v); };
  if (j.contains("workspace_min"))
    for (int i = 0; i < 3; ++i) c.workspace_min[i] = j["workspace_min"].at(i).get<double>();
  if (j.contains("workspace_max"))
    for (int i = 0; i < 3; ++i) c.workspace_max[i] = j["workspace_max"].at(i).get<double>();
  get("grasp_position_tol", c.grasp_position_tol);
  get("grasp_orientation_tol", c.grasp_orientation_tol);
  get("drop_displacement", c.drop_displacement);
  get("lift_height", c.lift_height);
  get("bowl_lateral_tol", c.bowl_lateral_tol);
  get("bowl_rim_height", c.bowl_rim_height);
  get("pour_angle", c.pour_angle);
  get("slot_position_tol", c.slot_position_tol);
  get("slot_yaw_tol", c.slot_yaw_tol);
  get("insert_depth", c.insert_depth);
}

const TaskSpec& task_spec(TaskKind t) {
  static const TaskSpec water = make_water_pouring();
  static const TaskSpec book = make_book_storage();
  return t == TaskKind::WaterPouring ? water : book;
}

Pose6 home_pose() noexcept { return {0.30, 0.0, 0.45, 180.0, 0.0, 90.0}; }

WorldState generate_layout(TaskKind t, std::uint64_t seed) {
  LayoutRng rng(seed);
  WorldState w;
  w.task = t;
  w.ee_pose = home_pose();
  w.gripper_aperture = 1.0;
  w.task_layout_seed = seed;
  SimConfig c;
  if (t == TaskKind::WaterPouring) {
    double bx = rng.uniform(0.45, 0.60);
    double by = rng.uniform(-0.25, 0.25);
    Pose6 bottle{bx, by, c.rest_height(ObjectKind::Bottle), 180.0 + rng.uniform(-30, 30),
                 rng.uniform(-30, 30), 90.0 + rng.uniform(-45, 45)};
    Pose6 cap{bx, by, 0.22, 180.0 + rng.uniform(-30, 30), rng.uniform(-30, 30), 90.0 + rng.uniform(-45, 45)};
    // Bowl sits toward the middle of the table from the bottle.
    double side = by > 0.0 ? -1.0 : (by < 0.0 ? 1.0 : (rng.coin() ? 1.0 : -1.0));
    Pose6 bowl{rng.uniform(0.35, 0.60), by + side * rng.uniform(0.15, 0.25), c.rest_height(ObjectKind::Bowl),
               180.0, 0.0, 90.0};
    w.objects = {make_object(ObjectKind::BottleCap, cap), make_object(ObjectKind::Bottle, bottle),
                 make_object(ObjectKind::Bowl, bowl)};
  } else {
    Pose6 book{rng.uniform(0.40, 0.55), rng.uniform(-0.30, -0.05), c.rest_height(ObjectKind::Book),
               180.0 + rng.uniform(-20, 20), rng.uniform(-45, -15), 90.0 + rng.uniform(-45, 45)};
    Pose6 shelf{rng.uniform(0.62, 0.67), rng.uniform(0.10, 0.30), rng.uniform(0.25, 0.40),
                180.0, 0.0, 90.0 + rng.uniform(-30, 30)};
    w.objects = {make_object(ObjectKind::Book, book), make_object(ObjectKind::Shelf, shelf)};
  }
  return w;
}

TaskProgress task_progress(const WorldState& w, const TaskSpec& spec, const SimConfig& cfg) {
  TaskProgress p;
  while (p.stage_index < spec.stages.size() && spec.stages[p.stage_index].done(w, cfg)) ++p.stage_index;
  p.completed = !spec.stages.empty() && p.stage_index == spec.stages.size();
  return p;
}

bool within_grasp(const Pose6& ee, const ObjectState& obj, const SimConfig& cfg) noexcept {
  if (!graspable(obj.kind) || obj.held) return false;
  if (distance(ee, obj.pose) > cfg.grasp_position_tol) return false;
  return std::abs(shortest_arc(ee.roll, obj.pose.roll)) <= cfg.grasp_orientation_tol &&
         std::abs(shortest_arc(ee.pitch, obj.pose.pitch)) <= cfg.grasp_orientation_tol &&
         std::abs(shortest_arc(ee.yaw, obj.pose.yaw)) <= cfg.grasp_orientation_tol;
}

void grasp_release_rules(WorldState& w, double previous_aperture, const SimConfig& cfg) {
  bool was_closed = previous_aperture < 0.5;
  bool closed = w.gripper_closed();
  if (!was_closed && closed) {
    if (w.held_object()) return;
    ObjectState* best = nullptr;
    double best_d = 0.0;
    for (auto& o : w.objects) {
      if (!within_grasp(w.ee_pose, o, cfg)) continue;
      double d = distance(w.ee_pose, o.pose);
      if (!best || d < best_d) {
        best = &o;
        best_d = d;
      }
    }
    if (best) {
      best->held = true;
      best->dropped = false;
      best->grasp_offset = {best->pose.x - w.ee_pose.x,
                            best->pose.y - w.ee_pose.y,
                            best->pose.z - w.ee_pose.z,
                            shortest_arc(w.ee_pose.roll, best->pose.roll),
                            shortest_arc(w.ee_pose.pitch, best->pose.pitch),
                            shortest_arc(w.ee_pose.yaw, best->pose.yaw)};
    }
  } else if (was_closed && !closed) {
    for (auto& o : w.objects) {
      if (!o.held) continue;
      o.held = false;
      o.grasp_offset = {};
      if (distance(o.pose, o.initial_pose) > cfg.drop_displacement) o.dropped = true;
      if (!inside_shelf(w, o, cfg)) o.pose.z = cfg.rest_height(o.kind);
    }
  }
}

WorldState step(const WorldState& w, const RobotAction& a, const SimConfig& cfg) {
  WorldState n = w;
  double target[3] = {w.ee_pose.x + a.dx, w.ee_pose.y + a.dy, w.ee_pose.z + a.dz};
  n.clipped = false;
  for (int i = 0; i < 3; ++i) {
    double c = std::clamp(target[i], cfg.workspace_min[i], cfg.workspace_max[i]);
    if (c != target[i]) n.clipped = true;
    target[i] = c;
  }
  n.ee_pose = Pose6{target[0], target[1], target[2], w.ee_pose.roll + a.droll, w.ee_pose.pitch + a.dpitch,
                    w.ee_pose.yaw + a.dyaw}
                  .normalized();
  n.gripper_aperture = std::clamp(w.gripper_aperture + a.dgripper, 0.0, 1.0);
  for (auto& o : n.objects)
    if (o.held) o.pose = follow(n.ee_pose, o.grasp_offset);
  grasp_release_rules(n, w.gripper_aperture, cfg);
  n.tick = w.tick + 1;
  return n;
}

std::size_t SessionClock::window_ticks() const {
  if (!(tick_duration > 0.0) || !(pause_threshold > 0.0))
    throw std::invalid_argument("session clock durations must be positive");
  double ratio = pause_threshold / tick_duration;
  double r = std::round(ratio);
  if (r < 1.0 || std::abs(ratio - r) > 1e-9)
    throw std::invalid_argument("pause threshold must be an integer multiple of the tick duration");
  return static_cast<std::size_t>(r);
}

bool detect_pause(std::span<const UserAction> history, const SessionClock& clock) {
  std::size_t n = clock.window_ticks();
  if (history.size() < n) return false;
  auto window = history.last(n);
  if (!std::all_of(window.begin(), window.end(), [](const UserAction& u) { return u.is_zero(); })) return false;
  return history.size() == n || !history[history.size() - n - 1].is_zero();
}

PauseDetector::PauseDetector(SessionClock clock) : window_(clock.window_ticks()) {}

bool PauseDetector::push(const UserAction& sample) {
  if (!sample.is_zero()) {
    idle_ = 0;
    return false;
  }
  ++idle_;
  return idle_ == window_;
}

void to_json(nlohmann::json& j, const ObjectState& o) {
  j = {{"id", o.id},
       {"kind", to_string(o.kind)},
       {"pose", o.pose},
       {"initial_pose", o.initial_pose},
       {"held", o.held},
       {"dropped", o.dropped},
       {"grasp_offset", o.grasp_offset}};
}

void from_json(const nlohmann::json& j, ObjectState& o) {
  o.id = j.at("id").get<std::string>();
  o.kind = parse_object_kind(j.at("kind").get<std::string>());
  o.pose = j.at("pose").get<Pose6>();
  o.initial_pose = j.at("initial_pose").get<Pose6>();
  o.held = j.at("held").get<bool>();
  o.dropped = j.at("dropped").get<bool>();
  o.grasp_offset = j.value("grasp_offset", Pose6{});
}

void to_json(nlohmann::json& j, const WorldState& w) {
  j = {{"task", to_string(w.task)},
       {"ee_pose", w.ee_pose},
       {"gripper_aperture", w.gripper_aperture},
       {"gripper", w.gripper_closed() ? "closed" : "open"},
       {"objects", w.objects},
       {"tick", w.tick},
       {"task_layout_seed", w.task_layout_seed},
       {"clipped", w.clipped}};
}

void from_json(const nlohmann::json& j, WorldState& w) {
  w.task = parse_task(j.at("task").get<std::string>());
  w.ee_pose = j.at("ee_pose").get<Pose6>();
  w.gripper_aperture = j.at("gripper_aperture").get<double>();
  w.objects = j.at("objects").get<std::vector<ObjectState>>();
  w.tick = j.at("tick").get<std::int64_t>();
  w.task_layout_seed = j.at("task_layout_seed").get<std::uint64_t>();
  w.clipped = j.value("clipped", false);
}

}  // namespace lams
