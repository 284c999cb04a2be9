#pragma once

// Deterministic kinematic tabletop world: end-effector integration, grasping,
// task stage checkpoints and joystick pause detection.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lams/core_model.hpp"

namespace lams {

enum class TaskKind : std::uint8_t { WaterPouring, BookStorage };

class UnknownTask : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string_view to_string(TaskKind t) noexcept;
/// Throws UnknownTask.
TaskKind parse_task(std::string_view s);

enum class ObjectKind : std::uint8_t { BottleCap, Bottle, Bowl, Book, Shelf };

std::string_view to_string(ObjectKind k) noexcept;
ObjectKind parse_object_kind(std::string_view s);
/// Name used in prompts ("bottle cap").
std::string_view display_name(ObjectKind k) noexcept;
bool graspable(ObjectKind k) noexcept;

struct ObjectState {
  std::string id;
  ObjectKind kind = ObjectKind::Bottle;
  Pose6 pose;
  Pose6 initial_pose;
  bool held = false;
  bool dropped = false;
  Pose6 grasp_offset;  // object pose minus ee pose, fixed while held

  friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct WorldState {
  TaskKind task = TaskKind::WaterPouring;
  Pose6 ee_pose;
  double gripper_aperture = 1.0;  // 0 closed .. 1 open
  std::vector<ObjectState> objects;
  std::int64_t tick = 0;
  std::uint64_t task_layout_seed = 0;
  bool clipped = false;  // last step hit the workspace box

  [[nodiscard]] bool gripper_closed() const noexcept { return gripper_aperture < 0.5; }
  [[nodiscard]] const ObjectState* find(ObjectKind k) const noexcept;
  [[nodiscard]] const ObjectState* held_object() const noexcept;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Tunable geometry and tolerances. Defaults are engineering choices.
struct SimConfig {
  double workspace_min[3] = {0.0, -0.4, 0.0};
  double workspace_max[3] = {0.8, 0.4, 0.8};
  double grasp_position_tol = 0.03;     // m
  double grasp_orientation_tol = 20.0;  // deg, per axis
  double drop_displacement = 0.10;      // m from the initial pose
  double lift_height = 0.10;            // m above the initial pose
  double bowl_lateral_tol = 0.05;       // m
  double bowl_rim_height = 0.08;        // m above the bowl pose
  double pour_angle = 60.0;             // deg of roll away from upright
  double slot_position_tol = 0.04;      // m in the shelf plane
  double slot_yaw_tol = 15.0;           // deg
  double insert_depth = 0.08;           // m past the shelf front

  [[nodiscard]] double rest_height(ObjectKind k) const noexcept;
};

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);

struct TaskStage {
  std::string name;
  std::function<bool(const WorldState&, const SimConfig&)> done;
};

struct TaskSpec {
  TaskKind kind = TaskKind::WaterPouring;
  std::string task_line;  // sentence shown to the language model
  std::vector<TaskStage> stages;
  std::vector<ObjectKind> relevant_objects;  // in prompt order
};

const TaskSpec& task_spec(TaskKind t);

/// Initial world for a task; object poses sampled from `seed`.
WorldState generate_layout(TaskKind t, std::uint64_t seed);

/// Default end-effector start pose (gripper pointing down).
Pose6 home_pose() noexcept;

struct TaskProgress {
  std::size_t stage_index = 0;  // number of contiguous satisfied stages
  bool completed = false;

  friend bool operator==(const TaskProgress&, const TaskProgress&) = default;
};

TaskProgress task_progress(const WorldState& w, const TaskSpec& spec, const SimConfig& cfg = {});

bool within_grasp(const Pose6& ee, const ObjectState& obj, const SimConfig& cfg) noexcept;

/// Attach/detach objects after a gripper change from `previous_aperture`.
void grasp_release_rules(WorldState& w, double previous_aperture, const SimConfig& cfg);

/// Integrates one tick. Pure function of its inputs.
WorldState step(const WorldState& w, const RobotAction& a, const SimConfig& cfg = {});

struct SessionClock {
  double tick_duration = 0.1;    // s
  double pause_threshold = 1.5;  // s

  /// Number of consecutive idle ticks that make up a pause.
  [[nodiscard]] std::size_t window_ticks() const;
};

/// Edge-triggered pause detection over the most recent samples: true when the
/// last window is all exactly zero and the sample just before it was not.
bool detect_pause(std::span<const UserAction> history, const SessionClock& clock);

/// Incremental equivalent of detect_pause for streaming input.
class PauseDetector {
 public:
  explicit PauseDetector(SessionClock clock = {});
  /// Feeds one sample; returns true exactly once per pause.
  bool push(const UserAction& sample);
  void reset() noexcept { idle_ = 0; }
  [[nodiscard]] std::size_t idle_ticks() const noexcept { return idle_; }

 private:
  std::size_t window_;
  std::size_t idle_ = 0;
};

void to_json(nlohmann::json& j, const ObjectState& o);
void from_json(const nlohmann::json& j, ObjectState& o);
void to_json(nlohmann::json& j, const WorldState& w);
void from_json(const nlohmann::json& j, WorldState& w);

}  // namespace lams
