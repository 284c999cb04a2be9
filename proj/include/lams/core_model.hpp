#pragma once

// Action-space algebra: direction groups, mode mappings and the mapping
// from a two-axis joystick sample to a 7-DoF end-effector command.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

namespace lams {

/// Wraps an angle in degrees into [0, 360).
double wrap_degrees(double deg) noexcept;

/// Signed shortest-arc difference `to - from` in degrees, in (-180, 180].
double shortest_arc(double from, double to) noexcept;

/// End-effector or object pose. Positions in meters, Euler angles in degrees.
struct Pose6 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;

  /// Copy with all angles wrapped into [0, 360).
  [[nodiscard]] Pose6 normalized() const noexcept;
  [[nodiscard]] bool finite() const noexcept;

  friend bool operator==(const Pose6&, const Pose6&) = default;
};

enum class ActionDirection : std::uint8_t {
  MoveForward,
  MoveBackward,
  MoveUp,
  MoveDown,
  MoveLeft,
  MoveRight,
  PitchUp,
  PitchDown,
  RollLeft,
  RollRight,
  YawLeft,
  YawRight,
  OpenGripper,
  CloseGripper,
};

inline constexpr std::array<ActionDirection, 14> kAllDirections = {
    ActionDirection::MoveForward, ActionDirection::MoveBackward, ActionDirection::MoveUp,
    ActionDirection::MoveDown,    ActionDirection::MoveLeft,     ActionDirection::MoveRight,
    ActionDirection::PitchUp,     ActionDirection::PitchDown,    ActionDirection::RollLeft,
    ActionDirection::RollRight,   ActionDirection::YawLeft,      ActionDirection::YawRight,
    ActionDirection::OpenGripper, ActionDirection::CloseGripper,
};

/// Joystick direction a robot action can be bound to. The numeric value plus
/// one is the group number used in prompts ("Group 1" .. "Group 4").
enum class DirectionGroup : std::uint8_t { Up, Down, Left, Right };

inline constexpr std::array<DirectionGroup, 4> kAllGroups = {
    DirectionGroup::Up, DirectionGroup::Down, DirectionGroup::Left, DirectionGroup::Right};

/// Members of a group in letter order (A, B, C[, D]).
std::span<const ActionDirection> group_members(DirectionGroup g) noexcept;
DirectionGroup group_of(ActionDirection d) noexcept;
int group_number(DirectionGroup g) noexcept;  // 1..4
DirectionGroup group_from_number(int n);

/// Robot action vector component touched by a direction.
enum class Component : std::uint8_t { X, Y, Z, Roll, Pitch, Yaw, Gripper };

enum class VelocityKind : std::uint8_t { Translation, Rotation, Gripper };

/// One row of the sign-convention table.
struct DirectionEffect {
  Component component;
  int sign;  // +1 or -1
  VelocityKind velocity;
};

/// The single source of truth for how each direction moves the robot.
/// x forward, y left, z up (right-handed); roll left is negative roll,
/// yaw left is positive yaw, pitch up is positive pitch.
DirectionEffect effect_of(ActionDirection d) noexcept;

struct CanonicalLabel {
  DirectionGroup group;
  char letter;       // 'A'..'D'
  std::string text;  // exact prompt wording, e.g. "Rotate up"

  friend bool operator==(const CanonicalLabel&, const CanonicalLabel&) = default;
};

class InvalidLetter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

CanonicalLabel label_of(ActionDirection d);
ActionDirection direction_of(DirectionGroup g, char letter);
char letter_of(ActionDirection d) noexcept;

/// Plain action name as shown to users and in correction examples
/// ("Pitch up", "Yaw left"); differs from the prompt label for rotations.
std::string_view action_name(ActionDirection d) noexcept;

/// Stable snake_case identifier used in JSON ("pitch_up").
std::string_view to_string(ActionDirection d) noexcept;
std::string_view to_string(DirectionGroup g) noexcept;
ActionDirection parse_direction(std::string_view s);
DirectionGroup parse_group(std::string_view s);

/// Next direction in the group's A -> B -> C (-> D) -> A cycle.
ActionDirection next_in_group(ActionDirection d) noexcept;
/// Number of cycle presses needed to get from `from` to `to` (same group).
int cycle_distance(ActionDirection from, ActionDirection to);

bool is_gripper(ActionDirection d) noexcept;
bool is_rotation(ActionDirection d) noexcept;

struct UserAction {
  double lateral = 0.0;       // +1 = full right
  double longitudinal = 0.0;  // +1 = full up

  /// Builds a sample with both components clamped to [-1, 1].
  static UserAction clamped(double lateral, double longitudinal) noexcept;
  [[nodiscard]] bool is_zero() const noexcept { return lateral == 0.0 && longitudinal == 0.0; }

  friend bool operator==(const UserAction&, const UserAction&) = default;
};

struct RobotAction {
  double dx = 0.0, dy = 0.0, dz = 0.0;             // meters
  double droll = 0.0, dpitch = 0.0, dyaw = 0.0;    // degrees
  double dgripper = 0.0;                           // aperture fraction

  double& operator[](Component c) noexcept;
  double operator[](Component c) const noexcept;
  [[nodiscard]] int nonzero_count() const noexcept;
  RobotAction& operator+=(const RobotAction& o) noexcept;

  friend bool operator==(const RobotAction&, const RobotAction&) = default;
};

struct VelocityProfile {
  double v_tr = 0.01;  // meters per tick at full deflection
  double v_ro = 3.0;   // degrees per tick
  double v_gr = 0.25;  // aperture fraction per tick

  [[nodiscard]] double for_kind(VelocityKind k) const noexcept;
  void validate() const;
};

/// Assignment of the four joystick directions to robot actions. A slot may be
/// empty (no action bound), as in the gripper group of the cycling baseline.
class ModeMapping {
 public:
  ModeMapping() = default;
  ModeMapping(ActionDirection up, ActionDirection down, ActionDirection left, ActionDirection right);

  [[nodiscard]] std::optional<ActionDirection> slot(DirectionGroup g) const noexcept;
  /// Throws std::invalid_argument if `d` is not a member of group `g`.
  void set(DirectionGroup g, std::optional<ActionDirection> d);
  [[nodiscard]] bool exposes(ActionDirection d) const noexcept { return slot(group_of(d)) == d; }

  friend bool operator==(const ModeMapping&, const ModeMapping&) = default;

 private:
  std::array<std::optional<ActionDirection>, 4> slots_{};
};

/// Maps a joystick sample to a robot action under `mode`.
/// Longitudinal drives the up/down slots, lateral the left/right slots.
RobotAction apply_mode(const ModeMapping& mode, const UserAction& input, const VelocityProfile& v);

/// Slot engaged by a joystick sample on one axis, if any.
std::optional<DirectionGroup> engaged_longitudinal(const UserAction& input) noexcept;
std::optional<DirectionGroup> engaged_lateral(const UserAction& input) noexcept;

void to_json(nlohmann::json& j, const Pose6& p);
void from_json(const nlohmann::json& j, Pose6& p);
void to_json(nlohmann::json& j, const ModeMapping& m);
void from_json(const nlohmann::json& j, ModeMapping& m);
void to_json(nlohmann::json& j, const UserAction& a);
void to_json(nlohmann::json& j, const RobotAction& a);
void to_json(nlohmann::json& j, const VelocityProfile& v);
void from_json(const nlohmann::json& j, VelocityProfile& v);

}  // namespace lams
