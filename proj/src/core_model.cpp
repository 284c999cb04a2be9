#include "lams/core_model.hpp"

#include <algorithm>
#include <cmath>

namespace lams {

namespace {

using AD = ActionDirection;

constexpr std::array<AD, 4> kUp = {AD::MoveForward, AD::MoveUp, AD::PitchUp, AD::OpenGripper};
constexpr std::array<AD, 4> kDown = {AD::MoveBackward, AD::MoveDown, AD::PitchDown, AD::CloseGripper};
constexpr std::array<AD, 3> kLeft = {AD::MoveLeft, AD::RollLeft, AD::YawLeft};
constexpr std::array<AD, 3> kRight = {AD::MoveRight, AD::RollRight, AD::YawRight};

struct DirectionInfo {
  AD dir;
  std::string_view id;
  std::string_view label;  // prompt wording
  std::string_view name;   // plain action name
  DirectionEffect effect;
};

constexpr auto T = VelocityKind::Translation;
constexpr auto R = VelocityKind::Rotation;
constexpr auto G = VelocityKind::Gripper;

// Indexed by ActionDirection.
constexpr std::array<DirectionInfo, 14> kInfo = {{
    {AD::MoveForward, "move_forward", "Move forward", "Move forward", {Component::X, +1, T}},
    {AD::MoveBackward, "move_backward", "Move backward", "Move backward", {Component::X, -1, T}},
    {AD::MoveUp, "move_up", "Move up", "Move up", {Component::Z, +1, T}},
    {AD::MoveDown, "move_down", "Move down", "Move down", {Component::Z, -1, T}},
    {AD::MoveLeft, "move_left", "Move left", "Move left", {Component::Y, +1, T}},
    {AD::MoveRight, "move_right", "Move right", "Move right", {Component::Y, -1, T}},
    {AD::PitchUp, "pitch_up", "Rotate up", "Pitch up", {Component::Pitch, +1, R}},
    {AD::PitchDown, "pitch_down", "Rotate down", "Pitch down", {Component::Pitch, -1, R}},
    {AD::RollLeft, "roll_left", "Roll left", "Roll left", {Component::Roll, -1, R}},
    {AD::RollRight, "roll_right", "Roll right", "Roll right", {Component::Roll, +1, R}},
    {AD::YawLeft, "yaw_left", "Rotate left", "Yaw left", {Component::Yaw, +1, R}},
    {AD::YawRight, "yaw_right", "Rotate right", "Yaw right", {Component::Yaw, -1, R}},
    {AD::OpenGripper, "open_gripper", "Open gripper", "Open gripper", {Component::Gripper, +1, G}},
    {AD::CloseGripper, "close_gripper", "Close gripper", "Close gripper", {Component::Gripper, -1, G}},
}};

const DirectionInfo& info(AD d) noexcept { return kInfo[static_cast<std::size_t>(d)]; }

constexpr std::array<std::string_view, 4> kGroupIds = {"up", "down", "left", "right"};

}  // namespace

double wrap_degrees(double deg) noexcept {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r -= 360.0;  // fmod of tiny negatives can round up to 360
  return r == 0.0 ? 0.0 : r;   // no negative zero
}

double shortest_arc(double from, double to) noexcept {
  double d = wrap_degrees(to - from);
  return d > 180.0 ? d - 360.0 : d;
}

Pose6 Pose6::normalized() const noexcept {
  return {x, y, z, wrap_degrees(roll), wrap_degrees(pitch), wrap_degrees(yaw)};
}

bool Pose6::finite() const noexcept {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(roll) &&
         std::isfinite(pitch) && std::isfinite(yaw);
}

std::span<const ActionDirection> group_members(DirectionGroup g) noexcept {
  switch (g) {
    case DirectionGroup::Up: return kUp;
    case DirectionGroup::Down: return kDown;
    case DirectionGroup::Left: return kLeft;
    case DirectionGroup::Right: return kRight;
  }
  return {};
}

DirectionGroup group_of(ActionDirection d) noexcept {
  for (auto g : kAllGroups) {
    auto m = group_members(g);
    if (std::find(m.begin(), m.end(), d) != m.end()) return g;
  }
  return DirectionGroup::Up;  // unreachable: groups cover all directions
}

int group_number(DirectionGroup g) noexcept { return static_cast<int>(g) + 1; }

DirectionGroup group_from_number(int n) {
  if (n < 1 || n > 4) throw std::invalid_argument("group number out of range: " + std::to_string(n));
  return static_cast<DirectionGroup>(n - 1);
}

DirectionEffect effect_of(ActionDirection d) noexcept { return info(d).effect; }

char letter_of(ActionDirection d) noexcept {
  auto m = group_members(group_of(d));
  auto it = std::find(m.begin(), m.end(), d);
  return static_cast<char>('A' + (it - m.begin()));
}

CanonicalLabel label_of(ActionDirection d) {
  return {group_of(d), letter_of(d), std::string(info(d).label)};
}

ActionDirection direction_of(DirectionGroup g, char letter) {
  auto m = group_members(g);
  int idx = letter - 'A';
  if (idx < 0 || idx >= static_cast<int>(m.size())) {
    throw InvalidLetter(std::string("letter '") + letter + "' is not valid for Group " +
                        std::to_string(group_number(g)));
  }
  return m[static_cast<std::size_t>(idx)];
}

std::string_view action_name(ActionDirection d) noexcept { return info(d).name; }
std::string_view to_string(ActionDirection d) noexcept { return info(d).id; }
std::string_view to_string(DirectionGroup g) noexcept { return kGroupIds[static_cast<std::size_t>(g)]; }

ActionDirection parse_direction(std::string_view s) {
  for (const auto& i : kInfo)
    if (i.id == s) return i.dir;
  throw std::invalid_argument("unknown action direction: " + std::string(s));
}

DirectionGroup parse_group(std::string_view s) {
  for (std::size_t i = 0; i < kGroupIds.size(); ++i)
    if (kGroupIds[i] == s) return static_cast<DirectionGroup>(i);
  throw std::invalid_argument("unknown joystick direction: " + std::string(s));
}

ActionDirection next_in_group(ActionDirection d) noexcept {
  auto m = group_members(group_of(d));
  auto idx = static_cast<std::size_t>(letter_of(d) - 'A');
  return m[(idx + 1) % m.size()];
}

int cycle_distance(ActionDirection from, ActionDirection to) {
  auto g = group_of(from);
  if (group_of(to) != g) throw std::invalid_argument("cycle_distance across groups");
  auto n = static_cast<int>(group_members(g).size());
  return ((letter_of(to) - letter_of(from)) % n + n) % n;
}

bool is_gripper(ActionDirection d) noexcept { return effect_of(d).velocity == VelocityKind::Gripper; }
bool is_rotation(ActionDirection d) noexcept { return effect_of(d).velocity == VelocityKind::Rotation; }

UserAction UserAction::clamped(double lateral, double longitudinal) noexcept {
  auto c = [](double v) { return std::isfinite(v) ? std::clamp(v, -1.0, 1.0) : 0.0; };
  return {c(lateral), c(longitudinal)};
}

double& RobotAction::operator[](Component c) noexcept {
  switch (c) {
    case Component::X: return dx;
    case Component::Y: return dy;
    case Component::Z: return dz;
    case Component::Roll: return droll;
    case Component::Pitch: return dpitch;
    case Component::Yaw: return dyaw;
    case Component::Gripper: return dgripper;
  }
  return dgripper;
}

double RobotAction::operator[](Component c) const noexcept {
  return const_cast<RobotAction&>(*this)[c];
}

int RobotAction::nonzero_count() const noexcept {
  int n = 0;
  for (double v : {dx, dy, dz, droll, dpitch, dyaw, dgripper}) n += v != 0.0;
  return n;
}

RobotAction& RobotAction::operator+=(const RobotAction& o) noexcept {
  dx += o.dx;
  dy += o.dy;
  dz += o.dz;
  droll += o.droll;
  dpitch += o.dpitch;
  dyaw += o.dyaw;
  dgripper += o.dgripper;
  return *this;
}

double VelocityProfile::for_kind(VelocityKind k) const noexcept {
  switch (k) {
    case VelocityKind::Translation: return v_tr;
    case VelocityKind::Rotation: return v_ro;
    case VelocityKind::Gripper: return v_gr;
  }
  return 0.0;
}

void VelocityProfile::validate() const {
  if (!(v_tr > 0.0) || !(v_ro > 0.0) || !(v_gr > 0.0))
    throw std::invalid_argument("velocity profile components must be strictly positive");
}

ModeMapping::ModeMapping(ActionDirection up, ActionDirection down, ActionDirection left,
                         ActionDirection right) {
  set(DirectionGroup::Up, up);
  set(DirectionGroup::Down, down);
  set(DirectionGroup::Left, left);
  set(DirectionGroup::Right, right);
}

std::optional<ActionDirection> ModeMapping::slot(DirectionGroup g) const noexcept {
  return slots_[static_cast<std::size_t>(g)];
}

void ModeMapping::set(DirectionGroup g, std::optional<ActionDirection> d) {
  if (d && group_of(*d) != g) {
    throw std::invalid_argument(std::string(to_string(*d)) + " cannot be bound to joystick " +
                                std::string(to_string(g)));
  }
  slots_[static_cast<std::size_t>(g)] = d;
}

std::optional<DirectionGroup> engaged_longitudinal(const UserAction& input) noexcept {
  if (input.longitudinal > 0.0) return DirectionGroup::Up;
  if (input.longitudinal < 0.0) return DirectionGroup::Down;
  return std::nullopt;
}

std::optional<DirectionGroup> engaged_lateral(const UserAction& input) noexcept {
  if (input.lateral > 0.0) return DirectionGroup::Right;
  if (input.lateral < 0.0) return DirectionGroup::Left;
  return std::nullopt;
}

RobotAction apply_mode(const ModeMapping& mode, const UserAction& input, const VelocityProfile& v) {
  RobotAction out;
  auto engage = [&](std::optional<DirectionGroup> g, double magnitude) {
    if (!g) return;
    auto d = mode.slot(*g);
    if (!d) return;
    auto e = effect_of(*d);
    out[e.component] += e.sign * v.for_kind(e.velocity) * magnitude;
  };
  engage(engaged_longitudinal(input), std::abs(input.longitudinal));
  engage(engaged_lateral(input), std::abs(input.lateral));
  return out;
}

void to_json(nlohmann::json& j, const Pose6& p) {
  j = {{"x", p.x}, {"y", p.y}, {"z", p.z}, {"roll", p.roll}, {"pitch", p.pitch}, {"yaw", p.yaw}};
}

void from_json(const nlohmann::json& j, Pose6& p) {
  p.x = j.at("x").get<double>();
  p.y = j.at("y").get<double>();
  p.z = j.at("z").get<double>();
  p.roll = j.at("roll").get<double>();
  p.pitch = j.at("pitch").get<double>();
  p.yaw = j.at("yaw").get<double>();
}

void to_json(nlohmann::json& j, const ModeMapping& m) {
  j = nlohmann::json::object();
  for (auto g : kAllGroups) {
    auto d = m.slot(g);
    j[std::string(to_string(g))] = d ? nlohmann::json(std::string(to_string(*d))) : nlohmann::json();
  }
}

void from_json(const nlohmann::json& j, ModeMapping& m) {
  m = ModeMapping{};
  for (auto g : kAllGroups) {
    const auto& v = j.at(std::string(to_string(g)));
    if (!v.is_null()) m.set(g, parse_direction(v.get<std::string>()));
  }
}

void to_json(nlohmann::json& j, const UserAction& a) {
  j = {{"lateral", a.lateral}, {"longitudinal", a.longitudinal}};
}

void to_json(nlohmann::json& j, const RobotAction& a) {
  j = {{"dx", a.dx},         {"dy", a.dy},         {"dz", a.dz},
       {"droll", a.droll},   {"dpitch", a.dpitch}, {"dyaw", a.dyaw},
       {"dgripper", a.dgripper}};
}

void to_json(nlohmann::json& j, const VelocityProfile& v) {
  j = {{"v_tr", v.v_tr}, {"v_ro", v.v_ro}, {"v_gr", v.v_gr}};
}

void from_json(const nlohmann::json& j, VelocityProfile& v) {
  v.v_tr = j.value("v_tr", v.v_tr);
  v.v_ro = j.value("v_ro", v.v_ro);
  v.v_gr = j.value("v_gr", v.v_gr);
}

}  // namespace lams
