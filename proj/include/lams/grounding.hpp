#pragma once

// Turns a world snapshot into the language-model instruction: discretized
// robot pose, natural-language relative statements for each task object, and
// the full prompt assembled from prefix, rules and pose description.

#include <array>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lams/core_model.hpp"
#include "lams/simulator.hpp"

namespace lams {

/// Quanta for prompt discretization.
inline constexpr int kPositionQuantumCm = 5;
inline constexpr int kAngleQuantumDeg = 15;
/// "Close" thresholds for relative statements (inclusive).
inline constexpr double kCloseDistance = 0.05;  // m
inline constexpr double kCloseAngle = 15.0;     // deg

struct DiscretePose {
  int x = 0, y = 0, z = 0;           // cm, multiples of 5
  int roll = 0, pitch = 0, yaw = 0;  // deg, multiples of 15 in [0, 360)

  [[nodiscard]] Pose6 to_pose() const noexcept;
  friend bool operator==(const DiscretePose&, const DiscretePose&) = default;
};

/// Nearest multiple (ties away from zero); angles wrapped after rounding.
DiscretePose discretize_pose(const Pose6& p) noexcept;

enum class Dimension : std::uint8_t { X, Y, Z, Roll, Pitch, Yaw };

struct RelativeStatement {
  Dimension dimension;
  std::string text;

  friend bool operator==(const RelativeStatement&, const RelativeStatement&) = default;
};

/// The closed set of statements a dimension can produce.
std::array<std::string_view, 3> statement_vocabulary(Dimension d) noexcept;

struct HoldingStatement {
  std::string text;  // "The robot arm is holding the bottle cap."
};
struct DroppedStatement {
  std::string text;  // "The bottle cap has been dropped."
};
/// Six statements in render order: x, y, z, pitch, roll, yaw.
struct RelativeStatements {
  std::array<RelativeStatement, 6> statements;
};
/// Numeric ablation: signed integer deltas (cm / deg), same render order.
struct NumericDeltas {
  std::array<int, 6> values{};
};

using ObjectRelation = std::variant<HoldingStatement, DroppedStatement, RelativeStatements, NumericDeltas>;

enum class PoseEncoding : std::uint8_t { Language, Numeric };

ObjectRelation relative_statements(const Pose6& ee, const ObjectState& obj,
                                   PoseEncoding encoding = PoseEncoding::Language);

struct ObjectDescription {
  std::string name;  // display name used as the JSON key
  ObjectRelation relation;
};

struct PoseDescription {
  std::string task_line;
  DiscretePose robot;
  bool gripper_closed = false;
  std::vector<ObjectDescription> objects;
};

PoseDescription describe_pose(const WorldState& w, PoseEncoding encoding = PoseEncoding::Language);

/// Task / robot / object lines shared by prompts and correction examples.
std::string render_pose_body(const PoseDescription& d);
/// Full pose section including heading and output-format reminder.
std::string render_pose_section(const PoseDescription& d);

enum class PromptMode : std::uint8_t { Lams, Static, NumState, DirectExamples };

std::string_view to_string(PromptMode m) noexcept;

struct PromptBundle {
  std::string prefix;
  std::string rules_section;
  std::string pose_section;
  PromptMode mode = PromptMode::Lams;

  /// prefix, rules, pose joined by blank lines (empty rules omitted).
  [[nodiscard]] std::string text() const;
};

/// `guidance_section` is the composed rule section (Lams, NumState) or the
/// rendered example section (DirectExamples); it is dropped in Static mode.
PromptBundle assemble_prompt(std::string guidance_section, const WorldState& w, PromptMode mode);

}  // namespace lams
