#include "lams/grounding.hpp"

#include <cmath>
#include <sstream>

#include "lams/assets.hpp"

namespace lams {

namespace {

constexpr double kEps = 1e-9;

// Render order inside an object block.
constexpr std::array<Dimension, 6> kRenderOrder = {Dimension::X,     Dimension::Y,    Dimension::Z,
                                                   Dimension::Pitch, Dimension::Roll, Dimension::Yaw};

// {positive delta, negative delta, close}; deltas are object minus ee.
// Positive roll means the arm must roll right to match, positive yaw means
// yaw left, following the sign table in core_model.
constexpr std::array<std::array<std::string_view, 3>, 6> kVocabulary = {{
    {"to the forward of the robot arm", "to the backward of the robot arm",
     "close to the robot arm along the x-axis"},
    {"to the left of the robot arm", "to the right of the robot arm", "close to the robot arm along the y-axis"},
    {"above the robot arm", "below the robot arm", "close to the robot arm along the z-axis"},
    {"rolled more right compared to the robot arm", "rolled more left compared to the robot arm",
     "roll orientation is close to the robot arm's roll orientation"},
    {"pitched more up compared to the robot arm", "pitched more down compared to the robot arm",
     "pitch orientation is close to the robot arm's pitch orientation"},
    // The close phrase for yaw mentions "roll orientation"; kept as worded
    // in the reference prompt.
    {"yawed more left compared to the robot arm", "yawed more right compared to the robot arm",
     "yaw orientation is close to the robot arm's roll orientation"},
}};

constexpr std::string_view kKeys[6] = {"x_relation",    "y_relation",    "z_relation",
                                       "roll_relation", "pitch_relation", "yaw_relation"};

bool is_angular(Dimension d) { return d == Dimension::Roll || d == Dimension::Pitch || d == Dimension::Yaw; }

double delta(const Pose6& ee, const Pose6& obj, Dimension d) {
  switch (d) {
    case Dimension::X: return obj.x - ee.x;
    case Dimension::Y: return obj.y - ee.y;
    case Dimension::Z: return obj.z - ee.z;
    case Dimension::Roll: return shortest_arc(ee.roll, obj.roll);
    case Dimension::Pitch: return shortest_arc(ee.pitch, obj.pitch);
    case Dimension::Yaw: return shortest_arc(ee.yaw, obj.yaw);
  }
  return 0.0;
}

bool close(Dimension d, double v) {
  return std::abs(v) <= (is_angular(d) ? kCloseAngle : kCloseDistance) + kEps;
}

int round_to(double v, int quantum) {
  double snapped = std::round(v * 1e6) / 1e6;  // absorb float noise before tie-breaking
  return static_cast<int>(std::round(snapped / quantum)) * quantum;
}

const char* const kOutputReminder =
    "- **Output (do not output any additional analysis):**  \n"
    "{\n"
    "\"Group 1\": \"A/B/C/D: {corresponding most likely action from group 1}\",\n"
    "\"Group 2\": \"A/B/C/D: {corresponding most likely action from group 2}\",\n"
    "\"Group 3\": \"A/B/C: {corresponding most likely action from group 3}\",\n"
    "\"Group 4\": \"A/B/C: {corresponding most likely action from group 4}\",\n"
    "}";

}  // namespace

Pose6 DiscretePose::to_pose() const noexcept {
  return {x / 100.0, y / 100.0, z / 100.0, static_cast<double>(roll), static_cast<double>(pitch),
          static_cast<double>(yaw)};
}

DiscretePose discretize_pose(const Pose6& p) noexcept {
  auto angle = [](double deg) {
    return static_cast<int>(wrap_degrees(round_to(wrap_degrees(deg), kAngleQuantumDeg)));
  };
  return {round_to(p.x * 100.0, kPositionQuantumCm), round_to(p.y * 100.0, kPositionQuantumCm),
          round_to(p.z * 100.0, kPositionQuantumCm), angle(p.roll), angle(p.pitch), angle(p.yaw)};
}

std::array<std::string_view, 3> statement_vocabulary(Dimension d) noexcept {
  return kVocabulary[static_cast<std::size_t>(d)];
}

ObjectRelation relative_statements(const Pose6& ee, const ObjectState& obj, PoseEncoding encoding) {
  std::string name(display_name(obj.kind));
  if (obj.held) return HoldingStatement{"The robot arm is holding the " + name + "."};
  if (obj.dropped) return DroppedStatement{"The " + name + " has been dropped."};

  std::array<double, 6> deltas{};
  bool all_close = true;
  for (std::size_t i = 0; i < kRenderOrder.size(); ++i) {
    deltas[i] = delta(ee, obj.pose, kRenderOrder[i]);
    all_close = all_close && close(kRenderOrder[i], deltas[i]);
  }
  if (all_close) return HoldingStatement{"The robot arm is holding the " + name + "."};

  if (encoding == PoseEncoding::Numeric) {
    NumericDeltas n;
    for (std::size_t i = 0; i < 6; ++i) {
      double v = is_angular(kRenderOrder[i]) ? deltas[i] : deltas[i] * 100.0;
      n.values[i] = static_cast<int>(std::lround(v));
    }
    return n;
  }

  RelativeStatements rs;
  for (std::size_t i = 0; i < 6; ++i) {
    auto dim = kRenderOrder[i];
    auto vocab = statement_vocabulary(dim);
    std::string_view text = close(dim, deltas[i]) ? vocab[2] : (deltas[i] > 0 ? vocab[0] : vocab[1]);
    rs.statements[i] = {dim, std::string(text)};
  }
  return rs;
}

PoseDescription describe_pose(const WorldState& w, PoseEncoding encoding) {
  const auto& spec = task_spec(w.task);
  PoseDescription d;
  d.task_line = spec.task_line;
  d.robot = discretize_pose(w.ee_pose);
  d.gripper_closed = w.gripper_closed();
  for (auto kind : spec.relevant_objects) {
    const auto* obj = w.find(kind);
    if (!obj) continue;
    d.objects.push_back({std::string(display_name(kind)), relative_statements(w.ee_pose, *obj, encoding)});
  }
  return d;
}

std::string render_pose_body(const PoseDescription& d) {
  std::ostringstream os;
  os << "- **Current Task:** " << d.task_line << "\n\n";
  os << "- **Current State of the Robot Arm:**  \n"
     << "{\n"
     << "    \"position\": {\n"
     << "        \"x\": " << d.robot.x << ",         \n"
     << "        \"y\": " << d.robot.y << ",\n"
     << "        \"z\": " << d.robot.z << "\n"
     << "    },\n"
     << "    \"orientation\": {\n"
     << "        \"theta x\": " << d.robot.roll << ",\n"
     << "        \"theta y\": " << d.robot.pitch << ",\n"
     << "        \"theta z\": " << d.robot.yaw << "\n"
     << "    }\n"
     << "    \"gripper\": " << (d.gripper_closed ? "closed" : "open") << "\n"
     << "}\n\n";
  os << "- **Current Object Information:**  \n{\n";
  for (const auto& obj : d.objects) {
    os << "    \"" << obj.name << "\": {\n";
    std::visit(
        [&](const auto& rel) {
          using T = std::decay_t<decltype(rel)>;
          if constexpr (std::is_same_v<T, HoldingStatement> || std::is_same_v<T, DroppedStatement>) {
            os << "        \"relative_pos\":\"" << rel.text << "\",    \n";
          } else {
            auto value = [&](std::size_t i) {
              if constexpr (std::is_same_v<T, RelativeStatements>)
                return "\"" + rel.statements[i].text + "\"";
              else
                return std::to_string(rel.values[i]);
            };
            os << "        \"relative_pos\":{\n"
               << "            \"relative_position\":{\n";
            for (std::size_t i = 0; i < 3; ++i)
              os << "                \"" << kKeys[static_cast<std::size_t>(kRenderOrder[i])] << "\": " << value(i)
                 << ",\n";
            os << "            },\n"
               << "            \"relative_orientation\":{\n";
            for (std::size_t i = 3; i < 6; ++i)
              os << "                \"" << kKeys[static_cast<std::size_t>(kRenderOrder[i])] << "\": " << value(i)
                 << ",\n";
            os << "            },\n"
               << "        }\n";
          }
        },
        obj.relation);
    os << "    },\n";
  }
  os << "}";
  return os.str();
}

std::string render_pose_section(const PoseDescription& d) {
  return "### Current Task, Robot Arm State, and Object Information:   \n\n" + render_pose_body(d) + "\n\n" +
         kOutputReminder;
}

std::string_view to_string(PromptMode m) noexcept {
  switch (m) {
    case PromptMode::Lams: return "lams";
    case PromptMode::Static: return "static";
    case PromptMode::NumState: return "num_state";
    case PromptMode::DirectExamples: return "direct_examples";
  }
  return "lams";
}

std::string PromptBundle::text() const {
  std::string out = prefix;
  for (const std::string* part : {&rules_section, &pose_section}) {
    if (part->empty()) continue;
    out += "\n\n";
    out += *part;
  }
  return out;
}

PromptBundle assemble_prompt(std::string guidance_section, const WorldState& w, PromptMode mode) {
  PromptBundle b;
  b.mode = mode;
  b.prefix = std::string(assets::mode_switch_prefix());
  if (mode != PromptMode::Static) b.rules_section = std::move(guidance_section);
  auto encoding = mode == PromptMode::NumState ? PoseEncoding::Numeric : PoseEncoding::Language;
  b.pose_section = render_pose_section(describe_pose(w, encoding));
  return b;
}

}  // namespace lams
