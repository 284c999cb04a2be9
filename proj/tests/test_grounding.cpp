#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "lams/assets.hpp"
#include "lams/grounding.hpp"

using namespace lams;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_trailing_ws(const std::string& s) {
  std::string out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
    out += line + "\n";
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

// Nearest multiple of 50 mm, ties away from zero, on integer millimeters.
int oracle_cm(long mm) {
  long a = mm < 0 ? -mm : mm;
  long q = (a + 25) / 50 * 50;
  return static_cast<int>((mm < 0 ? -q : q) / 10);
}

ObjectState object_at(ObjectKind k, Pose6 p) {
  ObjectState o;
  o.id = std::string(to_string(k));
  o.kind = k;
  o.pose = o.initial_pose = p.normalized();
  return o;
}

// Reconstruction of the reference pose-description instance.
WorldState reference_world() {
  WorldState w;
  w.task = TaskKind::WaterPouring;
  w.ee_pose = {0.40, 0.35, 0.20, 180.0, 0.0, 90.0};
  w.gripper_aperture = 1.0;
  auto cap = object_at(ObjectKind::BottleCap, {0.40, 0.35, 0.20, 180.0, 0.0, 90.0});
  cap.held = true;
  w.objects = {cap, object_at(ObjectKind::Bottle, {0.55, 0.20, 0.10, 180.0, -30.0, 90.0}),
               object_at(ObjectKind::Bowl, {0.60, 0.10, 0.04, 175.0, -40.0, 95.0})};
  return w;
}

}  // namespace

TEST_CASE("prompt assets match their content hashes") {
  CHECK(assets::sha256_hex(assets::mode_switch_prefix_file()) ==
        "24d7f82145ff217cdc889245be2505989cbdeedec2278cc56803f3dc0e29f045");
  CHECK(assets::sha256_hex(assets::rule_generation_prefix_file()) ==
        "03bf85abf0b96928e74e9b5669fd17f378d39e9cda4267256396f9e96c5af214");
  CHECK(assets::sha256_hex(assets::rule_section_preamble_file()) ==
        "94fd8175360dd7460316b19875b862d82b522dd9a1398b8d7cf20f68f319ed0f");
  CHECK(assets::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // The compiled-in copy is the checked-in file.
  CHECK(read_file(std::string(LAMS_ASSET_DIR) + "/prompts/mode_switch_prefix.txt") ==
        assets::mode_switch_prefix_file());
}

TEST_CASE("discretization examples") {
  CHECK(discretize_pose({0.412, 0, 0, 0, 0, 0}).x == 40);
  CHECK(discretize_pose({}) == DiscretePose{});
  auto d = discretize_pose({0.40, 0.35, 0.20, 180.0, 0.0, 90.0});
  CHECK(d == DiscretePose{40, 35, 20, 180, 0, 90});
  CHECK(discretize_pose({0, 0, 0, 352.5, 7.5, -7.4}) == DiscretePose{0, 0, 0, 0, 15, 0});
  CHECK(discretize_pose({-0.375, 0.025, -0.024, 0, 0, 0}) == DiscretePose{-40, 5, 0, 0, 0, 0});
}

TEST_CASE("discretization matches the integer oracle on a millimeter grid") {
  for (long mm = -800; mm <= 800; ++mm) {
    double m = static_cast<double>(mm) / 1000.0;
    auto d = discretize_pose({m, m, m, 0, 0, 0});
    CHECK(d.x == oracle_cm(mm));
  }
}

TEST_CASE("discretization is idempotent") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(-0.8, 0.8), ang(-720.0, 720.0);
  for (int i = 0; i < 2000; ++i) {
    Pose6 p{pos(rng), pos(rng), pos(rng), ang(rng), ang(rng), ang(rng)};
    auto d = discretize_pose(p);
    CHECK(discretize_pose(d.to_pose()) == d);
    CHECK(d.x % 5 == 0);
    CHECK(d.roll % 15 == 0);
    CHECK(d.roll >= 0);
    CHECK(d.roll < 360);
  }
}

TEST_CASE("relative statement examples") {
  Pose6 ee{0.40, 0.0, 0.30, 180.0, 0.0, 90.0};
  auto left = object_at(ObjectKind::Bottle, {0.60, 0.12, 0.10, 180.0, 0.0, 90.0});
  auto rel = std::get<RelativeStatements>(relative_statements(ee, left));
  CHECK(rel.statements[1].text == "to the left of the robot arm");
  CHECK(rel.statements[0].text == "to the forward of the robot arm");
  CHECK(rel.statements[2].text == "below the robot arm");

  auto close_y = object_at(ObjectKind::Bottle, {0.60, 0.03, 0.10, 180.0, 0.0, 90.0});
  rel = std::get<RelativeStatements>(relative_statements(ee, close_y));
  CHECK(rel.statements[1].text == "close to the robot arm along the y-axis");

  auto held = close_y;
  held.held = true;
  CHECK(std::get<HoldingStatement>(relative_statements(ee, held)).text ==
        "The robot arm is holding the bottle.");

  auto cap = object_at(ObjectKind::BottleCap, {0.1, 0.3, 0.02, 0, 0, 0});
  cap.dropped = true;
  CHECK(std::get<DroppedStatement>(relative_statements(ee, cap)).text == "The bottle cap has been dropped.");

  // Within 5 cm and 15 degrees on every axis collapses to the holding line.
  auto near = object_at(ObjectKind::BottleCap, {0.43, -0.02, 0.33, 190.0, 350.0, 100.0});
  CHECK(std::holds_alternative<HoldingStatement>(relative_statements(ee, near)));
}

TEST_CASE("angular statements use the shortest arc and sign table") {
  Pose6 ee{0.40, 0.0, 0.30, 350.0, 350.0, 350.0};
  auto o = object_at(ObjectKind::Book, {0.70, 0.0, 0.30, 30.0, 20.0, 300.0});
  auto rel = std::get<RelativeStatements>(relative_statements(ee, o));
  CHECK(rel.statements[3].text == "pitched more up compared to the robot arm");
  CHECK(rel.statements[4].text == "rolled more right compared to the robot arm");
  CHECK(rel.statements[5].text == "yawed more right compared to the robot arm");
}

TEST_CASE("numeric ablation encodes signed integer deltas") {
  Pose6 ee{0.40, 0.0, 0.30, 180.0, 0.0, 90.0};
  auto o = object_at(ObjectKind::Bottle, {0.60, 0.12, 0.10, 170.0, 0.0, 120.0});
  auto n = std::get<NumericDeltas>(relative_statements(ee, o, PoseEncoding::Numeric));
  CHECK(n.values == std::array<int, 6>{20, 12, -20, 0, -10, 30});

  WorldState w = reference_world();
  w.objects[1].pose = {0.40 + 0.20, 0.35 + 0.12, 0.10, 180.0, 0.0, 90.0};
  auto text = render_pose_section(describe_pose(w, PoseEncoding::Numeric));
  CHECK(text.find("\"y_relation\": 12,") != std::string::npos);
  CHECK(text.find("to the left") == std::string::npos);
}

TEST_CASE("reference pose section renders byte-exact") {
  auto expected = read_file(std::string(LAMS_TEST_DATA_DIR) + "/pose_section_instance.txt");
  auto rendered = render_pose_section(describe_pose(reference_world()));
  CHECK(rendered + "\n" == expected);
  CHECK(strip_trailing_ws(rendered) == strip_trailing_ws(expected));
}

TEST_CASE("prompt assembly") {
  auto w = reference_world();
  auto empty = assemble_prompt("", w, PromptMode::Lams);
  CHECK(empty.rules_section.empty());
  CHECK(empty.text() == std::string(assets::mode_switch_prefix()) + "\n\n" + empty.pose_section);

  auto with_rules = assemble_prompt("RULES", w, PromptMode::Lams);
  auto t = with_rules.text();
  CHECK(t.find("RULES") > t.find("**Objective:**"));
  CHECK(t.find("RULES") < t.find("### Current Task"));

  auto st = assemble_prompt("RULES", w, PromptMode::Static);
  CHECK(st.rules_section.empty());
  CHECK(st.text().find("RULES") == std::string::npos);

  CHECK(assemble_prompt("R", w, PromptMode::Lams).text() == assemble_prompt("R", w, PromptMode::Lams).text());
}

TEST_CASE("fuzz: statements stay in the closed vocabulary and holding collapses") {
  std::set<std::string> vocab;
  for (auto d : {Dimension::X, Dimension::Y, Dimension::Z, Dimension::Roll, Dimension::Pitch, Dimension::Yaw})
    for (auto s : statement_vocabulary(d)) vocab.insert(std::string(s));

  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> pos(-0.3, 0.3), ang(0.0, 360.0);
  for (int i = 0; i < 3000; ++i) {
    Pose6 ee{0.4 + pos(rng), pos(rng), 0.3 + pos(rng) / 3, ang(rng), ang(rng), ang(rng)};
    Pose6 p{0.4 + pos(rng), pos(rng), 0.3 + pos(rng) / 3, ang(rng), ang(rng), ang(rng)};
    if (i % 5 == 0) p = Pose6{ee.x + pos(rng) / 8, ee.y + pos(rng) / 8, ee.z, ee.roll, ee.pitch + 10, ee.yaw};
    auto o = object_at(ObjectKind::Bottle, p);
    o.held = (i % 11 == 0);
    auto rel = relative_statements(ee, o);
    if (o.held) CHECK(std::holds_alternative<HoldingStatement>(rel));
    if (auto* rs = std::get_if<RelativeStatements>(&rel))
      for (const auto& s : rs->statements) CHECK(vocab.count(s.text) == 1);
  }
}
