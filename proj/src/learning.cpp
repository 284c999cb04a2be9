#include "lams/learning.hpp"

#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "lams/assets.hpp"

namespace lams {

namespace {

const char* const kExampleSectionHeading =
    "Below are examples of the actions the user chose in earlier situations of this task. Use them to predict the "
    "most likely actions out of the specified groups for the current situation.";

std::string rtrim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) noexcept {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ b);
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::mt19937_64 eng(seed);
  for (std::size_t i = n; i > 1; --i) {
    // Unbiased draw from [0, i).
    std::uint64_t bound = i;
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do r = eng();
    while (r >= limit);
    std::swap(p[i - 1], p[static_cast<std::size_t>(r % bound)]);
  }
  return p;
}

void to_json(nlohmann::json& j, const ManualSwitchEvent& e) {
  j = {{"tick", e.tick},
       {"slot", to_string(e.slot)},
       {"old", to_string(e.old_direction)},
       {"new", to_string(e.new_direction)},
       {"press_count", e.press_count}};
}

void to_json(nlohmann::json& j, const ExampleRecord& e) {
  j = {{"tick", e.tick}, {"slot", to_string(e.slot)}, {"chosen", to_string(e.chosen)}, {"world", e.world}};
}

void from_json(const nlohmann::json& j, ExampleRecord& e) {
  e.tick = j.at("tick").get<std::int64_t>();
  e.slot = parse_group(j.at("slot").get<std::string>());
  e.chosen = parse_direction(j.at("chosen").get<std::string>());
  e.world = j.at("world").get<WorldState>();
}

std::string render_example(const ExampleRecord& e, std::size_t index, PoseEncoding enc) {
  std::ostringstream os;
  os << "**Example " << index << ":**   \n\n"
     << render_pose_body(describe_pose(e.world, enc)) << "\n\n"
     << "- **Most Likely Action(s):**  \n{\n"
     << "\"Group " << group_number(e.slot) << "\": \"" << letter_of(e.chosen) << ": " << action_name(e.chosen)
     << "\"\n}";
  return os.str();
}

std::string render_examples(const std::vector<ExampleRecord>& examples, std::uint64_t seed, PoseEncoding enc) {
  std::string out;
  auto order = seeded_permutation(examples.size(), seed);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) out += "\n\n";
    out += render_example(examples[order[i]], i, enc);
  }
  return out;
}

void to_json(nlohmann::json& j, const Rule& r) { j = {{"text", r.text}, {"origin", r.origin}}; }

void from_json(const nlohmann::json& j, Rule& r) {
  r.text = j.at("text").get<std::string>();
  r.origin = j.value("origin", 0);
}

std::vector<std::string> parse_rules(const std::string& completion) {
  static const std::regex item_re(R"(^(?:\d+[.)]|[-*])\s+(.*)$)");
  std::vector<std::string> items;
  std::optional<std::string> current;
  bool after_blank = false;
  std::istringstream in(completion);
  std::string line;
  auto close = [&] {
    if (current) {
      auto t = rtrim(*current);
      if (!t.empty()) items.push_back(t);
    }
    current.reset();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_match(line, m, item_re)) {
      close();
      current = m[1].str();
      after_blank = false;
    } else if (blank(line)) {
      after_blank = true;
    } else if (current) {
      bool indented = std::isspace(static_cast<unsigned char>(line.front()));
      if (indented || !after_blank) {
        *current += "\n" + line;
        after_blank = false;
      } else {
        close();  // closing commentary after the list
      }
    }
  }
  close();
  if (items.empty()) {
    auto whole = rtrim(completion);
    auto first = whole.find_first_not_of(" \t\r\n");
    if (first != std::string::npos) items.push_back(whole.substr(first));
  }
  return items;
}

std::string compose_rule_section(const std::vector<Rule>& rules, std::uint64_t seed) {
  if (rules.empty()) return {};
  std::string out(assets::rule_section_preamble());
  auto order = seeded_permutation(rules.size(), seed);
  for (std::size_t i = 0; i < order.size(); ++i) out += "\n\n" + std::to_string(i + 1) + ". " + rules[order[i]].text;
  return out;
}

std::string compose_example_section(const std::vector<ExampleRecord>& examples, std::uint64_t seed,
                                    PoseEncoding enc) {
  if (examples.empty()) return {};
  return std::string(kExampleSectionHeading) + "\n\n" + render_examples(examples, seed, enc);
}

CompletionRequest make_rule_request(const std::vector<ExampleRecord>& examples, std::uint64_t seed,
                                    PoseEncoding enc) {
  if (examples.empty()) throw std::invalid_argument("rule generation needs at least one example");
  CompletionRequest r;
  r.role = CompletionRole::RuleGeneration;
  r.prompt = std::string(assets::rule_generation_prefix()) + "\n\n" + render_examples(examples, seed, enc);
  r.max_tokens = 1500;
  r.want_logprobs = false;
  return r;
}

void LearningStore::add_example(ExampleRecord e) {
  if (e.world.task != task_) throw std::invalid_argument("example belongs to another task");
  if (group_of(e.chosen) != e.slot) throw std::invalid_argument("example direction is outside its slot's group");
  examples_.push_back(std::move(e));
}

int LearningStore::append_rules(const std::vector<std::string>& texts) {
  int batch = ++batches_;
  for (const auto& t : texts) {
    if (t.empty()) throw std::invalid_argument("empty rule text");
    rules_.push_back({t, batch});
  }
  return batch;
}

void LearningStore::reset_for_task(TaskKind task, const std::string& archive_path) {
  if (!archive_path.empty() && (!examples_.empty() || !rules_.empty())) save(archive_path);
  task_ = task;
  examples_.clear();
  rules_.clear();
  batches_ = 0;
}

void to_json(nlohmann::json& j, const LearningStore& s) {
  j = {{"task", to_string(s.task_)}, {"examples", s.examples_}, {"rules", s.rules_}, {"batches", s.batches_}};
}

void from_json(const nlohmann::json& j, LearningStore& s) {
  s.task_ = parse_task(j.at("task").get<std::string>());
  s.examples_ = j.at("examples").get<std::vector<ExampleRecord>>();
  s.rules_ = j.at("rules").get<std::vector<Rule>>();
  s.batches_ = j.value("batches", 0);
}

void LearningStore::save(const std::string& path) const {
  // Write then rename so readers never see a partial file.
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write learning store: " + path);
    out << nlohmann::json(*this).dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot replace " + path);
}

LearningStore LearningStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read learning store: " + path);
  return nlohmann::json::parse(in).get<LearningStore>();
}

std::optional<std::size_t> synthesize_rules(LearningStore& store, const Gateway& gateway, std::uint64_t seed,
                                            PoseEncoding enc) {
  if (store.examples().empty()) return std::nullopt;
  try {
    auto result = gateway.complete(make_rule_request(store.examples(), seed, enc));
    auto rules = parse_rules(result.text);
    store.append_rules(rules);
    return rules.size();
  } catch (const GatewayError&) {
    return std::nullopt;
  }
}

std::optional<SwitchDebouncer::Finalized> SwitchDebouncer::take() {
  if (!pending_) return std::nullopt;
  auto p = std::move(pending_->data);
  pending_.reset();
  if (p.event.new_direction == p.event.old_direction) return std::nullopt;  // cycled back
  return p;
}

std::optional<SwitchDebouncer::Finalized> SwitchDebouncer::press(std::int64_t tick, DirectionGroup slot,
                                                                 ActionDirection old_direction,
                                                                 ActionDirection new_direction,
                                                                 const WorldState& world) {
  if (pending_ && pending_->data.event.slot == slot) {
    pending_->data.event.new_direction = new_direction;
    pending_->data.event.press_count += 1;
    pending_->last_press = tick;
    return std::nullopt;
  }
  auto done = take();
  pending_ = Pending{{ManualSwitchEvent{tick, slot, old_direction, new_direction, 1}, world}, tick};
  return done;
}

std::optional<SwitchDebouncer::Finalized> SwitchDebouncer::input(const UserAction& u) {
  if (u.is_zero()) return std::nullopt;
  return take();
}

std::optional<SwitchDebouncer::Finalized> SwitchDebouncer::advance(std::int64_t tick) {
  if (pending_ && tick - pending_->last_press >= window_) return take();
  return std::nullopt;
}

std::optional<SwitchDebouncer::Finalized> SwitchDebouncer::flush() { return take(); }

std::optional<DirectionGroup> SwitchDebouncer::pending_slot() const noexcept {
  if (!pending_) return std::nullopt;
  return pending_->data.event.slot;
}

}  // namespace lams
