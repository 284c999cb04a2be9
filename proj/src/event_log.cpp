#include "lams/event_log.hpp"

#include <sstream>
#include <stdexcept>

namespace lams {

EventLog::EventLog(const std::string& path) : path_(path) {
  out_ = std::make_unique<std::ofstream>(path, std::ios::app);
  if (!*out_) throw std::runtime_error("cannot open event log: " + path);
}

const nlohmann::json& EventLog::append(std::string_view kind, std::int64_t tick, double t, nlohmann::json fields) {
  if (!fields.is_object()) throw std::invalid_argument("event fields must be an object");
  if (!records_.empty() && t < last_t_) throw std::logic_error("event timestamps must not decrease");
  fields["v"] = kEventSchemaVersion;
  fields["seq"] = seq_++;
  fields["t"] = t;
  fields["tick"] = tick;
  fields["kind"] = kind;
  last_t_ = t;
  records_.push_back(std::move(fields));
  if (out_) {
    *out_ << records_.back().dump() << '\n';
    out_->flush();
  }
  if (listener_) listener_(records_.back());
  return records_.back();
}

std::string EventLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records_) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

std::vector<nlohmann::json> parse_event_log(std::string_view text) {
  std::vector<nlohmann::json> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto j = nlohmann::json::parse(line);
    if (j.value("v", 0) != kEventSchemaVersion)
      throw std::runtime_error("unsupported event schema version in log");
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<nlohmann::json> read_event_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read event log: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_event_log(os.str());
}

std::vector<std::vector<nlohmann::json>> split_trials(const std::vector<nlohmann::json>& records) {
  std::vector<std::vector<nlohmann::json>> out;
  for (const auto& r : records) {
    if (r.at("kind") == "trial_start") out.emplace_back();
    if (out.empty()) throw std::runtime_error("event log does not start with trial_start");
    out.back().push_back(r);
  }
  return out;
}

}  // namespace lams
