#pragma once

// Append-only JSONL event log shared by the harness and the session service.

#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace lams {

inline constexpr int kEventSchemaVersion = 1;

class EventLog {
 public:
  EventLog() = default;
  /// Also writes each record as one line to `path`, flushed per record.
  explicit EventLog(const std::string& path);

  /// Appends {"v", "seq", "t", "tick", "kind"} plus `fields`. Timestamps must
  /// not decrease.
  const nlohmann::json& append(std::string_view kind, std::int64_t tick, double t,
                               nlohmann::json fields = nlohmann::json::object());

  [[nodiscard]] const std::vector<nlohmann::json>& records() const noexcept { return records_; }
  [[nodiscard]] std::string to_jsonl() const;
  [[nodiscard]] const std::string& path() const noexcept { return path_; }

  /// Called after every append, on the appending thread.
  void set_listener(std::function<void(const nlohmann::json&)> f) { listener_ = std::move(f); }

 private:
  std::vector<nlohmann::json> records_;
  std::string path_;
  std::unique_ptr<std::ofstream> out_;
  std::uint64_t seq_ = 0;
  double last_t_ = 0.0;
  std::function<void(const nlohmann::json&)> listener_;
};

std::vector<nlohmann::json> parse_event_log(std::string_view text);
std::vector<nlohmann::json> read_event_log(const std::string& path);

/// Splits a log holding several trials at its trial_start records.
std::vector<std::vector<nlohmann::json>> split_trials(const std::vector<nlohmann::json>& records);

}  // namespace lams
