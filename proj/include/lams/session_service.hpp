#pragma once

// Interactive sessions for the browser cockpit. Each session owns a
// TeleopEngine driven by its own loop thread; commands and model completions
// are queued to that loop, so the engine only ever sees one writer.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "lams/engine.hpp"

namespace httplib {
class Server;
}

namespace lams {

class SessionNotFound : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Raised for commands that need a manual-clock service.
class ManualClockOnly : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct ServiceConfig {
  /// Sessions write `<data_dir>/sessions/<id>.jsonl`; stores live in
  /// `<data_dir>/stores/`. Empty keeps everything in memory.
  std::string data_dir;
  /// Namespaces learning stores: sessions with the same run id and task share
  /// examples and rules.
  std::string run_id = "default";
  std::string heuristic_dir;
  /// Real time ticks every clock.tick_duration seconds. The manual clock only
  /// moves on advance() and is meant for tests and scripted clients.
  bool realtime = true;
  SessionClock clock;
  /// How long one input sample keeps driving the arm before the stick counts
  /// as released.
  int input_hold_ticks = 5;
  /// Frames kept for late stream subscribers.
  std::size_t frame_history = 512;
};

struct CreateSessionRequest {
  std::string task;
  std::string strategy;
  std::uint64_t layout_seed = 0;
  std::uint64_t seed = 0;
};

void from_json(const nlohmann::json& j, CreateSessionRequest& r);

/// One session's shared state and threads. Owned by SessionService.
class Session;

class SessionService {
 public:
  SessionService(ServiceConfig cfg, std::shared_ptr<const Gateway> gateway);
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  /// Creates and begins a session; returns its id. Throws UnknownTask or
  /// std::invalid_argument for an unknown strategy.
  std::string create(const CreateSessionRequest& req);

  void submit_input(const std::string& id, const UserAction& u);
  nlohmann::json manual_switch(const std::string& id, DirectionGroup slot);
  nlohmann::json grouped_cycle(const std::string& id);
  nlohmann::json end(const std::string& id);
  /// Manual clock only: runs `ticks` ticks and returns the last frame.
  nlohmann::json advance(const std::string& id, int ticks);
  /// Blocks until no model call of the session is outstanding.
  void wait_idle(const std::string& id, std::chrono::milliseconds timeout = std::chrono::seconds(10));

  nlohmann::json state(const std::string& id) const;
  /// Frames with seq > `after`, waiting up to `timeout` for at least one.
  std::vector<nlohmann::json> frames_after(const std::string& id, std::uint64_t after,
                                           std::chrono::milliseconds timeout) const;
  nlohmann::json learning(const std::string& id) const;
  std::vector<nlohmann::json> events(const std::string& id) const;
  nlohmann::json list() const;

  /// Session logs found without a trial_end at startup; each was closed with
  /// an aborted trial_end.
  [[nodiscard]] const std::vector<std::string>& aborted() const noexcept { return aborted_; }
  [[nodiscard]] const ServiceConfig& config() const noexcept { return cfg_; }

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<LearningHandle> learning_for(TaskKind task, StrategyKind strategy);
  void recover();

  ServiceConfig cfg_;
  std::shared_ptr<const Gateway> gateway_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<TaskKind, std::shared_ptr<LearningHandle>> stores_;
  // Rule generation for one task never runs twice at once.
  std::map<TaskKind, std::shared_ptr<std::mutex>> rule_locks_;
  int next_id_ = 1;
  std::vector<std::string> aborted_;
};

/// Registers the HTTP routes on `server`.
void mount_routes(httplib::Server& server, SessionService& service);

/// Serves until stop() is called from another thread.
class HttpFrontend {
 public:
  explicit HttpFrontend(SessionService& service);
  ~HttpFrontend();

  /// Binds and serves on a background thread; returns the bound port
  /// (`port` 0 picks a free one). Throws if binding fails.
  int start(const std::string& host, int port);
  /// Serves on the calling thread.
  void run(const std::string& host, int port);
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace lams
