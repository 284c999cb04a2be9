#include "lams/session_service.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>

#include "httplib.h"
#include "lams/assets.hpp"

namespace lams {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

void from_json(const nlohmann::json& j, CreateSessionRequest& r) {
  r.task = j.at("task").get<std::string>();
  r.strategy = j.at("strategy").get<std::string>();
  r.layout_seed = j.value("layout_seed", std::uint64_t{0});
  r.seed = j.value("seed", std::uint64_t{0});
}

namespace {

std::string session_id(int n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%04d", n);
  return buf;
}

std::optional<int> parse_session_id(const std::string& s) {
  if (s.size() < 2 || s[0] != 's') return std::nullopt;
  if (!std::all_of(s.begin() + 1, s.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
  return std::stoi(s.substr(1));
}

UserAction clamp_input(double lateral, double longitudinal) {
  return UserAction{std::clamp(lateral, -1.0, 1.0), std::clamp(longitudinal, -1.0, 1.0)};
}

}  // namespace

// ---- Session ----

class Session {
 public:
  Session(std::string id, EngineConfig ecfg, const ServiceConfig& scfg, std::shared_ptr<LearningHandle> learning,
          std::shared_ptr<std::mutex> rule_lock, std::shared_ptr<const Gateway> gateway, const std::string& log_path)
      : id_(std::move(id)),
        realtime_(scfg.realtime),
        tick_period_(std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(scfg.clock.tick_duration))),
        hold_ticks_(scfg.input_hold_ticks),
        history_(std::max<std::size_t>(scfg.frame_history, 1)),
        gateway_(std::move(gateway)),
        rule_lock_(std::move(rule_lock)),
        started_(Clock::now()),
        log_(log_path.empty() ? EventLog() : EventLog(log_path)),
        engine_(std::move(ecfg), std::move(learning), log_, time_source()) {}

  ~Session() { stop(); }

  void start() {
    loop_ = std::thread([this] { loop(); });
    switch_worker_ = std::thread([this] { worker(switch_queue_); });
    rule_worker_ = std::thread([this] { worker(rule_queue_); });
    call([this] {
      engine_.begin();
      dispatch();
      publish();
    });
  }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    if (loop_.joinable()) loop_.join();
    {
      std::lock_guard lock(job_mutex_);
      workers_stop_ = true;
    }
    job_cv_.notify_all();
    if (switch_worker_.joinable()) switch_worker_.join();
    if (rule_worker_.joinable()) rule_worker_.join();
    std::lock_guard lock(frame_mutex_);
    closed_ = true;
    frame_cv_.notify_all();
  }

  /// Runs `f` on the loop thread and returns its result; exceptions propagate.
  template <class F>
  auto call(F f) -> decltype(f()) {
    using R = decltype(f());
    auto task = std::make_shared<std::packaged_task<R()>>(std::move(f));
    auto result = task->get_future();
    {
      std::lock_guard lock(mutex_);
      if (stopping_) throw SessionClosed("session " + id_ + " is shut down");
      commands_.emplace_back([task] { (*task)(); });
    }
    cv_.notify_all();
    return result.get();
  }

  void input(const UserAction& u) {
    call([this, u] {
      if (engine_.ended()) throw SessionClosed("session " + id_ + " has ended");
      held_ = u;
      held_left_ = hold_ticks_;
    });
  }

  nlohmann::json manual_switch(DirectionGroup slot) {
    return call([this, slot] {
      engine_.manual_press(slot);
      dispatch();
      return publish();
    });
  }

  nlohmann::json grouped_cycle() {
    return call([this] {
      engine_.grouped_cycle();
      return publish();
    });
  }

  nlohmann::json end(const std::string& failure = {}) {
    return call([this, failure] {
      engine_.settle();
      dispatch();
      engine_.end(failure);
      return publish();
    });
  }

  nlohmann::json advance(int ticks) {
    if (realtime_) throw ManualClockOnly("advance needs a manual-clock service");
    if (ticks < 1) throw std::invalid_argument("ticks must be at least 1");
    return call([this, ticks] {
      if (engine_.ended()) throw SessionClosed("session " + id_ + " has ended");
      nlohmann::json last;
      for (int i = 0; i < ticks && !engine_.ended(); ++i) last = step();
      return last;
    });
  }

  void wait_idle(std::chrono::milliseconds timeout) {
    std::unique_lock lock(job_mutex_);
    if (!idle_cv_.wait_for(lock, timeout, [this] { return outstanding_ == 0; }))
      throw std::runtime_error("session " + id_ + " still has model calls outstanding");
  }

  nlohmann::json latest() const {
    std::lock_guard lock(frame_mutex_);
    return frames_.empty() ? nlohmann::json() : frames_.back();
  }

  std::vector<nlohmann::json> frames_after(std::uint64_t after, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(frame_mutex_);
    frame_cv_.wait_for(lock, timeout, [&] { return closed_ || next_frame_ > after + 1; });
    std::vector<nlohmann::json> out;
    for (const auto& f : frames_)
      if (f.at("seq").get<std::uint64_t>() > after) out.push_back(f);
    return out;
  }

  std::vector<nlohmann::json> events() {
    return call([this] { return log_.records(); });
  }

  nlohmann::json summary() const {
    return {{"id", id_},
            {"task", to_string(engine_.config().task)},
            {"strategy", to_string(engine_.config().strategy)},
            {"ended", ended_.load()}};
  }

  const std::shared_ptr<LearningHandle>& learning() const { return engine_.learning(); }

 private:
  TeleopEngine::TimeSource time_source() {
    if (!realtime_) return {};
    return [this](std::int64_t) { return std::chrono::duration<double>(Clock::now() - started_).count(); };
  }

  void loop() {
    auto next = Clock::now() + tick_period_;
    std::unique_lock lock(mutex_);
    while (!stopping_) {
      if (!commands_.empty()) {
        auto cmd = std::move(commands_.front());
        commands_.pop_front();
        lock.unlock();
        cmd();
        lock.lock();
        continue;
      }
      if (!realtime_) {
        cv_.wait(lock, [this] { return stopping_ || !commands_.empty(); });
        continue;
      }
      if (cv_.wait_until(lock, next, [this] { return stopping_ || !commands_.empty(); })) continue;
      lock.unlock();
      if (!engine_.ended()) {
        try {
          step();
        } catch (const std::exception&) {
          // A failing tick must not take the loop down; the session just stops moving.
        }
      }
      lock.lock();
      next += tick_period_;
      auto now = Clock::now();
      if (next < now) next = now + tick_period_;
    }
  }

  nlohmann::json step() {
    UserAction u{};
    if (held_left_ > 0) {
      u = held_;
      --held_left_;
    }
    engine_.tick(u);
    dispatch();
    if (engine_.progress().completed) {
      engine_.settle();
      dispatch();
      engine_.end();
    }
    return publish();
  }

  void dispatch() {
    auto jobs = engine_.take_jobs();
    if (jobs.empty()) return;
    {
      std::lock_guard lock(job_mutex_);
      for (auto& j : jobs) {
        ++outstanding_;
        auto& q = j.request.role == CompletionRole::ModeSwitch ? switch_queue_ : rule_queue_;
        q.push_back(std::move(j));
      }
    }
    job_cv_.notify_all();
  }

  void worker(std::deque<LlmJob>& queue) {
    for (;;) {
      LlmJob job;
      {
        std::unique_lock lock(job_mutex_);
        job_cv_.wait(lock, [&] { return workers_stop_ || !queue.empty(); });
        if (queue.empty()) return;
        job = std::move(queue.front());
        queue.pop_front();
      }
      std::optional<CompletionResult> result;
      std::string error;
      try {
        if (job.request.role == CompletionRole::RuleGeneration) {
          std::lock_guard lock(*rule_lock_);
          result = gateway_->complete(job.request);
        } else {
          result = gateway_->complete(job.request);
        }
      } catch (const std::exception& e) {
        error = e.what();
      }
      auto apply = [this, id = job.id, result = std::move(result), error] {
        try {
          if (result)
            engine_.finish_job(id, *result);
          else
            engine_.fail_job(id, error);
          dispatch();
          publish();
        } catch (const std::exception&) {
        }
        {
          std::lock_guard lock(job_mutex_);
          --outstanding_;
        }
        idle_cv_.notify_all();
      };
      bool queued = false;
      {
        std::lock_guard lock(mutex_);
        if (!stopping_) {
          commands_.emplace_back(std::move(apply));
          queued = true;
        }
      }
      if (queued) {
        cv_.notify_all();
      } else {
        std::lock_guard lock(job_mutex_);
        --outstanding_;
        idle_cv_.notify_all();
      }
    }
  }

  nlohmann::json publish() {
    const auto& w = engine_.world();
    auto h = engine_.take_highlights();
    nlohmann::json highlight = nlohmann::json::object();
    for (auto g : kAllGroups) highlight[std::string(to_string(g))] = to_string(h[static_cast<std::size_t>(g)]);
    const auto* held = w.held_object();
    nlohmann::json f = {{"session", id_},
                        {"tick", w.tick},
                        {"t", engine_.now()},
                        {"log_seq", log_.records().size()},
                        {"mode", engine_.mode()},
                        {"highlight", highlight},
                        {"manual_switches", engine_.manual_switches()},
                        {"auto_switches", engine_.auto_switches()},
                        {"held", held ? nlohmann::json(to_string(held->kind)) : nlohmann::json()},
                        {"world", w},
                        {"stage_index", engine_.progress().stage_index},
                        {"completed", engine_.progress().completed},
                        {"degraded", engine_.degraded()},
                        {"switch_pending", engine_.switch_pending()},
                        {"ended", engine_.ended()}};
    if (engine_.config().strategy == StrategyKind::GroupedMapping) f["grouped_index"] = engine_.grouped_index();
    ended_ = engine_.ended();
    {
      std::lock_guard lock(frame_mutex_);
      f["seq"] = next_frame_++;
      frames_.push_back(f);
      while (frames_.size() > history_) frames_.pop_front();
    }
    frame_cv_.notify_all();
    return f;
  }

  std::string id_;
  bool realtime_;
  Clock::duration tick_period_;
  int hold_ticks_;
  std::size_t history_;
  std::shared_ptr<const Gateway> gateway_;
  std::shared_ptr<std::mutex> rule_lock_;
  Clock::time_point started_;

  // Loop-thread state.
  EventLog log_;
  TeleopEngine engine_;
  UserAction held_{};
  int held_left_ = 0;

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> commands_;
  bool stopping_ = false;
  std::thread loop_;

  std::mutex job_mutex_;
  std::condition_variable job_cv_;
  std::condition_variable idle_cv_;
  std::deque<LlmJob> switch_queue_, rule_queue_;
  int outstanding_ = 0;
  bool workers_stop_ = false;
  std::thread switch_worker_, rule_worker_;

  mutable std::mutex frame_mutex_;
  mutable std::condition_variable frame_cv_;
  std::deque<nlohmann::json> frames_;
  std::uint64_t next_frame_ = 1;
  bool closed_ = false;
  std::atomic<bool> ended_{false};
};

// ---- SessionService ----

SessionService::SessionService(ServiceConfig cfg, std::shared_ptr<const Gateway> gateway)
    : cfg_(std::move(cfg)), gateway_(std::move(gateway)) {
  if (!gateway_) throw std::invalid_argument("session service needs a gateway");
  if (cfg_.input_hold_ticks < 1) throw std::invalid_argument("input_hold_ticks must be at least 1");
  if (!cfg_.data_dir.empty()) {
    fs::create_directories(fs::path(cfg_.data_dir) / "sessions");
    fs::create_directories(fs::path(cfg_.data_dir) / "stores");
    recover();
  }
}

SessionService::~SessionService() {
  std::map<std::string, std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(mutex_);
    sessions.swap(sessions_);
  }
  for (auto& [id, s] : sessions) {
    try {
      s->end("shutdown");
    } catch (const std::exception&) {
      // already ended
    }
    s->stop();
  }
}

void SessionService::recover() {
  for (const auto& entry : fs::directory_iterator(fs::path(cfg_.data_dir) / "sessions")) {
    if (entry.path().extension() != ".jsonl") continue;
    auto stem = entry.path().stem().string();
    if (auto n = parse_session_id(stem)) next_id_ = std::max(next_id_, *n + 1);
    std::vector<nlohmann::json> records;
    try {
      records = read_event_log(entry.path().string());
    } catch (const std::exception&) {
      continue;  // unreadable logs are left alone
    }
    if (records.empty() || records.back().at("kind") == "trial_end") continue;
    const auto& last = records.back();
    int manual = 0;
    for (const auto& r : records)
      if (r.at("kind") == "manual_switch" || r.at("kind") == "grouped_cycle") ++manual;
    nlohmann::json end = {{"v", kEventSchemaVersion},
                          {"seq", last.at("seq").get<std::int64_t>() + 1},
                          {"t", last.at("t")},
                          {"tick", last.at("tick")},
                          {"kind", "trial_end"},
                          {"completed", false},
                          {"ticks", last.at("tick")},
                          {"manual_switches", manual},
                          {"failure", "aborted"}};
    std::ofstream out(entry.path(), std::ios::app);
    out << end.dump() << '\n';
    aborted_.push_back(stem);
  }
  std::sort(aborted_.begin(), aborted_.end());
}

std::shared_ptr<LearningHandle> SessionService::learning_for(TaskKind task, StrategyKind strategy) {
  if (!keeps_examples(strategy)) return std::make_shared<LearningHandle>(task);
  auto it = stores_.find(task);
  if (it != stores_.end()) return it->second;
  std::string path;
  if (!cfg_.data_dir.empty())
    path = (fs::path(cfg_.data_dir) / "stores" / (cfg_.run_id + "_" + std::string(to_string(task)) + ".json")).string();
  auto handle = std::make_shared<LearningHandle>(task, path);
  if (!path.empty() && fs::exists(path)) handle->store = LearningStore::load(path);
  stores_.emplace(task, handle);
  return handle;
}

std::string SessionService::create(const CreateSessionRequest& req) {
  EngineConfig ecfg;
  ecfg.task = parse_task(req.task);
  ecfg.strategy = parse_strategy(req.strategy);
  ecfg.layout_seed = req.layout_seed;
  ecfg.seed = req.seed;
  ecfg.clock = cfg_.clock;
  ecfg.heuristic_dir = cfg_.heuristic_dir;

  std::shared_ptr<Session> session;
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = session_id(next_id_++);
    auto learning = learning_for(ecfg.task, ecfg.strategy);
    auto& rule_lock = rule_locks_[ecfg.task];
    if (!rule_lock) rule_lock = std::make_shared<std::mutex>();
    std::string log_path;
    if (!cfg_.data_dir.empty()) log_path = (fs::path(cfg_.data_dir) / "sessions" / (id + ".jsonl")).string();
    session = std::make_shared<Session>(id, ecfg, cfg_, std::move(learning), rule_lock, gateway_, log_path);
  }
  session->start();
  std::lock_guard lock(mutex_);
  sessions_.emplace(id, session);
  return id;
}

std::shared_ptr<Session> SessionService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionNotFound("no session " + id);
  return it->second;
}

void SessionService::submit_input(const std::string& id, const UserAction& u) {
  find(id)->input(clamp_input(u.lateral, u.longitudinal));
}

nlohmann::json SessionService::manual_switch(const std::string& id, DirectionGroup slot) {
  return find(id)->manual_switch(slot);
}

nlohmann::json SessionService::grouped_cycle(const std::string& id) { return find(id)->grouped_cycle(); }
nlohmann::json SessionService::end(const std::string& id) { return find(id)->end(); }
nlohmann::json SessionService::advance(const std::string& id, int ticks) { return find(id)->advance(ticks); }

void SessionService::wait_idle(const std::string& id, std::chrono::milliseconds timeout) {
  find(id)->wait_idle(timeout);
}

nlohmann::json SessionService::state(const std::string& id) const { return find(id)->latest(); }

std::vector<nlohmann::json> SessionService::frames_after(const std::string& id, std::uint64_t after,
                                                         std::chrono::milliseconds timeout) const {
  return find(id)->frames_after(after, timeout);
}

nlohmann::json SessionService::learning(const std::string& id) const {
  auto handle = find(id)->learning();
  std::lock_guard lock(handle->mutex);
  return {{"task", to_string(handle->store.task())},
          {"examples", handle->store.examples()},
          {"rules", handle->store.rules()}};
}

std::vector<nlohmann::json> SessionService::events(const std::string& id) const { return find(id)->events(); }

nlohmann::json SessionService::list() const {
  std::lock_guard lock(mutex_);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [id, s] : sessions_) out.push_back(s->summary());
  return {{"sessions", out}};
}

// ---- HTTP ----

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& what) {
  send_json(res, status, {{"error", what}, {"kind", kind}});
}

template <class F>
void guarded(httplib::Response& res, F f) {
  try {
    f();
  } catch (const SessionNotFound& e) {
    send_error(res, 404, "not_found", e.what());
  } catch (const UnknownTask& e) {
    send_error(res, 400, "unknown_task", e.what());
  } catch (const WrongStrategy& e) {
    send_error(res, 409, "wrong_strategy", e.what());
  } catch (const ManualClockOnly& e) {
    send_error(res, 409, "manual_clock_only", e.what());
  } catch (const SessionClosed& e) {
    send_error(res, 410, "session_closed", e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, "bad_request", e.what());
  } catch (const std::invalid_argument& e) {
    send_error(res, 400, "bad_request", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

nlohmann::json body_of(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body);
  if (!j.is_object()) throw std::invalid_argument("request body must be a JSON object");
  return j;
}

}  // namespace

void mount_routes(httplib::Server& server, SessionService& service) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Get("/api/schema", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(std::string(assets::api_schema()), "application/json");
  });

  server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = body_of(req);
      std::string strategy = body.at("strategy").get<std::string>();
      try {
        parse_strategy(strategy);
      } catch (const std::invalid_argument& e) {
        send_error(res, 400, "unknown_strategy", e.what());
        return;
      }
      auto id = service.create(body.get<CreateSessionRequest>());
      send_json(res, 201, {{"id", id}, {"frame", service.state(id)}});
    });
  });

  server.Get("/sessions", [&service](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.list()); });
  });

  server.Get(R"(/sessions/([^/]+)/state)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.state(req.matches[1])); });
  });

  server.Get(R"(/sessions/([^/]+)/learning)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.learning(req.matches[1])); });
  });

  server.Get(R"(/sessions/([^/]+)/events)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::string out;
      for (const auto& r : service.events(req.matches[1])) out += r.dump() + "\n";
      res.set_content(out, "application/x-ndjson");
    });
  });

  server.Post(R"(/sessions/([^/]+)/input)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = body_of(req);
      service.submit_input(req.matches[1],
                           {body.at("lateral").get<double>(), body.at("longitudinal").get<double>()});
      send_json(res, 202, {{"accepted", true}});
    });
  });

  server.Post(R"(/sessions/([^/]+)/manual_switch)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto slot = parse_group(body_of(req).at("slot").get<std::string>());
      send_json(res, 200, service.manual_switch(req.matches[1], slot));
    });
  });

  server.Post(R"(/sessions/([^/]+)/grouped_cycle)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.grouped_cycle(req.matches[1])); });
  });

  server.Post(R"(/sessions/([^/]+)/end)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.end(req.matches[1])); });
  });

  server.Post(R"(/sessions/([^/]+)/advance)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      int ticks = body_of(req).value("ticks", 1);
      send_json(res, 200, service.advance(req.matches[1], ticks));
    });
  });

  server.Get(R"(/sessions/([^/]+)/stream)", [&service](const httplib::Request& req, httplib::Response& res) {
    std::string id = req.matches[1];
    std::uint64_t after = 0;
    guarded(res, [&] {
      if (req.has_param("after")) after = std::stoull(req.get_param_value("after"));
      service.state(id);  // 404 before the stream opens
      res.set_header("Cache-Control", "no-cache");
      auto last = std::make_shared<std::uint64_t>(after);
      res.set_chunked_content_provider("text/event-stream", [&service, id, last](std::size_t, httplib::DataSink& sink) {
        std::vector<nlohmann::json> frames;
        try {
          frames = service.frames_after(id, *last, std::chrono::seconds(1));
        } catch (const std::exception&) {
          sink.done();
          return true;
        }
        if (frames.empty()) {
          static constexpr char kKeepAlive[] = ": keepalive\n\n";
          return sink.write(kKeepAlive, sizeof kKeepAlive - 1);
        }
        for (const auto& f : frames) {
          *last = f.at("seq").get<std::uint64_t>();
          std::string msg = "id: " + std::to_string(*last) + "\nevent: frame\ndata: " + f.dump() + "\n\n";
          if (!sink.write(msg.data(), msg.size())) return false;
          if (f.at("ended").get<bool>()) {
            sink.done();
            return true;
          }
        }
        return true;
      });
    });
  });
}

HttpFrontend::HttpFrontend(SessionService& service) : server_(std::make_unique<httplib::Server>()) {
  mount_routes(*server_, service);
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::start(const std::string& host, int port) {
  int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpFrontend::run(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpFrontend::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace lams
