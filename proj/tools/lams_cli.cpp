// Command-line front end: headless experiments, shadow replay, reports,
// log verification and the interactive session server.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "lams/harness.hpp"
#include "lams/session_service.hpp"

namespace fs = std::filesystem;
using namespace lams;

namespace {

struct BackendOptions {
  std::string backend = "oracle";
  std::string mock_script;
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string auth_env = "OPENAI_API_KEY";
  double timeout = 30.0;
  int retries = 2;

  void add_to(CLI::App* app) {
    app->add_option("--backend", backend, "Model backend")
        ->check(CLI::IsMember({"oracle", "mock", "real"}))
        ->capture_default_str();
    app->add_option("--mock-script", mock_script, "Mock script (JSON) for --backend mock")->check(CLI::ExistingFile);
    app->add_option("--endpoint", endpoint, "Chat-completions URL for --backend real")->capture_default_str();
    app->add_option("--model", model, "Model name for --backend real")->capture_default_str();
    app->add_option("--auth-env", auth_env, "Environment variable holding the API key")->capture_default_str();
    app->add_option("--timeout", timeout, "Per-call timeout in seconds")->capture_default_str();
    app->add_option("--retries", retries, "Retries for transient failures")->capture_default_str();
  }

  [[nodiscard]] std::shared_ptr<Gateway> gateway() const {
    BackendConfig cfg;
    cfg.backend = backend == "real" ? BackendKind::Real : backend == "mock" ? BackendKind::Mock : BackendKind::Oracle;
    cfg.mock_script = mock_script;
    cfg.endpoint = endpoint;
    cfg.model = model;
    cfg.auth_env = auth_env;
    cfg.timeout_seconds = timeout;
    cfg.retry_count = retries;
    return std::make_shared<Gateway>(make_backend(cfg, oracle_advisor()), cfg.retry_count, cfg.backoff_seconds);
  }
};

std::string default_heuristic_dir() { return std::string(LAMS_ASSET_DIR) + "/heuristics"; }

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

HttpFrontend* g_frontend = nullptr;

extern "C" void on_signal(int) {
  if (g_frontend) g_frontend->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-model assisted mode switching for joystick teleoperation"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run scripted-user trials and write their event logs");
  std::string task = "water_pouring", strategy = "lams", out_dir = "runs", heuristic_dir = default_heuristic_dir();
  int trials = 3;
  std::uint64_t seed = 0;
  std::int64_t max_ticks = kDefaultTickBudget;
  BackendOptions run_backend;
  run->add_option("--task", task, "water_pouring | book_storage")->capture_default_str();
  run->add_option("--strategy", strategy, "lams | static | top_action | direct_examples | num_state | grouped | heuristic")
      ->capture_default_str();
  run->add_option("--trials", trials, "Consecutive trials")->check(CLI::PositiveNumber)->capture_default_str();
  run->add_option("--seed", seed, "Experiment seed")->capture_default_str();
  run->add_option("--max-ticks", max_ticks, "Tick budget per trial")->capture_default_str();
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--heuristic-dir", heuristic_dir, "Heuristic phase tables")->capture_default_str();
  run_backend.add_to(run);

  // shadow
  auto* shadow = app.add_subcommand("shadow", "Replay a recorded log under another strategy");
  std::string shadow_log, variant = "lams";
  BackendOptions shadow_backend;
  shadow->add_option("log", shadow_log, "Event log (JSONL)")->required()->check(CLI::ExistingFile);
  shadow->add_option("--variant", variant, "Strategy to evaluate")->capture_default_str();
  shadow->add_option("--heuristic-dir", heuristic_dir, "Heuristic phase tables")->capture_default_str();
  shadow_backend.add_to(shadow);

  // report
  auto* report = app.add_subcommand("report", "Summarize every log in a directory");
  std::string report_dir = "runs", csv_out, md_out = "-";
  report->add_option("dir", report_dir, "Directory of JSONL logs")->check(CLI::ExistingDirectory)->capture_default_str();
  report->add_option("--csv", csv_out, "Write per-trial CSV here ('-' for stdout)");
  report->add_option("--markdown", md_out, "Write the summary table here ('-' for stdout)")->capture_default_str();

  // replay
  auto* replay = app.add_subcommand("replay", "Re-simulate a log and check it against its own snapshots");
  std::string replay_log_path;
  replay->add_option("log", replay_log_path, "Event log (JSONL)")->required()->check(CLI::ExistingFile);

  // serve
  auto* serve = app.add_subcommand("serve", "Host interactive sessions over HTTP");
  std::string host = "127.0.0.1", data_dir = "sessions_data", run_id = "default";
  int port = 8080;
  bool manual_clock = false;
  BackendOptions serve_backend;
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port")->capture_default_str();
  serve->add_option("--data-dir", data_dir, "Session logs and learning stores")->capture_default_str();
  serve->add_option("--run-id", run_id, "Learning-store namespace")->capture_default_str();
  serve->add_option("--heuristic-dir", heuristic_dir, "Heuristic phase tables")->capture_default_str();
  serve->add_flag("--manual-clock", manual_clock, "Advance time only through the advance endpoint");
  serve_backend.add_to(serve);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ExperimentConfig cfg;
      cfg.task = parse_task(task);
      cfg.strategy = parse_strategy(strategy);
      cfg.trials = trials;
      cfg.seed = seed;
      cfg.max_ticks = max_ticks;
      cfg.out_dir = out_dir;
      cfg.heuristic_dir = heuristic_dir;
      fs::create_directories(out_dir);
      auto results = run_experiment(cfg, *run_backend.gateway());
      for (const auto& r : results) {
        auto j = nlohmann::json(r);
        j.erase("events");
        std::cout << j.dump() << '\n';
      }
      return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.completed; }) ? 0 : 2;
    }
    if (*shadow) {
      auto trials_in_log = split_trials(read_event_log(shadow_log));
      auto rows = shadow_replay(trials_in_log, parse_strategy(variant), *shadow_backend.gateway(), heuristic_dir);
      std::cout << "trial,recorded,simulated,switch_points\n";
      for (const auto& r : rows)
        std::cout << r.trial << ',' << r.recorded << ',' << r.simulated << ',' << r.switch_points << '\n';
      return 0;
    }
    if (*report) {
      auto rows = collect_report(report_dir);
      if (!csv_out.empty()) write_or_print(csv_out, report_csv(rows));
      if (!md_out.empty()) write_or_print(md_out, report_markdown(rows));
      return 0;
    }
    if (*replay) {
      int bad = 0;
      for (const auto& t : split_trials(read_event_log(replay_log_path))) {
        auto trial_no = t.front().value("trial", 0);
        try {
          auto s = replay_log(t);
          std::cout << "trial " << trial_no << ": ok, tick " << s.world.tick << ", manual switches "
                    << s.manual_switches << (s.ended ? "" : ", not ended") << '\n';
        } catch (const IncompleteLog& e) {
          ++bad;
          std::cout << "trial " << trial_no << ": " << e.what() << '\n';
        }
      }
      return bad == 0 ? 0 : 2;
    }
    if (*serve) {
      ServiceConfig cfg;
      cfg.data_dir = data_dir;
      cfg.run_id = run_id;
      cfg.heuristic_dir = heuristic_dir;
      cfg.realtime = !manual_clock;
      SessionService service(cfg, serve_backend.gateway());
      for (const auto& id : service.aborted()) std::cerr << "closed unfinished session " << id << '\n';
      HttpFrontend frontend(service);
      g_frontend = &frontend;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << host << ':' << port << '\n';
      frontend.run(host, port);
      g_frontend = nullptr;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
