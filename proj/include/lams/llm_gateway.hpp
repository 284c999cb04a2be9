#pragma once

// Chat-completion access with token log-probabilities, plus the extraction
// of per-group letter distributions from a mode-switch completion.

#include <array>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lams/core_model.hpp"
#include "lams/simulator.hpp"

namespace lams {

enum class CompletionRole : std::uint8_t { ModeSwitch, RuleGeneration };

std::string_view to_string(CompletionRole r) noexcept;
CompletionRole parse_role(std::string_view s);

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 256;
  double temperature = 0.0;
  bool want_logprobs = true;
  int top_alternatives = 5;
  CompletionRole role = CompletionRole::ModeSwitch;
  // Simulated backends may look at the world the prompt was built from.
  std::shared_ptr<const WorldState> world;

  /// Throws std::invalid_argument on an unusable request.
  void validate() const;
};

struct TokenAlternative {
  std::string text;
  double logprob = 0.0;

  friend bool operator==(const TokenAlternative&, const TokenAlternative&) = default;
};

struct Token {
  std::string text;
  double logprob = 0.0;
  std::vector<TokenAlternative> alternatives;  // sorted by logprob, descending

  friend bool operator==(const Token&, const Token&) = default;
};

struct CompletionResult {
  std::string text;
  std::vector<Token> tokens;
};

void to_json(nlohmann::json& j, const CompletionResult& r);
void from_json(const nlohmann::json& j, CompletionResult& r);

class GatewayError : public std::runtime_error {
 public:
  enum class Kind { Timeout, AuthFailure, ProviderError, ParseError, LetterTokenNotFound };

  GatewayError(Kind kind, const std::string& what, int status = 0, std::string body = {});

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] int status() const noexcept { return status_; }
  [[nodiscard]] const std::string& body() const noexcept { return body_; }
  /// Worth another attempt: timeouts, rate limits and server errors.
  [[nodiscard]] bool transient() const noexcept;

 private:
  Kind kind_;
  int status_;
  std::string body_;
};

std::string_view to_string(GatewayError::Kind k) noexcept;

struct GroupDistribution {
  DirectionGroup group = DirectionGroup::Up;
  std::map<ActionDirection, double> probs;

  /// Directions ordered by probability, ties broken by letter order.
  [[nodiscard]] std::vector<std::pair<ActionDirection, double>> ranked() const;
  [[nodiscard]] double total() const noexcept;
};

using GroupDistributions = std::array<GroupDistribution, 4>;

void to_json(nlohmann::json& j, const GroupDistribution& d);
void from_json(const nlohmann::json& j, GroupDistribution& d);

/// Per-group probability distributions read at each answer-letter position.
GroupDistributions extract_group_distributions(const CompletionResult& result);

/// Letters actually written in the completion text, mapped to directions.
/// Throws GatewayError(ParseError) when a group is missing or invalid.
std::array<ActionDirection, 4> parse_written_directions(const std::string& text);

/// Response text in the requested output format for the given choices.
std::string format_mode_response(const std::array<ActionDirection, 4>& choice);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

enum class BackendKind : std::uint8_t { Real, Mock, Oracle };

struct BackendConfig {
  BackendKind backend = BackendKind::Mock;
  std::string endpoint;  // e.g. https://api.openai.com/v1/chat/completions
  std::string model;
  std::string auth_env = "OPENAI_API_KEY";
  double timeout_seconds = 30.0;
  int retry_count = 2;
  double backoff_seconds = 0.5;  // first retry delay, doubled each time
  std::string mock_script;       // path to a mock script (mock backend)

  void validate() const;
};

void to_json(nlohmann::json& j, const BackendConfig& c);
void from_json(const nlohmann::json& j, BackendConfig& c);

/// Preferred direction per group for a world, used by simulated backends.
using DirectionAdvisor = std::function<std::array<std::optional<ActionDirection>, 4>(const WorldState&)>;

/// OpenAI-compatible chat-completions endpoint.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);
  CompletionResult complete(const CompletionRequest& request) override;
  [[nodiscard]] std::string name() const override { return "http:" + config_.model; }

  /// Receives a redacted record of every exchange.
  void set_transcript(std::function<void(const nlohmann::json&)> sink) { transcript_ = std::move(sink); }

  static nlohmann::json request_body(const CompletionRequest& request, const std::string& model);
  static CompletionResult parse_response(const std::string& body);

 private:
  BackendConfig config_;
  std::function<void(const nlohmann::json&)> transcript_;
};

/// Simulated model that knows the preferred direction of each group.
/// The preferred letter gets `confidence`, the rest share the remainder.
class OracleBackend : public Backend {
 public:
  explicit OracleBackend(DirectionAdvisor advisor, double confidence = 0.9);
  CompletionResult complete(const CompletionRequest& request) override;
  [[nodiscard]] std::string name() const override { return "oracle"; }

  [[nodiscard]] GroupDistributions distributions(const WorldState& w) const;

 private:
  DirectionAdvisor advisor_;
  double confidence_;
};

/// Scripted backend. See README for the script format.
class MockBackend : public Backend {
 public:
  struct Match {
    std::string text;
    int min_count = 1;
  };
  struct Rewrite {
    char from = 'A';
    std::map<char, double> to;
  };
  struct Entry {
    std::string name;
    std::optional<CompletionRole> role;
    std::vector<Match> match;
    std::vector<std::string> exclude;
    bool is_default = false;
    bool delegate = false;
    std::map<int, std::map<char, double>> distributions;  // group number -> letter -> prob
    std::map<int, Rewrite> rewrite;
    std::string rule_response;
  };

  MockBackend(std::vector<Entry> entries, std::shared_ptr<Backend> delegate = nullptr);
  static MockBackend from_json(const nlohmann::json& script, std::shared_ptr<Backend> delegate = nullptr);
  static MockBackend from_file(const std::string& path, std::shared_ptr<Backend> delegate = nullptr);

  CompletionResult complete(const CompletionRequest& request) override;
  [[nodiscard]] std::string name() const override { return "mock"; }

  /// First entry matching the request; defaults are tried last.
  [[nodiscard]] const Entry& select(const CompletionRequest& request) const;

 private:
  std::vector<Entry> entries_;
  std::shared_ptr<Backend> delegate_;
};

/// Builds a completion whose letter tokens carry the given distributions.
CompletionResult synthesize_mode_completion(const GroupDistributions& dists, int top_alternatives = 5);
/// Builds a completion for plain text with zero-logprob tokens.
CompletionResult synthesize_text_completion(const std::string& text);
/// Splits text into word-ish tokens, for simulated backends.
std::vector<std::string> rough_tokenize(const std::string& text);

/// Retrying front end shared by all strategies of a session.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::duration<double>)>;

  Gateway(std::shared_ptr<Backend> backend, int retry_count = 2, double backoff_seconds = 0.5);

  CompletionResult complete(const CompletionRequest& request) const;
  [[nodiscard]] const Backend& backend() const noexcept { return *backend_; }
  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }

 private:
  std::shared_ptr<Backend> backend_;
  int retry_count_;
  double backoff_seconds_;
  Sleeper sleeper_;
};

/// Builds the backend named by `config`. `advisor` is required for the oracle
/// backend and for mock scripts that delegate.
std::shared_ptr<Backend> make_backend(const BackendConfig& config, DirectionAdvisor advisor = {});

}  // namespace lams
