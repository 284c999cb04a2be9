#include "lams/llm_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <thread>

#include "httplib.h"

namespace lams {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string ltrim(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size() && is_space(s[i])) ++i;
  return s.substr(i);
}

// Letter a token stands for: "A", " A", "A:" all count; "And" does not.
std::optional<char> token_letter(const std::string& token) {
  auto t = ltrim(token);
  if (t.empty() || t[0] < 'A' || t[0] > 'D') return std::nullopt;
  if (t.size() > 1 && is_alnum(t[1])) return std::nullopt;
  return t[0];
}

bool letter_valid_for(DirectionGroup g, char letter) {
  auto idx = static_cast<std::size_t>(letter - 'A');
  return letter >= 'A' && idx < group_members(g).size();
}

// Offset of the first non-space character of group N's value, or npos.
std::size_t group_value_offset(const std::string& text, int n) {
  std::string key = "\"Group " + std::to_string(n) + "\"";
  std::size_t at = 0;
  while ((at = text.find(key, at)) != std::string::npos) {
    std::size_t i = at + key.size();
    while (i < text.size() && is_space(text[i])) ++i;
    if (i < text.size() && text[i] == ':') {
      ++i;
      while (i < text.size() && is_space(text[i])) ++i;
      if (i < text.size() && text[i] == '"') {
        ++i;
        while (i < text.size() && is_space(text[i])) ++i;
        if (i < text.size()) return i;
      }
    }
    at += key.size();
  }
  return std::string::npos;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  for (std::size_t at = hay.find(needle); at != std::string::npos; at = hay.find(needle, at + needle.size())) ++n;
  return n;
}

GroupDistribution from_letters(DirectionGroup g, const std::map<char, double>& letters) {
  GroupDistribution d{g, {}};
  for (auto [letter, p] : letters) d.probs[direction_of(g, letter)] = p;
  return d;
}

GroupDistribution uniform(DirectionGroup g) {
  GroupDistribution d{g, {}};
  auto members = group_members(g);
  for (auto m : members) d.probs[m] = 1.0 / static_cast<double>(members.size());
  return d;
}

}  // namespace

std::string_view to_string(CompletionRole r) noexcept {
  return r == CompletionRole::ModeSwitch ? "mode_switch" : "rule_generation";
}

CompletionRole parse_role(std::string_view s) {
  if (s == "mode_switch") return CompletionRole::ModeSwitch;
  if (s == "rule_generation") return CompletionRole::RuleGeneration;
  throw std::invalid_argument("unknown completion role: " + std::string(s));
}

void CompletionRequest::validate() const {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
  if (want_logprobs && top_alternatives < 4)
    throw std::invalid_argument("top_alternatives must cover the letters A-D");
}

void to_json(nlohmann::json& j, const CompletionResult& r) {
  j = {{"text", r.text}, {"tokens", nlohmann::json::array()}};
  for (const auto& t : r.tokens) {
    nlohmann::json alts = nlohmann::json::array();
    for (const auto& a : t.alternatives) alts.push_back({a.text, a.logprob});
    j["tokens"].push_back({{"text", t.text}, {"logprob", t.logprob}, {"alternatives", alts}});
  }
}

void from_json(const nlohmann::json& j, CompletionResult& r) {
  r.text = j.at("text").get<std::string>();
  r.tokens.clear();
  for (const auto& t : j.value("tokens", nlohmann::json::array())) {
    Token tok{t.at("text").get<std::string>(), t.at("logprob").get<double>(), {}};
    for (const auto& a : t.value("alternatives", nlohmann::json::array()))
      tok.alternatives.push_back({a.at(0).get<std::string>(), a.at(1).get<double>()});
    r.tokens.push_back(std::move(tok));
  }
}

GatewayError::GatewayError(Kind kind, const std::string& what, int status, std::string body)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what),
      kind_(kind),
      status_(status),
      body_(std::move(body)) {}

bool GatewayError::transient() const noexcept {
  if (kind_ == Kind::Timeout) return true;
  return kind_ == Kind::ProviderError && (status_ == 429 || status_ >= 500);
}

std::string_view to_string(GatewayError::Kind k) noexcept {
  switch (k) {
    case GatewayError::Kind::Timeout: return "timeout";
    case GatewayError::Kind::AuthFailure: return "auth_failure";
    case GatewayError::Kind::ProviderError: return "provider_error";
    case GatewayError::Kind::ParseError: return "parse_error";
    case GatewayError::Kind::LetterTokenNotFound: return "letter_token_not_found";
  }
  return "provider_error";
}

std::vector<std::pair<ActionDirection, double>> GroupDistribution::ranked() const {
  std::vector<std::pair<ActionDirection, double>> out(probs.begin(), probs.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return letter_of(a.first) < letter_of(b.first);
  });
  return out;
}

double GroupDistribution::total() const noexcept {
  double s = 0.0;
  for (const auto& [d, p] : probs) s += p;
  return s;
}

void to_json(nlohmann::json& j, const GroupDistribution& d) {
  nlohmann::json probs = nlohmann::json::object();
  for (const auto& [dir, p] : d.probs) probs[std::string(to_string(dir))] = p;
  j = {{"group", to_string(d.group)}, {"probs", probs}};
}

void from_json(const nlohmann::json& j, GroupDistribution& d) {
  d.group = parse_group(j.at("group").get<std::string>());
  d.probs.clear();
  for (const auto& [k, v] : j.at("probs").items()) d.probs[parse_direction(k)] = v.get<double>();
}

GroupDistributions extract_group_distributions(const CompletionResult& result) {
  if (result.tokens.empty())
    throw GatewayError(GatewayError::Kind::LetterTokenNotFound, "completion carries no token log-probabilities");

  std::string joined;
  std::vector<std::size_t> starts;
  for (const auto& t : result.tokens) {
    starts.push_back(joined.size());
    joined += t.text;
  }

  GroupDistributions out;
  for (auto g : kAllGroups) {
    int n = group_number(g);
    auto pos = group_value_offset(joined, n);
    if (pos == std::string::npos)
      throw GatewayError(GatewayError::Kind::ParseError, "missing \"Group " + std::to_string(n) + "\" in completion");

    auto it = std::upper_bound(starts.begin(), starts.end(), pos);
    auto idx = static_cast<std::size_t>(std::distance(starts.begin(), it)) - 1;
    const Token& tok = result.tokens[idx];
    for (std::size_t i = starts[idx]; i < pos; ++i)
      if (!is_space(joined[i]))
        throw GatewayError(GatewayError::Kind::LetterTokenNotFound,
                           "letter for group " + std::to_string(n) + " shares a token with \"" + tok.text + "\"");
    if (!token_letter(tok.text))
      throw GatewayError(GatewayError::Kind::LetterTokenNotFound,
                         "token \"" + tok.text + "\" at group " + std::to_string(n) + " is not a letter");

    std::set<std::string> seen;
    std::map<char, double> mass;
    auto consider = [&](const std::string& text, double logprob) {
      if (!seen.insert(text).second || !std::isfinite(logprob)) return;
      auto letter = token_letter(text);
      if (letter && letter_valid_for(g, *letter)) mass[*letter] += std::exp(logprob);
    };
    consider(tok.text, tok.logprob);
    for (const auto& a : tok.alternatives) consider(a.text, a.logprob);

    double total = 0.0;
    for (const auto& [l, p] : mass) total += p;
    if (total <= 0.0)
      throw GatewayError(GatewayError::Kind::ParseError, "no valid letter alternatives for group " + std::to_string(n));
    for (auto& [l, p] : mass) p /= total;
    out[static_cast<std::size_t>(g)] = from_letters(g, mass);
  }
  return out;
}

std::array<ActionDirection, 4> parse_written_directions(const std::string& text) {
  std::array<ActionDirection, 4> out{};
  for (auto g : kAllGroups) {
    int n = group_number(g);
    auto pos = group_value_offset(text, n);
    if (pos == std::string::npos)
      throw GatewayError(GatewayError::Kind::ParseError, "missing \"Group " + std::to_string(n) + "\" in completion");
    auto letter = token_letter(text.substr(pos, 2));
    if (!letter || !letter_valid_for(g, *letter))
      throw GatewayError(GatewayError::Kind::ParseError, "invalid letter for group " + std::to_string(n));
    out[static_cast<std::size_t>(g)] = direction_of(g, *letter);
  }
  return out;
}

std::string format_mode_response(const std::array<ActionDirection, 4>& choice) {
  std::string out = "{\n";
  for (std::size_t i = 0; i < 4; ++i) {
    auto label = label_of(choice[i]);
    out += "\"Group " + std::to_string(i + 1) + "\": \"" + label.letter + ": " + label.text + "\"";
    out += i + 1 < 4 ? ",\n" : "\n";
  }
  return out + "}";
}

std::vector<std::string> rough_tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto cls = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) ? 0 : std::isdigit(static_cast<unsigned char>(c)) ? 1 : 2; };
  while (i < text.size()) {
    std::string tok;
    if (text[i] == ' ' && i + 1 < text.size() && !is_space(text[i + 1])) tok += text[i++];
    if (is_space(text[i])) {
      while (i < text.size() && is_space(text[i])) tok += text[i++];
    } else {
      int c = cls(text[i]);
      tok += text[i++];
      if (c != 1)
        while (i < text.size() && !is_space(text[i]) && cls(text[i]) == c) tok += text[i++];
    }
    out.push_back(std::move(tok));
  }
  return out;
}

CompletionResult synthesize_text_completion(const std::string& text) {
  CompletionResult r{text, {}};
  for (auto& t : rough_tokenize(text)) r.tokens.push_back({std::move(t), 0.0, {}});
  return r;
}

CompletionResult synthesize_mode_completion(const GroupDistributions& dists, int top_alternatives) {
  std::array<ActionDirection, 4> written{};
  for (std::size_t i = 0; i < 4; ++i) {
    auto ranked = dists[i].ranked();
    if (ranked.empty() || ranked.front().second <= 0.0)
      throw std::invalid_argument("empty distribution for group " + std::to_string(i + 1));
    written[i] = ranked.front().first;
  }
  CompletionResult r;
  r.text = format_mode_response(written);
  std::size_t cursor = 0;
  auto emit_plain = [&](std::size_t until) {
    for (auto& t : rough_tokenize(r.text.substr(cursor, until - cursor))) r.tokens.push_back({std::move(t), 0.0, {}});
    cursor = until;
  };
  for (std::size_t i = 0; i < 4; ++i) {
    auto pos = group_value_offset(r.text, static_cast<int>(i + 1));
    emit_plain(pos);
    Token letter{std::string(1, letter_of(written[i])), 0.0, {}};
    for (const auto& [dir, p] : dists[i].ranked()) {
      if (p <= 0.0) continue;
      if (static_cast<int>(letter.alternatives.size()) >= top_alternatives) break;
      letter.alternatives.push_back({std::string(1, letter_of(dir)), std::log(p)});
    }
    letter.logprob = letter.alternatives.front().logprob;
    r.tokens.push_back(std::move(letter));
    cursor = pos + 1;
  }
  emit_plain(r.text.size());
  return r;
}

void BackendConfig::validate() const {
  if (backend == BackendKind::Real && (endpoint.empty() || model.empty()))
    throw std::invalid_argument("real backend requires an endpoint and a model");
  if (backend == BackendKind::Mock && mock_script.empty())
    throw std::invalid_argument("mock backend requires a script path");
  if (timeout_seconds <= 0.0) throw std::invalid_argument("timeout must be positive");
  if (retry_count < 0) throw std::invalid_argument("retry count must be non-negative");
}

void to_json(nlohmann::json& j, const BackendConfig& c) {
  static const char* kinds[] = {"real", "mock", "oracle"};
  j = {{"backend", kinds[static_cast<int>(c.backend)]},
       {"endpoint", c.endpoint},
       {"model", c.model},
       {"auth_env", c.auth_env},
       {"timeout_seconds", c.timeout_seconds},
       {"retry_count", c.retry_count},
       {"backoff_seconds", c.backoff_seconds},
       {"mock_script", c.mock_script}};
}

void from_json(const nlohmann::json& j, BackendConfig& c) {
  auto kind = j.value("backend", std::string("mock"));
  if (kind == "real")
    c.backend = BackendKind::Real;
  else if (kind == "mock")
    c.backend = BackendKind::Mock;
  else if (kind == "oracle")
    c.backend = BackendKind::Oracle;
  else
    throw std::invalid_argument("unknown backend: " + kind);
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model = j.value("model", c.model);
  c.auth_env = j.value("auth_env", c.auth_env);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.retry_count = j.value("retry_count", c.retry_count);
  c.backoff_seconds = j.value("backoff_seconds", c.backoff_seconds);
  c.mock_script = j.value("mock_script", c.mock_script);
}

// ---- HTTP ----

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  config_.backend = BackendKind::Real;
  config_.validate();
}

nlohmann::json HttpBackend::request_body(const CompletionRequest& request, const std::string& model) {
  nlohmann::json body = {{"model", model},
                         {"messages", {{{"role", "user"}, {"content", request.prompt}}}},
                         {"temperature", request.temperature},
                         {"max_tokens", request.max_tokens}};
  if (request.want_logprobs) {
    body["logprobs"] = true;
    body["top_logprobs"] = request.top_alternatives;
  }
  return body;
}

CompletionResult HttpBackend::parse_response(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
    const auto& choice = j.at("choices").at(0);
    CompletionResult r;
    r.text = choice.at("message").at("content").get<std::string>();
    if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
        choice["logprobs"]["content"].is_array()) {
      for (const auto& t : choice["logprobs"]["content"]) {
        Token tok{t.at("token").get<std::string>(), t.at("logprob").get<double>(), {}};
        for (const auto& a : t.value("top_logprobs", nlohmann::json::array()))
          tok.alternatives.push_back({a.at("token").get<std::string>(), a.at("logprob").get<double>()});
        std::stable_sort(tok.alternatives.begin(), tok.alternatives.end(),
                         [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
        r.tokens.push_back(std::move(tok));
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw GatewayError(GatewayError::Kind::ParseError, std::string("malformed provider response: ") + e.what(), 200,
                       body);
  }
}

CompletionResult HttpBackend::complete(const CompletionRequest& request) {
  static const std::regex url_re(R"(^(https?)://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url_re))
    throw GatewayError(GatewayError::Kind::ProviderError, "bad endpoint URL: " + config_.endpoint);
  std::string scheme = m[1], host = m[2];
  int port = m[3].matched ? std::stoi(m[3]) : (scheme == "https" ? 443 : 80);
  std::string path = m[4].matched ? std::string(m[4]) : "/";

  httplib::Client client(scheme + "://" + host + ":" + std::to_string(port));
  auto secs = std::chrono::duration<double>(config_.timeout_seconds);
  auto us = std::chrono::duration_cast<std::chrono::microseconds>(secs);
  client.set_connection_timeout(us);
  client.set_read_timeout(us);
  client.set_write_timeout(us);

  httplib::Headers headers;
  bool has_auth = false;
  if (const char* key = std::getenv(config_.auth_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
    has_auth = true;
  }
  auto body = request_body(request, config_.model).dump();
  auto res = client.Post(path, headers, body, "application/json");

  if (transcript_) {
    transcript_({{"endpoint", config_.endpoint},
                 {"authorization", has_auth ? "Bearer [redacted]" : ""},
                 {"request", nlohmann::json::parse(body)},
                 {"status", res ? res->status : -1},
                 {"response", res ? res->body : httplib::to_string(res.error())}});
  }

  if (!res) throw GatewayError(GatewayError::Kind::Timeout, "transport failure: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403)
    throw GatewayError(GatewayError::Kind::AuthFailure, "provider rejected credentials", res->status, res->body);
  if (res->status < 200 || res->status >= 300)
    throw GatewayError(GatewayError::Kind::ProviderError, "HTTP " + std::to_string(res->status), res->status,
                       res->body);
  return parse_response(res->body);
}

// ---- Oracle ----

OracleBackend::OracleBackend(DirectionAdvisor advisor, double confidence)
    : advisor_(std::move(advisor)), confidence_(confidence) {
  if (!advisor_) throw std::invalid_argument("oracle backend needs an advisor");
  if (confidence_ <= 0.0 || confidence_ > 1.0) throw std::invalid_argument("confidence must be in (0, 1]");
}

GroupDistributions OracleBackend::distributions(const WorldState& w) const {
  auto advice = advisor_(w);
  GroupDistributions out;
  for (auto g : kAllGroups) {
    auto i = static_cast<std::size_t>(g);
    auto members = group_members(g);
    ActionDirection pick = advice[i].value_or(members.front());
    if (group_of(pick) != g) throw std::logic_error("advisor returned an out-of-group direction");
    out[i].group = g;
    double rest = (1.0 - confidence_) / static_cast<double>(members.size() - 1);
    for (auto m : members) out[i].probs[m] = m == pick ? confidence_ : rest;
  }
  return out;
}

CompletionResult OracleBackend::complete(const CompletionRequest& request) {
  if (request.role == CompletionRole::RuleGeneration) return synthesize_text_completion("");
  if (!request.world)
    throw GatewayError(GatewayError::Kind::ProviderError, "oracle backend needs the world snapshot");
  return synthesize_mode_completion(distributions(*request.world), request.top_alternatives);
}

// ---- Mock ----

MockBackend::MockBackend(std::vector<Entry> entries, std::shared_ptr<Backend> delegate)
    : entries_(std::move(entries)), delegate_(std::move(delegate)) {
  if (std::none_of(entries_.begin(), entries_.end(), [](const Entry& e) { return e.is_default; }))
    throw std::invalid_argument("mock script needs a default entry");
  for (const auto& e : entries_) {
    if (e.delegate && !delegate_)
      throw std::invalid_argument("mock entry '" + e.name + "' delegates but no delegate backend is configured");
    for (const auto& [n, letters] : e.distributions) {
      auto g = group_from_number(n);
      double sum = 0.0;
      for (auto [l, p] : letters) {
        if (!letter_valid_for(g, l)) throw std::invalid_argument("letter not valid for group " + std::to_string(n));
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("probability out of range in '" + e.name + "'");
        sum += p;
      }
      if (sum > 1.0 + 1e-9) throw std::invalid_argument("probabilities exceed 1 in '" + e.name + "'");
    }
  }
}

MockBackend MockBackend::from_json(const nlohmann::json& script, std::shared_ptr<Backend> delegate) {
  std::vector<Entry> entries;
  auto letters_of = [](const nlohmann::json& j) {
    std::map<char, double> out;
    for (const auto& [k, v] : j.items()) {
      if (k.size() != 1) throw std::invalid_argument("letter keys must be single characters: " + k);
      out[k[0]] = v.get<double>();
    }
    return out;
  };
  auto group_key = [](const std::string& k) {
    static const std::regex re(R"(^Group ([1-4])$)");
    std::smatch m;
    if (!std::regex_match(k, m, re)) throw std::invalid_argument("bad group key: " + k);
    return std::stoi(m[1]);
  };
  for (const auto& j : script.at("entries")) {
    Entry e;
    e.name = j.value("name", std::string("entry") + std::to_string(entries.size()));
    if (j.contains("role")) e.role = parse_role(j["role"].get<std::string>());
    for (const auto& m : j.value("match", nlohmann::json::array())) {
      if (m.is_string())
        e.match.push_back({m.get<std::string>(), 1});
      else
        e.match.push_back({m.at("text").get<std::string>(), m.value("min_count", 1)});
    }
    e.exclude = j.value("exclude", std::vector<std::string>{});
    e.is_default = j.value("default", false);
    e.delegate = j.value("delegate", false);
    const auto dists = j.value("distributions", nlohmann::json::object());
    for (const auto& [k, v] : dists.items()) e.distributions[group_key(k)] = letters_of(v);
    const auto rewrites = j.value("rewrite", nlohmann::json::object());
    for (const auto& [k, v] : rewrites.items()) {
      auto from = v.at("from").get<std::string>();
      if (from.size() != 1) throw std::invalid_argument("rewrite 'from' must be a letter");
      e.rewrite[group_key(k)] = Rewrite{from[0], letters_of(v.at("to"))};
    }
    e.rule_response = j.value("rule_response", std::string());
    entries.push_back(std::move(e));
  }
  return MockBackend(std::move(entries), std::move(delegate));
}

MockBackend MockBackend::from_file(const std::string& path, std::shared_ptr<Backend> delegate) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mock script: " + path);
  return from_json(nlohmann::json::parse(in), std::move(delegate));
}

const MockBackend::Entry& MockBackend::select(const CompletionRequest& request) const {
  auto role_ok = [&](const Entry& e) { return !e.role || *e.role == request.role; };
  for (const auto& e : entries_) {
    if (e.is_default || !role_ok(e)) continue;
    bool ok = std::all_of(e.match.begin(), e.match.end(), [&](const Match& m) {
      return count_occurrences(request.prompt, m.text) >= static_cast<std::size_t>(m.min_count);
    });
    ok = ok && std::none_of(e.exclude.begin(), e.exclude.end(),
                            [&](const std::string& s) { return request.prompt.find(s) != std::string::npos; });
    if (ok) return e;
  }
  for (const auto& e : entries_)
    if (e.is_default && role_ok(e)) return e;
  throw GatewayError(GatewayError::Kind::ProviderError,
                     "no mock entry for role " + std::string(to_string(request.role)));
}

CompletionResult MockBackend::complete(const CompletionRequest& request) {
  const Entry& e = select(request);
  if (request.role == CompletionRole::RuleGeneration) {
    if (e.delegate) return delegate_->complete(request);
    return synthesize_text_completion(e.rule_response);
  }

  GroupDistributions dists;
  if (e.delegate) {
    dists = extract_group_distributions(delegate_->complete(request));
    for (const auto& [n, rw] : e.rewrite) {
      auto& d = dists[static_cast<std::size_t>(n - 1)];
      if (letter_of(d.ranked().front().first) == rw.from) d = from_letters(d.group, rw.to);
    }
  } else {
    for (auto g : kAllGroups) dists[static_cast<std::size_t>(g)] = uniform(g);
  }
  for (const auto& [n, letters] : e.distributions)
    dists[static_cast<std::size_t>(n - 1)] = from_letters(group_from_number(n), letters);
  return synthesize_mode_completion(dists, request.top_alternatives);
}

// ---- Gateway ----

Gateway::Gateway(std::shared_ptr<Backend> backend, int retry_count, double backoff_seconds)
    : backend_(std::move(backend)),
      retry_count_(retry_count),
      backoff_seconds_(backoff_seconds),
      sleeper_([](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); }) {
  if (!backend_) throw std::invalid_argument("gateway needs a backend");
}

CompletionResult Gateway::complete(const CompletionRequest& request) const {
  request.validate();
  double delay = backoff_seconds_;
  for (int attempt = 0;; ++attempt) {
    try {
      return backend_->complete(request);
    } catch (const GatewayError& e) {
      if (!e.transient() || attempt >= retry_count_) throw;
    }
    sleeper_(std::chrono::duration<double>(delay));
    delay *= 2.0;
  }
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config, DirectionAdvisor advisor) {
  config.validate();
  switch (config.backend) {
    case BackendKind::Real: return std::make_shared<HttpBackend>(config);
    case BackendKind::Oracle: return std::make_shared<OracleBackend>(std::move(advisor));
    case BackendKind::Mock: {
      std::shared_ptr<Backend> delegate;
      if (advisor) delegate = std::make_shared<OracleBackend>(std::move(advisor));
      return std::make_shared<MockBackend>(MockBackend::from_file(config.mock_script, delegate));
    }
  }
  throw std::invalid_argument("unknown backend kind");
}

}  // namespace lams
