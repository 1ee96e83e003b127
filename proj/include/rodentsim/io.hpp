#pragma once

#include "rodentsim/agent.hpp"
#include "rodentsim/core.hpp"
#include "rodentsim/metrics.hpp"
#include "rodentsim/parallel.hpp"
#include "rodentsim/protocol.hpp"

#include <json.hpp>
#include <toml.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fnmatch.h>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rodentsim::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Malformed input; `line` is 1-based (CSV line or JSON row number).
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string &source, std::size_t line, const std::string &what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Well-formed rows that violate the trial-log key rules.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::to_string(v);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

template <class T> std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    return std::nullopt;
  return v;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path &path, const std::string &content) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << content;
}

/// Free-form `# key=value` lines written above CSV headers.
using Metadata = std::vector<std::pair<std::string, std::string>>;

inline void write_metadata(std::ostream &out, const Metadata &meta) {
  for (const auto &[k, v] : meta)
    out << "# " << k << '=' << v << '\n';
}

inline Metadata read_metadata(std::string_view text) {
  Metadata meta;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) != 0)
      break;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      continue;
    meta.emplace_back(line.substr(2, eq - 2), std::string(trim(std::string_view(line).substr(eq + 1))));
  }
  return meta;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct MetricsConfig {
  int delta = 20;
  std::string distance = std::string(MatchDistance::name);

  friend bool operator==(const MetricsConfig &, const MetricsConfig &) = default;
};

struct ExperimentConfig {
  AgentConfig agent;
  ProtocolConfig protocol;
  MetricsConfig metrics;

  friend bool operator==(const ExperimentConfig &, const ExperimentConfig &) = default;
};

inline void validate(const MetricsConfig &m) {
  if (m.delta < 1)
    throw DomainError("metrics.delta must be >= 1");
  if (m.distance != MatchDistance::name)
    throw DomainError("metrics.distance: unsupported distance '" + m.distance + "'");
}

inline WarmupMode parse_warmup(std::string_view s) {
  if (s == "prefill")
    return WarmupMode::prefill;
  if (s == "await")
    return WarmupMode::await;
  throw DomainError("unknown warmup mode '" + std::string(s) + "'");
}

inline PhaseSwitch parse_phase_switch(std::string_view s) {
  if (s == "session_accuracy")
    return PhaseSwitch::on_session_accuracy;
  if (s == "never")
    return PhaseSwitch::never;
  throw DomainError("unknown phase_switch '" + std::string(s) + "'");
}

inline Stimulus require_stimulus(std::string_view s) {
  if (auto v = parse_stimulus(s))
    return *v;
  throw DomainError("unknown stimulus '" + std::string(s) + "'");
}

inline Response require_response(std::string_view s) {
  if (auto v = parse_response(s))
    return *v;
  throw DomainError("unknown response '" + std::string(s) + "'");
}

namespace detail {

inline void reject_unknown_keys(const toml::table &t, std::string_view section,
                                std::initializer_list<std::string_view> known) {
  for (const auto &[key, _] : t) {
    if (std::find(known.begin(), known.end(), key.str()) == known.end())
      throw DomainError("config: unknown key '" + std::string(key.str()) + "' in [" + std::string(section) + "]");
  }
}

template <class T> void read_value(const toml::table &t, std::string_view key, T &dst) {
  const auto *node = t.get(key);
  if (!node)
    return;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node->value<double>()) {
      dst = *v;
      return;
    }
  } else if constexpr (std::is_same_v<T, int>) {
    if (auto v = node->as_integer()) {
      dst = static_cast<int>(v->get());
      return;
    }
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value<std::string>()) {
      dst = *v;
      return;
    }
  }
  throw DomainError("config: key '" + std::string(key) + "' has the wrong type");
}

} // namespace detail

/// Parses a TOML document with [agent], [protocol] and [metrics] sections.
/// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig parse_config(std::string_view text, std::string_view source = "config") {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error &e) {
    throw ParseError(std::string(source), e.source().begin.line, std::string(e.description()));
  }
  ExperimentConfig cfg;
  for (const auto &[key, _] : root)
    if (key.str() != "agent" && key.str() != "protocol" && key.str() != "metrics")
      throw DomainError("config: unknown section [" + std::string(key.str()) + "]");

  if (const auto *agent = root["agent"].as_table()) {
    detail::reject_unknown_keys(*agent, "agent",
                                {"k", "alpha", "gamma", "eps_start", "eps_decay_rate", "q_init", "warmup"});
    auto &a = cfg.agent;
    detail::read_value(*agent, "k", a.k);
    detail::read_value(*agent, "alpha", a.alpha);
    detail::read_value(*agent, "gamma", a.gamma);
    detail::read_value(*agent, "eps_start", a.eps_start);
    detail::read_value(*agent, "eps_decay_rate", a.eps_decay_rate);
    detail::read_value(*agent, "q_init", a.q_init);
    std::string warmup(to_string(a.warmup));
    detail::read_value(*agent, "warmup", warmup);
    a.warmup = parse_warmup(warmup);
  }
  if (const auto *proto = root["protocol"].as_table()) {
    detail::reject_unknown_keys(*proto, "protocol",
                                {"max_run_length", "trials_per_session", "phase_stimuli", "sweet_target",
                                 "phase_switch", "success_threshold", "success_window", "max_sessions"});
    auto &p = cfg.protocol;
    detail::read_value(*proto, "max_run_length", p.max_run_length);
    detail::read_value(*proto, "trials_per_session", p.trials_per_session);
    if (const auto *node = proto->get("phase_stimuli")) {
      const auto *arr = node->as_array();
      if (!arr)
        throw DomainError("config: protocol.phase_stimuli must be an array of strings");
      p.phase_stimuli.clear();
      for (const auto &el : *arr) {
        auto s = el.value<std::string>();
        if (!s)
          throw DomainError("config: protocol.phase_stimuli must be an array of strings");
        p.phase_stimuli.push_back(require_stimulus(*s));
      }
    }
    std::string target(to_string(p.sweet_target));
    detail::read_value(*proto, "sweet_target", target);
    p.sweet_target = require_response(target);
    std::string sw(to_string(p.phase_switch));
    detail::read_value(*proto, "phase_switch", sw);
    p.phase_switch = parse_phase_switch(sw);
    detail::read_value(*proto, "success_threshold", p.success_threshold);
    detail::read_value(*proto, "success_window", p.success_window);
    detail::read_value(*proto, "max_sessions", p.max_sessions);
  }
  if (const auto *metrics = root["metrics"].as_table()) {
    detail::reject_unknown_keys(*metrics, "metrics", {"delta", "distance"});
    detail::read_value(*metrics, "delta", cfg.metrics.delta);
    detail::read_value(*metrics, "distance", cfg.metrics.distance);
  }
  validate(cfg.agent);
  validate(cfg.protocol);
  validate(cfg.metrics);
  return cfg;
}

inline ExperimentConfig load_config(const fs::path &path) {
  return parse_config(read_file(path), path.string());
}

/// TOML float literal; to_chars drops the fraction of integral values.
inline std::string toml_float(double v) {
  auto s = format_double(v);
  if (s.find_first_of(".eEni") == std::string::npos)
    s += ".0";
  return s;
}

/// Every field written out, so the file doubles as documentation of defaults.
inline std::string to_toml(const ExperimentConfig &cfg) {
  std::ostringstream out;
  const auto &a = cfg.agent;
  const auto &p = cfg.protocol;
  out << "[agent]\n"
      << "k = " << a.k << '\n'
      << "alpha = " << toml_float(a.alpha) << '\n'
      << "gamma = " << toml_float(a.gamma) << '\n'
      << "eps_start = " << toml_float(a.eps_start) << '\n'
      << "eps_decay_rate = " << toml_float(a.eps_decay_rate) << '\n'
      << "q_init = " << toml_float(a.q_init) << '\n'
      << "warmup = \"" << to_string(a.warmup) << "\"\n\n";
  out << "[protocol]\n"
      << "max_run_length = " << p.max_run_length << '\n'
      << "trials_per_session = " << p.trials_per_session << '\n'
      << "phase_stimuli = [";
  for (std::size_t i = 0; i < p.phase_stimuli.size(); ++i)
    out << (i ? ", " : "") << '"' << to_string(p.phase_stimuli[i]) << '"';
  out << "]\n"
      << "sweet_target = \"" << to_string(p.sweet_target) << "\"\n"
      << "phase_switch = \"" << to_string(p.phase_switch) << "\"\n"
      << "success_threshold = " << toml_float(p.success_threshold) << '\n'
      << "success_window = " << p.success_window << '\n'
      << "max_sessions = " << p.max_sessions << "\n\n";
  out << "[metrics]\n"
      << "delta = " << cfg.metrics.delta << '\n'
      << "distance = \"" << cfg.metrics.distance << "\"\n";
  return out.str();
}

inline json to_json(const AgentConfig &a) {
  return {{"k", a.k},           {"alpha", a.alpha},   {"gamma", a.gamma},
          {"eps_start", a.eps_start}, {"eps_decay_rate", a.eps_decay_rate},
          {"q_init", a.q_init}, {"warmup", std::string(to_string(a.warmup))}};
}

inline json to_json(const ProtocolConfig &p) {
  json stim = json::array();
  for (auto s : p.phase_stimuli)
    stim.push_back(std::string(to_string(s)));
  return {{"max_run_length", p.max_run_length},
          {"trials_per_session", p.trials_per_session},
          {"phase_stimuli", stim},
          {"sweet_target", std::string(to_string(p.sweet_target))},
          {"phase_switch", std::string(to_string(p.phase_switch))},
          {"success_threshold", p.success_threshold},
          {"success_window", p.success_window},
          {"max_sessions", p.max_sessions}};
}

inline AgentConfig agent_config_from_json(const json &j) {
  AgentConfig a;
  a.k = j.at("k").get<int>();
  a.alpha = j.at("alpha").get<double>();
  a.gamma = j.at("gamma").get<double>();
  a.eps_start = j.at("eps_start").get<double>();
  a.eps_decay_rate = j.at("eps_decay_rate").get<double>();
  a.q_init = j.at("q_init").get<double>();
  a.warmup = parse_warmup(j.at("warmup").get<std::string>());
  validate(a);
  return a;
}

inline ProtocolConfig protocol_config_from_json(const json &j) {
  ProtocolConfig p;
  p.max_run_length = j.at("max_run_length").get<int>();
  p.trials_per_session = j.at("trials_per_session").get<int>();
  p.phase_stimuli.clear();
  for (const auto &s : j.at("phase_stimuli"))
    p.phase_stimuli.push_back(require_stimulus(s.get<std::string>()));
  p.sweet_target = require_response(j.at("sweet_target").get<std::string>());
  p.phase_switch = parse_phase_switch(j.at("phase_switch").get<std::string>());
  p.success_threshold = j.at("success_threshold").get<double>();
  p.success_window = j.at("success_window").get<int>();
  p.max_sessions = j.at("max_sessions").get<int>();
  validate(p);
  return p;
}

// ---------------------------------------------------------------------------
// Trial logs
// ---------------------------------------------------------------------------

enum class LogFormat { csv, json };

inline LogFormat parse_log_format(std::string_view s) {
  if (s == "csv")
    return LogFormat::csv;
  if (s == "json")
    return LogFormat::json;
  throw DomainError("unknown log format '" + std::string(s) + "'");
}

inline constexpr std::string_view kTrialLogHeader =
    "individual_id,session_index,trial_index,stimulus,response,outcome";

struct TrialLogRow {
  std::string individual_id;
  int session_index = 0;
  int trial_index = 0;
  Trial trial;
  std::size_t line = 0; // source position, for error messages
};

namespace detail {

inline void check_id(const std::string &id) {
  if (id.empty() || id.find_first_of(",\n\r\"") != std::string::npos)
    throw DomainError("individual id '" + id + "' must be non-empty and free of commas, quotes and newlines");
}

/// Groups rows into a cohort, checking key uniqueness and index continuity.
inline Cohort assemble(std::vector<TrialLogRow> rows, SuccessCriterion criterion, const std::string &source) {
  std::vector<std::string> order;
  std::map<std::string, std::map<int, std::map<int, TrialLogRow>>> grouped;
  for (auto &r : rows) {
    auto &by_session = grouped[r.individual_id];
    if (by_session.empty())
      order.push_back(r.individual_id);
    auto &trials = by_session[r.session_index];
    if (trials.count(r.trial_index))
      throw IntegrityError(source + ":" + std::to_string(r.line) + ": duplicate key (" + r.individual_id + ", " +
                           std::to_string(r.session_index) + ", " + std::to_string(r.trial_index) + ")");
    trials.emplace(r.trial_index, std::move(r));
  }

  Cohort cohort;
  for (const auto &raw_id : order) {
    TrainingSequence seq;
    seq.individual_id = raw_id;
    if (raw_id.rfind(kRealPrefix, 0) != 0 && raw_id.rfind(kSimPrefix, 0) != 0)
      seq.individual_id = std::string(kRealPrefix) + raw_id;
    int expected_session = 1;
    for (auto &[session_index, trials] : grouped[raw_id]) {
      if (session_index != expected_session)
        throw IntegrityError(source + ": individual '" + raw_id + "': session index gap, expected " +
                             std::to_string(expected_session) + ", found " + std::to_string(session_index));
      Session s{session_index, {}};
      int expected_trial = 1;
      for (auto &[trial_index, row] : trials) {
        if (trial_index != expected_trial)
          throw IntegrityError(source + ": individual '" + raw_id + "' session " + std::to_string(session_index) +
                               ": trial index gap, expected " + std::to_string(expected_trial) + ", found " +
                               std::to_string(trial_index));
        s.trials.push_back(row.trial);
        ++expected_trial;
      }
      seq.sessions.push_back(std::move(s));
      ++expected_session;
    }
    evaluate_success(seq, criterion);
    cohort.members.push_back(std::move(seq));
  }
  return cohort;
}

inline TrialLogRow parse_row_fields(std::span<const std::string_view> f, const std::string &source, std::size_t line) {
  if (f.size() != 6)
    throw ParseError(source, line, "expected 6 fields, found " + std::to_string(f.size()));
  TrialLogRow r;
  r.line = line;
  r.individual_id = std::string(trim(f[0]));
  if (r.individual_id.empty())
    throw ParseError(source, line, "empty individual_id");
  auto si = parse_number<int>(f[1]);
  auto ti = parse_number<int>(f[2]);
  if (!si || *si < 1)
    throw ParseError(source, line, "bad session_index '" + std::string(f[1]) + "'");
  if (!ti || *ti < 1)
    throw ParseError(source, line, "bad trial_index '" + std::string(f[2]) + "'");
  r.session_index = *si;
  r.trial_index = *ti;
  auto st = parse_stimulus(trim(f[3]));
  auto rs = parse_response(trim(f[4]));
  auto oc = parse_outcome(trim(f[5]));
  if (!st)
    throw ParseError(source, line, "bad stimulus '" + std::string(f[3]) + "'");
  if (!rs)
    throw ParseError(source, line, "bad response '" + std::string(f[4]) + "'");
  if (!oc)
    throw ParseError(source, line, "bad outcome '" + std::string(f[5]) + "'");
  r.trial = {*st, *rs, *oc};
  return r;
}

} // namespace detail

inline std::string trial_log_csv(const Cohort &cohort, const Metadata &meta = {}) {
  std::ostringstream out;
  write_metadata(out, meta);
  out << kTrialLogHeader << '\n';
  for (const auto &m : cohort.members) {
    detail::check_id(m.individual_id);
    for (const auto &s : m.sessions)
      for (std::size_t t = 0; t < s.trials.size(); ++t) {
        const auto &tr = s.trials[t];
        out << m.individual_id << ',' << s.index << ',' << (t + 1) << ',' << to_string(tr.stimulus) << ','
            << to_string(tr.response) << ',' << to_string(tr.outcome) << '\n';
      }
  }
  return out.str();
}

inline json trial_log_json(const Cohort &cohort, const Metadata &meta = {}) {
  json rows = json::array();
  for (const auto &m : cohort.members) {
    detail::check_id(m.individual_id);
    for (const auto &s : m.sessions)
      for (std::size_t t = 0; t < s.trials.size(); ++t) {
        const auto &tr = s.trials[t];
        rows.push_back({{"individual_id", m.individual_id},
                        {"session_index", s.index},
                        {"trial_index", t + 1},
                        {"stimulus", std::string(to_string(tr.stimulus))},
                        {"response", std::string(to_string(tr.response))},
                        {"outcome", std::string(to_string(tr.outcome))}});
      }
  }
  json metadata = json::object();
  for (const auto &[k, v] : meta)
    metadata[k] = v;
  return {{"format", "rodentsim.trial-log"}, {"version", 1}, {"metadata", metadata}, {"rows", rows}};
}

inline Cohort parse_trial_log_csv(std::string_view text, const std::string &source = "<csv>",
                                  SuccessCriterion criterion = {}) {
  std::vector<TrialLogRow> rows;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos)
      end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#')
      continue;
    if (!header_seen) {
      if (line != kTrialLogHeader)
        throw ParseError(source, line_no, "expected header '" + std::string(kTrialLogHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto fields = split(line, ',');
    rows.push_back(detail::parse_row_fields(fields, source, line_no));
  }
  if (!header_seen)
    throw ParseError(source, line_no, "missing header");
  return detail::assemble(std::move(rows), criterion, source);
}

inline Cohort parse_trial_log_json(std::string_view text, const std::string &source = "<json>",
                                   SuccessCriterion criterion = {}) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ParseError(source, 1, e.what());
  }
  if (!doc.is_object() || !doc.contains("rows") || !doc["rows"].is_array())
    throw ParseError(source, 1, "expected an object with a 'rows' array");
  std::vector<TrialLogRow> rows;
  std::size_t n = 0;
  for (const auto &r : doc["rows"]) {
    ++n;
    if (!r.is_object())
      throw ParseError(source, n, "row is not an object");
    std::vector<std::string> f;
    for (const char *key : {"individual_id", "session_index", "trial_index", "stimulus", "response", "outcome"}) {
      if (!r.contains(key))
        throw ParseError(source, n, std::string("missing field '") + key + "'");
      const auto &v = r[key];
      if (v.is_string())
        f.push_back(v.get<std::string>());
      else if (v.is_number_integer())
        f.push_back(std::to_string(v.get<long long>()));
      else
        throw ParseError(source, n, std::string("field '") + key + "' has the wrong type");
    }
    std::vector<std::string_view> views(f.begin(), f.end());
    rows.push_back(detail::parse_row_fields(views, source, n));
  }
  return detail::assemble(std::move(rows), criterion, source);
}

inline Cohort import_trial_log(const fs::path &path, LogFormat format, SuccessCriterion criterion = {}) {
  const auto text = read_file(path);
  return format == LogFormat::csv ? parse_trial_log_csv(text, path.string(), criterion)
                                  : parse_trial_log_json(text, path.string(), criterion);
}

inline LogFormat guess_format(const fs::path &path) {
  return path.extension() == ".json" ? LogFormat::json : LogFormat::csv;
}

inline void export_trial_log(const Cohort &cohort, const fs::path &path, LogFormat format, const Metadata &meta = {}) {
  write_file(path, format == LogFormat::csv ? trial_log_csv(cohort, meta) : trial_log_json(cohort, meta).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// Training sequences and Q-table snapshots as JSON
// ---------------------------------------------------------------------------

inline json to_json(const TrainingSequence &seq) {
  json sessions = json::array();
  for (const auto &s : seq.sessions) {
    json trials = json::array();
    for (const auto &t : s.trials)
      trials.push_back({to_string(t.stimulus), to_string(t.response), to_string(t.outcome)});
    sessions.push_back({{"index", s.index}, {"trials", trials}});
  }
  json j = {{"individual_id", seq.individual_id}, {"trained", seq.trained}, {"sessions", sessions}};
  j["sessions_to_criterion"] = seq.sessions_to_criterion ? json(*seq.sessions_to_criterion) : json(nullptr);
  return j;
}

inline TrainingSequence training_sequence_from_json(const json &j) {
  TrainingSequence seq;
  seq.individual_id = j.at("individual_id").get<std::string>();
  seq.trained = j.at("trained").get<bool>();
  if (!j.at("sessions_to_criterion").is_null())
    seq.sessions_to_criterion = j.at("sessions_to_criterion").get<int>();
  for (const auto &s : j.at("sessions")) {
    Session session{s.at("index").get<int>(), {}};
    for (const auto &t : s.at("trials")) {
      const auto st = parse_stimulus(t.at(0).get<std::string>());
      const auto rs = parse_response(t.at(1).get<std::string>());
      const auto oc = parse_outcome(t.at(2).get<std::string>());
      if (!st || !rs || !oc)
        throw DomainError("training sequence: bad trial " + t.dump());
      session.trials.push_back({*st, *rs, *oc});
    }
    seq.sessions.push_back(std::move(session));
  }
  validate(seq);
  return seq;
}

/// Rows that differ from q_init, keyed by comma-joined stimulus names.
inline json to_json(const QTable &q) {
  json entries = json::object();
  for (std::size_t code = 0; code < q.size(); ++code) {
    const auto &row = q.row(code);
    if (row[0] == q.q_init() && row[1] == q.q_init() && row[2] == q.q_init())
      continue;
    const auto state = State::decode(code, q.k());
    std::string key;
    for (auto s : state.window())
      key += (key.empty() ? "" : ",") + std::string(to_string(s));
    entries[key] = {row[0], row[1], row[2]};
  }
  return {{"k", q.k()}, {"q_init", q.q_init()}, {"actions", {"left", "right", "none"}}, {"entries", entries}};
}

inline QTable qtable_from_json(const json &j) {
  QTable q(j.at("k").get<int>(), j.at("q_init").get<double>());
  for (const auto &[key, values] : j.at("entries").items()) {
    std::vector<Stimulus> window;
    for (auto part : split(key, ','))
      window.push_back(require_stimulus(part));
    auto &row = q.row(State(std::move(window)));
    for (std::size_t i = 0; i < 3; ++i)
      row[i] = values.at(i).get<double>();
  }
  return q;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ExecutionOptions {
  /// Restart the agent for every session instead of one agent per execution.
  bool fresh_per_session = false;
  bool stop_on_success = false;
  /// 0 picks hardware concurrency.
  std::size_t workers = 0;
};

inline std::string execution_id(int execution) { return std::string(kSimPrefix) + "exec-" + std::to_string(execution); }

/// Seed of one (execution, session) cell when agents restart every session.
inline std::uint64_t fresh_session_seed(std::uint64_t execution_seed, int session_index) {
  return mix_seed(execution_seed, static_cast<std::uint64_t>(session_index));
}

/// One fresh agent per session; session j draws from seed mix(execution_seed, j).
inline TrainingSequence run_fresh_per_session(const ExperimentConfig &config, int sessions, std::uint64_t seed) {
  TrainingSequence seq;
  for (int j = 1; j <= sessions; ++j) {
    Agent agent(config.agent);
    Rng rng(fresh_session_seed(seed, j));
    seq.sessions.push_back(run_session_with(agent, config.protocol, j, config.protocol.phase_stimuli,
                                            epsilon_for_session(j, config.agent), rng));
  }
  evaluate_success(seq, config.protocol.criterion());
  return seq;
}

/// `executions` independent trainings (seeds seed_base .. seed_base+e-1),
/// `sessions` sessions each. Member i is execution i+1.
inline Cohort run_experiment_executions(const ExperimentConfig &config, int sessions, int executions,
                                        std::uint64_t seed_base, const ExecutionOptions &options = {}) {
  if (sessions < 1)
    throw DomainError("session count must be >= 1");
  if (executions < 1)
    throw DomainError("execution count must be >= 1");
  validate(config.agent);
  validate(config.protocol);

  Cohort cohort;
  cohort.members.resize(static_cast<std::size_t>(executions));
  rodentsim::detail::parallel_for(
      cohort.members.size(),
      [&](std::size_t i) {
        const std::uint64_t seed = seed_base + i;
        TrainingSequence seq =
            options.fresh_per_session
                ? run_fresh_per_session(config, sessions, seed)
                : run_training(config.protocol, config.agent, seed, {sessions, options.stop_on_success});
        seq.individual_id = execution_id(static_cast<int>(i) + 1);
        cohort.members[i] = std::move(seq);
      },
      options.workers);
  return cohort;
}

// ---------------------------------------------------------------------------
// Run records (JSONL)
// ---------------------------------------------------------------------------

struct RunRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  AgentConfig agent_config;
  ProtocolConfig protocol_config;
  std::optional<int> fixed_sessions;
  bool stop_on_success = false;
  bool fresh_per_session = false;
  TrainingSequence training_sequence;
  std::string created_at;
  MetricsConfig metric_params;
};

inline json to_json(const RunRecord &r) {
  return {{"run_id", r.run_id},
          {"seed", r.seed},
          {"agent_config", to_json(r.agent_config)},
          {"protocol_config", to_json(r.protocol_config)},
          {"options",
           {{"fixed_sessions", r.fixed_sessions ? json(*r.fixed_sessions) : json(nullptr)},
            {"stop_on_success", r.stop_on_success},
            {"fresh_per_session", r.fresh_per_session}}},
          {"training_sequence", to_json(r.training_sequence)},
          {"created_at", r.created_at},
          {"metric_params", {{"delta", r.metric_params.delta}, {"distance", r.metric_params.distance}}}};
}

inline RunRecord run_record_from_json(const json &j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.agent_config = agent_config_from_json(j.at("agent_config"));
  r.protocol_config = protocol_config_from_json(j.at("protocol_config"));
  const auto &opt = j.at("options");
  if (!opt.at("fixed_sessions").is_null())
    r.fixed_sessions = opt.at("fixed_sessions").get<int>();
  r.stop_on_success = opt.at("stop_on_success").get<bool>();
  r.fresh_per_session = opt.at("fresh_per_session").get<bool>();
  r.training_sequence = training_sequence_from_json(j.at("training_sequence"));
  r.created_at = j.at("created_at").get<std::string>();
  r.metric_params.delta = j.at("metric_params").at("delta").get<int>();
  r.metric_params.distance = j.at("metric_params").at("distance").get<std::string>();
  return r;
}

inline void append_jsonl(const fs::path &path, const std::vector<RunRecord> &records) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot append to " + path.string());
  for (const auto &r : records)
    out << to_json(r).dump() << '\n';
}

inline std::vector<RunRecord> read_jsonl(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path.string());
  std::vector<RunRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty())
      continue;
    try {
      out.push_back(run_record_from_json(json::parse(line)));
    } catch (const json::exception &e) {
      throw ParseError(path.string(), n, e.what());
    }
  }
  return out;
}

/// Regenerates the training sequence a record describes; id and success fields
/// come out exactly as stored for records produced by this library.
inline TrainingSequence replay(const RunRecord &r) {
  ExperimentConfig cfg{r.agent_config, r.protocol_config, r.metric_params};
  TrainingSequence seq = r.fresh_per_session
                             ? run_fresh_per_session(cfg, r.fixed_sessions.value_or(1), r.seed)
                             : run_training(r.protocol_config, r.agent_config, r.seed,
                                            {r.fixed_sessions, r.stop_on_success});
  seq.individual_id = r.training_sequence.individual_id;
  return seq;
}

// ---------------------------------------------------------------------------
// Matrix and series CSV
// ---------------------------------------------------------------------------

inline std::string matrix_csv(const DistanceMatrix &m, const Metadata &meta = {}) {
  std::ostringstream out;
  write_metadata(out, meta);
  out << "label";
  for (const auto &l : m.labels)
    out << ',' << to_string(l);
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << to_string(m.labels[i]);
    for (std::size_t j = 0; j < m.size(); ++j)
      out << ',' << format_double(m.at(i, j));
    out << '\n';
  }
  return out.str();
}

inline ItemLabel parse_label(std::string_view s) {
  // individual/sJ/eE; the id itself may contain '/'
  const auto e_pos = s.rfind("/e");
  const auto s_pos = e_pos == std::string_view::npos ? e_pos : s.rfind("/s", e_pos - 1);
  if (e_pos == std::string_view::npos || s_pos == std::string_view::npos)
    throw DomainError("bad matrix label '" + std::string(s) + "'");
  auto si = parse_number<int>(s.substr(s_pos + 2, e_pos - s_pos - 2));
  auto ei = parse_number<int>(s.substr(e_pos + 2));
  if (!si || !ei)
    throw DomainError("bad matrix label '" + std::string(s) + "'");
  return {std::string(s.substr(0, s_pos)), *si, *ei};
}

inline DistanceMatrix parse_matrix_csv(std::string_view text, const std::string &source = "<matrix>") {
  DistanceMatrix m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  bool header = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto l = trim(line);
    if (l.empty() || l.front() == '#')
      continue;
    const auto f = split(l, ',');
    if (!header) {
      if (f.empty() || f[0] != "label")
        throw ParseError(source, n, "expected 'label' header");
      for (std::size_t i = 1; i < f.size(); ++i)
        m.labels.push_back(parse_label(f[i]));
      m.entries.assign(m.size() * m.size(), 0.0);
      header = true;
      continue;
    }
    if (f.size() != m.size() + 1 || row >= m.size())
      throw ParseError(source, n, "row has the wrong number of fields");
    if (!(parse_label(f[0]) == m.labels[row]))
      throw ParseError(source, n, "row label does not match column label");
    for (std::size_t j = 0; j < m.size(); ++j) {
      auto v = parse_number<double>(f[j + 1]);
      if (!v)
        throw ParseError(source, n, "bad number '" + std::string(f[j + 1]) + "'");
      m.at(row, j) = *v;
    }
    ++row;
  }
  if (!header || row != m.size())
    throw ParseError(source, n, "incomplete matrix");
  return m;
}

struct CurveRow {
  int session_index = 0;
  std::size_t window_start = 0;
  double value = 0.0;

  friend bool operator==(const CurveRow &, const CurveRow &) = default;
};

inline constexpr std::string_view kCurveHeader = "session_index,window_start,accuracy";

inline std::vector<CurveRow> parse_curve_csv(std::string_view text, const std::string &source = "<curve>") {
  std::vector<CurveRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++n;
    const auto l = trim(line);
    if (l.empty() || l.front() == '#')
      continue;
    if (!header) {
      if (l != kCurveHeader)
        throw ParseError(source, n, "expected header '" + std::string(kCurveHeader) + "'");
      header = true;
      continue;
    }
    const auto f = split(l, ',');
    auto s = f.size() == 3 ? parse_number<int>(f[0]) : std::nullopt;
    auto t = f.size() == 3 ? parse_number<std::size_t>(f[1]) : std::nullopt;
    auto v = f.size() == 3 ? parse_number<double>(f[2]) : std::nullopt;
    if (!s || !t || !v)
      throw ParseError(source, n, "malformed curve row");
    rows.push_back({*s, *t, *v});
  }
  return rows;
}

/// Files matching a shell pattern whose wildcards sit in the last path
/// component, sorted by path.
inline std::vector<fs::path> expand_glob(const std::string &pattern) {
  const fs::path p(pattern);
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  const std::string name = p.filename().string();
  std::vector<fs::path> out;
  if (!fs::is_directory(dir))
    return out;
  for (const auto &entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && ::fnmatch(name.c_str(), entry.path().filename().c_str(), 0) == 0)
      out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Figure data
// ---------------------------------------------------------------------------

enum class Figure { fig2, fig3, fig4 };

inline Figure parse_figure(std::string_view s) {
  if (s == "fig2")
    return Figure::fig2;
  if (s == "fig3")
    return Figure::fig3;
  if (s == "fig4")
    return Figure::fig4;
  throw DomainError("unknown figure '" + std::string(s) + "'");
}

struct FigureOptions {
  /// Sessions shown by fig2 and fig3.
  std::vector<int> sessions = {1, 6, 12};
  /// Extra metadata lines (configs, seeds) carried into every file.
  Metadata metadata;
};

inline std::string file_safe(std::string_view id) {
  std::string out;
  for (char c : id)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

inline const Session &require_session(const TrainingSequence &m, int index) {
  for (const auto &s : m.sessions)
    if (s.index == index)
      return s;
  throw DomainError("session " + std::to_string(index) + " is absent for individual '" + m.individual_id + "'");
}

/// Session indices present in every member.
inline std::vector<int> common_sessions(const Cohort &cohort) {
  std::size_t n = cohort.members.front().sessions.size();
  for (const auto &m : cohort.members)
    n = std::min(n, m.sessions.size());
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(static_cast<int>(i) + 1);
  return out;
}

/// Matrix over (execution, session) items, session-major.
inline DistanceMatrix fig3_matrix(const Cohort &cohort, std::span<const int> sessions, int delta) {
  std::vector<LabeledSession> items;
  for (int j : sessions)
    for (std::size_t e = 0; e < cohort.members.size(); ++e) {
      const auto &m = cohort.members[e];
      items.push_back({{m.individual_id, j, static_cast<int>(e) + 1}, require_session(m, j)});
    }
  return distance_matrix(std::span<const LabeledSession>(items), delta);
}

/// Group-distance matrix over every session index the cohort shares.
inline DistanceMatrix fig4_matrix(const Cohort &cohort, int delta) {
  std::vector<LabeledGroup> items;
  for (int j : common_sessions(cohort)) {
    std::vector<Session> group;
    for (const auto &m : cohort.members)
      group.push_back(require_session(m, j));
    items.push_back({{"group", j, 0}, group_series(group, delta)});
  }
  return distance_matrix(std::span<const LabeledGroup>(items));
}

/// Writes the CSV files behind one figure and returns their paths.
inline std::vector<fs::path> emit_figure_data(const Cohort &cohort, Figure which, int delta, const fs::path &out_dir,
                                              const FigureOptions &options = {}) {
  if (cohort.members.empty())
    throw DomainError("emit_figure_data: empty cohort");
  if (delta < 1)
    throw DomainError("window length must be >= 1");
  Metadata meta = {{"delta", std::to_string(delta)}, {"distance", std::string(MatchDistance::name)}};
  meta.insert(meta.end(), options.metadata.begin(), options.metadata.end());
  fs::create_directories(out_dir);

  std::vector<fs::path> written;
  switch (which) {
  case Figure::fig2: {
    for (const auto &m : cohort.members) {
      std::ostringstream out;
      Metadata local = meta;
      local.emplace_back("individual_id", m.individual_id);
      write_metadata(out, local);
      out << kCurveHeader << '\n';
      for (int j : options.sessions) {
        const auto curve = accuracy_curve(require_session(m, j), delta);
        for (std::size_t t = 0; t < curve.values.size(); ++t)
          out << j << ',' << t << ',' << format_double(curve.values[t]) << '\n';
      }
      const auto path = out_dir / ("fig2_" + file_safe(m.individual_id) + ".csv");
      write_file(path, out.str());
      written.push_back(path);
    }
    break;
  }
  case Figure::fig3: {
    const auto path = out_dir / "fig3_matrix.csv";
    write_file(path, matrix_csv(fig3_matrix(cohort, options.sessions, delta), meta));
    written.push_back(path);
    break;
  }
  case Figure::fig4: {
    Metadata local = meta;
    local.emplace_back("group_size", std::to_string(cohort.members.size()));
    const auto path = out_dir / "fig4_matrix.csv";
    write_file(path, matrix_csv(fig4_matrix(cohort, delta), local));
    written.push_back(path);
    break;
  }
  }
  return written;
}

} // namespace rodentsim::io
