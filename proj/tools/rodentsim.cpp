// Command-line front end: simulate trainings, run execution cohorts, compare
// logs and emit the CSV data behind the accuracy and distance figures.

#include "rodentsim/rodentsim.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace rodentsim;
using io::json;

namespace {

io::ExperimentConfig config_or_default(const std::string &path) {
  return path.empty() ? io::ExperimentConfig{} : io::load_config(path);
}

io::Metadata run_metadata(const io::ExperimentConfig &cfg, const std::string &seeds) {
  return {{"seeds", seeds},
          {"agent_config", io::to_json(cfg.agent).dump()},
          {"protocol_config", io::to_json(cfg.protocol).dump()}};
}

/// Trial log inside a run/cohort directory, or the path itself.
fs::path trial_log_in(const fs::path &in) {
  return fs::is_directory(in) ? in / "trials.csv" : in;
}

int cmd_simulate(const std::string &config_path, std::uint64_t seed, const fs::path &out,
                 std::optional<int> sessions, bool stop_on_success) {
  if (const char *env = std::getenv("RODENTSIM_SEED")) {
    auto v = io::parse_number<std::uint64_t>(env);
    if (!v)
      throw DomainError("RODENTSIM_SEED is not an unsigned integer: '" + std::string(env) + "'");
    seed = *v;
  }
  const auto cfg = config_or_default(config_path);
  Agent agent(cfg.agent);
  TrainingOptions options{sessions, stop_on_success};
  auto seq = train(agent, cfg.protocol, seed, options);

  io::RunRecord rec;
  rec.run_id = "run-" + std::to_string(seed);
  rec.seed = seed;
  rec.agent_config = cfg.agent;
  rec.protocol_config = cfg.protocol;
  rec.fixed_sessions = sessions;
  rec.stop_on_success = stop_on_success;
  rec.training_sequence = seq;
  rec.created_at = io::utc_timestamp();
  rec.metric_params = cfg.metrics;

  fs::create_directories(out);
  io::export_trial_log(Cohort{{seq}}, out / "trials.csv", io::LogFormat::csv, run_metadata(cfg, std::to_string(seed)));
  fs::remove(out / "run.jsonl");
  io::append_jsonl(out / "run.jsonl", {rec});
  io::write_file(out / "qtable.json", io::to_json(agent.qtable()).dump(1) + "\n");
  io::write_file(out / "config.toml", io::to_toml(cfg));

  std::cout << seq.individual_id << ": " << seq.sessions.size() << " sessions, trained="
            << (seq.trained ? "true" : "false");
  if (seq.sessions_to_criterion)
    std::cout << " at session " << *seq.sessions_to_criterion;
  std::cout << '\n';
  return 0;
}

int cmd_cohort(const std::string &config_path, int executions, int sessions, std::uint64_t seed_base,
               const fs::path &out, const io::ExecutionOptions &options, bool also_json) {
  const auto cfg = config_or_default(config_path);
  const auto cohort = io::run_experiment_executions(cfg, sessions, executions, seed_base, options);
  const std::string seeds = std::to_string(seed_base) + ".." + std::to_string(seed_base + executions - 1);

  fs::create_directories(out);
  auto meta = run_metadata(cfg, seeds);
  meta.emplace_back("sessions", std::to_string(sessions));
  meta.emplace_back("fresh_per_session", options.fresh_per_session ? "true" : "false");
  meta.emplace_back("stop_on_success", options.stop_on_success ? "true" : "false");
  io::export_trial_log(cohort, out / "trials.csv", io::LogFormat::csv, meta);
  if (also_json)
    io::export_trial_log(cohort, out / "trials.json", io::LogFormat::json, meta);

  std::vector<io::RunRecord> records;
  const auto now = io::utc_timestamp();
  for (std::size_t i = 0; i < cohort.members.size(); ++i) {
    io::RunRecord rec;
    rec.run_id = cohort.members[i].individual_id;
    rec.seed = seed_base + i;
    rec.agent_config = cfg.agent;
    rec.protocol_config = cfg.protocol;
    rec.fixed_sessions = sessions;
    rec.stop_on_success = options.stop_on_success;
    rec.fresh_per_session = options.fresh_per_session;
    rec.training_sequence = cohort.members[i];
    rec.created_at = now;
    rec.metric_params = cfg.metrics;
    records.push_back(std::move(rec));
  }
  fs::remove(out / "runs.jsonl");
  io::append_jsonl(out / "runs.jsonl", records);
  io::write_file(out / "config.toml", io::to_toml(cfg));

  int trained = 0;
  for (const auto &m : cohort.members)
    trained += m.trained;
  std::cout << executions << " executions x " << sessions << " sessions written to " << out.string() << " ("
            << trained << " met the success criterion)\n";
  return 0;
}

int cmd_compare(const fs::path &a_path, const fs::path &b_path, int delta, const std::string &distance,
                const fs::path &out) {
  if (distance != MatchDistance::name)
    throw DomainError("unsupported distance '" + distance + "'");
  const auto a = io::import_trial_log(a_path, io::guess_format(a_path));
  const auto b = io::import_trial_log(b_path, io::guess_format(b_path));
  std::ostringstream csv;
  io::write_metadata(csv, {{"delta", std::to_string(delta)}, {"distance", distance}, {"a", a_path.string()},
                           {"b", b_path.string()}});
  csv << "a_id,b_id,session_index,distance\n";
  for (const auto &ma : a.members)
    for (const auto &mb : b.members) {
      const std::size_t n = std::min(ma.sessions.size(), mb.sessions.size());
      for (std::size_t j = 0; j < n; ++j)
        csv << ma.individual_id << ',' << mb.individual_id << ',' << ma.sessions[j].index << ','
            << io::format_double(individual_distance(ma.sessions[j], mb.sessions[j], delta)) << '\n';
    }
  io::write_file(out, csv.str());
  return 0;
}

int cmd_group_compare(const std::string &pattern, int delta, const fs::path &out) {
  const auto files = io::expand_glob(pattern);
  if (files.empty())
    throw DomainError("no files match '" + pattern + "'");
  std::vector<LabeledGroup> items;
  for (const auto &f : files) {
    const auto cohort = io::import_trial_log(f, io::guess_format(f));
    for (int j : io::common_sessions(cohort)) {
      std::vector<Session> group;
      for (const auto &m : cohort.members)
        group.push_back(io::require_session(m, j));
      items.push_back({{f.stem().string(), j, 0}, group_series(group, delta)});
    }
  }
  const auto m = distance_matrix(std::span<const LabeledGroup>(items));
  io::write_file(out, io::matrix_csv(m, {{"delta", std::to_string(delta)},
                                         {"distance", std::string(MatchDistance::name)},
                                         {"logs", pattern}}));
  return 0;
}

int cmd_figure(const std::string &which, const fs::path &in, int delta, const fs::path &out,
               const std::vector<int> &sessions) {
  const auto log = trial_log_in(in);
  const auto text = io::read_file(log);
  const auto cohort = io::parse_trial_log_csv(text, log.string());
  io::FigureOptions options;
  options.sessions = sessions;
  for (auto &kv : io::read_metadata(text))
    if (kv.first != "delta" && kv.first != "distance")
      options.metadata.push_back(kv);
  for (const auto &p : io::emit_figure_data(cohort, io::parse_figure(which), delta, out, options))
    std::cout << p.string() << '\n';
  return 0;
}

int cmd_import(const fs::path &path, const std::string &format) {
  const auto cohort = io::import_trial_log(path, io::parse_log_format(format));
  json members = json::array();
  for (const auto &m : cohort.members) {
    std::size_t trials = 0;
    for (const auto &s : m.sessions)
      trials += s.trials.size();
    members.push_back({{"individual_id", m.individual_id},
                       {"sessions", m.sessions.size()},
                       {"trials", trials},
                       {"accuracies", session_accuracies(m)},
                       {"trained", m.trained},
                       {"sessions_to_criterion",
                        m.sessions_to_criterion ? json(*m.sessions_to_criterion) : json(nullptr)}});
  }
  std::cout << json{{"members", members}}.dump(1) << '\n';
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Artificial rodent training simulator and behavioral similarity metrics"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  int sessions = 0;
  bool stop_on_success = false;

  auto *simulate = app.add_subcommand("simulate", "Run one training and write its trial log, run record and Q-table");
  simulate->add_option("--config", config_path, "TOML config file")->check(CLI::ExistingFile);
  simulate->add_option("--seed", seed, "Seed (RODENTSIM_SEED overrides)")->required();
  simulate->add_option("--out", out, "Output directory")->required();
  simulate->add_option("--sessions", sessions, "Run exactly this many sessions")->check(CLI::PositiveNumber);
  simulate->add_flag("--stop-on-success", stop_on_success, "With --sessions, stop at the success criterion");

  int executions = 0;
  std::uint64_t seed_base = 0;
  io::ExecutionOptions exec_options;
  auto *cohort = app.add_subcommand("cohort", "Run independent executions over a fixed session grid");
  cohort->add_option("--config", config_path, "TOML config file")->check(CLI::ExistingFile);
  cohort->add_option("--executions", executions, "Executions per session")->required()->check(CLI::PositiveNumber);
  cohort->add_option("--sessions", sessions, "Sessions per execution")->required()->check(CLI::PositiveNumber);
  cohort->add_option("--seed-base", seed_base, "Seed of the first execution")->required();
  cohort->add_option("--out", out, "Output directory")->required();
  cohort->add_flag("--stop-on-success", exec_options.stop_on_success, "Stop each execution at the success criterion");
  cohort->add_flag("--fresh-per-session", exec_options.fresh_per_session, "Restart the agent every session");
  cohort->add_option("--workers", exec_options.workers, "Worker threads (0 = all cores)");
  bool also_json = false;
  cohort->add_flag("--json", also_json, "Also write the trial log as trials.json");

  std::string a_log, b_log, distance = "match";
  int delta = 20;
  auto *compare = app.add_subcommand("compare", "Per-session distance between individuals of two trial logs");
  compare->add_option("--a", a_log, "First trial log")->required()->check(CLI::ExistingFile);
  compare->add_option("--b", b_log, "Second trial log")->required()->check(CLI::ExistingFile);
  compare->add_option("--delta", delta, "Window length")->required()->check(CLI::PositiveNumber);
  compare->add_option("--distance", distance, "Distance between windowed distributions")
      ->check(CLI::IsMember({"match"}));
  compare->add_option("--out", out, "Output CSV")->required();

  std::string logs;
  auto *group_compare = app.add_subcommand("group-compare", "Group distance matrix over every (log, session) pair");
  group_compare->add_option("--logs", logs, "Glob of trial logs; each file is one group")->required();
  group_compare->add_option("--delta", delta, "Window length")->required()->check(CLI::PositiveNumber);
  group_compare->add_option("--out", out, "Output CSV")->required();

  std::string which, in;
  std::vector<int> figure_sessions = {1, 6, 12};
  auto *figure = app.add_subcommand("figure", "Emit figure data from a cohort directory or trial log");
  figure->add_option("--which", which, "fig2, fig3 or fig4")->required()->check(CLI::IsMember({"fig2", "fig3", "fig4"}));
  figure->add_option("--in", in, "Cohort directory or trial log CSV")->required()->check(CLI::ExistingPath);
  figure->add_option("--delta", delta, "Window length")->required()->check(CLI::PositiveNumber);
  figure->add_option("--out", out, "Output directory")->required();
  figure->add_option("--sessions", figure_sessions, "Sessions shown by fig2/fig3")->delimiter(',');

  std::string path, format;
  auto *import = app.add_subcommand("import", "Validate a trial log and print a per-individual summary");
  import->add_option("--path", path, "Trial log")->required()->check(CLI::ExistingFile);
  import->add_option("--format", format, "csv or json")->required()->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate)
      return cmd_simulate(config_path, seed, out, sessions > 0 ? std::optional<int>(sessions) : std::nullopt,
                          stop_on_success);
    if (*cohort)
      return cmd_cohort(config_path, executions, sessions, seed_base, out, exec_options, also_json);
    if (*compare)
      return cmd_compare(a_log, b_log, delta, distance, out);
    if (*group_compare)
      return cmd_group_compare(logs, delta, out);
    if (*figure)
      return cmd_figure(which, in, delta, out, figure_sessions);
    if (*import)
      return cmd_import(path, format);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
