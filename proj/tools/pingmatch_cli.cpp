// Operator entry point: simulate, train, evaluate, report, serve, replay.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pingmatch/config.hpp"
#include "pingmatch/dispatch.hpp"
#include "pingmatch/error.hpp"
#include "pingmatch/event_log.hpp"
#include "pingmatch/evaluation.hpp"
#include "pingmatch/model.hpp"
#include "pingmatch/service.hpp"
#include "pingmatch/simulator.hpp"

namespace fs = std::filesystem;
using namespace pingmatch;
using nlohmann::json;

namespace {

constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> log;
  std::optional<std::string> model;
  std::optional<std::string> out;
  std::optional<double> epsilon;
  std::optional<int> top_n;
  std::optional<std::int64_t> timeout_ms;
  std::optional<int> port;
  std::optional<std::size_t> requests;
  std::optional<std::size_t> pings;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Engine config (JSON)");
  cmd->add_option("--seed", o.seed, "Seed for every random stream");
  cmd->add_option("--log", o.log, "Event log path (JSONL)");
  cmd->add_option("--model", o.model, "Model file path");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--epsilon", o.epsilon, "Exploration probability per ping slot");
  cmd->add_option("--top-n", o.top_n, "Pings per request");
  cmd->add_option("--timeout-ms", o.timeout_ms, "Request timeout in milliseconds");
}

// Flags win over the config file.
EngineConfig resolve_config(const Overrides& o) {
  EngineConfig c = o.config.empty() ? EngineConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.timeout_ms) c.timeout_ms = *o.timeout_ms;
  if (o.log) c.paths.log = *o.log;
  if (o.model) c.paths.model = *o.model;
  if (o.out) c.paths.report_dir = *o.out;
  if (o.epsilon) c.policy.epsilon = *o.epsilon;
  if (o.top_n) c.policy.top_n = *o.top_n;
  if (o.port) c.port = *o.port;
  if (o.requests) {
    c.sim.max_requests = *o.requests;
    c.sim.max_pings = 0;
  }
  if (o.pings) {
    c.sim.max_pings = *o.pings;
    c.sim.max_requests = 0;
  }
  c.propagate();
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

int cmd_simulate(const EngineConfig& c) {
  std::optional<ResponseModel> model;
  if (fs::exists(c.paths.model)) model = load_model(c.paths.model);
  const EpisodeResult episode = run_episode(c.sim, c.policy, model);
  save_log(episode.log, c.paths.log);

  const auto rows = labeled_dataset(episode.log);
  std::size_t positives = 0;
  for (const auto& r : rows) positives += static_cast<std::size_t>(r.label);
  std::vector<std::int64_t> counts;
  for (const auto& t : episode.log.translators()) {
    auto it = episode.matches_per_translator.find(t.translator_id);
    counts.push_back(it == episode.matches_per_translator.end() ? 0 : it->second);
  }
  std::optional<MetricsSummary> summary;
  if (episode.metrics.requests_total > 0) summary = metrics_summary(episode.metrics);

  json metrics = {{"ranking", model ? "model" : "random"},
                  {"requests_total", episode.metrics.requests_total},
                  {"requests_matched", episode.metrics.requests_matched},
                  {"match_rate", summary ? json(summary->match_rate) : json(nullptr)},
                  {"median_match_time_ms", summary ? opt(summary->median_match_time_ms) : json(nullptr)},
                  {"pings", rows.size()},
                  {"positive_rate", rows.empty() ? json(nullptr)
                                                 : json(static_cast<double>(positives) /
                                                        static_cast<double>(rows.size()))},
                  {"match_gini", gini(counts)}};
  fs::path metrics_path = c.paths.log;
  metrics_path.replace_extension(".metrics.json");
  write_text(metrics_path, metrics.dump(2) + "\n");
  std::printf("wrote %s (%zu records) and %s\n", c.paths.log.c_str(), episode.log.size(),
              metrics_path.c_str());
  return 0;
}

int cmd_train(const EngineConfig& c) {
  const EventLog log = load_log(c.paths.log);
  const auto rows = labeled_dataset(log);
  LambdaSelection selection;
  const ResponseModel model = train_model(rows, c.train, &selection);
  save_model(model, c.paths.model);
  for (const auto& w : selection.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("trained on %zu rows, lambda %g, wrote %s\n", rows.size(), model.lambda,
              c.paths.model.c_str());
  return 0;
}

void write_bundle(const ReportBundle& bundle, const fs::path& dir) {
  write_report_bundle(bundle, dir);
  std::printf("auc %.4f on %zu samples, bundle in %s\n", bundle.overall.auc, bundle.overall.samples,
              dir.c_str());
}

int cmd_evaluate(const EngineConfig& c) {
  const ResponseModel model = load_model(c.paths.model);
  const EventLog log = load_log(c.paths.log);
  const auto rows = labeled_dataset(log);
  const auto scores = score_rows(model, rows);
  ReportBundle bundle;
  bundle.overall = build_report(scores);
  bundle.segments = evaluate_by_segment(scores, c.segment_min_samples);
  bundle.odds = odds_ratios(model);
  write_bundle(bundle, c.paths.report_dir);
  return 0;
}

int cmd_report(const EngineConfig& c) {
  const EventLog log = load_log(c.paths.log);
  const TrainEvalResult r = train_and_evaluate(log, c.train, c.train_fraction, c.segment_min_samples);
  ReportBundle bundle;
  bundle.overall = r.report;
  bundle.segments = r.segments;
  bundle.odds = odds_ratios(r.model);
  bundle.profile_only_auc = r.profile_only_auc;
  bundle.extra_scalars["train_rows"] = static_cast<double>(r.train_rows);
  bundle.extra_scalars["test_rows"] = static_cast<double>(r.test_rows);
  bundle.extra_scalars["lambda"] = r.model.lambda;
  write_bundle(bundle, c.paths.report_dir);
  return 0;
}

HttpService* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_serve(const EngineConfig& c) {
  EngineOptions options;
  options.policy = c.policy;
  options.timeout_ms = c.timeout_ms;
  std::optional<EventLog> existing;
  if (fs::exists(c.paths.log)) existing = load_log(c.paths.log);
  options.log_path = c.paths.log;
  Engine engine(options);
  if (existing) engine.restore(*existing);
  if (fs::exists(c.paths.model)) engine.put_model(load_model(c.paths.model));

  HttpService service(engine);
  const int port = service.bind(c.host, c.port);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("serving on %s:%d (%zu translators, model %s)\n", c.host.c_str(), port,
              engine.translator_count(), engine.model() ? "loaded" : "missing");
  std::fflush(stdout);
  service.listen();
  g_service = nullptr;
  return 0;
}

int cmd_replay(const EngineConfig& c) {
  const EventLog log = load_log(c.paths.log);
  const ReplayReport report = replay(log);
  if (!report.identical()) {
    std::fprintf(stderr, "replay: %zu of %zu resolutions differ\n  stored:   %s\n  replayed: %s\n",
                 report.mismatches, report.resolutions, report.first_mismatch[0].c_str(),
                 report.first_mismatch[1].c_str());
    return kRuntimeError;
  }
  std::printf("replay: %zu resolutions identical\n", report.resolutions);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Translator matching engine"};
  app.require_subcommand(1);
  Overrides o;

  auto* simulate = app.add_subcommand("simulate", "Run a seeded episode and write its log and metrics");
  add_common(simulate, o);
  simulate->add_option("--requests", o.requests, "Stop after this many requests");
  simulate->add_option("--pings", o.pings, "Stop after this many pings");
  auto* train = app.add_subcommand("train", "Fit a model on a log");
  add_common(train, o);
  auto* evaluate = app.add_subcommand("evaluate", "Score a held-out log with a model file");
  add_common(evaluate, o);
  auto* report = app.add_subcommand("report", "Temporal split, train, evaluate, write the CSV bundle");
  add_common(report, o);
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  add_common(serve, o);
  serve->add_option("--port", o.port, "Listen port (0 picks a free one)");
  auto* replay_cmd = app.add_subcommand("replay", "Re-run dispatch over a log and compare resolutions");
  add_common(replay_cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  EngineConfig config;
  try {
    config = resolve_config(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (stage == "simulate") return cmd_simulate(config);
    if (stage == "train") return cmd_train(config);
    if (stage == "evaluate") return cmd_evaluate(config);
    if (stage == "report") return cmd_report(config);
    if (stage == "serve") return cmd_serve(config);
    if (stage == "replay") return cmd_replay(config);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s failed: %s\n", stage.c_str(), e.what());
    return e.code() == ErrorCode::ConfigInvalid ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s failed: %s\n", stage.c_str(), e.what());
    return kRuntimeError;
  }
  return kRuntimeError;
}
