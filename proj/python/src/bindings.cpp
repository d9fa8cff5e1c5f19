#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <json.hpp>

#include "pingmatch/config.hpp"
#include "pingmatch/error.hpp"
#include "pingmatch/evaluation.hpp"
#include "pingmatch/event_log.hpp"
#include "pingmatch/features.hpp"
#include "pingmatch/model.hpp"
#include "pingmatch/service.hpp"
#include "pingmatch/simulator.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace pingmatch;

namespace {

std::vector<ScoredSample> samples(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::ValidationError, "scores and labels differ in length");
  std::vector<ScoredSample> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = {scores[i], labels[i], {}};
  return out;
}

EventLog parse_log(const std::string& text) {
  std::istringstream in(text);
  return read_log(in);
}

std::string dump_log(const EventLog& log) {
  std::ostringstream out;
  write_log(log, out);
  return out.str();
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_json(const MetricReport& r) {
  return {{"samples", r.samples},
          {"positives", r.positives},
          {"auc", r.auc},
          {"accuracy_at_half", r.accuracy_at_half},
          {"naive_accuracy", r.naive_accuracy},
          {"precision_at_half", opt(r.precision_at_half)},
          {"recall_at_half", r.recall_at_half}};
}

std::pair<std::string, std::string> simulate(const std::string& config_json, std::size_t requests,
                                             std::size_t pings, std::optional<double> epsilon,
                                             std::optional<std::string> model_json) {
  EngineConfig c = config_from_json(config_json);
  if (requests || pings) {
    c.sim.max_requests = requests;
    c.sim.max_pings = pings;
  }
  if (epsilon) c.policy.epsilon = *epsilon;
  std::optional<ResponseModel> model;
  if (model_json) model = model_from_json(*model_json);
  const EpisodeResult r = run_episode(c.sim, c.policy, model);
  std::int64_t positives = 0;
  const auto rows = labeled_dataset(r.log);
  for (const auto& row : rows) positives += row.label;
  json metrics = {{"requests_total", r.metrics.requests_total},
                  {"requests_matched", r.metrics.requests_matched},
                  {"pings", rows.size()},
                  {"positive_rate", rows.empty() ? json(nullptr) : json(double(positives) / double(rows.size()))}};
  if (r.metrics.requests_total > 0) {
    const auto s = metrics_summary(r.metrics);
    metrics["match_rate"] = s.match_rate;
    metrics["median_match_time_ms"] = opt(s.median_match_time_ms);
  }
  return {dump_log(r.log), metrics.dump()};
}

std::string train(const std::string& log_text, const std::string& config_json) {
  const EngineConfig c = config_from_json(config_json);
  const auto rows = labeled_dataset(parse_log(log_text));
  return model_to_json(train_model(rows, c.train));
}

std::string evaluate(const std::string& model_json, const std::string& log_text) {
  const ResponseModel model = model_from_json(model_json);
  const auto rows = labeled_dataset(parse_log(log_text));
  return report_json(build_report(score_rows(model, rows))).dump();
}

std::string bootstrap(const std::string& config_json, std::size_t pings) {
  EngineConfig c = config_from_json(config_json);
  c.sim.max_requests = 0;
  c.sim.max_pings = pings;
  const BootstrapResult b = bootstrap_train_eval(c.sim, c.train, c.policy);
  json ors = json::object();
  for (const auto& o : odds_ratios(b.result.model)) ors[o.feature] = o.odds_ratio;
  json out = report_json(b.result.report);
  out["profile_only_auc"] = b.result.profile_only_auc;
  out["lambda"] = b.result.model.lambda;
  out["odds_ratios"] = std::move(ors);
  out["train_rows"] = b.result.train_rows;
  out["test_rows"] = b.result.test_rows;
  out["model"] = json::parse(model_to_json(b.result.model));
  return out.dump();
}

std::string replay_log(const std::string& log_text) {
  const ReplayReport r = replay(parse_log(log_text));
  return json{{"resolutions", r.resolutions}, {"mismatches", r.mismatches}, {"identical", r.identical()}}.dump();
}

std::unique_ptr<Engine> make_engine(const std::string& config_json, std::optional<py::function> clock) {
  const EngineConfig c = config_from_json(config_json);
  EngineOptions options{c.policy, c.timeout_ms, std::nullopt};
  if (!clock) return std::make_unique<Engine>(options);
  py::function f = *clock;
  return std::make_unique<Engine>(options, [f]() {
    py::gil_scoped_acquire gil;
    return f().cast<TimestampMs>();
  });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "pingmatch core bindings";
  static py::handle error_type = py::exception<Error>(m, "PingmatchError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("smoothed_rate", [](std::int64_t yes, std::int64_t pings) {
    return smoothed_rate(RateCounter{yes, pings});
  }, py::arg("yes"), py::arg("pings"));
  m.def("local_hour", &local_hour, py::arg("at_ms"), py::arg("timezone_offset_minutes") = 0);
  m.def("auc", [](const std::vector<double>& s, const std::vector<int>& y) { return auc(samples(s, y)); },
        py::arg("scores"), py::arg("labels"));
  m.def("roc_curve", [](const std::vector<double>& s, const std::vector<int>& y) {
    std::vector<std::tuple<double, double, double>> out;
    for (const auto& p : roc_curve(samples(s, y))) out.emplace_back(p.fpr, p.tpr, p.threshold);
    return out;
  }, py::arg("scores"), py::arg("labels"));
  m.def("fit_logistic", [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lam,
                           int max_iterations, double tolerance) {
    LogisticProblem p{x, y, lam};
    const LogisticFit f = fit_logistic(p, max_iterations, tolerance);
    return py::make_tuple(f.weights, f.intercept, f.converged);
  }, py::arg("features"), py::arg("labels"), py::arg("lam"), py::arg("max_iterations") = 100,
     py::arg("tolerance") = 1e-10);

  m.def("simulate", &simulate, py::arg("config_json") = "{}", py::arg("requests") = 0,
        py::arg("pings") = 0, py::arg("epsilon") = py::none(), py::arg("model_json") = py::none());
  m.def("train", &train, py::arg("log_text"), py::arg("config_json") = "{}");
  m.def("evaluate", &evaluate, py::arg("model_json"), py::arg("log_text"));
  m.def("bootstrap", &bootstrap, py::arg("config_json") = "{}", py::arg("pings") = 50'000);
  m.def("replay", &replay_log, py::arg("log_text"));

  py::class_<Engine>(m, "Engine")
      .def(py::init(&make_engine), py::arg("config_json") = "{}", py::arg("clock") = py::none())
      .def("handle", [](Engine& e, const std::string& method, const std::string& path, const std::string& body) {
        const ApiResponse r = handle(e, method, path, body);
        return py::make_tuple(r.status, r.body);
      }, py::arg("method"), py::arg("path"), py::arg("body") = "")
      .def("tick", &Engine::tick)
      .def("log_text", [](const Engine& e) { return dump_log(e.log_snapshot()); })
      .def("translator_count", &Engine::translator_count);
}
