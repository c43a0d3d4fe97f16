#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfac/commands.hpp"
#include "mfac/config.hpp"
#include "mfac/errors.hpp"
#include "mfac/oracle.hpp"
#include "mfac/verify.hpp"

namespace py = pybind11;
using namespace mfac;

namespace {

// Configs cross the boundary as JSON text; the Python wrapper handles dicts.
Json parse(const std::string& text) { return Json::parse(text); }

struct OracleHandle {
  Instance instance;
  std::unique_ptr<ExactOracle> oracle;
  std::unique_ptr<TeamPolicy> policy;
  std::vector<double> pi_w;

  explicit OracleHandle(const std::string& config_text) : instance(build_instance(parse(config_text))) {
    const Json config = parse(config_text);
    oracle = std::make_unique<ExactOracle>(instance.model, instance.graph,
                                           config.at("oracle").at("xi_cap").get<double>());
    policy = build_policy(config.at("policy"), instance, config.at("seed").get<std::uint64_t>());
    pi_w = oracle->policy_weights(PolicyTable(*policy));
  }
};

}  // namespace

PYBIND11_MODULE(_mfac, m) {
  m.doc() = "Mean-field localized actor-critic core";

  py::register_exception<ModelError>(m, "ModelError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CapExceeded>(m, "CapExceeded", PyExc_RuntimeError);
  py::register_exception<NotALift>(m, "NotALift", PyExc_ValueError);
  py::register_exception<NonConvergence>(m, "NonConvergence", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("version", &version_string);

  m.def("default_config", [] { return default_config().dump(); });
  m.def(
      "resolve_config",
      [](const std::string& user, const std::vector<std::string>& sets) {
        Overrides o;
        o.set = sets;
        return resolve_config(parse(user), o).dump();
      },
      py::arg("user"), py::arg("sets") = std::vector<std::string>{});

  m.def(
      "run_command",
      [](const std::string& name, const std::string& config) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_command(name, parse(config), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("name"), py::arg("config"));

  m.def(
      "run_criterion",
      [](int id, const std::string& config) {
        CriterionResult r;
        {
          py::gil_scoped_release release;
          r = run_criterion(id, parse(config));
        }
        Json j = criterion_json(r);
        j["seconds"] = r.seconds;
        return j.dump();
      },
      py::arg("id"), py::arg("config"));

  m.def(
      "lift_policy",
      [](const std::vector<double>& probs, int count) {
        return lift_policy(table_individual_policy({probs}), 0, count, std::max(count, 1), probs.size());
      },
      py::arg("probs"), py::arg("count"));
  m.def(
      "recover_individual",
      [](const std::vector<double>& pmf, int count, std::size_t n_actions) {
        return recover_individual(pmf, count, n_actions).probs;
      },
      py::arg("pmf"), py::arg("count"), py::arg("n_actions"));
  m.def("compositions", &compositions, py::arg("total"), py::arg("parts"));

  py::class_<TwoLayerNet>(m, "TwoLayerNet")
      .def_static("initialize", &TwoLayerNet::initialize, py::arg("width"), py::arg("in_dim"),
                  py::arg("radius"), py::arg("seed"))
      .def_property_readonly("width", &TwoLayerNet::width)
      .def_property_readonly("in_dim", &TwoLayerNet::in_dim)
      .def_property_readonly("weights", &TwoLayerNet::weights)
      .def_property_readonly("signs", &TwoLayerNet::signs)
      .def("forward", [](const TwoLayerNet& n, const std::vector<double>& x) { return n.forward(x); })
      .def("feature_map", [](const TwoLayerNet& n, const std::vector<double>& x) { return n.feature_map(x); })
      .def("to_json", &TwoLayerNet::to_json)
      .def_static("from_json", &TwoLayerNet::from_json);

  py::class_<OracleHandle>(m, "Oracle")
      .def(py::init<const std::string&>(), py::arg("config"))
      .def_property_readonly("xi_size", [](const OracleHandle& h) { return h.oracle->xi().size(); })
      .def_property_readonly("n_state_distributions", [](const OracleHandle& h) { return h.oracle->xi().n_mus(); })
      .def("state_distribution",
           [](const OracleHandle& h, std::size_t xi) { return h.oracle->xi().mu(h.oracle->xi().mu_of(xi)).counts(); })
      .def("action_counts", [](const OracleHandle& h, std::size_t xi) { return h.oracle->xi().h(xi).flat(); })
      .def("policy_weights", [](const OracleHandle& h) { return h.pi_w; })
      .def("team_q", [](const OracleHandle& h, StateIndex s, double tol) { return h.oracle->exact_team_q(h.pi_w, s, tol); },
           py::arg("s"), py::arg("tol") = 1e-8)
      .def("optimal_q", [](const OracleHandle& h, double tol) { return h.oracle->exact_optimal_q(tol); },
           py::arg("tol") = 1e-8)
      .def("stationary", [](const OracleHandle& h) { return h.oracle->exact_stationary(h.pi_w, h.instance.initial); })
      .def("visitation",
           [](const OracleHandle& h) {
             return h.oracle->exact_visitation(h.pi_w, h.instance.initial, h.instance.model.gamma);
           })
      .def("j", [](const OracleHandle& h) { return h.oracle->exact_j(h.pi_w, h.instance.initial); })
      .def("optimal_j", [](const OracleHandle& h) { return h.oracle->optimal_j(h.instance.initial); });
}
