#include "omgrl/cli.hpp"
#include "omgrl/data.hpp"
#include "omgrl/error.hpp"
#include "omgrl/eval.hpp"
#include "omgrl/synth.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace omgrl;

namespace {

// Flattens trajectories into row-per-transition arrays.
py::dict dataset_arrays(const std::vector<Trajectory>& data) {
  const auto all = all_transitions(data);
  const auto n = static_cast<Eigen::Index>(all.size());
  Eigen::MatrixXd states(n, kStateDim), next_states(n, kStateDim);
  Eigen::VectorXi actions(n), patient(n);
  Eigen::VectorXd rewards(n), aptt(n), next_aptt(n);
  Eigen::Index row = 0;
  for (std::size_t p = 0; p < data.size(); ++p) {
    for (const auto& t : data[p].transitions) {
      states.row(row) = t.state.features.transpose();
      next_states.row(row) = t.next_state.features.transpose();
      actions[row] = t.action.index();
      patient[row] = static_cast<int>(p);
      rewards[row] = t.reward;
      aptt[row] = t.state.aptt;
      next_aptt[row] = t.next_state.aptt;
      ++row;
    }
  }
  py::dict out;
  out["patient"] = patient;
  out["states"] = states;
  out["actions"] = actions;
  out["rewards"] = rewards;
  out["next_states"] = next_states;
  out["aptt"] = aptt;
  out["next_aptt"] = next_aptt;
  return out;
}

}  // namespace

PYBIND11_MODULE(_omgrl, m) {
  m.doc() = "Bindings for the omgrl core library";

  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("rp_reward", py::vectorize(&rp_reward), py::arg("aptt"),
        "Therapeutic-range reward of an aPTT value (seconds).");

  m.def("spearman", &eval::spearman, py::arg("x"), py::arg("y"),
        "Spearman rank correlation with average ranks for ties.");

  m.def("feature_names", [] {
    std::vector<std::string> names;
    for (auto n : kFeatureNames) names.emplace_back(n);
    return names;
  });

  m.def(
      "generate_dataset",
      [](int n_patients, std::uint64_t seed, double expert_epsilon, double noise_std) {
        synth::SynthConfig c;
        c.seed = seed;
        c.expert_epsilon = expert_epsilon;
        c.noise_std = noise_std;
        return dataset_arrays(synth::generate_expert_dataset(c, n_patients));
      },
      py::arg("n_patients"), py::arg("seed") = 1, py::arg("expert_epsilon") = 0.05, py::arg("noise_std") = 0.05,
      "Synthetic expert trajectories as arrays with one row per transition.");

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI verb; returns (exit_code, stdout, stderr).");
}
