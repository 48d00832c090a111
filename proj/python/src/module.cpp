#include <memory>
#include <span>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hybridkkt/distillation.hpp"
#include "hybridkkt/ipm.hpp"
#include "hybridkkt/report.hpp"

namespace py = pybind11;
using namespace hkkt;

namespace {

std::vector<double> checked(const CompiledModel& m, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != m.n()) {
    throw py::value_error("expected " + std::to_string(m.n()) + " values, got " + std::to_string(x.size()));
  }
  return x;
}

py::dict timers_dict(const PhaseTimers& t) {
  py::dict d;
  d["init"] = t.init;
  d["ad"] = t.ad;
  d["linsolve"] = t.linsolve;
  d["total"] = t.total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Interior-point solver with hybrid KKT strategies";

  py::class_<DistillationParams>(m, "DistillationParams")
      .def(py::init([]() { return default_params(); }))
      .def_readwrite("trays", &DistillationParams::trays)
      .def_readwrite("feed_tray", &DistillationParams::feed_tray)
      .def_readwrite("alpha", &DistillationParams::alpha)
      .def_readwrite("distillate", &DistillationParams::distillate)
      .def_readwrite("feed", &DistillationParams::feed)
      .def_readwrite("gamma", &DistillationParams::gamma)
      .def_readwrite("rho", &DistillationParams::rho)
      .def_readwrite("horizon", &DistillationParams::horizon)
      .def_readwrite("feed_composition", &DistillationParams::feed_composition)
      .def_readwrite("x1_setpoint", &DistillationParams::x1_setpoint)
      .def_readwrite("u_setpoint", &DistillationParams::u_setpoint)
      .def_readwrite("u_lower", &DistillationParams::u_lower)
      .def_readwrite("u_upper", &DistillationParams::u_upper)
      .def_readwrite("initial_profile", &DistillationParams::initial_profile)
      .def("entries", [](const DistillationParams& p) { return param_entries(p); });

  m.def("default_params", &default_params);
  m.def("parse_params", [](const std::string& text) { return parse_params(text); }, py::arg("text"));
  m.def("steady_state_profile", &steady_state_profile, py::arg("params"), py::arg("u"));

  py::class_<CompiledModel, std::shared_ptr<CompiledModel>>(m, "Model")
      .def_property_readonly("n", &CompiledModel::n)
      .def_property_readonly("m_eq", &CompiledModel::m_eq)
      .def_property_readonly("m_ineq", &CompiledModel::m_ineq)
      .def_property_readonly("start",
                             [](const CompiledModel& c) {
                               const auto s = c.start();
                               return std::vector<double>(s.begin(), s.end());
                             })
      .def("objective",
           [](const CompiledModel& c, const std::vector<double>& x) { return c.objective(checked(c, x)); })
      .def("gradient",
           [](const CompiledModel& c, const std::vector<double>& x) {
             std::vector<double> g(static_cast<std::size_t>(c.n()));
             c.gradient(checked(c, x), g);
             return g;
           })
      .def("constraints", [](const CompiledModel& c, const std::vector<double>& x) {
        std::vector<double> g(static_cast<std::size_t>(c.m_eq())), h(static_cast<std::size_t>(c.m_ineq()));
        c.constraints(checked(c, x), g, h);
        return py::make_tuple(g, h);
      });

  py::class_<DistillationModel, std::shared_ptr<DistillationModel>>(m, "DistillationModel")
      .def_property_readonly(
          "model", [](const std::shared_ptr<DistillationModel>& d) {
            return std::shared_ptr<CompiledModel>(d, &d->model);
          })
      .def_readonly("params", &DistillationModel::params)
      .def_readonly("horizon_steps", &DistillationModel::horizon_steps)
      .def("x_index", &DistillationModel::x_index, py::arg("tray"), py::arg("stage"))
      .def("y_index", &DistillationModel::y_index, py::arg("tray"), py::arg("stage"))
      .def("u_index", &DistillationModel::u_index, py::arg("stage"))
      .def("l_index", &DistillationModel::l_index, py::arg("stage"))
      .def("v_index", &DistillationModel::v_index, py::arg("stage"));

  m.def(
      "build_distillation",
      [](int N, const DistillationParams& p) { return std::make_shared<DistillationModel>(build_distillation(N, p)); },
      py::arg("N"), py::arg("params") = default_params());

  m.def(
      "reference_dimensions",
      [](std::int64_t N) {
        const auto r = reference_dimensions(N);
        return py::make_tuple(r.n, r.nnz);
      },
      py::arg("N"));

  m.def("strategies", []() { return std::vector<std::string>{"augmented", "lifted", "hykkt"}; });

  py::class_<SolverOptions>(m, "SolverOptions")
      .def(py::init<>())
      .def_readwrite("tol", &SolverOptions::tol)
      .def_readwrite("max_iter", &SolverOptions::max_iter)
      .def_readwrite("gamma", &SolverOptions::gamma)
      .def_readwrite("tau_relax", &SolverOptions::tau_relax)
      .def_readwrite("mu_init", &SolverOptions::mu_init)
      .def_readwrite("cg_tol", &SolverOptions::cg_tol)
      .def_readwrite("cg_max_iter", &SolverOptions::cg_max_iter)
      .def_readwrite("dense_cap", &SolverOptions::dense_cap)
      .def_readwrite("record_iterates", &SolverOptions::record_iterates)
      .def_property(
          "strategy", [](const SolverOptions& o) { return std::string(to_string(o.strategy)); },
          [](SolverOptions& o, const std::string& s) {
            try {
              o.strategy = parse_kkt_method(s);
            } catch (const std::invalid_argument& e) {
              throw py::value_error(e.what());
            }
          });

  py::class_<SolveReport>(m, "SolveReport")
      .def_property_readonly("status", [](const SolveReport& r) { return std::string(to_string(r.status)); })
      .def_readonly("message", &SolveReport::message)
      .def_readonly("iterations", &SolveReport::iterations)
      .def_readonly("objective", &SolveReport::objective)
      .def_readonly("kkt_norm", &SolveReport::kkt_norm)
      .def_readonly("primal_inf", &SolveReport::primal_inf)
      .def_readonly("dual_inf", &SolveReport::dual_inf)
      .def_readonly("final_mu", &SolveReport::final_mu)
      .def_readonly("kkt_nnz", &SolveReport::kkt_nnz)
      .def_readonly("relaxed", &SolveReport::relaxed)
      .def_readonly("cg_iterations_total", &SolveReport::cg_iterations_total)
      .def_property_readonly("cg_iterations_mean", &SolveReport::cg_iterations_mean)
      .def_property_readonly("timers", [](const SolveReport& r) { return timers_dict(r.timers); })
      .def_property_readonly("x", [](const SolveReport& r) { return r.solution.x; })
      .def_property_readonly("mu_history", [](const SolveReport& r) {
        std::vector<double> mu;
        for (const auto& h : r.history) mu.push_back(h.mu);
        return mu;
      });

  m.def("solve", &solve, py::arg("model"), py::arg("options") = SolverOptions{},
        py::call_guard<py::gil_scoped_release>());

  m.def(
      "report_json",
      [](const std::shared_ptr<DistillationModel>& d, const SolveReport& r, const SolverOptions& o) {
        RunInfo info;
        info.N = d->horizon_steps;
        info.n = d->model.n();
        info.m_eq = d->model.m_eq();
        info.m_ineq = d->model.m_ineq();
        info.options = o;
        info.params = param_entries(d->params);
        return make_report(info, r).dump();
      },
      py::arg("instance"), py::arg("report"), py::arg("options") = SolverOptions{});

  py::register_exception<BuildError>(m, "BuildError", PyExc_ValueError);
}
