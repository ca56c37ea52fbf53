// Python bindings for scenario runs, metrics, CSV I/O, and the collocation basis.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ftc/harness.hpp"

namespace py = pybind11;
using namespace ftc;

namespace {

Window window_from(py::object begin, py::object end) {
  Window w;
  if (!begin.is_none()) w.begin = begin.cast<double>();
  if (!end.is_none()) w.end = end.cast<double>();
  return w;
}

RadiusChannel channel_from(const std::string& name) {
  if (name == "left") return RadiusChannel::left;
  if (name == "right") return RadiusChannel::right;
  if (name == "both") return RadiusChannel::both;
  throw ConfigError("channel must be 'left', 'right', or 'both'");
}

// Column name -> numpy array, following the CSV schema.
py::dict columns(const SimLog& log) {
  const auto header = csv_header(log.mode_count);
  const std::size_t n = log.rows.size();
  py::dict out;
  for (std::size_t c = 0; c + 1 < header.size(); ++c) {
    py::array_t<double> col(static_cast<py::ssize_t>(n));
    auto view = col.mutable_unchecked<1>();
    for (std::size_t k = 0; k < n; ++k) {
      const LogRow& r = log.rows[k];
      double v = 0.0;
      if (c < 9) {
        const double fixed[] = {r.t, r.x, r.y, r.psi, r.r_right_true, r.r_left_true,
                                r.omega_right_cmd, r.omega_left_cmd, r.z};
        v = fixed[c];
      } else if (c < 14) {
        v = r.mean[c - 9];
      } else if (c < 19) {
        v = r.cov_diag[c - 14];
      } else if (c == 19) {
        v = r.nu;
      } else if (c == 20) {
        v = r.s;
      } else {
        v = r.mu[c - 21];
      }
      view(static_cast<py::ssize_t>(k)) = v;
    }
    out[py::str(header[c])] = col;
  }
  py::list status;
  for (const auto& r : log.rows) status.append(r.solver_status);
  out["solver_status"] = status;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Closed-loop fault-tolerant control simulator core";

  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::enum_<FilterKind>(m, "FilterKind")
      .value("ekf", FilterKind::ekf)
      .value("ukf", FilterKind::ukf)
      .value("imm_ekf", FilterKind::imm_ekf)
      .value("imm_ukf", FilterKind::imm_ukf);
  py::enum_<ControllerKind>(m, "ControllerKind")
      .value("nmpc", ControllerKind::nmpc)
      .value("lmpc", ControllerKind::lmpc);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init<>())
      .def(py::init([](const py::kwargs& kwargs) {
        ScenarioConfig cfg;
        std::map<std::string, std::string> values;
        for (const auto& [k, v] : kwargs) values[py::str(k)] = py::str(v);
        apply_config(values, cfg);
        return cfg;
      }))
      .def_readwrite("scenario", &ScenarioConfig::scenario)
      .def_readwrite("filter", &ScenarioConfig::filter)
      .def_readwrite("imm_modes", &ScenarioConfig::imm_modes)
      .def_readwrite("feedback", &ScenarioConfig::feedback)
      .def_readwrite("controller", &ScenarioConfig::controller)
      .def_readwrite("duration", &ScenarioConfig::duration)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_readwrite("filter_hz", &ScenarioConfig::filter_hz)
      .def_readwrite("controller_hz", &ScenarioConfig::controller_hz)
      .def_readwrite("nodes", &ScenarioConfig::nodes)
      .def_readwrite("horizon", &ScenarioConfig::horizon)
      .def_readwrite("path_radius", &ScenarioConfig::path_radius)
      .def_readwrite("path_speed", &ScenarioConfig::path_speed)
      .def_readwrite("center_x", &ScenarioConfig::center_x)
      .def_readwrite("center_y", &ScenarioConfig::center_y)
      .def_readwrite("noise_sigma", &ScenarioConfig::noise_sigma)
      .def_readwrite("delta_omega_deg", &ScenarioConfig::delta_omega_deg)
      .def_readwrite("ramp_absolute_time", &ScenarioConfig::ramp_absolute_time)
      .def("effective_duration", &ScenarioConfig::effective_duration)
      .def("validate", &ScenarioConfig::validate)
      .def("label", &ScenarioConfig::label);

  py::class_<SimLog>(m, "SimLog")
      .def_readonly("config", &SimLog::config)
      .def_readonly("mode_count", &SimLog::mode_count)
      .def("__len__", [](const SimLog& log) { return log.rows.size(); })
      .def("columns", &columns, "Column name to numpy array, following the CSV schema")
      .def("to_csv", [](const SimLog& log) {
        std::ostringstream out;
        write_csv(log, out);
        return out.str();
      });

  m.def("run_scenario", &run_scenario, py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("export_csv", &export_csv, py::arg("log"), py::arg("path"));
  m.def("parse_csv", &parse_csv, py::arg("path"));
  m.def("csv_header", &csv_header, py::arg("mode_count") = 0);

  m.def(
      "innovation_coverage",
      [](const SimLog& log, py::object begin, py::object end) {
        return innovation_coverage(log, window_from(begin, end));
      },
      py::arg("log"), py::arg("begin") = py::none(), py::arg("end") = py::none());
  m.def(
      "tracking_rms",
      [](const SimLog& log, py::object begin, py::object end) {
        return tracking_rms(log, window_from(begin, end));
      },
      py::arg("log"), py::arg("begin") = py::none(), py::arg("end") = py::none());
  m.def(
      "saturation_duty",
      [](const SimLog& log, py::object begin, py::object end) {
        return saturation_duty(log, window_from(begin, end));
      },
      py::arg("log"), py::arg("begin") = py::none(), py::arg("end") = py::none());
  m.def(
      "radius_rmse",
      [](const SimLog& log, const std::string& channel, py::object begin, py::object end) {
        return radius_rmse(log, channel_from(channel), window_from(begin, end));
      },
      py::arg("log"), py::arg("channel") = "both", py::arg("begin") = py::none(),
      py::arg("end") = py::none());
  m.def(
      "settle_time",
      [](const SimLog& log, const std::string& channel, py::object begin, py::object end) {
        return settle_time(log, channel_from(channel), window_from(begin, end));
      },
      py::arg("log"), py::arg("channel") = "left", py::arg("begin") = py::none(),
      py::arg("end") = py::none());
  m.def(
      "mode_fraction",
      [](const SimLog& log, int mode, py::object begin, py::object end) {
        return mode_fraction(log, mode, window_from(begin, end));
      },
      py::arg("log"), py::arg("mode"), py::arg("begin") = py::none(), py::arg("end") = py::none());
  m.def("first_onset", &first_onset, py::arg("scenario"));

  m.def(
      "lgl_basis",
      [](int degree) {
        const CollocationBasis b = lgl_basis(degree);
        return py::make_tuple(b.nodes, b.weights, b.d);
      },
      py::arg("degree"), "LGL nodes, quadrature weights, and differentiation matrix");
}
