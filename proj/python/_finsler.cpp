#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "finsler/berwald.hpp"
#include "finsler/bonnet.hpp"
#include "finsler/curvature.hpp"
#include "finsler/error.hpp"
#include "finsler/harness.hpp"
#include "finsler/transport.hpp"

namespace py = pybind11;
using namespace finsler;

namespace {

JetEngine engine_of(const std::string& mode, double fd_step) {
  JetEngine e;
  e.mode = parse_diff_mode(mode);
  e.fd_step = fd_step;
  e.validate();
  return e;
}

template <int R>
py::array_t<double> to_array(const Tensor<R>& t) {
  std::vector<py::ssize_t> shape(R, t.extent());
  py::array_t<double> a(shape);
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::list points(const std::vector<Vec>& v) {
  py::list l;
  for (const auto& x : v) l.append(x);
  return l;
}

py::dict berwald_dict(const BerwaldReport& r) {
  py::dict d;
  d["metric"] = r.metric_id;
  d["berwald"] = r.berwald;
  d["max_deviation"] = r.max_deviation;
  d["tolerance"] = r.tolerance;
  d["points"] = points(r.points);
  d["point_deviation"] = r.point_deviation;
  d["seed"] = r.seed;
  return d;
}

py::dict riemann_dict(const RiemannReport& r) {
  py::dict d;
  d["metric"] = r.metric_id;
  d["riemannian"] = r.riemannian;
  d["max_cartan"] = r.max_cartan;
  d["max_g_deviation"] = r.max_g_deviation;
  d["tolerance"] = r.tolerance;
  d["seed"] = r.seed;
  return d;
}

py::dict flag_dict(const FlagCurvatureValue& f) {
  py::dict d;
  d["x"] = f.flag.x;
  d["y"] = f.flag.y;
  d["V"] = f.flag.V;
  d["K"] = f.K;
  return d;
}

}  // namespace

PYBIND11_MODULE(_finsler, m) {
  m.doc() = "Finsler geometry toolkit: tensors, curvature, transport and detectors";

  py::register_exception<Error>(m, "FinslerError", PyExc_RuntimeError);

  py::class_<FinslerMetric>(m, "Metric")
      .def_static(
          "from_json",
          [](const std::string& text) {
            return catalog_instantiate(harness::parse_metric_spec(harness::parse_json_text(text, "metric")));
          },
          py::arg("text"))
      .def_property_readonly("id", &FinslerMetric::id)
      .def_property_readonly("dimension", &FinslerMetric::dimension)
      .def_property_readonly("chart",
                             [](const FinslerMetric& g) {
                               std::vector<std::pair<double, double>> c;
                               for (const auto& iv : g.chart()) c.emplace_back(iv.lo, iv.hi);
                               return c;
                             })
      .def_property_readonly("periods", &FinslerMetric::periods)
      .def("F", &FinslerMetric::F, py::arg("x"), py::arg("y"))
      .def("in_chart", &FinslerMetric::in_chart, py::arg("x"))
      .def("__repr__", [](const FinslerMetric& g) { return "<Metric " + g.id() + ">"; });

  m.def("product", &make_product_metric, py::arg("factors"));

  const auto mode = py::arg("mode") = "forward_algorithmic";
  const auto step = py::arg("fd_step") = 1e-3;

  m.def(
      "fundamental_tensor",
      [](const FinslerMetric& g, const Vec& x, const Vec& y, const std::string& md, double h) {
        return fundamental_tensor(g, x, y, engine_of(md, h)).g;
      },
      py::arg("metric"), py::arg("x"), py::arg("y"), mode, step);
  m.def(
      "cartan_tensor",
      [](const FinslerMetric& g, const Vec& x, const Vec& y, const std::string& md, double h) {
        return to_array(cartan_tensor(g, x, y, engine_of(md, h)).C);
      },
      py::arg("metric"), py::arg("x"), py::arg("y"), mode, step);
  m.def(
      "spray",
      [](const FinslerMetric& g, const Vec& x, const Vec& y, const std::string& md, double h) {
        return spray_coefficients(g, x, y, engine_of(md, h)).G;
      },
      py::arg("metric"), py::arg("x"), py::arg("y"), mode, step);
  m.def(
      "nonlinear_connection",
      [](const FinslerMetric& g, const Vec& x, const Vec& y, const std::string& md, double h) {
        return nonlinear_connection(g, x, y, engine_of(md, h)).N;
      },
      py::arg("metric"), py::arg("x"), py::arg("y"), mode, step);
  m.def(
      "chern_coefficients",
      [](const FinslerMetric& g, const Vec& x, const Vec& y, const std::string& md, double h) {
        return to_array(chern_coefficients(g, x, y, engine_of(md, h)).gamma);
      },
      py::arg("metric"), py::arg("x"), py::arg("y"), mode, step);
  m.def(
      "hh_curvature",
      [](const FinslerMetric& g, const Vec& x, const Vec& y, const std::string& md, double h) {
        return to_array(hh_curvature_chern(g, x, y, engine_of(md, h)).R);
      },
      py::arg("metric"), py::arg("x"), py::arg("y"), mode, step);
  m.def(
      "spray_riemann",
      [](const FinslerMetric& g, const Vec& x, const Vec& y, const std::string& md, double h) {
        return riemann_curvature_spray(g, x, y, engine_of(md, h));
      },
      py::arg("metric"), py::arg("x"), py::arg("y"), mode, step);
  m.def(
      "flag_curvature",
      [](const FinslerMetric& g, const Vec& x, const Vec& y, const Vec& V, const std::string& md, double h) {
        return flag_curvature(g, Flag{x, y, V}, engine_of(md, h)).K;
      },
      py::arg("metric"), py::arg("x"), py::arg("y"), py::arg("V"), mode, step);

  m.def(
      "is_berwald",
      [](const FinslerMetric& g, int points, int directions, double tol, std::uint64_t seed) {
        return berwald_dict(is_berwald(g, points, directions, tol, seed));
      },
      py::arg("metric"), py::arg("point_samples") = 8, py::arg("indicatrix_samples") = 8,
      py::arg("tol") = kBerwaldTolerance, py::arg("seed") = 0);
  m.def(
      "is_riemannian",
      [](const FinslerMetric& g, int samples, double tol, std::uint64_t seed) {
        return riemann_dict(is_riemannian(g, samples, tol, seed));
      },
      py::arg("metric"), py::arg("samples") = 8, py::arg("tol") = kRiemannTolerance, py::arg("seed") = 0);
  m.def(
      "verify_rigidity",
      [](const FinslerMetric& g, std::uint64_t seed) {
        const auto v = verify_rigidity(g, {}, RigidityBudget{}, RigidityTolerances{}, seed);
        py::dict d;
        d["metric"] = v.metric_id;
        d["consistency"] = to_string(v.consistency);
        d["is_berwald"] = v.is_berwald;
        d["is_riemannian"] = v.is_riemannian;
        d["witness"] = v.witness ? py::object(flag_dict(*v.witness)) : py::none();
        d["witness_mixed"] = v.witness_mixed;
        d["best_abs_K"] = v.best_abs_K;
        d["note"] = v.note;
        return d;
      },
      py::arg("metric"), py::arg("seed") = 0);

  m.def(
      "binet_legendre_metric",
      [](const FinslerMetric& g, const Vec& x, int samples, std::uint64_t seed, const std::string& method) {
        if (method != "rejection" && method != "radial_qmc")
          throw Error(ErrorCode::ConfigError, "method must be rejection or radial_qmc");
        const auto bl = binet_legendre_metric(g, x, samples, seed,
                                              method == "rejection" ? BLMethod::rejection : BLMethod::radial_qmc);
        py::dict d;
        d["g"] = bl.g;
        d["std_error"] = bl.std_error;
        d["samples"] = bl.samples;
        d["accepted"] = bl.accepted;
        return d;
      },
      py::arg("metric"), py::arg("x"), py::arg("mc_samples") = 100000, py::arg("seed") = 0,
      py::arg("method") = "rejection");

  py::class_<Curve>(m, "Curve")
      .def(py::init<>())
      .def("line", [](Curve& c, const Vec& a, const Vec& b, double T) { c.append(line_segment(a, b, T)); return &c; },
           py::arg("start"), py::arg("end"), py::arg("duration") = 1.0, py::return_value_policy::reference)
      .def("circle",
           [](Curve& c, const Vec& ctr, double r, int i, int j, double turns) {
             c.append(chart_circle(ctr, r, i, j, turns));
             return &c;
           },
           py::arg("center"), py::arg("radius"), py::arg("axis_i") = 0, py::arg("axis_j") = 1,
           py::arg("turns") = 1.0, py::return_value_policy::reference)
      .def("geodesic",
           [](Curve& c, const FinslerMetric& g, const Vec& x0, const Vec& y0, double L) {
             c.append(geodesic_segment(g, x0, y0, L));
             return &c;
           },
           py::arg("metric"), py::arg("x0"), py::arg("y0"), py::arg("length"), py::return_value_policy::reference)
      .def("position", &Curve::position)
      .def("velocity", &Curve::velocity)
      .def_property_readonly("start", &Curve::start)
      .def_property_readonly("end", &Curve::end)
      .def("__repr__", &Curve::describe);

  m.def(
      "parallel_transport",
      [](const FinslerMetric& g, const Curve& c, const Vec& v) {
        const auto r = parallel_transport(g, c, v);
        py::dict d;
        d["output"] = r.output;
        d["max_drift"] = r.max_drift;
        d["steps"] = r.stats.steps;
        return d;
      },
      py::arg("metric"), py::arg("curve"), py::arg("v"));
  m.def(
      "linearity_defect",
      [](const FinslerMetric& g, const Curve& c, int trials, std::uint64_t seed) {
        return transport_linearity_test(g, c, trials, seed).defect;
      },
      py::arg("metric"), py::arg("curve"), py::arg("trials") = 5, py::arg("seed") = 0);
  m.def(
      "holonomy",
      [](const FinslerMetric& g, const Curve& loop) {
        const auto h = holonomy_loop(g, loop, Mat::Identity(g.dimension(), g.dimension()));
        py::dict d;
        d["map"] = h.map;
        d["norm_defect"] = h.norm_defect;
        d["rotation_angle"] = h.rotation_angle ? py::object(py::float_(*h.rotation_angle)) : py::none();
        return d;
      },
      py::arg("metric"), py::arg("loop"));
  m.def(
      "geodesic",
      [](const FinslerMetric& g, const Vec& x0, const Vec& y0, double length) {
        const auto s = integrate_geodesic(g, x0, y0, length);
        py::dict d;
        d["t"] = s.t;
        d["x"] = points(s.x);
        d["y"] = points(s.y);
        d["status"] = s.status == GeodesicStatus::completed ? "completed" : "chart_exit";
        d["speed_drift"] = s.speed_drift;
        return d;
      },
      py::arg("metric"), py::arg("x0"), py::arg("y0"), py::arg("length"));

  m.def(
      "bonnet_diameter",
      [](const FinslerMetric& g, std::uint64_t seed, int pairs, int directions) {
        BonnetBudget b;
        b.pairs = pairs;
        b.directions = directions;
        const auto r = bonnet_diameter_check(g, b, BonnetTolerances{}, seed);
        py::dict d;
        d["hypothesis"] = r.hypothesis;
        d["H"] = r.H;
        d["bound"] = r.bound;
        d["estimate"] = r.estimate;
        d["passed"] = r.passed;
        d["note"] = r.note;
        return d;
      },
      py::arg("metric"), py::arg("seed") = 0, py::arg("pairs") = 200, py::arg("directions") = 256);

  m.def(
      "run_experiment",
      [](const std::string& text, const std::string& base_dir) {
        const auto cfg = harness::parse_experiment(harness::parse_json_text(text, "config"), base_dir, "config");
        harness::ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = harness::run_experiment(cfg);
        }
        return py::make_tuple(r.exit_code, r.report.dump(), r.csv);
      },
      py::arg("config"), py::arg("base_dir") = ".");

  m.attr("__version__") = harness::kToolVersion;
}
