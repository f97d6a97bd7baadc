#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mlama/amp.hpp"
#include "mlama/constellation.hpp"
#include "mlama/denoiser.hpp"
#include "mlama/sim.hpp"
#include "mlama/special.hpp"
#include "mlama/state_evolution.hpp"

namespace py = pybind11;
using namespace mlama;

namespace {

DetectorKind detector_from(const std::string& label) {
  const auto k = parse_detector(label);
  if (!k) throw std::invalid_argument("unknown detector: " + label);
  return *k;
}

py::dict report_dict(const DecouplingReport& r) {
  py::dict d;
  d["se_sigma_sq"] = r.se_sigma_sq;
  d["sigma_hat_sq"] = r.sigma_hat_sq;
  d["z_error_var"] = r.z_error_var;
  d["dev_sigma_hat"] = r.dev_sigma_hat;
  d["dev_z_error"] = r.dev_z_error;
  d["max_dev_sigma_hat"] = r.max_dev_sigma_hat;
  d["max_dev_z_error"] = r.max_dev_z_error;
  return d;
}

template <class T>
py::dict trace_dict(const AmpTraceT<T>& tr) {
  py::dict d;
  d["sigma_hat_sq"] = tr.sigma_hat_sq;
  d["tau"] = tr.tau;
  d["divergence"] = tr.divergence;
  d["iterations"] = tr.iterations;
  d["z_final"] = tr.z_final;
  d["decisions"] = tr.decisions;
  d["sliced"] = tr.sliced;
  d["tuning_flagged"] = tr.tuning_flagged;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mismatched-prior AMP detection for MIMO: denoisers, state evolution, simulation";

  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("q_function", &q_function, py::arg("x"));

  py::class_<Constellation>(m, "Constellation")
      .def(py::init<std::vector<cdouble>, std::vector<double>, std::string>(), py::arg("symbols"),
           py::arg("probabilities"), py::arg("label"))
      .def_property_readonly("symbols", &Constellation::symbols)
      .def_property_readonly("probabilities", &Constellation::probabilities)
      .def_property_readonly("label", &Constellation::label)
      .def_property_readonly("energy", [](const Constellation& c) { return c.moments().energy; })
      .def_property_readonly("variance",
                             [](const Constellation& c) { return c.moments().variance; })
      .def("nearest", &Constellation::nearest)
      .def("separable", &Constellation::separable)
      .def("__len__", &Constellation::size)
      .def("__repr__", [](const Constellation& c) { return "<Constellation " + c.label() + ">"; });

  py::class_<RealConstellation>(m, "RealConstellation")
      .def(py::init<std::vector<double>, std::vector<double>, std::string>(), py::arg("symbols"),
           py::arg("probabilities"), py::arg("label"))
      .def_property_readonly("symbols", &RealConstellation::symbols)
      .def_property_readonly("probabilities", &RealConstellation::probabilities)
      .def_property_readonly("label", &RealConstellation::label)
      .def_property_readonly("alpha", &RealConstellation::alpha)
      .def_property_readonly("energy",
                             [](const RealConstellation& c) { return c.moments().energy; })
      .def_property_readonly("variance",
                             [](const RealConstellation& c) { return c.moments().variance; })
      .def("nearest", &RealConstellation::nearest)
      .def("__len__", &RealConstellation::size)
      .def("__repr__",
           [](const RealConstellation& c) { return "<RealConstellation " + c.label() + ">"; });

  m.def("make_qam", &make_qam, py::arg("points"));
  m.def("make_pam", &make_pam, py::arg("points"));
  m.def("make_psk", &make_psk, py::arg("points"));
  m.def("make_bpsk", &make_bpsk);
  m.def("real_decompose", &real_decompose, py::arg("constellation"));

  py::enum_<Field>(m, "Field").value("Complex", Field::Complex).value("Real", Field::Real);

  py::class_<Denoiser>(m, "Denoiser")
      .def_static("discrete", py::overload_cast<Constellation>(&Denoiser::discrete))
      .def_static("discrete_real", py::overload_cast<RealConstellation>(&Denoiser::discrete))
      .def_static("gaussian", &Denoiser::gaussian, py::arg("energy"),
                  py::arg("field") = Field::Complex)
      .def_static("hypercube", &Denoiser::hypercube, py::arg("alpha"))
      .def_static("boxclip", &Denoiser::boxclip, py::arg("alpha"))
      .def_property_readonly("label", &Denoiser::label)
      .def("__call__", py::overload_cast<cdouble, double>(&Denoiser::operator(), py::const_),
           py::arg("z"), py::arg("tau"))
      .def("derivative", py::overload_cast<cdouble, double>(&Denoiser::derivative, py::const_),
           py::arg("z"), py::arg("tau"))
      .def("real", py::overload_cast<double, double>(&Denoiser::operator(), py::const_),
           py::arg("x"), py::arg("tau"))
      .def("real_derivative",
           py::overload_cast<double, double>(&Denoiser::derivative, py::const_), py::arg("x"),
           py::arg("tau"));

  py::enum_<TuningMode>(m, "TuningMode")
      .value("Optimal", TuningMode::Optimal)
      .value("Fixed", TuningMode::Fixed)
      .value("Matched", TuningMode::Matched);

  py::class_<TuningPolicy>(m, "TuningPolicy")
      .def_static("optimal", &TuningPolicy::optimal)
      .def_static("matched", &TuningPolicy::matched)
      .def_static("fixed", &TuningPolicy::fixed, py::arg("tau"))
      .def_static("limit_zero", &TuningPolicy::limit_zero)
      .def_static("limit_infinity", &TuningPolicy::limit_infinity)
      .def_readonly("mode", &TuningPolicy::mode)
      .def_readonly("fixed_tau", &TuningPolicy::fixed_tau)
      .def_property_readonly("label", &TuningPolicy::label);

  py::class_<PsiStar>(m, "PsiStar")
      .def_readonly("value", &PsiStar::value)
      .def_readonly("gamma_sq", &PsiStar::gamma_sq)
      .def_readonly("flagged", &PsiStar::flagged);

  py::class_<SeModel>(m, "SeModel")
      .def(py::init<Constellation, Denoiser, TuningPolicy>(), py::arg("prior"),
           py::arg("denoiser"), py::arg("tuning"))
      .def(py::init<RealConstellation, Denoiser, TuningPolicy>(), py::arg("prior"),
           py::arg("denoiser"), py::arg("tuning"))
      .def("psi", &SeModel::psi, py::arg("sigma_sq"), py::arg("gamma_sq"))
      .def("psi_star", &SeModel::psi_star, py::arg("sigma_sq"))
      .def("psi_star_derivative", &SeModel::psi_star_derivative, py::arg("sigma_sq"))
      .def_property_readonly("real_system", &SeModel::real_system)
      .def_property_readonly("prior_variance", &SeModel::prior_variance);

  py::class_<SeTrace>(m, "SeTrace")
      .def_readonly("sigma_sq", &SeTrace::sigma_sq)
      .def_readonly("gamma_sq", &SeTrace::gamma_sq)
      .def_readonly("beta", &SeTrace::beta)
      .def_readonly("n0", &SeTrace::n0)
      .def_readonly("flagged", &SeTrace::flagged);

  py::class_<FixedPointReport>(m, "FixedPointReport")
      .def_readonly("solutions", &FixedPointReport::solutions)
      .def_readonly("converged_to", &FixedPointReport::converged_to)
      .def_readonly("unique", &FixedPointReport::unique)
      .def_readonly("warning", &FixedPointReport::warning);

  py::class_<BoxRelaxation>(m, "BoxRelaxation")
      .def_readonly("tau", &BoxRelaxation::tau)
      .def_readonly("tau_sq", &BoxRelaxation::tau_sq)
      .def_readonly("objective", &BoxRelaxation::objective)
      .def_readonly("stationarity_residual", &BoxRelaxation::stationarity_residual);

  m.def("run_se", &run_se, py::arg("beta"), py::arg("n0"), py::arg("model"), py::arg("t_max"));
  m.def("fixed_point", &fixed_point, py::arg("beta"), py::arg("n0"), py::arg("model"));
  m.def("mrt", &mrt, py::arg("model"));
  m.def("psi_pam_closed", &psi_pam_closed, py::arg("sigma_sq"), py::arg("m"));
  m.def("psi_qam_closed", &psi_qam_closed, py::arg("sigma_sq"), py::arg("m"));
  m.def("box_relaxation_psi", &box_relaxation_psi, py::arg("tau_sq"));
  m.def("box_relaxation_tau", &box_relaxation_tau, py::arg("beta"), py::arg("n0"));
  m.def("ser_prediction", py::overload_cast<double, const Constellation&>(&ser_prediction),
        py::arg("sigma_sq"), py::arg("constellation"));
  m.def("ser_prediction", py::overload_cast<double, const RealConstellation&>(&ser_prediction),
        py::arg("sigma_sq"), py::arg("constellation"));

  m.def(
      "run_amp",
      [](const Eigen::MatrixXcd& H, const Eigen::VectorXcd& y, double n0, const Denoiser& d,
         const TuningPolicy& policy, const Constellation& prior, int t_max) {
        MimoInstance inst{H, y, {}, {}, n0};
        AmpOptions opt;
        opt.t_max = t_max;
        opt.store_vectors = false;
        return trace_dict(run_amp(inst, d, policy, prior, opt));
      },
      py::arg("H"), py::arg("y"), py::arg("n0"), py::arg("denoiser"), py::arg("policy"),
      py::arg("prior"), py::arg("t_max") = 10,
      "AMP on a complex system y = H s0 + n; returns the iteration trace as a dict.");

  m.def(
      "gen_instance",
      [](int mt, int mr, const Constellation& c, double n0, std::uint64_t seed) {
        const auto inst = gen_instance(mt, mr, c, n0, seed);
        return py::make_tuple(inst.H, inst.y, inst.s0);
      },
      py::arg("mt"), py::arg("mr"), py::arg("constellation"), py::arg("n0"), py::arg("seed"),
      "Returns (H, y, s0).");

  m.def("noise_variance_for_snr", &noise_variance_for_snr, py::arg("snr_db"), py::arg("beta"),
        py::arg("energy"));
  m.def("detectors", [] {
    std::vector<std::string> out;
    for (auto k : all_detectors()) out.emplace_back(detector_label(k));
    return out;
  });

  m.def(
      "ser_sweep",
      [](int mt, int mr, const py::object& prior, const std::vector<std::string>& detectors,
         const std::vector<double>& snr_db, int trials, std::uint64_t seed, int t_max,
         int threads) {
        SweepConfig cfg;
        cfg.mt = mt;
        cfg.mr = mr;
        if (py::isinstance<RealConstellation>(prior))
          cfg.prior = prior.cast<RealConstellation>();
        else
          cfg.prior = prior.cast<Constellation>();
        for (const auto& d : detectors) cfg.detectors.push_back(detector_from(d));
        cfg.snr_db = snr_db;
        cfg.trials = trials;
        cfg.seed = seed;
        cfg.t_max = t_max;
        cfg.threads = threads;
        SerResult res;
        {
          py::gil_scoped_release release;
          res = ser_sweep(cfg);
        }
        py::list rows;
        for (const auto& r : res.rows) {
          py::dict d;
          d["detector"] = r.detector;
          d["snr_db"] = r.snr_db;
          d["n0"] = r.n0;
          d["trials"] = r.trials;
          d["symbols"] = r.symbols;
          d["errors"] = r.errors;
          d["ser"] = r.ser;
          d["ci_low"] = r.ci_low;
          d["ci_high"] = r.ci_high;
          d["se_prediction"] = r.se_prediction ? py::cast(*r.se_prediction) : py::none();
          d["flagged"] = r.flagged;
          rows.append(d);
        }
        return rows;
      },
      py::arg("mt"), py::arg("mr"), py::arg("prior"), py::arg("detectors"), py::arg("snr_db"),
      py::arg("trials") = 1000, py::arg("seed") = 1, py::arg("t_max") = 10,
      py::arg("threads") = 0);

  m.def(
      "decoupling_check",
      [](int mt, int mr, const Constellation& prior, double n0, const Denoiser& d,
         const TuningPolicy& policy, int t_max, int trials, std::uint64_t seed) {
        return report_dict(decoupling_check(mt, mr, prior, n0, d, policy, t_max, trials, seed));
      },
      py::arg("mt"), py::arg("mr"), py::arg("prior"), py::arg("n0"), py::arg("denoiser"),
      py::arg("policy"), py::arg("t_max") = 10, py::arg("trials") = 20, py::arg("seed") = 1);
}
