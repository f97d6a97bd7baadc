#include <yaml-cpp/yaml.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "mlama/cli.hpp"
#include "mlama/special.hpp"

#ifndef MLAMA_VERSION
#define MLAMA_VERSION "unknown"
#endif

namespace mlama::cli {
namespace {

using nlohmann::ordered_json;

constexpr const char* kSnrConvention = "snr_linear = beta * Es / N0 (receive SNR per antenna)";

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8g", v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : ""; }

class Csv {
 public:
  explicit Csv(std::initializer_list<const char*> header) {
    bool first = true;
    for (const char* h : header) {
      out_ << (first ? "" : ",") << h;
      first = false;
    }
    out_ << '\n';
  }
  template <class... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << fields, first = false), ...);
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

SeModel model_for(DetectorKind k, const Prior& prior, TuningMode tuning) {
  return std::visit(
      [&](const auto& p) {
        const auto det = make_amp_detector(k, p, tuning);
        return SeModel(p, det.denoiser, det.policy);
      },
      prior);
}

double ser_for(double sigma_sq, const Prior& prior) {
  return std::visit([&](const auto& p) { return ser_prediction(sigma_sq, p); }, prior);
}

double prior_variance(const Prior& prior) {
  return std::visit([](const auto& p) { return p.moments().variance; }, prior);
}

double prior_energy(const Prior& prior) {
  return std::visit([](const auto& p) { return p.moments().energy; }, prior);
}

RunOutput run_se_mode(const ExperimentConfig& c) {
  const auto prior = c.prior();
  const double beta = c.beta();
  Csv csv({"detector", "beta", "n0", "t", "sigma_sq", "gamma_sq", "ser_prediction"});
  RunOutput out;
  for (auto k : c.detectors) {
    const auto model = model_for(k, prior, c.tuning);
    for (double n0 : c.n0) {
      const auto tr = run_se(beta, n0, model, c.t_max);
      for (std::size_t t = 0; t < tr.sigma_sq.size(); ++t) {
        const std::string g = t < tr.gamma_sq.size() ? num(tr.gamma_sq[t]) : "";
        csv.row(detector_label(k), num(beta), num(n0), t + 1, num(tr.sigma_sq[t]), g,
                num(ser_for(tr.sigma_sq[t], prior)));
      }
      const auto fp = fixed_point(beta, n0, model);
      out.summary.push_back(std::string(detector_label(k)) + " beta=" + short_num(beta) +
                            " N0=" + short_num(n0) + ": sigma^2[T+1]=" +
                            short_num(tr.sigma_sq.back()) + " fixed point=" +
                            short_num(fp.converged_to) + (tr.flagged ? " (tuning flagged)" : ""));
    }
  }
  out.csv = csv.str();
  return out;
}

RunOutput run_fixed_point_mode(const ExperimentConfig& c) {
  const auto prior = c.prior();
  const double beta = c.beta();
  Csv csv({"detector", "beta", "n0", "root", "sigma_sq", "converged_to", "unique", "warning",
           "ser_prediction"});
  RunOutput out;
  for (auto k : c.detectors) {
    const auto model = model_for(k, prior, c.tuning);
    for (double n0 : c.n0) {
      const auto fp = fixed_point(beta, n0, model);
      for (std::size_t i = 0; i < fp.solutions.size(); ++i) {
        const double s = fp.solutions[i];
        csv.row(detector_label(k), num(beta), num(n0), i + 1, num(s),
                s == fp.converged_to ? 1 : 0, fp.unique ? 1 : 0, fp.warning ? 1 : 0,
                num(ser_for(s, prior)));
      }
      if (fp.solutions.empty())
        csv.row(detector_label(k), num(beta), num(n0), 0, num(fp.converged_to), 1, 0, 1,
                std::isfinite(fp.converged_to) ? num(ser_for(fp.converged_to, prior)) : "");
      std::string line = std::string(detector_label(k)) + " beta=" + short_num(beta) +
                         " N0=" + short_num(n0) + ": " + std::to_string(fp.solutions.size()) +
                         " fixed point(s), converged_to=" + short_num(fp.converged_to);
      if (fp.warning) line += " (no sign change; iterated limit)";
      out.summary.push_back(line);
    }
  }
  out.csv = csv.str();
  return out;
}

RunOutput run_mrt_mode(const ExperimentConfig& c) {
  const auto prior = c.prior();
  Csv csv({"detector", "constellation", "tuning", "mrt"});
  RunOutput out;
  for (auto k : c.detectors) {
    const auto model = model_for(k, prior, c.tuning);
    const double v = mrt(model);
    csv.row(detector_label(k), c.constellation, model.tuning().label(), num(v));
    out.summary.push_back(std::string(detector_label(k)) + " " + c.constellation +
                          ": beta_min=" + short_num(v));
  }
  out.csv = csv.str();
  return out;
}

RunOutput run_compare_mode(const ExperimentConfig& c) {
  const auto prior = c.prior();
  const double beta = c.beta();
  const double es = prior_energy(prior);
  const double var = prior_variance(prior);
  Csv csv({"claim", "beta", "n0", "amp_fixed_point", "reference", "abs_diff", "amp_ser",
           "reference_ser"});
  RunOutput out;
  auto emit = [&](const std::string& claim, double n0, double amp, double ref) {
    const double diff = std::abs(amp - ref);
    csv.row(claim, num(beta), num(n0), num(amp), num(ref), num(diff), num(ser_for(amp, prior)),
            num(ser_for(ref, prior)));
    out.summary.push_back(claim + " beta=" + short_num(beta) + " N0=" + short_num(n0) +
                          ": amp=" + short_num(amp) + " reference=" + short_num(ref) +
                          " |diff|=" + short_num(diff));
  };
  for (double n0 : c.n0) {
    // Linear MMSE SIR: positive root of s^2 + (Es - N0 - beta Es) s - N0 Es = 0.
    const double b = es - n0 - beta * es;
    const double mmse = 0.5 * (-b + std::sqrt(b * b + 4.0 * n0 * es));
    emit("gauss~mmse-exact", n0,
         fixed_point(beta, n0, model_for(DetectorKind::Gauss, prior, TuningMode::Optimal))
             .converged_to,
         mmse);
    if (beta < 1.0)
      emit("gauss-zf~zf-exact", n0,
           fixed_point(beta, n0, model_for(DetectorKind::GaussZf, prior, c.tuning)).converged_to,
           n0 / (1.0 - beta));
    emit("gauss-mf~mf-exact", n0,
         fixed_point(beta, n0, model_for(DetectorKind::GaussMf, prior, c.tuning)).converged_to,
         n0 + beta * var);
    if (c.constellation == "BPSK" && beta < 2.0) {
      const auto box = box_relaxation_tau(beta, n0);
      emit("boxclip~box-cvx", n0,
           fixed_point(beta, n0, model_for(DetectorKind::BoxClip, prior, c.tuning)).converged_to,
           box.tau_sq);
    }
  }
  out.csv = csv.str();
  return out;
}

RunOutput run_sim_mode(const ExperimentConfig& c) {
  SweepConfig s;
  s.mt = *c.mt;
  s.mr = *c.mr;
  s.prior = c.prior();
  s.detectors = c.detectors;
  s.tuning = c.tuning;
  s.t_max = c.t_max;
  s.snr_db = c.snr_db;
  s.trials = c.trials;
  s.seed = c.seed;
  s.threads = c.threads;
  s.box_max_iters = c.box_max_iters;
  s.box_tol = c.box_tol;
  const auto res = ser_sweep(s);
  Csv csv({"detector", "snr_db", "trials", "errors", "ser", "ci_low", "ci_high", "se_prediction",
           "n0", "symbols", "flagged"});
  RunOutput out;
  for (const auto& r : res.rows) {
    csv.row(r.detector, num(r.snr_db), r.trials, r.errors, num(r.ser), num(r.ci_low),
            num(r.ci_high), opt_num(r.se_prediction), num(r.n0), r.symbols, r.flagged);
    std::string line = r.detector + " snr=" + short_num(r.snr_db) + "dB: ser=" + short_num(r.ser) +
                       " [" + short_num(r.ci_low) + ", " + short_num(r.ci_high) + "]";
    if (r.se_prediction) line += " limit=" + short_num(*r.se_prediction);
    if (r.flagged) line += " flagged=" + std::to_string(r.flagged);
    out.summary.push_back(line);
  }
  out.csv = csv.str();
  return out;
}

std::string default_output(const ExperimentConfig& c) {
  std::string m(mode_label(c.mode));
  return "mlama_" + m + ".csv";
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  if (p == csv) p += ".meta.json";
  return p;
}

}  // namespace

std::string version() { return MLAMA_VERSION; }

std::string config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["mode"] = mode_label(c.mode);
  if (c.mt) j["mt"] = *c.mt;
  if (c.mr) j["mr"] = *c.mr;
  if (c.beta_value) j["beta"] = *c.beta_value;
  j["constellation"] = c.constellation;
  j["real_mode"] = c.real_mode;
  std::vector<std::string> dets;
  for (auto k : c.detectors) dets.emplace_back(detector_label(k));
  if (!dets.empty()) j["detectors"] = dets;
  j["tuning"] = c.tuning == TuningMode::Matched ? "matched" : "optimal";
  j["t_max"] = c.t_max;
  if (!c.snr_db.empty()) j["snr_db"] = c.snr_db;
  if (c.mode == Mode::Sim) j["trials"] = c.trials;
  if (!c.n0.empty()) j["n0"] = c.n0;
  j["seed"] = c.seed;
  if (!c.output.empty()) j["output"] = c.output;
  if (c.mode == Mode::Sim) {
    j["box_max_iters"] = c.box_max_iters;
    j["box_tol"] = c.box_tol;
  }
  return j.dump();
}

RunOutput run(const ExperimentConfig& c) {
  RunOutput out;
  switch (c.mode) {
    case Mode::Se: out = run_se_mode(c); break;
    case Mode::Sim: out = run_sim_mode(c); break;
    case Mode::Mrt: out = run_mrt_mode(c); break;
    case Mode::FixedPoint: out = run_fixed_point_mode(c); break;
    case Mode::Compare: out = run_compare_mode(c); break;
  }
  ordered_json meta;
  meta["version"] = version();
  meta["mode"] = mode_label(c.mode);
  meta["config"] = ordered_json::parse(config_to_json(c));
  meta["seed"] = c.seed;
  meta["snr_convention"] = kSnrConvention;
  meta["constellation_energy"] = prior_energy(c.prior());
  if (c.mt || c.beta_value) meta["beta"] = c.beta();
  if (c.mode == Mode::Sim) {
    meta["threads"] = resolve_threads(c.threads);
    meta["symbols_per_trial"] = *c.mt;
    meta["confidence_interval"] = "Wilson score, 95%";
  }
  out.json = meta.dump(2) + "\n";
  return out;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mismatched large-MIMO AMP detection: state evolution, thresholds and SER sweeps",
               "mlama"};
  app.set_version_flag("--version", version());

  std::string mode, config_path;
  std::optional<int> mt, mr, t_max, trials, threads, box_max_iters;
  std::optional<double> beta, box_tol;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> constellation, tuning, output, snr_range;
  std::vector<std::string> detectors;
  std::vector<double> snr_db, n0;
  bool real_mode = false, quiet = false;

  app.add_option("mode", mode, "se | sim | mrt | fixed-point | compare (overrides the file)")
      ->check(CLI::IsMember({"se", "sim", "mrt", "fixed-point", "compare"}));
  app.add_option("-c,--config", config_path, "YAML config file")->check(CLI::ExistingFile);
  app.add_option("--mt", mt, "transmit streams");
  app.add_option("--mr", mr, "receive antennas");
  app.add_option("--beta", beta, "system ratio MT/MR (SE-only modes)");
  app.add_option("--constellation", constellation, "BPSK, QPSK, 16QAM, 64QAM, 256QAM, 2PAM, 4PAM");
  auto* real_flag = app.add_flag("--real-mode", real_mode, "assert a real-valued system");
  app.add_option("--detectors,--detector", detectors, "detector labels")->delimiter(',');
  app.add_option("--tuning", tuning, "optimal | matched");
  app.add_option("--t-max", t_max, "AMP / SE iterations");
  app.add_option("--snr-db", snr_db, "SNR points in dB")->delimiter(',');
  app.add_option("--snr-range", snr_range, "inclusive grid start:stop:step in dB");
  app.add_option("--trials", trials, "Monte-Carlo trials per SNR point");
  app.add_option("--n0", n0, "noise variance(s) for SE modes")->delimiter(',');
  app.add_option("--seed", seed, "master seed");
  app.add_option("-o,--output", output, "CSV output path (JSON sidecar alongside)");
  app.add_option("--threads", threads, "worker threads (default: MLAMA_THREADS or all cores)");
  app.add_option("--box-max-iters", box_max_iters, "box detector iteration cap");
  app.add_option("--box-tol", box_tol, "box detector relative objective tolerance");
  app.add_flag("-q,--quiet", quiet, "suppress the per-row summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    std::string text;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot read config file '" + config_path + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    YAML::Node over(YAML::NodeType::Map);
    if (!mode.empty()) over["mode"] = mode;
    if (mt) over["mt"] = *mt;
    if (mr) over["mr"] = *mr;
    if (beta) over["beta"] = *beta;
    if (constellation) over["constellation"] = *constellation;
    if (real_flag->count()) over["real_mode"] = true;
    if (!detectors.empty()) over["detectors"] = detectors;
    if (tuning) over["tuning"] = *tuning;
    if (t_max) over["t_max"] = *t_max;
    if (!snr_db.empty()) over["snr_db"] = snr_db;
    if (snr_range) over["snr_range"] = *snr_range;
    if (trials) over["trials"] = *trials;
    if (!n0.empty()) over["n0"] = n0;
    if (seed) over["seed"] = *seed;
    if (output) over["output"] = *output;
    if (threads) over["threads"] = *threads;
    if (box_max_iters) over["box_max_iters"] = *box_max_iters;
    if (box_tol) over["box_tol"] = *box_tol;
    YAML::Emitter em;
    em << YAML::Flow << over;
    const auto config = parse_config(text, em.c_str());

    const auto result = run(config);
    const std::filesystem::path csv_path =
        config.output.empty() ? default_output(config) : config.output;
    if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
    {
      std::ofstream f(csv_path, std::ios::binary);
      f << result.csv;
      if (!f) throw std::runtime_error("cannot write '" + csv_path.string() + "'");
    }
    const auto meta_path = sidecar_path(csv_path);
    {
      std::ofstream f(meta_path, std::ios::binary);
      f << result.json;
      if (!f) throw std::runtime_error("cannot write '" + meta_path.string() + "'");
    }
    if (!quiet)
      for (const auto& line : result.summary) out << line << '\n';
    out << "wrote " << csv_path.string() << " and " << meta_path.string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace mlama::cli
