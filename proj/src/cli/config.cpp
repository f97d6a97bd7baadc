#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "mlama/cli.hpp"

namespace mlama::cli {
namespace {

const std::set<std::string> kKeys = {
    "mode",   "mt",      "mr",     "beta",        "constellation", "real_mode",
    "detectors", "tuning", "t_max", "snr_db",     "snr_range",     "trials",
    "n0",     "seed",    "output", "threads",     "box_max_iters", "box_tol"};

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::string valid_detector_list() {
  std::string out;
  for (auto k : all_detectors()) {
    if (!out.empty()) out += ", ";
    out += detector_label(k);
  }
  return out;
}

YAML::Node load(const std::string& text, const char* what) {
  YAML::Node node;
  try {
    node = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
  if (node.IsNull()) return YAML::Node(YAML::NodeType::Map);
  if (!node.IsMap()) throw ConfigError(std::string(what) + ": expected a key-value mapping");
  return node;
}

// Aliases accepted on input: detector -> detectors, N0 -> n0.
void normalise_keys(YAML::Node& node) {
  auto rename = [&](const char* from, const char* to) {
    if (!node[from]) return;
    if (node[to]) throw ConfigError(std::string("both '") + from + "' and '" + to + "' given");
    node[to] = node[from];
    node.remove(from);
  };
  rename("detector", "detectors");
  rename("N0", "n0");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!kKeys.count(key)) {
      std::string valid;
      for (const auto& k : kKeys) valid += (valid.empty() ? "" : ", ") + k;
      throw ConfigError("unknown key '" + key + "' (valid keys: " + valid + ")");
    }
  }
}

template <class T>
T scalar_as(const YAML::Node& n, const std::string& key, const char* type) {
  if (!n.IsScalar()) throw ConfigError("key '" + key + "' must be " + type);
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("key '" + key + "' must be " + type + " (got '" + n.Scalar() + "')");
  }
}

std::vector<double> number_list(const YAML::Node& n, const std::string& key) {
  std::vector<double> out;
  if (n.IsSequence()) {
    for (const auto& v : n) out.push_back(scalar_as<double>(v, key, "a number or list of numbers"));
  } else {
    out.push_back(scalar_as<double>(n, key, "a number or list of numbers"));
  }
  for (double v : out)
    if (!std::isfinite(v)) throw ConfigError("key '" + key + "' must contain finite numbers");
  return out;
}

std::vector<std::string> string_list(const YAML::Node& n, const std::string& key) {
  std::vector<std::string> out;
  if (n.IsSequence()) {
    for (const auto& v : n) out.push_back(scalar_as<std::string>(v, key, "a string list"));
  } else {
    // A scalar may itself be a comma-separated list.
    const auto s = scalar_as<std::string>(n, key, "a string or list of strings");
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const auto next = s.find(',', pos);
      auto item = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (!item.empty()) out.push_back(item);
      if (next == std::string::npos) break;
      pos = next + 1;
    }
  }
  return out;
}

std::vector<double> expand_range(const YAML::Node& n) {
  double start, stop, step;
  if (n.IsMap()) {
    for (const auto& kv : n) {
      const auto k = kv.first.as<std::string>();
      if (k != "start" && k != "stop" && k != "step")
        throw ConfigError("snr_range: unknown key '" + k + "' (expected start, stop, step)");
    }
    if (!n["start"] || !n["stop"] || !n["step"])
      throw ConfigError("snr_range needs start, stop and step");
    start = scalar_as<double>(n["start"], "snr_range.start", "a number");
    stop = scalar_as<double>(n["stop"], "snr_range.stop", "a number");
    step = scalar_as<double>(n["step"], "snr_range.step", "a number");
  } else {
    std::vector<double> v;
    if (n.IsScalar()) {
      // "start:stop:step"
      auto s = n.as<std::string>();
      std::replace(s.begin(), s.end(), ':', ',');
      v = number_list(YAML::Load("[" + s + "]"), "snr_range");
    } else {
      v = number_list(n, "snr_range");
    }
    if (v.size() != 3) throw ConfigError("snr_range must be start:stop:step");
    start = v[0], stop = v[1], step = v[2];
  }
  if (!(step > 0.0)) throw ConfigError("snr_range: step must be > 0");
  if (stop < start) throw ConfigError("snr_range: stop must be >= start");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(start + static_cast<double>(i) * step);
  return out;
}

Mode parse_mode(const std::string& s) {
  if (s == "se") return Mode::Se;
  if (s == "sim") return Mode::Sim;
  if (s == "mrt") return Mode::Mrt;
  if (s == "fixed-point") return Mode::FixedPoint;
  if (s == "compare") return Mode::Compare;
  throw ConfigError("unknown mode '" + s + "' (valid modes: se, sim, mrt, fixed-point, compare)");
}

bool is_real_label(const std::string& label) {
  return label == "BPSK" || label.find("PAM") != std::string::npos;
}

}  // namespace

std::string_view mode_label(Mode m) {
  switch (m) {
    case Mode::Se: return "se";
    case Mode::Sim: return "sim";
    case Mode::Mrt: return "mrt";
    case Mode::FixedPoint: return "fixed-point";
    case Mode::Compare: return "compare";
  }
  return "?";
}

Prior constellation_by_label(const std::string& raw) {
  const auto label = upper(raw);
  if (label == "BPSK") {
    const auto p = make_pam(2);
    return RealConstellation(p.symbols(), p.probabilities(), "BPSK");
  }
  if (label == "QPSK") return make_qam(4);
  try {
    if (label.size() > 3 && label.ends_with("QAM")) return make_qam(std::stoi(label));
    if (label.size() > 3 && label.ends_with("PAM")) return make_pam(std::stoi(label));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("constellation '" + raw + "': " + e.what());
  } catch (const std::out_of_range&) {
  }
  throw ConfigError("unknown constellation '" + raw +
                    "' (valid: BPSK, QPSK, 16QAM, 64QAM, 256QAM, 2PAM, 4PAM, 8PAM)");
}

double ExperimentConfig::beta() const {
  if (beta_value) return *beta_value;
  if (mt && mr) return static_cast<double>(*mt) / *mr;
  throw ConfigError("beta is undefined: give beta or mt and mr");
}

Prior ExperimentConfig::prior() const { return constellation_by_label(constellation); }

ExperimentConfig parse_config(const std::string& yaml_text, const std::string& overrides) {
  auto doc = load(yaml_text, "config");
  auto over = load(overrides, "flags");
  normalise_keys(doc);
  normalise_keys(over);
  // An SNR grid given on one side replaces the other side's grid entirely.
  if (over["snr_db"] || over["snr_range"]) {
    doc.remove("snr_db");
    doc.remove("snr_range");
  }
  for (const auto& kv : over) doc[kv.first.as<std::string>()] = kv.second;

  ExperimentConfig c;
  if (!doc["mode"]) throw ConfigError("missing 'mode' (se, sim, mrt, fixed-point, compare)");
  c.mode = parse_mode(scalar_as<std::string>(doc["mode"], "mode", "a string"));

  auto get_int = [&](const char* key, int min) -> std::optional<int> {
    if (!doc[key]) return std::nullopt;
    const int v = scalar_as<int>(doc[key], key, "an integer");
    if (v < min)
      throw ConfigError(std::string("key '") + key + "' must be >= " + std::to_string(min));
    return v;
  };
  c.mt = get_int("mt", 1);
  c.mr = get_int("mr", 1);
  if (c.mt.has_value() != c.mr.has_value()) throw ConfigError("mt and mr must be given together");
  if (doc["beta"]) {
    const double b = scalar_as<double>(doc["beta"], "beta", "a number");
    if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError("beta must be > 0");
    if (c.mt) throw ConfigError("give either beta or mt/mr, not both");
    if (c.mode == Mode::Sim) throw ConfigError("sim mode needs mt and mr, not beta");
    c.beta_value = b;
  }

  if (doc["constellation"]) {
    const auto label = scalar_as<std::string>(doc["constellation"], "constellation", "a string");
    const auto prior = constellation_by_label(label);
    c.constellation = std::visit([](const auto& p) { return p.label(); }, prior);
  }
  c.real_mode = is_real_label(c.constellation);
  if (doc["real_mode"]) {
    const bool rm = scalar_as<bool>(doc["real_mode"], "real_mode", "a boolean");
    if (rm != c.real_mode)
      throw ConfigError("constellation " + c.constellation + (c.real_mode ? " is real-valued" : " is complex-valued") +
                        "; real_mode: " + (rm ? "true" : "false") + " does not match");
  }

  if (doc["detectors"]) {
    for (const auto& label : string_list(doc["detectors"], "detectors")) {
      const auto k = parse_detector(label);
      if (!k)
        throw ConfigError("unknown detector '" + label + "' (valid: " + valid_detector_list() + ")");
      if (std::find(c.detectors.begin(), c.detectors.end(), *k) == c.detectors.end())
        c.detectors.push_back(*k);
    }
  }
  if (doc["tuning"]) {
    const auto t = scalar_as<std::string>(doc["tuning"], "tuning", "a string");
    if (t == "optimal")
      c.tuning = TuningMode::Optimal;
    else if (t == "matched")
      c.tuning = TuningMode::Matched;
    else
      throw ConfigError("unknown tuning '" + t + "' (valid: optimal, matched)");
  }
  if (auto v = get_int("t_max", 1)) c.t_max = *v;
  if (auto v = get_int("trials", 1)) c.trials = *v;
  if (auto v = get_int("threads", 0)) c.threads = *v;
  if (auto v = get_int("box_max_iters", 1)) c.box_max_iters = *v;
  if (doc["box_tol"]) {
    c.box_tol = scalar_as<double>(doc["box_tol"], "box_tol", "a number");
    if (!(c.box_tol > 0.0)) throw ConfigError("box_tol must be > 0");
  }
  if (doc["seed"]) c.seed = scalar_as<std::uint64_t>(doc["seed"], "seed", "a nonnegative integer");
  if (doc["output"]) c.output = scalar_as<std::string>(doc["output"], "output", "a path");

  if (doc["snr_db"] && doc["snr_range"]) throw ConfigError("give either snr_db or snr_range");
  if (doc["snr_db"]) c.snr_db = number_list(doc["snr_db"], "snr_db");
  if (doc["snr_range"]) c.snr_db = expand_range(doc["snr_range"]);
  if (doc["n0"]) {
    c.n0 = number_list(doc["n0"], "n0");
    for (double v : c.n0)
      if (v < 0.0) throw ConfigError("n0 must be >= 0");
  }

  // Mode-specific requirements.
  const bool se_like = c.mode == Mode::Se || c.mode == Mode::FixedPoint || c.mode == Mode::Compare;
  if (c.mode == Mode::Sim) {
    if (!c.mt) throw ConfigError("sim mode needs mt and mr");
    if (c.snr_db.empty()) throw ConfigError("sim mode needs snr_db or snr_range");
    if (c.detectors.empty()) throw ConfigError("sim mode needs at least one detector");
    if (!c.n0.empty()) throw ConfigError("sim mode sets N0 from the SNR grid; drop 'n0'");
  }
  if (se_like) {
    c.beta();  // throws when undefined
    if (c.n0.empty()) throw ConfigError(std::string(mode_label(c.mode)) + " mode needs n0");
  }
  if (c.mode == Mode::Se || c.mode == Mode::FixedPoint || c.mode == Mode::Mrt) {
    if (c.detectors.empty())
      throw ConfigError(std::string(mode_label(c.mode)) + " mode needs at least one detector");
    for (auto k : c.detectors)
      if (!is_amp_detector(k))
        throw ConfigError(std::string(mode_label(c.mode)) + " mode needs AMP detectors (lama, gauss, "
                          "gauss-zf, gauss-mf, hypercube, boxclip); got '" +
                          std::string(detector_label(k)) + "'");
  }
  if (c.mode == Mode::Compare && !c.detectors.empty())
    throw ConfigError("compare mode evaluates a fixed set of equivalences; drop 'detectors'");

  for (auto k : c.detectors) {
    if (k == DetectorKind::ZfExact && (c.mt || c.beta_value) && c.beta() > 1.0)
      throw ConfigError("zf-exact needs beta <= 1 (got beta = " + std::to_string(c.beta()) + ")");
    if (k == DetectorKind::BoxCvx && c.constellation != "QPSK" && c.constellation != "BPSK")
      throw ConfigError("box-cvx supports QPSK and BPSK only (got " + c.constellation + ")");
  }
  return c;
}

}  // namespace mlama::cli
