#include "rfusion/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>

#include "rfusion/error.hpp"
#include "rfusion/text.hpp"

namespace rfusion {

namespace {

struct Key {
  std::string section, name;
  std::function<void(RunConfig&, std::string_view, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
std::string num(T v) {
  if constexpr (std::is_floating_point_v<T>) {
    return format_number(static_cast<double>(v));
  } else {
    return format_number(static_cast<std::uint64_t>(v));
  }
}

std::vector<double> doubles(std::string_view v, const std::string& what) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (auto t : split(v, ',')) out.push_back(parse_double(t, what));
  return out;
}

std::vector<std::size_t> sizes(std::string_view v, const std::string& what) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  for (auto t : split(v, ',')) out.push_back(parse_uint(t, what));
  return out;
}

std::size_t size_value(std::string_view v, const std::string& what) { return parse_uint(v, what); }

template <typename E, typename P>
E enum_value(std::string_view v, const std::string& what, P parse) {
  try {
    return parse(trim(v));
  } catch (const Error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

std::string damaged_sets_text(const std::vector<std::vector<std::size_t>>& sets) {
  std::string out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (i) out += "; ";
    out += damaged_set_name(sets[i]);
  }
  return out.empty() ? "none" : out;
}

// Placeholder for "each": one set per modality, resolved once L is known.
constexpr std::size_t kEachModality = static_cast<std::size_t>(-1);

std::vector<std::vector<std::size_t>> parse_damaged(std::string_view v, const std::string& what) {
  std::vector<std::vector<std::size_t>> out;
  v = trim(v);
  if (v.empty() || v == "none") return out;
  if (v == "each") return {{kEachModality}};
  for (auto item : split(v, ';')) {
    std::vector<std::size_t> set;
    for (auto t : split(item, '+')) {
      const auto k = parse_uint(t, what);
      if (k == 0) throw ConfigError(what + ": modalities are numbered from 1");
      set.push_back(static_cast<std::size_t>(k - 1));
    }
    out.push_back(std::move(set));
  }
  return out;
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto add = [&](std::string s, std::string n, auto set, auto get) {
      k.push_back({std::move(s), std::move(n), set, get});
    };
    using V = std::string_view;
    using W = const std::string&;
    using C = const RunConfig&;
    add("run", "seed", [](RunConfig& c, V v, W w) { c.seed = parse_uint(v, w); }, [](C c) { return num(c.seed); });

    add("scenario", "modalities", [](RunConfig& c, V v, W w) { c.scenario.modalities = size_value(v, w); },
        [](C c) { return num(c.scenario.modalities); });
    add("scenario", "classes", [](RunConfig& c, V v, W w) { c.scenario.classes = size_value(v, w); },
        [](C c) { return num(c.scenario.classes); });
    add("scenario", "latent_dim", [](RunConfig& c, V v, W w) { c.scenario.latent_dim = size_value(v, w); },
        [](C c) { return num(c.scenario.latent_dim); });
    add("scenario", "private_dims", [](RunConfig& c, V v, W w) { c.scenario.private_dims = sizes(v, w); },
        [](C c) { return join_numbers(c.scenario.private_dims, ", "); });
    add("scenario", "obs_dims", [](RunConfig& c, V v, W w) { c.scenario.obs_dims = sizes(v, w); },
        [](C c) { return join_numbers(c.scenario.obs_dims, ", "); });
    add("scenario", "view_noise", [](RunConfig& c, V v, W w) { c.scenario.view_noise = doubles(v, w); },
        [](C c) { return join_numbers(c.scenario.view_noise, ", "); });
    add("scenario", "obs_noise", [](RunConfig& c, V v, W w) { c.scenario.obs_noise = parse_double(v, w); },
        [](C c) { return num(c.scenario.obs_noise); });
    add("scenario", "n_train", [](RunConfig& c, V v, W w) { c.scenario.n_train = size_value(v, w); },
        [](C c) { return num(c.scenario.n_train); });
    add("scenario", "n_test", [](RunConfig& c, V v, W w) { c.scenario.n_test = size_value(v, w); },
        [](C c) { return num(c.scenario.n_test); });
    add("scenario", "class_separation",
        [](RunConfig& c, V v, W w) { c.scenario.class_separation = parse_double(v, w); },
        [](C c) { return num(c.scenario.class_separation); });
    add("scenario", "private_separation",
        [](RunConfig& c, V v, W w) { c.scenario.private_separation = parse_double(v, w); },
        [](C c) { return num(c.scenario.private_separation); });
    add("scenario", "nonlinear", [](RunConfig& c, V v, W w) { c.scenario.nonlinear = parse_bool(v, w); },
        [](C c) { return std::string(c.scenario.nonlinear ? "true" : "false"); });

    add("model", "hidden_dim", [](RunConfig& c, V v, W w) { c.arch.hidden_dim = size_value(v, w); },
        [](C c) { return num(c.arch.hidden_dim); });
    add("model", "feature_dim", [](RunConfig& c, V v, W w) { c.arch.feature_dim = size_value(v, w); },
        [](C c) { return num(c.arch.feature_dim); });
    add("model", "gen_width", [](RunConfig& c, V v, W w) { c.arch.gen_width = size_value(v, w); },
        [](C c) { return num(c.arch.gen_width); });
    add("model", "gen_layers", [](RunConfig& c, V v, W w) { c.arch.gen_layers = size_value(v, w); },
        [](C c) { return num(c.arch.gen_layers); });
    add("model", "critic_width", [](RunConfig& c, V v, W w) { c.arch.critic_width = size_value(v, w); },
        [](C c) { return num(c.arch.critic_width); });
    add("model", "critic_layers", [](RunConfig& c, V v, W w) { c.arch.critic_layers = size_value(v, w); },
        [](C c) { return num(c.arch.critic_layers); });

    add("train", "epochs", [](RunConfig& c, V v, W w) { c.epochs = size_value(v, w); },
        [](C c) { return num(c.epochs); });
    add("train", "gamma1", [](RunConfig& c, V v, W w) { c.weights.gamma1 = parse_double(v, w); },
        [](C c) { return num(c.weights.gamma1); });
    add("train", "gamma2", [](RunConfig& c, V v, W w) { c.weights.gamma2 = parse_double(v, w); },
        [](C c) { return num(c.weights.gamma2); });
    add("train", "gamma3", [](RunConfig& c, V v, W w) { c.weights.gamma3 = parse_double(v, w); },
        [](C c) { return num(c.weights.gamma3); });
    add("train", "clamp_box", [](RunConfig& c, V v, W w) { c.weights.clamp_box = parse_double(v, w); },
        [](C c) { return num(c.weights.clamp_box); });
    add("train", "mu_g", [](RunConfig& c, V v, W w) { c.weights.mu_g = parse_double(v, w); },
        [](C c) { return num(c.weights.mu_g); });
    add("train", "mu_d", [](RunConfig& c, V v, W w) { c.weights.mu_d = parse_double(v, w); },
        [](C c) { return num(c.weights.mu_d); });
    add("train", "batch_size", [](RunConfig& c, V v, W w) { c.weights.batch_size = size_value(v, w); },
        [](C c) { return num(c.weights.batch_size); });
    add("train", "selection_step",
        [](RunConfig& c, V v, W w) {
          const auto t = trim(v);
          if (t == "proximal") c.weights.selection_step = SelectionStep::proximal;
          else if (t == "subgradient") c.weights.selection_step = SelectionStep::subgradient;
          else throw ConfigError(w + ": expected proximal or subgradient, got '" + std::string(t) + "'");
        },
        [](C c) {
          return std::string(c.weights.selection_step == SelectionStep::proximal ? "proximal" : "subgradient");
        });

    add("train", "optimizer",
        [](RunConfig& c, V v, W w) {
          const auto t = trim(v);
          if (t == "sgd") c.weights.optimizer = Optimizer::sgd;
          else if (t == "adam") c.weights.optimizer = Optimizer::adam;
          else throw ConfigError(w + ": expected sgd or adam, got '" + std::string(t) + "'");
        },
        [](C c) { return std::string(c.weights.optimizer == Optimizer::adam ? "adam" : "sgd"); });

    add("fusion", "rho",
        [](RunConfig& c, V v, W w) {
          if (trim(v) == "estimate") {
            c.estimate_rho = true;
          } else {
            c.estimate_rho = false;
            c.rho = parse_double(v, w);
          }
        },
        [](C c) { return c.estimate_rho ? std::string("estimate") : num(c.rho); });
    add("fusion", "renormalize", [](RunConfig& c, V v, W w) { c.renormalize = parse_bool(v, w); },
        [](C c) { return std::string(c.renormalize ? "true" : "false"); });

    add("failure", "detector",
        [](RunConfig& c, V v, W w) { c.detector = enum_value<DetectorKind>(v, w, parse_detector); },
        [](C c) { return std::string(detector_name(c.detector)); });
    add("failure", "linkage",
        [](RunConfig& c, V v, W w) { c.linkage = enum_value<Linkage>(v, w, parse_linkage); },
        [](C c) { return std::string(linkage_name(c.linkage)); });
    add("failure", "tree_points", [](RunConfig& c, V v, W w) { c.tree_points = size_value(v, w); },
        [](C c) { return num(c.tree_points); });
    add("failure", "calibration_holdout",
        [](RunConfig& c, V v, W w) { c.calibration_holdout = parse_double(v, w); },
        [](C c) { return num(c.calibration_holdout); });
    add("failure", "calibration_samples",
        [](RunConfig& c, V v, W w) { c.calibration_samples = size_value(v, w); },
        [](C c) { return num(c.calibration_samples); });
    add("failure", "mode",
        [](RunConfig& c, V v, W w) { c.failure_mode = enum_value<FailureMode>(v, w, parse_failure_mode); },
        [](C c) { return std::string(failure_mode_name(c.failure_mode)); });
    add("failure", "calibration_snr", [](RunConfig& c, V v, W w) { c.calibration_snr = doubles(v, w); },
        [](C c) { return join_numbers(c.calibration_snr, ", "); });

    add("evaluate", "snr_grid", [](RunConfig& c, V v, W w) { c.snr_grid = doubles(v, w); },
        [](C c) { return join_numbers(c.snr_grid, ", "); });
    add("evaluate", "damaged", [](RunConfig& c, V v, W w) { c.damaged_sets = parse_damaged(v, w); },
        [](C c) { return damaged_sets_text(c.damaged_sets); });
    add("evaluate", "reconstruct", [](RunConfig& c, V v, W w) { c.reconstruct = parse_bool(v, w); },
        [](C c) { return std::string(c.reconstruct ? "true" : "false"); });
    add("evaluate", "threads", [](RunConfig& c, V v, W w) { c.threads = size_value(v, w); },
        [](C c) { return num(c.threads); });

    add("concat", "epochs", [](RunConfig& c, V v, W w) { c.concat.epochs = size_value(v, w); },
        [](C c) { return num(c.concat.epochs); });
    add("concat", "batch_size", [](RunConfig& c, V v, W w) { c.concat.batch_size = size_value(v, w); },
        [](C c) { return num(c.concat.batch_size); });
    add("concat", "learning_rate", [](RunConfig& c, V v, W w) { c.concat.learning_rate = parse_double(v, w); },
        [](C c) { return num(c.concat.learning_rate); });

    add("toyshapes", "samples", [](RunConfig& c, V v, W w) { c.toy.samples = size_value(v, w); },
        [](C c) { return num(c.toy.samples); });
    add("toyshapes", "eval_samples", [](RunConfig& c, V v, W w) { c.toy.eval_samples = size_value(v, w); },
        [](C c) { return num(c.toy.eval_samples); });
    add("toyshapes", "steps", [](RunConfig& c, V v, W w) { c.toy.steps = size_value(v, w); },
        [](C c) { return num(c.toy.steps); });
    add("toyshapes", "batch", [](RunConfig& c, V v, W w) { c.toy.batch = size_value(v, w); },
        [](C c) { return num(c.toy.batch); });
    add("toyshapes", "width", [](RunConfig& c, V v, W w) { c.toy.width = size_value(v, w); },
        [](C c) { return num(c.toy.width); });
    add("toyshapes", "layers", [](RunConfig& c, V v, W w) { c.toy.layers = size_value(v, w); },
        [](C c) { return num(c.toy.layers); });
    add("toyshapes", "projections", [](RunConfig& c, V v, W w) { c.toy.projections = size_value(v, w); },
        [](C c) { return num(c.toy.projections); });
    add("toyshapes", "learning_rate", [](RunConfig& c, V v, W w) { c.toy.learning_rate = parse_double(v, w); },
        [](C c) { return num(c.toy.learning_rate); });
    add("toyshapes", "epsilon", [](RunConfig& c, V v, W w) { c.toy.epsilon = parse_double(v, w); },
        [](C c) { return num(c.toy.epsilon); });
    add("toyshapes", "grid", [](RunConfig& c, V v, W w) { c.toy.grid = size_value(v, w); },
        [](C c) { return num(c.toy.grid); });
    return k;
  }();
  return table;
}

const std::set<std::string>& required_keys() {
  static const std::set<std::string> r{"scenario.modalities", "scenario.classes"};
  return r;
}

// Per-modality lists left unset follow the number of modalities.
template <typename T>
std::vector<T> cycled(std::initializer_list<T> base, std::size_t n) {
  std::vector<T> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(base.begin()[i % base.size()]);
  return out;
}

}  // namespace

std::string damaged_set_name(const std::vector<std::size_t>& set) {
  std::string out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i) out += '+';
    out += std::to_string(set[i] + 1);
  }
  return out;
}

void RunConfig::validate() const {
  scenario.validate();
  try {
    arch.validate();
    weights.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("fusion.rho must lie in [0, 1]");
  if (!(calibration_holdout > 0.0 && calibration_holdout < 1.0)) {
    throw ConfigError("failure.calibration_holdout must lie strictly between 0 and 1");
  }
  if (tree_points < 2) throw ConfigError("failure.tree_points must be at least 2");
  if (calibration_samples == 0) throw ConfigError("failure.calibration_samples must be positive");
  for (double s : calibration_snr) {
    if (!std::isfinite(s)) throw ConfigError("failure.calibration_snr entries must be finite");
  }
  for (double s : snr_grid) {
    if (s == -INFINITY) throw ConfigError("evaluate.snr_grid: -inf is not a usable SNR");
  }
  for (const auto& set : damaged_sets) {
    if (set.empty()) throw ConfigError("evaluate.damaged: empty modality set");
    std::set<std::size_t> seen;
    for (auto l : set) {
      if (l >= scenario.modalities) {
        throw ConfigError("evaluate.damaged: modality " + std::to_string(l + 1) + " does not exist (L = " +
                          std::to_string(scenario.modalities) + ")");
      }
      if (!seen.insert(l).second) throw ConfigError("evaluate.damaged: modality listed twice in a set");
    }
    if (set.size() >= scenario.modalities) {
      throw ConfigError("evaluate.damaged: at least one modality must stay intact");
    }
  }
  if (concat.epochs == 0 || concat.batch_size == 0 || !(concat.learning_rate > 0.0)) {
    throw ConfigError("concat: epochs, batch_size and learning_rate must be positive");
  }
  if (toy.samples < 2 || toy.eval_samples == 0 || toy.batch == 0 || toy.width == 0 || toy.layers < 2 ||
      toy.projections == 0 || toy.grid < 2 || !(toy.learning_rate > 0.0) || !(toy.epsilon > 0.0 && toy.epsilon < 1.0)) {
    throw ConfigError("toyshapes: sizes must be positive, layers >= 2, epsilon in (0, 1)");
  }
}

RunConfig parse_config(std::string_view text, std::string_view origin) {
  RunConfig cfg;
  cfg.snr_grid = {INFINITY, 20, 10, 5, 0};
  std::set<std::string> seen;
  std::string section;
  std::size_t line_no = 0;
  const std::string where(origin);
  for (auto raw : split(text, '\n')) {
    ++line_no;
    auto line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    const std::string at = where + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(at + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const auto& k : keys()) known = known || k.section == section;
      if (!known) throw ConfigError(at + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(at + ": expected key = value");
    if (section.empty()) throw ConfigError(at + ": key outside of any [section]");
    const std::string name(trim(line.substr(0, eq)));
    const std::string full = section + "." + name;
    const Key* key = nullptr;
    for (const auto& k : keys())
      if (k.section == section && k.name == name) key = &k;
    if (!key) throw ConfigError(at + ": unknown key '" + full + "'");
    if (!seen.insert(full).second) throw ConfigError(at + ": duplicate key '" + full + "'");
    key->set(cfg, line.substr(eq + 1), full);
  }
  for (const auto& r : required_keys()) {
    if (!seen.count(r)) throw ConfigError(where + ": missing required key '" + r + "'");
  }

  auto& sc = cfg.scenario;
  const std::size_t L = sc.modalities;
  if (!seen.count("scenario.obs_dims")) sc.obs_dims = cycled<std::size_t>({64, 48, 80}, L);
  if (!seen.count("scenario.view_noise")) sc.view_noise = cycled<double>({0.8, 1.0, 1.2}, L);
  if (!seen.count("scenario.private_dims")) sc.private_dims.assign(L, 0);
  if (!seen.count("evaluate.damaged") ||
      (cfg.damaged_sets.size() == 1 && cfg.damaged_sets[0] == std::vector<std::size_t>{kEachModality})) {
    cfg.damaged_sets.clear();
    for (std::size_t l = 0; l < L; ++l) cfg.damaged_sets.push_back({l});
  }
  sc.seed = cfg.seed;
  cfg.arch.obs_dims = sc.obs_dims;
  cfg.arch.classes = sc.classes;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config(text, path.string());
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& k : keys()) {
    if (k.section != section) {
      if (!section.empty()) out += '\n';
      section = k.section;
      out += "[" + section + "]\n";
    }
    out += k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

}  // namespace rfusion
