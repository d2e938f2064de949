#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "geomot/core.hpp"
#include "geomot/datasets.hpp"
#include "geomot/geodesic.hpp"
#include "geomot/metric.hpp"
#include "geomot/numerics.hpp"
#include "geomot/vae.hpp"

namespace geomot::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline const char* kUsage =
    "usage: geomot <command> [options]\n"
    "\n"
    "commands:\n"
    "  gen <jc|grasp|s2dof|circle|multisol> --out DIR [--n N] [--noise S]\n"
    "      [--samples T] [--seed S] [--targets K] [--starts K] [--goals K]\n"
    "      [--chain L1,L2]\n"
    "  train <task|joint> --data FILE --out DIR [--epochs N] [--batch N]\n"
    "      [--lr X] [--latent-dim D] [--rbf-k K] [--seed S] [--chain L1,L2]\n"
    "  plan --model FILE --start Z --goal Z --out DIR [--ambient]\n"
    "      [--obstacle CX,CY[,CZ],R,ZETA[,R_EXTRA]]... [--samples T]\n"
    "      [--grid-res A,B] [--pad F] [--graph-cache FILE]\n"
    "  render --model FILE --out DIR [--res N] [--sigma] [--data FILE]\n"
    "      [--geodesic FILE] [--pad F] [--volume-res N]\n"
    "  eval <jacobians|normalization|psd|dijkstra|roundtrip|all>\n"
    "      --out DIR [--model FILE] [--seed S] [--points N]\n"
    "\n"
    "Any configuration key may be set in a --config FILE (key = value lines)\n"
    "or directly as --<dotted.key> VALUE; command-line values win.\n";

// ---------------------------------------------------------------------------
// Flat key=value configuration with a closed key set per command.
// ---------------------------------------------------------------------------

struct Config {
  std::map<std::string, std::string> values;

  void declare(const std::string& key, const std::string& def) { values[key] = def; }

  void set(const std::string& key, const std::string& value) {
    const auto it = values.find(key);
    if (it == values.end()) throw UsageError("unknown configuration key '" + key + "'");
    it->second = value;
  }

  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot open config file: " + path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
      ++n;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto strip = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      if (strip(line).empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError("config " + path + " line " + std::to_string(n) +
                         ": expected key = value");
      set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
  }

  const std::string& str(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw UsageError("unknown configuration key '" + key + "'");
    return it->second;
  }

  long long integer(const std::string& key) const {
    const std::string& s = str(key);
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty())
      throw UsageError("key '" + key + "': expected integer, got '" + s + "'");
    return v;
  }

  double real(const std::string& key) const {
    const std::string& s = str(key);
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + s.size() || s.empty() || !std::isfinite(v))
      throw UsageError("key '" + key + "': expected number, got '" + s + "'");
    return v;
  }

  bool flag(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw UsageError("key '" + key + "': expected boolean, got '" + s + "'");
  }

  // Sorted key=value dump; written next to every artifact.
  std::string echo() const {
    std::string out;
    for (const auto& [k, v] : values) out += k + " = " + v + "\n";
    return out;
  }
};

// ---------------------------------------------------------------------------
// Argument scanning shared by all commands.
// ---------------------------------------------------------------------------

struct ParsedArgs {
  std::string positional;
  std::map<std::string, std::string> special;
  std::vector<std::string> obstacles;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string config_file;
};

inline ParsedArgs parse_args(const std::vector<std::string>& args,
                             const std::map<std::string, std::string>& aliases,
                             const std::set<std::string>& special_names,
                             const std::set<std::string>& switch_flags,
                             bool wants_positional) {
  ParsedArgs p;
  std::size_t i = 0;
  const auto value_of = [&](const std::string& flag) {
    if (i + 1 >= args.size()) throw UsageError("flag --" + flag + " needs a value");
    return args[++i];
  };
  for (; i < args.size(); ++i) {
    const std::string& tok = args[i];
    if (tok.rfind("--", 0) != 0) {
      if (!wants_positional || !p.positional.empty())
        throw UsageError("unexpected argument '" + tok + "'");
      p.positional = tok;
      continue;
    }
    std::string name = tok.substr(2);
    std::string inline_value;
    bool has_inline = false;
    const std::size_t eq = name.find('=');
    if (eq != std::string::npos) {
      inline_value = name.substr(eq + 1);
      name = name.substr(0, eq);
      has_inline = true;
    }
    const auto take = [&] { return has_inline ? inline_value : value_of(name); };
    if (name == "config") {
      p.config_file = take();
    } else if (name == "obstacle" && special_names.count("obstacle")) {
      p.obstacles.push_back(take());
    } else if (special_names.count(name)) {
      p.special[name] = take();
    } else if (switch_flags.count(name)) {
      const auto it = aliases.find(name);
      p.overrides.emplace_back(it->second, has_inline ? inline_value : "true");
    } else if (aliases.count(name)) {
      p.overrides.emplace_back(aliases.at(name), take());
    } else if (name.find('.') != std::string::npos) {
      p.overrides.emplace_back(name, take());
    } else {
      throw UsageError("unknown flag --" + name);
    }
  }
  return p;
}

inline void apply(Config& cfg, const ParsedArgs& p) {
  if (!p.config_file.empty()) cfg.load_file(p.config_file);
  for (const auto& [k, v] : p.overrides) cfg.set(k, v);
}

inline std::string require_special(const ParsedArgs& p, const std::string& name) {
  const auto it = p.special.find(name);
  if (it == p.special.end()) throw UsageError("missing required --" + name);
  return it->second;
}

// ---------------------------------------------------------------------------
// Small shared helpers.
// ---------------------------------------------------------------------------

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     t0)
        .count();
  }
};

inline std::string fmt_short(double v) { return data::detail::fmt_csv(v); }

inline Vec parse_vec(const std::string& s, const std::string& what) {
  std::vector<double> vals;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string field =
        s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const char* begin = field.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + field.size() || field.empty() || !std::isfinite(v))
      throw UsageError(what + ": bad number '" + field + "' in '" + s + "'");
    vals.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  Vec v(Eigen::Index(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) v[Eigen::Index(i)] = vals[i];
  return v;
}

inline std::vector<double> parse_lengths(const std::string& s) {
  const Vec v = parse_vec(s, "chain lengths");
  std::vector<double> out(std::size_t(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[std::size_t(i)] = v[i];
  return out;
}

inline metric::Obstacle parse_obstacle(const std::string& s, int dim) {
  const Vec v = parse_vec(s, "--obstacle");
  if (v.size() != dim + 2 && v.size() != dim + 3)
    throw UsageError("--obstacle '" + s + "': expected " + std::to_string(dim + 2) +
                     " or " + std::to_string(dim + 3) + " comma-separated values for a " +
                     std::to_string(dim) + "-dimensional workspace");
  const double r_extra = v.size() == dim + 3 ? v[dim + 2] : 0.0;
  try {
    return metric::Obstacle::make(v.head(dim), v[dim], v[dim + 1], r_extra);
  } catch (const std::invalid_argument& e) {
    throw UsageError("--obstacle '" + s + "': " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << content;
  if (!os) throw IoError("write failed: " + path);
}

inline std::string prepare_out_dir(const ParsedArgs& p, const Config& cfg) {
  const std::string out = require_special(p, "out");
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
  write_text(out + "/config.txt", cfg.echo());
  return out;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

inline int cmd_gen(const std::vector<std::string>& args, std::ostream& out) {
  const std::map<std::string, std::string> aliases = {
      {"n", "gen.n"},           {"noise", "gen.noise"},   {"samples", "gen.samples"},
      {"seed", "seed"},         {"targets", "gen.targets"}, {"starts", "gen.starts"},
      {"goals", "gen.goals"},   {"chain", "chain.lengths"}};
  const auto p = parse_args(args, aliases, {"out"}, {}, true);
  if (p.positional.empty()) throw UsageError("gen: missing task name");

  Config cfg;
  cfg.declare("seed", "0");
  cfg.declare("gen.n", "5");
  cfg.declare("gen.noise", "0.005");
  cfg.declare("gen.samples", "200");
  cfg.declare("gen.targets", "1");
  cfg.declare("gen.starts", "3");
  cfg.declare("gen.goals", "3");
  cfg.declare("chain.lengths", "1.0,1.0");
  apply(cfg, p);

  const std::string task = p.positional;
  Rng rng(std::uint64_t(cfg.integer("seed")));
  const int n = int(cfg.integer("gen.n"));
  const int samples = int(cfg.integer("gen.samples"));
  const double noise = cfg.real("gen.noise");

  data::TrajectorySet ts;
  if (task == "jc") {
    ts = data::gen_jc(n, noise, rng, samples);
  } else if (task == "grasp") {
    ts = data::gen_grasp(n, noise, rng, samples, int(cfg.integer("gen.targets")));
  } else if (task == "s2dof" || task == "circle") {
    const auto chain = kin::PlanarChain::make(parse_lengths(cfg.str("chain.lengths")));
    ts = task == "s2dof" ? data::gen_s2dof(n, chain, rng, samples)
                         : data::gen_circle(n, chain, rng, samples);
  } else if (task == "multisol") {
    ts = data::gen_multisolution(int(cfg.integer("gen.starts")),
                                 int(cfg.integer("gen.goals")), rng, samples);
  } else {
    throw UsageError("gen: unknown task '" + task + "'");
  }

  const std::string dir = prepare_out_dir(p, cfg);
  const std::string csv = dir + "/data.csv";
  {
    std::ostringstream body;
    body << "# geomot gen " << task << " seed=" << cfg.str("seed") << " version="
         << kVersion << "\n";
    const std::string tmp = csv + ".tmp";
    data::write_csv(tmp, ts);
    body << read_file_bytes(tmp);
    std::filesystem::remove(tmp);
    write_text(csv, body.str());
  }
  out << "wrote " << csv << " (" << ts.trajs.size() << " trajectories, "
      << ts.total_samples() << " samples)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline nets::TrainConfig train_config(const Config& cfg) {
  nets::TrainConfig tc;
  tc.epochs = int(cfg.integer("train.epochs"));
  tc.batch = int(cfg.integer("train.batch"));
  tc.lr = cfg.real("train.lr");
  tc.adam_beta1 = cfg.real("train.adam_beta1");
  tc.adam_beta2 = cfg.real("train.adam_beta2");
  tc.adam_eps = cfg.real("train.adam_eps");
  tc.kl_warmup_epochs = int(cfg.integer("train.kl_warmup_epochs"));
  tc.beta1 = cfg.real("train.beta1");
  tc.beta2 = cfg.real("train.beta2");
  tc.rbf_k = int(cfg.integer("train.rbf_k"));
  tc.rbf_bandwidth_scale = cfg.real("train.rbf_bandwidth_scale");
  tc.rbf_floor = cfg.real("train.rbf_floor");
  tc.eps_reg = cfg.real("train.eps_reg");
  tc.seed = std::uint64_t(cfg.integer("seed"));
  return tc;
}

inline int cmd_train(const std::vector<std::string>& args, std::ostream& out) {
  const std::map<std::string, std::string> aliases = {
      {"epochs", "train.epochs"},       {"batch", "train.batch"},
      {"lr", "train.lr"},               {"latent-dim", "model.latent_dim"},
      {"rbf-k", "train.rbf_k"},         {"seed", "seed"},
      {"chain", "chain.lengths"},       {"kl-warmup", "train.kl_warmup_epochs"},
      {"rbf-floor", "train.rbf_floor"}};
  const auto p = parse_args(args, aliases, {"out", "data"}, {}, true);
  if (p.positional.empty()) throw UsageError("train: missing space (task or joint)");
  if (p.positional != "task" && p.positional != "joint")
    throw UsageError("train: unknown space '" + p.positional + "'");
  const bool task_space = p.positional == "task";

  Config cfg;
  cfg.declare("seed", "0");
  cfg.declare("train.epochs", "200");
  cfg.declare("train.batch", "64");
  cfg.declare("train.lr", "0.001");
  cfg.declare("train.adam_beta1", "0.9");
  cfg.declare("train.adam_beta2", "0.999");
  cfg.declare("train.adam_eps", "1e-8");
  cfg.declare("train.kl_warmup_epochs", "30");
  cfg.declare("train.beta1", "1.0");
  cfg.declare("train.beta2", "1.0");
  cfg.declare("train.rbf_k", "500");
  cfg.declare("train.rbf_bandwidth_scale", "2.0");
  cfg.declare("train.rbf_floor", "1.0");
  cfg.declare("train.eps_reg", "1e-6");
  cfg.declare("train.antipodal_double", "true");
  cfg.declare("model.latent_dim", "0");
  cfg.declare("chain.lengths", "1.0,1.0");
  apply(cfg, p);

  const auto ts = data::read_csv(require_special(p, "data"));
  if (ts.task_kind != task_space)
    throw IoError(std::string("train: data file holds ") +
                  (ts.task_kind ? "pose" : "joint") + " trajectories, not " +
                  p.positional + "-space ones");

  int latent = int(cfg.integer("model.latent_dim"));
  if (latent == 0) latent = task_space ? 2 : 3;

  std::vector<double> history;
  std::ostringstream model_text;
  if (task_space) {
    Mat X = data::stacked(ts);
    if (cfg.flag("train.antipodal_double")) X = data::antipodal_double(X, ts.dir_dim);
    auto res = vae::train_task(X, ts.pos_dim, ts.dir_dim, latent, train_config(cfg));
    history = std::move(res.loss_history);
    vae::save_model(res.model, model_text);
  } else {
    const auto chain = kin::PlanarChain::make(parse_lengths(cfg.str("chain.lengths")));
    if (chain.dof() != ts.dof)
      throw IoError("train: data has " + std::to_string(ts.dof) +
                    " joint columns but chain.lengths has " +
                    std::to_string(chain.dof()));
    auto res = vae::train_joint(data::stacked(ts), chain, latent, train_config(cfg));
    history = std::move(res.loss_history);
    vae::save_model(res.model, model_text);
  }

  const std::string dir = prepare_out_dir(p, cfg);
  write_text(dir + "/model.txt", model_text.str());
  std::string hist = "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e)
    hist += std::to_string(e) + "," + fmt_short(history[e]) + "\n";
  write_text(dir + "/history.csv", hist);
  out << "wrote " << dir << "/model.txt";
  if (!history.empty())
    out << " (loss " << fmt_short(history.front()) << " -> "
        << fmt_short(history.back()) << " over " << history.size() << " epochs)";
  out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

inline std::vector<int> parse_resolution(const Config& cfg, int d) {
  const std::string& s = cfg.str("grid.res");
  if (s.empty()) return geo::default_resolution(d);
  const Vec v = parse_vec(s, "grid.res");
  std::vector<int> res;
  if (v.size() == 1) {
    res.assign(std::size_t(d), 0);
    for (auto& r : res) r = int(v[0]);
  } else if (v.size() == d) {
    for (Eigen::Index i = 0; i < v.size(); ++i) res.push_back(int(v[i]));
  } else {
    throw UsageError("grid.res: expected 1 or " + std::to_string(d) + " values");
  }
  for (std::size_t i = 0; i < res.size(); ++i)
    if (double(res[i]) != v[Eigen::Index(v.size() == 1 ? 0 : Eigen::Index(i))] ||
        res[i] < 2)
      throw UsageError("grid.res: entries must be integers >= 2");
  return res;
}

// Cache key: model file content hash folded with the grid request, so a
// changed model, bounds, resolution, or threshold factor all miss cleanly.
inline std::uint64_t graph_cache_key(std::uint64_t model_hash, const Mat& bounds,
                                     const std::vector<int>& res, double factor) {
  std::string s = "graph-key-v1 " + std::to_string(model_hash);
  for (int r : res) s += " " + std::to_string(r);
  for (Eigen::Index j = 0; j < bounds.cols(); ++j)
    s += " " + fmt_double(bounds(0, j)) + " " + fmt_double(bounds(1, j));
  s += " " + fmt_double(factor);
  return fnv1a64(s);
}

inline int cmd_plan(const std::vector<std::string>& args, std::ostream& out) {
  const std::map<std::string, std::string> aliases = {
      {"samples", "plan.samples"},
      {"spline-control", "plan.spline_control"},
      {"grid-res", "grid.res"},
      {"pad", "grid.pad"},
      {"energy-factor", "grid.energy_factor"},
      {"graph-cache", "cache.path"},
      {"ambient", "plan.ambient"}};
  const auto p =
      parse_args(args, aliases, {"out", "model", "start", "goal", "obstacle"},
                 {"ambient"}, false);

  Config cfg;
  cfg.declare("plan.samples", "100");
  cfg.declare("plan.spline_control", "0");
  cfg.declare("plan.ambient", "false");
  cfg.declare("grid.res", "");
  cfg.declare("grid.pad", "0.2");
  cfg.declare("grid.energy_factor", "50");
  cfg.declare("cache.path", "");
  apply(cfg, p);

  const std::string model_path = require_special(p, "model");
  const std::string model_bytes = read_file_bytes(model_path);
  const auto model = vae::load_model(model_path);
  const int d = model.latent_dim();

  const Mat bounds = geo::suggested_bounds(model.latent_box(), cfg.real("grid.pad"));
  const std::vector<int> res = parse_resolution(cfg, d);
  const double factor = cfg.real("grid.energy_factor");
  const std::uint64_t key = graph_cache_key(fnv1a64(model_bytes), bounds, res, factor);
  std::string cache_path = cfg.str("cache.path");
  if (cache_path.empty()) cache_path = model_path + ".graph";

  Stopwatch build_watch;
  bool cache_hit = false;
  geo::LatentGraph g;
  if (auto cached = geo::load_graph(cache_path, key)) {
    g = std::move(*cached);
    cache_hit = true;
  } else if (model.is_task()) {
    g = geo::build_graph(*model.task, bounds, res, {}, factor);
    geo::save_graph(g, cache_path, key);
  } else {
    g = geo::build_graph(*model.joint, bounds, res, {}, factor);
    geo::save_graph(g, cache_path, key);
  }
  const double build_ms = build_watch.ms();

  const int pos_dim = g.group_dim;
  geo::PlanRequest req;
  req.start = parse_vec(require_special(p, "start"), "--start");
  req.goal = parse_vec(require_special(p, "goal"), "--goal");
  req.ambient_endpoints = cfg.flag("plan.ambient");
  req.samples = int(cfg.integer("plan.samples"));
  req.spline_control = int(cfg.integer("plan.spline_control"));
  for (const std::string& s : p.obstacles) req.obstacles.push_back(parse_obstacle(s, pos_dim));

  Stopwatch total_watch;
  const geo::PlanResult result = model.is_task() ? geo::plan(*model.task, g, req)
                                                 : geo::plan(*model.joint, g, req);
  const double total_ms = total_watch.ms();

  const std::string dir = prepare_out_dir(p, cfg);

  data::TrajectorySet traj;
  traj.task_kind = model.is_task();
  if (model.is_task()) {
    traj.pos_dim = model.task->pos_dim;
    traj.dir_dim = model.task->dir_dim;
  } else {
    traj.dof = model.joint->chain.dof();
  }
  traj.trajs.resize(1);
  traj.trajs[0].traj_id = 0;
  traj.trajs[0].samples = result.trajectory;
  data::write_csv(dir + "/trajectory.csv", traj);

  std::string lat = "t";
  for (int j = 1; j <= d; ++j) lat += ",z" + std::to_string(j);
  lat += "\n";
  for (Eigen::Index i = 0; i < result.latent.rows(); ++i) {
    lat += fmt_short(double(i) / double(result.latent.rows() - 1));
    for (Eigen::Index j = 0; j < d; ++j) lat += "," + fmt_short(result.latent(i, j));
    lat += "\n";
  }
  write_text(dir + "/latent.csv", lat);

  const auto& dg = result.diag;
  std::string diag;
  diag += "cache_hit=" + std::string(cache_hit ? "true" : "false") + "\n";
  diag += "graph_nodes=" + std::to_string(g.node_count()) + "\n";
  diag += "graph_edges=" + std::to_string(g.edge_count()) + "\n";
  diag += "grid_res=";
  for (std::size_t i = 0; i < res.size(); ++i)
    diag += (i ? "," : "") + std::to_string(res[i]);
  diag += "\nbounds_min=";
  for (Eigen::Index j = 0; j < bounds.cols(); ++j)
    diag += (j ? "," : "") + fmt_short(bounds(0, j));
  diag += "\nbounds_max=";
  for (Eigen::Index j = 0; j < bounds.cols(); ++j)
    diag += (j ? "," : "") + fmt_short(bounds(1, j));
  diag += "\ngraph_cost=" + fmt_short(dg.graph_cost) + "\n";
  diag += "spline_energy=" + fmt_short(dg.spline_energy) + "\n";
  diag += "max_energy_density=" + fmt_short(dg.max_energy_density) + "\n";
  diag += "energy_threshold=" + fmt_short(dg.energy_threshold) + "\n";
  diag += "high_energy=" + std::string(dg.high_energy ? "true" : "false") + "\n";
  diag += "min_clearance=" + fmt_short(dg.min_clearance) + "\n";
  diag += "fit_rms=" + fmt_short(dg.fit_rms) + "\n";
  diag += "path_nodes=" + std::to_string(dg.path_nodes) + "\n";
  diag += "touched_edges=" + std::to_string(dg.touched_edges) + "\n";
  diag += "core_decoder_queries=" + std::to_string(dg.core_decoder_queries) + "\n";
  diag += "build_ms=" + fmt_short(build_ms) + "\n";
  diag += "reweight_ms=" + fmt_short(dg.reweight_ms) + "\n";
  diag += "search_ms=" + fmt_short(dg.search_ms) + "\n";
  diag += "spline_ms=" + fmt_short(dg.spline_ms) + "\n";
  diag += "decode_ms=" + fmt_short(dg.decode_ms) + "\n";
  diag += "total_ms=" + fmt_short(total_ms) + "\n";
  write_text(dir + "/diagnostics.txt", diag);

  out << "wrote " << dir << "/trajectory.csv (cost " << fmt_short(dg.graph_cost)
      << ", " << dg.path_nodes << " path nodes, cache "
      << (cache_hit ? "hit" : "miss") << ")\n";
  if (dg.high_energy)
    out << "warning: geodesic crosses a high-energy region (density "
        << fmt_short(dg.max_energy_density) << " > threshold "
        << fmt_short(dg.energy_threshold) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

inline std::array<int, 3> viridis(double v) {
  static constexpr double stops[5][3] = {{0.267, 0.005, 0.329},
                                         {0.229, 0.322, 0.545},
                                         {0.128, 0.567, 0.551},
                                         {0.369, 0.789, 0.383},
                                         {0.993, 0.906, 0.144}};
  v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  const double x = v * 4.0;
  const int i = x >= 4.0 ? 3 : int(x);
  const double a = x - i;
  std::array<int, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    const double f = stops[i][c] * (1.0 - a) + stops[i + 1][c] * a;
    rgb[std::size_t(c)] = int(std::lround(255.0 * f));
  }
  return rgb;
}

// P3 text pixmap, one pixel per line.
inline void write_ppm(const std::string& path, int w, int h,
                      const std::vector<std::array<int, 3>>& pix) {
  std::string body = "P3\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (const auto& p : pix)
    body += std::to_string(p[0]) + " " + std::to_string(p[1]) + " " +
            std::to_string(p[2]) + "\n";
  write_text(path, body);
}

// Linear normalization over the observed range (magnification is already a
// log-determinant); a degenerate range renders mid-scale.
inline std::vector<std::array<int, 3>> colorize(const std::vector<double>& vals) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : vals) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<std::array<int, 3>> pix(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double t = hi - lo > 1e-12 ? (vals[i] - lo) / (hi - lo) : 0.5;
    pix[i] = viridis(t);
  }
  return pix;
}

inline int cmd_render(const std::vector<std::string>& args, std::ostream& out) {
  const std::map<std::string, std::string> aliases = {
      {"res", "render.res"},
      {"volume-res", "render.volume_res"},
      {"pad", "grid.pad"},
      {"sigma", "render.sigma"}};
  const auto p =
      parse_args(args, aliases, {"out", "model", "data", "geodesic"}, {"sigma"}, false);

  Config cfg;
  cfg.declare("render.res", "200");
  cfg.declare("render.volume_res", "24");
  cfg.declare("render.sigma", "false");
  cfg.declare("grid.pad", "0.2");
  apply(cfg, p);

  const std::string model_path = require_special(p, "model");
  const auto model = vae::load_model(model_path);
  const int d = model.latent_dim();
  if (d > 3)
    throw std::runtime_error("render: unsupported render dimension " + std::to_string(d) +
                             " (models with latent dimension up to 3 render)");

  const auto field = model.is_task() ? metric::make_field(*model.task)
                                     : metric::make_field(*model.joint);
  const Mat bounds = geo::suggested_bounds(model.latent_box(), cfg.real("grid.pad"));
  const int res = int(cfg.integer("render.res"));
  if (res < 2) throw UsageError("render.res must be >= 2");

  const std::string dir = prepare_out_dir(p, cfg);

  const auto mean_sigma = [&](const Vec& z) {
    if (model.is_task()) return vae::decode_task(*model.task, z).pos_sigma.mean();
    return vae::decode_joint(*model.joint, z).theta_sigma.mean();
  };

  if (d <= 2) {
    // Pixel (i, j): i runs left to right over z1, j top to bottom over
    // descending z2 (or a single row when d == 1).
    const int h = d == 2 ? res : 1;
    std::vector<double> mag(std::size_t(res) * std::size_t(h));
    std::vector<double> sig;
    const bool want_sigma = cfg.flag("render.sigma");
    if (want_sigma) sig.resize(mag.size());
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < res; ++i) {
        Vec z(d);
        z[0] = bounds(0, 0) + (bounds(1, 0) - bounds(0, 0)) * i / (res - 1);
        if (d == 2) z[1] = bounds(1, 1) - (bounds(1, 1) - bounds(0, 1)) * j / (h - 1);
        const std::size_t at = std::size_t(j) * std::size_t(res) + std::size_t(i);
        mag[at] = metric::magnification_factor(field, z);
        if (want_sigma) sig[at] = mean_sigma(z);
      }
    write_ppm(dir + "/magnification.ppm", res, h, colorize(mag));
    if (want_sigma) write_ppm(dir + "/sigma.ppm", res, h, colorize(sig));

    // Overlay scene in pixel coordinates over the same bounds.
    const auto to_px = [&](double z1, double z2) {
      const double x = (z1 - bounds(0, 0)) / (bounds(1, 0) - bounds(0, 0)) * (res - 1);
      const double y = d == 2
                           ? (bounds(1, 1) - z2) / (bounds(1, 1) - bounds(0, 1)) * (h - 1)
                           : 0.0;
      return std::pair<double, double>(x, y);
    };
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(res) + "\" height=\"" + std::to_string(h) +
                      "\" viewBox=\"0 0 " + std::to_string(res) + " " +
                      std::to_string(h) + "\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(res) + "\" height=\"" +
           std::to_string(h) + "\" fill=\"none\" stroke=\"#404040\"/>\n";
    if (p.special.count("data")) {
      const auto ts = data::read_csv(p.special.at("data"));
      for (const auto& demo : ts.trajs)
        for (Eigen::Index i = 0; i < demo.samples.rows(); ++i) {
          const Vec x = demo.samples.row(i).transpose();
          const Vec z = model.is_task() ? vae::encode(*model.task, x).mu
                                        : vae::encode(*model.joint, x).mu;
          const auto [px, py] = to_px(z[0], d == 2 ? z[1] : 0.0);
          svg += "<circle class=\"train\" cx=\"" + fmt_short(px) + "\" cy=\"" +
                 fmt_short(py) + "\" r=\"1.2\" fill=\"#f0f0f0\" fill-opacity=\"0.6\"/>\n";
        }
    }
    if (p.special.count("geodesic")) {
      // Latent path file from cmd_plan: header t,z1[,z2...].
      std::ifstream is(p.special.at("geodesic"));
      if (!is) throw IoError("cannot open " + p.special.at("geodesic"));
      std::string line;
      if (!std::getline(is, line))
        throw IoError("empty geodesic file: " + p.special.at("geodesic"));
      std::string pts;
      std::string nodes;
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        const Vec row = parse_vec(line, "--geodesic row");
        if (row.size() != d + 1)
          throw IoError("geodesic file row width " + std::to_string(row.size()) +
                        " does not match latent dimension " + std::to_string(d));
        const auto [px, py] = to_px(row[1], d == 2 ? row[2] : 0.0);
        pts += fmt_short(px) + "," + fmt_short(py) + " ";
        nodes += "<circle class=\"geodesic\" cx=\"" + fmt_short(px) + "\" cy=\"" +
                 fmt_short(py) + "\" r=\"1.6\" fill=\"#ffb000\"/>\n";
      }
      svg += "<polyline class=\"geodesic-line\" points=\"" + pts +
             "\" fill=\"none\" stroke=\"#ffb000\" stroke-width=\"1.5\"/>\n";
      svg += nodes;
    }
    svg += "</svg>\n";
    write_text(dir + "/overlay.svg", svg);
    out << "wrote " << dir << "/magnification.ppm (" << res << "x" << h << ")\n";
    return 0;
  }

  // d == 3: axis-aligned center slices plus a coarse volume dump.
  const char* names[3] = {"slice_z1z2.ppm", "slice_z1z3.ppm", "slice_z2z3.ppm"};
  const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int s = 0; s < 3; ++s) {
    const int a = pairs[s][0], b = pairs[s][1];
    const int c = 3 - a - b;
    std::vector<double> mag(std::size_t(res) * std::size_t(res));
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) {
        Vec z(3);
        z[a] = bounds(0, a) + (bounds(1, a) - bounds(0, a)) * i / (res - 1);
        z[b] = bounds(1, b) - (bounds(1, b) - bounds(0, b)) * j / (res - 1);
        z[c] = 0.5 * (bounds(0, c) + bounds(1, c));
        mag[std::size_t(j) * std::size_t(res) + std::size_t(i)] =
            metric::magnification_factor(field, z);
      }
    write_ppm(dir + "/" + names[s], res, res, colorize(mag));
  }
  const int vres = int(cfg.integer("render.volume_res"));
  if (vres < 2) throw UsageError("render.volume_res must be >= 2");
  std::string vol = "z1,z2,z3,magnification\n";
  for (int k = 0; k < vres; ++k)
    for (int j = 0; j < vres; ++j)
      for (int i = 0; i < vres; ++i) {
        Vec z(3);
        z[0] = bounds(0, 0) + (bounds(1, 0) - bounds(0, 0)) * i / (vres - 1);
        z[1] = bounds(0, 1) + (bounds(1, 1) - bounds(0, 1)) * j / (vres - 1);
        z[2] = bounds(0, 2) + (bounds(1, 2) - bounds(0, 2)) * k / (vres - 1);
        vol += fmt_short(z[0]) + "," + fmt_short(z[1]) + "," + fmt_short(z[2]) + "," +
               fmt_short(metric::magnification_factor(field, z)) + "\n";
      }
  write_text(dir + "/volume.csv", vol);
  out << "wrote 3 slice pixmaps and " << dir << "/volume.csv\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct CheckRow {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool less_is_pass = true;
  bool pass() const {
    return less_is_pass ? value <= threshold : value >= threshold;
  }
};

inline Vec random_box_point(const Mat& box, Rng& rng) {
  Vec z(box.cols());
  for (Eigen::Index j = 0; j < box.cols(); ++j)
    z[j] = rng.uniform(box(0, j), box(1, j));
  return z;
}

inline double jac_gap(const Mat& analytic, const Mat& fd) {
  return (analytic - fd).cwiseAbs().maxCoeff() /
         std::max(1.0, analytic.cwiseAbs().maxCoeff());
}

inline void eval_jacobians(const vae::AnyModel& model, Rng& rng, int points,
                           std::vector<CheckRow>& rows) {
  double mlp = 0.0, precision = 0.0, extra = 0.0, fk = 0.0;
  for (int n = 0; n < points; ++n) {
    if (model.is_task()) {
      const auto& m = *model.task;
      const Vec z = random_box_point(m.latent_box, rng);
      mlp = std::max(mlp, jac_gap(m.decoder_mean.jacobian(z),
                                  numerics::fd_jacobian(
                                      [&](const Vec& q) { return m.decoder_mean.forward(q); },
                                      z)));
      precision = std::max(
          precision,
          jac_gap(m.position_precision.jacobian(z),
                  numerics::fd_jacobian(
                      [&](const Vec& q) { return m.position_precision.forward(q); }, z)));
      // Normalized direction head: J = (I - u u^T) J_raw / |raw|.
      const Vec raw = m.decoder_mean.forward(z).tail(m.dir_dim);
      const Vec u = raw / raw.norm();
      const Mat J_raw = m.decoder_mean.jacobian(z).bottomRows(m.dir_dim);
      const Mat J_dir =
          (Mat::Identity(m.dir_dim, m.dir_dim) - u * u.transpose()) * J_raw / raw.norm();
      extra = std::max(
          extra, jac_gap(J_dir, numerics::fd_jacobian(
                                    [&](const Vec& q) {
                                      const Vec r = m.decoder_mean.forward(q).tail(m.dir_dim);
                                      return Vec(r / r.norm());
                                    },
                                    z)));
    } else {
      const auto& m = *model.joint;
      const Vec z = random_box_point(m.latent_box, rng);
      mlp = std::max(mlp, jac_gap(m.decoder_mean.jacobian(z),
                                  numerics::fd_jacobian(
                                      [&](const Vec& q) { return m.decoder_mean.forward(q); },
                                      z)));
      precision = std::max(
          precision,
          jac_gap(m.joint_precision.jacobian(z),
                  numerics::fd_jacobian(
                      [&](const Vec& q) { return m.joint_precision.forward(q); }, z)));
      const Vec theta = vae::decode_joint(m, z).theta_mean;
      const auto flat_fk = [&](const Vec& th) {
        const auto body = kin::fk_points(m.chain, th);
        Vec v(2 * Eigen::Index(body.points.size()) + 1);
        for (std::size_t i = 0; i < body.points.size(); ++i)
          v.segment(2 * Eigen::Index(i), 2) = body.points[i];
        v[v.size() - 1] = body.ee_angle;
        return v;
      };
      fk = std::max(fk, jac_gap(kin::fk_jacobian(m.chain, theta),
                                numerics::fd_jacobian(flat_fk, theta)));
    }
  }
  rows.push_back({"decoder_mean_jacobian", mlp, 1e-4, true});
  rows.push_back({"precision_head_jacobian", precision, 1e-4, true});
  if (model.is_task())
    rows.push_back({"normalized_direction_jacobian", extra, 1e-4, true});
  else
    rows.push_back({"forward_kinematics_jacobian", fk, 1e-4, true});
}

// Composite Simpson weights over n intervals (n even), returning nodes and
// weights for [a, b].
inline void simpson(int n, double a, double b, std::vector<double>& x,
                    std::vector<double>& w) {
  const double h = (b - a) / n;
  x.resize(std::size_t(n) + 1);
  w.resize(std::size_t(n) + 1);
  for (int i = 0; i <= n; ++i) {
    x[std::size_t(i)] = a + h * i;
    const double c = i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0);
    w[std::size_t(i)] = c * h / 3.0;
  }
}

inline void eval_normalization(std::vector<CheckRow>& rows) {
  // S^1: full circle, one moderate concentration.
  {
    Vec mu(2);
    mu << std::cos(0.7), std::sin(0.7);
    std::vector<double> x, w;
    simpson(4000, 0.0, 2.0 * M_PI, x, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      Vec q(2);
      q << std::cos(x[i]), std::sin(x[i]);
      acc += w[i] * std::exp(dist::vmf_logpdf(q, mu, 2.0));
    }
    rows.push_back({"vmf_normalization_s1", std::abs(acc - 1.0), 1e-3, true});
  }
  // S^2 over three concentrations with a tilted mean.
  {
    Vec mu(3);
    mu << 1.0, 1.0, 1.0;
    mu /= mu.norm();
    std::vector<double> th, wt, ph, wp;
    simpson(400, 0.0, M_PI, th, wt);
    simpson(800, 0.0, 2.0 * M_PI, ph, wp);
    for (double kappa : {0.5, 5.0, 50.0}) {
      double acc = 0.0;
      for (std::size_t i = 0; i < th.size(); ++i) {
        const double st = std::sin(th[i]), ct = std::cos(th[i]);
        double ring = 0.0;
        for (std::size_t j = 0; j < ph.size(); ++j) {
          Vec q(3);
          q << st * std::cos(ph[j]), st * std::sin(ph[j]), ct;
          ring += wp[j] * std::exp(dist::vmf_logpdf(q, mu, kappa));
        }
        acc += wt[i] * st * ring;
      }
      rows.push_back({"vmf_normalization_s2_kappa" + fmt_short(kappa),
                      std::abs(acc - 1.0), 1e-3, true});
    }
    // Antipodal mixture integrates to one as well.
    double acc = 0.0;
    for (std::size_t i = 0; i < th.size(); ++i) {
      const double st = std::sin(th[i]), ct = std::cos(th[i]);
      for (std::size_t j = 0; j < ph.size(); ++j) {
        Vec q(3);
        q << st * std::cos(ph[j]), st * std::sin(ph[j]), ct;
        acc += wt[i] * st * wp[j] * std::exp(dist::antipodal_vmf_logpdf(q, mu, 5.0));
      }
    }
    rows.push_back({"antipodal_mixture_normalization_s2", std::abs(acc - 1.0), 1e-3,
                    true});
  }
  // S^3 with the quaternion mean tilted off-axis.
  {
    Vec mu(4);
    mu << 1.0, 0.5, 0.5, 0.2;
    mu /= mu.norm();
    std::vector<double> a1, w1, a2, w2, a3, w3;
    simpson(120, 0.0, M_PI, a1, w1);
    simpson(120, 0.0, M_PI, a2, w2);
    simpson(240, 0.0, 2.0 * M_PI, a3, w3);
    double acc = 0.0;
    for (std::size_t i = 0; i < a1.size(); ++i) {
      const double s1 = std::sin(a1[i]), c1 = std::cos(a1[i]);
      for (std::size_t j = 0; j < a2.size(); ++j) {
        const double s2 = std::sin(a2[j]), c2 = std::cos(a2[j]);
        double ring = 0.0;
        for (std::size_t k = 0; k < a3.size(); ++k) {
          Vec q(4);
          q << c1, s1 * c2, s1 * s2 * std::cos(a3[k]), s1 * s2 * std::sin(a3[k]);
          ring += w3[k] * std::exp(dist::vmf_logpdf(q, mu, 5.0));
        }
        acc += w1[i] * w2[j] * s1 * s1 * s2 * ring;
      }
    }
    rows.push_back({"vmf_normalization_s3", std::abs(acc - 1.0), 1e-3, true});
  }
}

inline void eval_psd(const vae::AnyModel& model, std::vector<CheckRow>& rows) {
  const auto field = model.is_task() ? metric::make_field(*model.task)
                                     : metric::make_field(*model.joint);
  const int d = model.latent_dim();
  const Mat box = geo::suggested_bounds(model.latent_box());
  const int per_axis = d == 1 ? 400 : (d == 2 ? 20 : 8);
  double min_eig = std::numeric_limits<double>::infinity();
  double max_asym = 0.0;
  std::vector<int> idx(std::size_t(d), 0);
  while (true) {
    Vec z(d);
    for (int a = 0; a < d; ++a)
      z[a] = box(0, a) + (box(1, a) - box(0, a)) * idx[std::size_t(a)] / (per_axis - 1);
    const Mat G = field.metric(z);
    max_asym = std::max(max_asym, (G - G.transpose()).cwiseAbs().maxCoeff());
    min_eig = std::min(min_eig, numerics::min_eigenvalue_sym(G));
    int a = 0;
    for (; a < d; ++a) {
      if (++idx[std::size_t(a)] < per_axis) break;
      idx[std::size_t(a)] = 0;
    }
    if (a == d) break;
  }
  rows.push_back({"metric_asymmetry", max_asym, 1e-10, true});
  rows.push_back({"metric_min_eigenvalue", min_eig, -1e-9, false});
}

inline void eval_dijkstra(const vae::AnyModel& model, Rng& rng,
                          std::vector<CheckRow>& rows) {
  const int d = model.latent_dim();
  const std::vector<int> res(std::size_t(d), d <= 2 ? 15 : 7);
  const Mat bounds = geo::suggested_bounds(model.latent_box());
  geo::LatentGraph g = model.is_task() ? geo::build_graph(*model.task, bounds, res)
                                       : geo::build_graph(*model.joint, bounds, res);
  const std::int64_t n = g.node_count();
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = std::int64_t(rng.below(std::uint64_t(n)));
    const auto t = std::int64_t(rng.below(std::uint64_t(n)));
    // Exhaustive relaxation reference.
    std::vector<double> dist(std::size_t(n), std::numeric_limits<double>::infinity());
    dist[std::size_t(s)] = 0.0;
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::int64_t e = 0; e < g.edge_count(); ++e) {
        const auto a = g.edge_a[std::size_t(e)], b = g.edge_b[std::size_t(e)];
        const double w = g.current_weight[e];
        if (dist[std::size_t(a)] + w < dist[std::size_t(b)]) {
          dist[std::size_t(b)] = dist[std::size_t(a)] + w;
          changed = true;
        }
        if (dist[std::size_t(b)] + w < dist[std::size_t(a)]) {
          dist[std::size_t(a)] = dist[std::size_t(b)] + w;
          changed = true;
        }
      }
    }
    // Boundary node coordinates can overshoot the box by one ulp.
    const auto clamp_in = [&](Vec z) {
      for (Eigen::Index k = 0; k < z.size(); ++k)
        z[k] = std::clamp(z[k], g.bounds(0, k), g.bounds(1, k));
      return z;
    };
    const auto path =
        geo::shortest_path(g, clamp_in(g.node_coord(s)), clamp_in(g.node_coord(t)));
    worst = std::max(worst, std::abs(path.cost - dist[std::size_t(t)]) /
                                std::max(1.0, dist[std::size_t(t)]));
  }
  rows.push_back({"dijkstra_vs_exhaustive_relaxation", worst, 1e-12, true});
}

inline void eval_roundtrip(const vae::AnyModel& model, const std::string& model_bytes,
                           std::vector<CheckRow>& rows) {
  std::ostringstream first;
  if (model.is_task())
    vae::save_model(*model.task, first);
  else
    vae::save_model(*model.joint, first);
  rows.push_back({"model_file_roundtrip_bytes",
                  first.str() == model_bytes ? 0.0 : 1.0, 0.5, true});
}

inline int cmd_eval(const std::vector<std::string>& args, std::ostream& out) {
  const std::map<std::string, std::string> aliases = {{"seed", "seed"},
                                                      {"points", "eval.points"}};
  const auto p = parse_args(args, aliases, {"out", "model"}, {}, true);
  if (p.positional.empty()) throw UsageError("eval: missing suite name");

  Config cfg;
  cfg.declare("seed", "0");
  cfg.declare("eval.points", "100");
  apply(cfg, p);

  const std::string suite = p.positional;
  const std::set<std::string> known = {"jacobians", "normalization", "psd",
                                       "dijkstra",  "roundtrip",     "all"};
  if (!known.count(suite)) throw UsageError("eval: unknown suite '" + suite + "'");
  const bool needs_model = suite != "normalization";

  vae::AnyModel model;
  std::string model_bytes;
  if (needs_model) {
    const std::string model_path = require_special(p, "model");
    model_bytes = read_file_bytes(model_path);
    model = vae::load_model(model_path);
  }

  Rng rng(std::uint64_t(cfg.integer("seed")));
  const int points = int(cfg.integer("eval.points"));
  std::vector<CheckRow> rows;
  if (suite == "jacobians" || suite == "all") eval_jacobians(model, rng, points, rows);
  if (suite == "normalization" || suite == "all") eval_normalization(rows);
  if (suite == "psd" || suite == "all") eval_psd(model, rows);
  if (suite == "dijkstra" || suite == "all") eval_dijkstra(model, rng, rows);
  if (suite == "roundtrip" || suite == "all") eval_roundtrip(model, model_bytes, rows);

  const std::string dir = prepare_out_dir(p, cfg);
  std::string report;
  bool all_pass = true;
  for (const auto& r : rows) {
    all_pass = all_pass && r.pass();
    report += "check=" + r.name + " value=" + fmt_short(r.value) +
              " threshold=" + fmt_short(r.threshold) +
              " status=" + (r.pass() ? "PASS" : "FAIL") + "\n";
  }
  report += std::string("result=") + (all_pass ? "PASS" : "FAIL") + "\n";
  write_text(dir + "/report.txt", report);
  out << report;
  return all_pass ? 0 : 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Entry points. The vector overload runs in-process for tests; exit codes:
// 0 success, 1 runtime or validation failure, 2 usage error.
// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  try {
    if (args.empty() || args[0] == "--help" || args[0] == "help") {
      out << detail::kUsage;
      return args.empty() ? 2 : 0;
    }
    const std::string verb = args[0];
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    if (verb == "gen") return detail::cmd_gen(rest, out);
    if (verb == "train") return detail::cmd_train(rest, out);
    if (verb == "plan") return detail::cmd_plan(rest, out);
    if (verb == "render") return detail::cmd_render(rest, out);
    if (verb == "eval") return detail::cmd_eval(rest, out);
    throw UsageError("unknown command '" + verb + "'");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n\n" << detail::kUsage;
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace geomot::cli
