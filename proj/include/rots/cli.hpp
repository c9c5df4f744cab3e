#ifndef ROTS_CLI_HPP
#define ROTS_CLI_HPP

// Experiment driver: strict JSON configuration, subcommands, run manifests.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "json.hpp"
#include "rots.hpp"

namespace rots::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr std::string_view kVersion = "0.1.0";

/// Walks one JSON object, tracking consumed keys so leftovers can be rejected.
class ConfigReader {
 public:
  ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_, "expected an object");
  }

  [[noreturn]] static void bad(const std::string& where, const std::string& why) {
    throw Error(ErrorKind::validation, where + ": " + why);
  }

  const std::string& path() const noexcept { return path_; }
  std::string field(std::string_view key) const { return path_ + "." + std::string(key); }

  bool has(std::string_view key) {
    const bool h = j_.contains(std::string(key));
    if (h) seen_.insert(std::string(key));
    return h;
  }

  ConfigReader child(std::string_view key) {
    has(key);
    return ConfigReader(j_.at(std::string(key)), field(key));
  }

  const json& raw(std::string_view key) {
    has(key);
    return j_.at(std::string(key));
  }

  template <class T>
  void read(std::string_view key, T& out) {
    if (has(key)) out = convert<T>(j_.at(std::string(key)), field(key));
  }

  template <class T>
  void read(std::string_view key, std::optional<T>& out) {
    if (!has(key)) return;
    const auto& v = j_.at(std::string(key));
    if (v.is_null()) out.reset();
    else out = convert<T>(v, field(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) bad(field(k), "unknown key");
  }

  template <class T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) bad(where, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) bad(where, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) bad(where, "expected a number");
      return v.get<double>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
        bad(where, "expected a non-negative integer");
      return static_cast<T>(v.get<std::uint64_t>());
    } else {
      if (!v.is_array()) bad(where, "expected an array");
      T out;
      for (std::size_t k = 0; k < v.size(); ++k)
        out.push_back(convert<typename T::value_type>(v[k], where + "[" + std::to_string(k) + "]"));
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Error text without the "<kind> error: " prefix.
inline std::string message(const Error& e) {
  const std::string w = e.what();
  const auto pos = w.find(" error: ");
  return pos == std::string::npos ? w : w.substr(pos + 8);
}

/// Accepts "1", "2", "inf" and the l1/l2/linf spellings.
inline Norm parse_norm_arg(std::string s) {
  if (s.size() > 1 && s[0] == 'l') s.erase(0, 1);
  return parse_norm(s);
}

enum class Method { rots, adv_fgs, adv_pgd, stn, clean };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::rots: return "rots";
    case Method::adv_fgs: return "adv_fgs";
    case Method::adv_pgd: return "adv_pgd";
    case Method::stn: return "stn";
    case Method::clean: return "clean";
  }
  return "?";
}

inline Method parse_method(const std::string& s, const std::string& where) {
  for (auto m : {Method::rots, Method::adv_fgs, Method::adv_pgd, Method::stn, Method::clean})
    if (s == to_string(m)) return m;
  ConfigReader::bad(where, "method must be one of rots, adv_fgs, adv_pgd, stn, clean; got '" + s + "'");
}

struct SynthSpec {
  std::size_t n = 60;
  std::size_t length = 32;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

/// A dataset file or a synthetic generator.
struct DataSource {
  std::optional<std::string> path;
  std::string format = "ucr";  // ucr | csv
  std::size_t channels = 1;
  std::optional<SynthSpec> synth;

  static DataSource parse(ConfigReader r) {
    DataSource d;
    d.path = std::nullopt;
    r.read("path", d.path);
    r.read("format", d.format);
    r.read("channels", d.channels);
    if (r.has("synth")) {
      auto s = r.child("synth");
      SynthSpec sp;
      s.read("n", sp.n);
      s.read("length", sp.length);
      s.read("noise", sp.noise);
      s.read("seed", sp.seed);
      s.finish();
      d.synth = sp;
    }
    r.finish();
    if (d.path.has_value() == d.synth.has_value()) ConfigReader::bad(r.field("path"), "give exactly one of path or synth");
    if (d.format != "ucr" && d.format != "csv") ConfigReader::bad(r.field("format"), "must be ucr or csv");
    if (d.channels < 1) ConfigReader::bad(r.field("channels"), "must be >= 1");
    if (d.path && !fs::exists(*d.path))
      throw Error(ErrorKind::io, r.field("path") + ": file '" + *d.path + "' does not exist");
    return d;
  }

  Dataset load(Split split) const {
    Dataset ds;
    if (synth) ds = synth_two_class(synth->n, synth->length, synth->noise, synth->seed);
    else if (format == "csv") ds = load_multichannel_csv(*path, channels);
    else ds = load_ucr_tsv(*path);
    ds.split = split;
    return ds;
  }
};

struct EvalAttack {
  AttackSpec spec;
  Vec levels;
};

struct PlbenchConfig {
  static constexpr std::uint64_t kDefaultSpecSeed = 7;

  PlProblemSpec spec = PlProblemSpec::make_default(kDefaultSpecSeed);
  ScagdaParams params;
  BenchOptions opts;

  PlbenchConfig() {
    params.eta = 5e-4;
    params.gamma = 1e-2;
    params.beta = 0.1;
    params.K = 100000;
  }
};

struct ExperimentConfig {
  json raw = json::object();
  std::optional<DataSource> train_data;
  std::optional<DataSource> test_data;
  bool znormalize = false;
  std::string arch{kDefaultArch};
  Method method = Method::clean;
  TrainConfig trainer;
  RotsHyper rots;
  AttackSpec attack;
  StnParams stn;
  std::vector<EvalAttack> eval;
  std::size_t repeats = 10;
  PlbenchConfig plbench;
  std::vector<std::uint64_t> seeds{0};
  std::string out = "runs";
  std::size_t threads = 1;

  static ExperimentConfig parse(const json& j) {
    ExperimentConfig c;
    c.raw = j;
    ConfigReader r(j, "config");
    if (r.has("dataset")) {
      auto d = r.child("dataset");
      if (d.has("train")) c.train_data = DataSource::parse(d.child("train"));
      if (d.has("test")) c.test_data = DataSource::parse(d.child("test"));
      d.read("znormalize", c.znormalize);
      d.finish();
    }
    r.read("arch", c.arch);
    try {
      ArchSpec::parse(c.arch);
    } catch (const Error& e) {
      ConfigReader::bad(r.field("arch"), message(e));
    }
    if (r.has("method")) c.method = parse_method(ConfigReader::convert<std::string>(r.raw("method"), r.field("method")), r.field("method"));
    if (r.has("trainer")) {
      auto t = r.child("trainer");
      if (t.has("optimizer")) {
        const auto s = ConfigReader::convert<std::string>(t.raw("optimizer"), t.field("optimizer"));
        if (s != "sgd" && s != "adam") ConfigReader::bad(t.field("optimizer"), "must be sgd or adam");
        c.trainer.optimizer = parse_optimizer(s);
      }
      t.read("eta", c.trainer.eta);
      t.read("batch", c.trainer.batch);
      t.read("iterations", c.trainer.iterations);
      t.finish();
    }
    if (r.has("rots")) parse_rots(r.child("rots"), c.rots);
    if (r.has("attack")) {
      auto a = r.child("attack");
      parse_attack_fields(a, c.attack);
      a.finish();
    }
    if (r.has("stn")) {
      auto s = r.child("stn");
      s.read("weight", c.stn.weight);
      s.read("sigma", c.stn.sigma);
      s.finish();
      if (!(c.stn.weight >= 0.0)) ConfigReader::bad(s.field("weight"), "must be >= 0");
      if (!(c.stn.sigma >= 0.0)) ConfigReader::bad(s.field("sigma"), "must be >= 0");
    }
    if (r.has("eval")) {
      auto e = r.child("eval");
      e.read("repeats", c.repeats);
      if (e.has("attacks")) {
        auto a = e.child("attacks");
        for (const char* kind : {"fgs", "gaussian", "pgd"}) {
          if (!a.has(kind)) continue;
          auto k = a.child(kind);
          EvalAttack ea;
          ea.spec.kind = parse_attack_kind(kind);
          ea.levels = {0.0, 0.05, 0.1, 0.2};
          k.read("levels", ea.levels);
          parse_attack_fields(k, ea.spec);
          k.finish();
          for (double l : ea.levels)
            if (!(l >= 0.0)) ConfigReader::bad(k.field("levels"), "levels must be >= 0");
          c.eval.push_back(ea);
        }
        a.finish();
      } else {
        c.eval = default_eval();
      }
      e.finish();
      if (c.repeats < 1) ConfigReader::bad(e.field("repeats"), "must be >= 1");
    } else {
      c.eval = default_eval();
    }
    if (r.has("plbench")) parse_plbench(r.child("plbench"), c.plbench);
    r.read("seeds", c.seeds);
    r.read("out", c.out);
    r.read("threads", c.threads);
    r.finish();
    if (c.seeds.empty()) ConfigReader::bad("config.seeds", "must be nonempty");
    if (c.threads < 1) ConfigReader::bad("config.threads", "must be >= 1");
    return c;
  }

  static ExperimentConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open config '" + path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::parse, "config '" + path + "': " + e.what());
    }
    return parse(j);
  }

  void set_seed(std::uint64_t s) {
    seeds = {s};
    raw["seeds"] = seeds;
  }
  void set_out(const std::string& o) {
    out = o;
    raw["out"] = o;
  }
  void set_threads(std::size_t t) {
    if (t < 1) throw Error(ErrorKind::validation, "--threads must be >= 1");
    threads = t;
    raw["threads"] = t;
  }

  std::pair<Dataset, Dataset> load_data() const {
    if (!train_data) throw Error(ErrorKind::validation, "config.dataset.train: required");
    Dataset tr = train_data->load(Split::train);
    Dataset te = test_data ? test_data->load(Split::test) : Dataset{};
    if (test_data && te.num_classes != tr.num_classes)
      throw Error(ErrorKind::validation, "config.dataset.test: class count differs from the training set");
    if (znormalize) {
      tr = znormalize_dataset(std::move(tr));
      if (test_data) te = znormalize_dataset(std::move(te));
    }
    return {std::move(tr), std::move(te)};
  }

  ArchSpec model_arch(std::size_t classes) const { return ArchSpec::parse(arch).with_output(classes); }

 private:
  static Dataset znormalize_dataset(Dataset ds) { return rots::znormalize(std::move(ds)); }

  static std::vector<EvalAttack> default_eval() {
    EvalAttack g, f;
    g.spec.kind = AttackKind::gaussian;
    g.levels = {0.0, 0.05, 0.1, 0.2};
    f.spec.kind = AttackKind::fgs;
    f.levels = {0.0, 0.05, 0.1, 0.2};
    return {f, g};
  }

  static void parse_attack_fields(ConfigReader& a, AttackSpec& s) {
    a.read("epsilon", s.epsilon);
    a.read("sigma", s.sigma);
    a.read("steps", s.steps);
    a.read("alpha", s.alpha);
    a.read("random_start", s.random_start);
    try {
      s.validate();
    } catch (const Error& e) {
      ConfigReader::bad(a.path(), message(e));
    }
  }

  static void parse_rots(ConfigReader r, RotsHyper& h) {
    r.read("lambda", h.lambda);
    r.read("nu", h.nu);
    r.read("beta", h.beta);
    r.read("eta", h.eta);
    r.read("gamma", h.gamma);
    r.read("batch", h.batch);
    r.read("K", h.K);
    r.read("align_samples", h.align_samples);
    r.read("warm_start", h.warm_start);
    if (r.has("band")) {
      const auto& b = r.raw("band");
      if (b.is_string() && b.get<std::string>() == "half") h.band.mode = BandSetting::Mode::half_length;
      else if (b.is_string() && b.get<std::string>() == "none") h.band.mode = BandSetting::Mode::none;
      else if (b.is_number()) {
        h.band.mode = BandSetting::Mode::fixed;
        h.band.width = b.get<double>();
      } else ConfigReader::bad(r.field("band"), "expected \"half\", \"none\", or a width");
    }
    if (r.has("p")) {
      try {
        h.p = parse_norm_arg(ConfigReader::convert<std::string>(r.raw("p"), r.field("p")));
      } catch (const Error& e) {
        ConfigReader::bad(r.field("p"), message(e));
      }
    }
    if (r.has("align_mode")) {
      const auto s = ConfigReader::convert<std::string>(r.raw("align_mode"), r.field("align_mode"));
      if (s == "sampled") h.align_mode = AlignMode::sampled;
      else if (s == "exhaustive") h.align_mode = AlignMode::exhaustive;
      else ConfigReader::bad(r.field("align_mode"), "must be sampled or exhaustive");
    }
    r.finish();
    try {
      h.validate();
    } catch (const Error& e) {
      ConfigReader::bad(r.path(), message(e));
    }
  }

  static void parse_plbench(ConfigReader r, PlbenchConfig& pb) {
    std::uint64_t spec_seed = PlbenchConfig::kDefaultSpecSeed;
    std::size_t dual_dim = 2, n = 4, m = 8;
    r.read("spec_seed", spec_seed);
    r.read("dual_dim", dual_dim);
    r.read("n", n);
    r.read("m", m);
    if (dual_dim < 1 || dual_dim > 2) ConfigReader::bad(r.field("dual_dim"), "must be 1 or 2");
    if (n < 1) ConfigReader::bad(r.field("n"), "must be >= 1");
    if (m < 1) ConfigReader::bad(r.field("m"), "must be >= 1");
    pb.spec = PlProblemSpec::make_default(spec_seed, dual_dim, n, m);
    r.read("coupling", pb.spec.coupling);
    r.read("centers", pb.spec.centers);
    r.read("nu_syn", pb.spec.nu_syn);
    r.read("lambda_syn", pb.spec.lambda_syn);
    r.read("mu_w", pb.spec.mu_w);
    r.read("eta", pb.params.eta);
    r.read("gamma", pb.params.gamma);
    r.read("beta", pb.params.beta);
    r.read("K", pb.params.K);
    r.read("first_touch", pb.params.first_touch);
    r.read("trace_rows", pb.opts.trace_rows);
    r.read("oracle_resolution", pb.opts.oracle_resolution);
    r.finish();
    try {
      pb.spec.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::validation, "config." + message(e));
    }
    try {
      pb.params.validate();
    } catch (const Error& e) {
      ConfigReader::bad(r.path(), message(e));
    }
    if (pb.opts.oracle_resolution < 3) ConfigReader::bad(r.field("oracle_resolution"), "must be >= 3");
  }
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline json manifest(const ExperimentConfig& cfg, std::string_view command, std::uint64_t seed) {
  json m;
  m["tool"] = "rots";
  m["version"] = kVersion;
  m["command"] = command;
  m["seed"] = seed;
  m["config"] = cfg.raw;
  m["config_hash"] = "fnv1a64:" + hex64(fnv1a(cfg.raw.dump()));
  return m;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorKind::io, "failed writing '" + path.string() + "'");
}

inline fs::path make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create directory '" + p.string() + "': " + ec.message());
  return p;
}

inline fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out) / ("seed_" + std::to_string(seed));
}

inline std::string hyper_record(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << std::setprecision(17) << "method=" << to_string(cfg.method);
  if (cfg.method == Method::rots)
    os << " lambda=" << cfg.rots.lambda << " beta=" << cfg.rots.beta << " eta=" << cfg.rots.eta
       << " gamma=" << cfg.rots.gamma << " batch=" << cfg.rots.batch << " K=" << cfg.rots.K;
  else
    os << " optimizer=" << (cfg.trainer.optimizer == OptimizerKind::sgd ? "sgd" : "adam") << " eta=" << cfg.trainer.eta
       << " batch=" << cfg.trainer.batch << " iterations=" << cfg.trainer.iterations;
  return os.str();
}

/// Trains one model per seed. Returns the exit status.
inline int cmd_train(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
  const auto [train, test] = cfg.load_data();
  train.validate();
  if (train.num_classes < 2) throw Error(ErrorKind::validation, "config.dataset.train: training needs >= 2 classes");
  const ArchSpec arch = cfg.model_arch(train.num_classes);
  for (const auto seed : cfg.seeds) {
    const fs::path dir = make_dir(seed_dir(cfg, seed));
    write_text(dir / "manifest.json", manifest(cfg, "train", seed).dump(2) + "\n");
    Model model = init_model(arch, train.channels(), train.length(), SeedTree(seed).seed("init"));
    TrainConfig tc = cfg.trainer;
    tc.seed = seed;
    SolveTrace trace;
    std::size_t iterations = 0;
    try {
      switch (cfg.method) {
        case Method::clean: trace = train_clean(train, model, tc); break;
        case Method::adv_fgs:
        case Method::adv_pgd: {
          AttackSpec a = cfg.attack;
          a.kind = cfg.method == Method::adv_fgs ? AttackKind::fgs : AttackKind::pgd;
          trace = adv_train(train, model, a, tc);
          break;
        }
        case Method::stn: trace = stn_train(train, model, cfg.stn, tc); break;
        case Method::rots: {
          RotsHyper h = cfg.rots;
          h.seed = seed;
          auto res = rots_train(train, std::move(model), h);
          model = std::move(res.model);
          trace = std::move(res.trace);
          log << "seed " << seed << ": nu = " << res.nu << "\n";
          break;
        }
      }
      iterations = trace.size();
    } catch (const DivergenceError& e) {
      write_text(dir / "trace.csv", e.trace().to_csv());
      log << "seed " << seed << ": " << e.what() << " (partial trace saved)\n";
      return exit_code(ErrorKind::divergence);
    }
    write_text(dir / "trace.csv", trace.to_csv());
    Checkpoint ck;
    ck.arch = arch.to_string();
    ck.channels = train.channels();
    ck.length = train.length();
    ck.iteration = iterations;
    ck.hyper = hyper_record(cfg);
    ck.weights = model.weights();
    ck.save((dir / "checkpoint.txt").string());
    log << "seed " << seed << ": wrote " << dir.string() << "\n";
  }
  return 0;
}

/// Pools per-seed tables: mean of means, min of mins, max of maxes.
inline std::vector<AccuracyRow> aggregate_rows(const std::vector<std::vector<AccuracyRow>>& per_seed) {
  std::vector<AccuracyRow> out = per_seed.front();
  for (std::size_t l = 0; l < out.size(); ++l) {
    out[l].mean_acc = 0.0;
    for (const auto& rows : per_seed) {
      out[l].mean_acc += rows[l].mean_acc / static_cast<double>(per_seed.size());
      out[l].min_acc = std::min(out[l].min_acc, rows[l].min_acc);
      out[l].max_acc = std::max(out[l].max_acc, rows[l].max_acc);
    }
  }
  return out;
}

inline Model load_checked(const std::string& path, const ArchSpec& arch, const Dataset& ds) {
  const auto ck = Checkpoint::load(path);
  if (ArchSpec::parse(ck.arch) != arch)
    throw Error(ErrorKind::arch, "checkpoint '" + path + "' has architecture '" + ck.arch + "', config expects '" +
                                     arch.to_string() + "'");
  if (ck.channels != ds.channels() || ck.length != ds.length())
    throw Error(ErrorKind::arch, "checkpoint '" + path + "' input shape does not match the evaluation set");
  return ck.to_model();
}

/// Robust-accuracy tables per attack kind, per seed and pooled over seeds.
inline int cmd_eval(const ExperimentConfig& cfg, const std::optional<std::string>& checkpoint,
                    std::ostream& log = std::cerr) {
  auto [train, test] = cfg.load_data();
  if (!cfg.test_data) {
    log << "note: no dataset.test given; evaluating on the training set\n";
    test = train;
  }
  test.validate();
  const ArchSpec arch = cfg.model_arch(train.num_classes);
  make_dir(cfg.out);
  std::map<std::string, std::vector<std::vector<AccuracyRow>>> tables;
  for (const auto seed : cfg.seeds) {
    const fs::path dir = seed_dir(cfg, seed);
    const std::string ck = checkpoint ? *checkpoint : (dir / "checkpoint.txt").string();
    const Model model = load_checked(ck, arch, test);
    if (!checkpoint) make_dir(dir);
    for (const auto& ea : cfg.eval) {
      const auto rows = eval_robust_accuracy(model, test, ea.spec, ea.levels, cfg.repeats, SeedTree(seed).seed("eval"),
                                             cfg.threads);
      if (!checkpoint) write_text(dir / ("eval_" + std::string(to_string(ea.spec.kind)) + ".csv"), accuracy_csv(rows));
      tables[to_string(ea.spec.kind)].push_back(rows);
    }
  }
  for (const auto& [kind, per_seed] : tables)
    write_text(fs::path(cfg.out) / ("eval_" + kind + ".csv"), accuracy_csv(aggregate_rows(per_seed)));
  auto m = manifest(cfg, "eval", cfg.seeds.front());
  m["seeds"] = cfg.seeds;
  if (checkpoint) m["checkpoint"] = *checkpoint;
  write_text(fs::path(cfg.out) / "eval_manifest.json", m.dump(2) + "\n");
  log << "wrote " << tables.size() << " accuracy table(s) to " << cfg.out << "\n";
  return 0;
}

/// Reads one series: every non-empty line is a channel of comma or
/// whitespace separated values.
inline Signal read_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  std::vector<Vec> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(std::move(line));
    const auto toks = detail::split_tokens(line, "\t ,");
    if (toks.empty()) continue;
    Vec row;
    for (auto t : toks) {
      double v = 0.0;
      if (!detail::parse_double(t, v))
        throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": bad value '" + std::string(t) + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": channel length differs");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::parse, "'" + path + "' holds no values");
  Vec flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Signal(rows.size(), rows.front().size(), std::move(flat));
}

struct DistanceOptions {
  double nu = 1.0;
  Norm p = Norm::l2;
  std::optional<double> band;
  std::optional<bool> prop1;  // forced on/off; automatic (when lengths allow) if empty
};

/// dtw,k_gak,d_gak,prop1_gap,prop1_bound for one pair; prop1 columns are empty when skipped.
inline std::string distance_csv(const Signal& x, const Signal& y, const DistanceOptions& o) {
  GakParams gp{o.nu, o.p, o.band ? Band{*o.band} : Band{}};
  gp.validate();
  std::ostringstream os;
  os << std::setprecision(17) << "dtw,k_gak,d_gak,prop1_gap,prop1_bound\n";
  os << dtw_distance(x, y, gp.p, gp.band).cost << ',' << gak_exact(x, y, gp) << ',' << d_gak(x, y, gp) << ',';
  const bool fits = x.length() <= kEnumerationLimit && y.length() <= kEnumerationLimit;
  if (o.prop1.value_or(fits)) {
    const auto r = prop1_gap(x, y, gp);
    os << r.gap << ',' << r.bound;
  } else {
    os << ',';
  }
  os << '\n';
  return os.str();
}

/// Runs the synthetic benchmark for each seed.
inline int cmd_bench_pl(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
  for (const auto seed : cfg.seeds) {
    const fs::path dir = make_dir(seed_dir(cfg, seed));
    write_text(dir / "manifest.json", manifest(cfg, "bench-pl", seed).dump(2) + "\n");
    ScagdaParams p = cfg.plbench.params;
    p.seed = seed;
    try {
      const auto rep = run_bench(cfg.plbench.spec, p, cfg.plbench.opts);
      write_text(dir / "trace.csv", rep.trace.to_csv());
      write_text(dir / "summary.csv", rep.summary_csv());
      log << "seed " << seed << ": P* = " << rep.p_star << ", final gap = " << rep.final_gap
          << ", final MA error = " << rep.final_ma_error << "\n";
    } catch (const DivergenceError& e) {
      write_text(dir / "trace.csv", e.trace().to_csv());
      log << "seed " << seed << ": " << e.what() << " (partial trace saved)\n";
      return exit_code(ErrorKind::divergence);
    }
  }
  return 0;
}

// ---- finite-difference checks ----

namespace gradcheck {

inline Vec central_diff(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-5) {
  Vec g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + h;
    const double fp = f(x);
    x[k] = orig - h;
    const double fm = f(x);
    x[k] = orig;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const Vec& a, const Vec& b) {
  double diff = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) diff = std::max(diff, std::abs(a[k] - b[k]));
  return diff / std::max({max_abs(a), max_abs(b), 1e-8});
}

inline Signal random_signal(Rng& rng, std::size_t c, std::size_t t, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Signal s(c, t);
  for (auto& v : s.vec()) v = n(rng);
  return s;
}

inline Model random_model(Rng& rng, std::size_t c, std::size_t t, std::size_t trial) {
  static const char* archs[] = {"R:4", "C:3,K:2;R:3", "C:2,K:3;P:2", "C:3,K:2;P:2;R:4", "D:3;R:2"};
  Model m = init_model(ArchSpec::parse(archs[trial % 5]).with_output(2 + trial % 2), c, t, rng());
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& w : m.weights()) w += n(rng);
  return m;
}

struct ScopeResult {
  std::string scope;
  double max_rel_err = 0.0;
  std::size_t instances = 0;
};

inline ScopeResult check_dpi(Rng& rng, std::size_t trials) {
  ScopeResult r{"dpi", 0.0, trials};
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t c = 1 + t % 2, len = 3 + t % 4;
    const Signal x = random_signal(rng, c, len), pert = random_signal(rng, c, len, 0.5);
    const Norm p = t % 3 == 0 ? Norm::l1 : Norm::l2;
    const Alignment a = PathSampler(len, len).sample_set(1, rng).alignments.front();
    const Signal g = grad_path_cost(x, pert, a, p);
    const Vec fd = central_diff([&](const Vec& v) { return path_cost(x, x + Signal(c, len, v), a, p); }, pert.vec());
    r.max_rel_err = std::max(r.max_rel_err, rel_err(g.vec(), fd));
  }
  return r;
}

inline ScopeResult check_gak(Rng& rng, std::size_t trials) {
  ScopeResult r{"gak", 0.0, trials};
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t c = 1 + t % 2, len = 5;
    const Signal x = random_signal(rng, c, len), pert = random_signal(rng, c, len, 0.5);
    const GakParams gp{0.5 + static_cast<double>(t % 3), Norm::l2, Band{}};
    const Vec fd =
        central_diff([&](const Vec& v) { return log_gak(x, x + Signal(c, len, v), gp); }, pert.vec());
    r.max_rel_err = std::max(r.max_rel_err, rel_err(grad_log_gak_exact(x, pert, gp).vec(), fd));
    r.max_rel_err = std::max(r.max_rel_err, rel_err(log_gak_grad(x, x + pert, gp).vec(), fd));
  }
  return r;
}

inline ScopeResult check_net(Rng& rng, std::size_t trials) {
  ScopeResult r{"net", 0.0, trials};
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t c = 1 + t % 2, len = 6 + t % 3;
    Model m = random_model(rng, c, len, t);
    std::vector<Signal> batch{random_signal(rng, c, len), random_signal(rng, c, len)};
    const std::vector<std::size_t> labels{0, 1};
    const auto lg = loss_and_grads(m, batch, labels);
    const Vec fdw = central_diff(
        [&](const Vec& w) {
          Model mm = m;
          mm.weights() = w;
          return mean_loss(mm, batch, labels);
        },
        m.weights());
    r.max_rel_err = std::max(r.max_rel_err, rel_err(lg.grads.weight_grad, fdw));
    Vec dz;
    const Vec fdx = central_diff(
        [&](const Vec& v) { return cross_entropy(m.forward(Signal(c, len, v)), labels[0], dz); }, batch[0].vec());
    r.max_rel_err = std::max(r.max_rel_err, rel_err(lg.grads.input_grad[0].vec(), fdx));
  }
  return r;
}

inline ScopeResult check_rots(Rng& rng, std::size_t trials) {
  ScopeResult r{"rots", 0.0, trials};
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t c = 1, len = 5;
    Model m = random_model(rng, c, len, t);
    const Signal x = random_signal(rng, c, len), a = random_signal(rng, c, len, 0.3);
    const std::size_t y = t % 2;
    const GakParams gp{1.0 + static_cast<double>(t % 2), Norm::l2, Band{}};
    const double lambda = 0.1 + 0.2 * static_cast<double>(t % 3);
    const auto set = enumerate_alignments(len, len, gp.band);
    const double omega = gak_exact(x, x + a, gp);
    const Signal g = dual_grad(m, x, y, a, omega, set, gp, lambda);
    Vec dz;
    const Vec fd = central_diff(
        [&](const Vec& v) {
          const Signal xa = x + Signal(c, len, v);
          return cross_entropy(m.forward(xa), y, dz) + lambda * log_gak(x, xa, gp);
        },
        a.vec());
    r.max_rel_err = std::max(r.max_rel_err, rel_err(g.vec(), fd));
  }
  return r;
}

}  // namespace gradcheck

inline const std::vector<std::string>& grad_check_scopes() {
  static const std::vector<std::string> s{"dpi", "gak", "net", "rots"};
  return s;
}

/// Prints scope,max_rel_err,instances,status; nonzero exit when any scope exceeds 1e-4.
inline int cmd_grad_check(const std::vector<std::string>& scopes, std::uint64_t seed, std::ostream& out,
                          std::size_t trials = 50) {
  for (const auto& s : scopes)
    if (std::find(grad_check_scopes().begin(), grad_check_scopes().end(), s) == grad_check_scopes().end())
      throw Error(ErrorKind::validation, "unknown grad-check scope '" + s + "' (expected dpi, gak, net, rots)");
  const SeedTree seeds(seed);
  bool ok = true;
  out << "scope,max_rel_err,instances,status\n" << std::setprecision(6);
  for (const auto& s : scopes) {
    Rng rng = seeds.stream(s);
    gradcheck::ScopeResult r;
    if (s == "dpi") r = gradcheck::check_dpi(rng, trials);
    else if (s == "gak") r = gradcheck::check_gak(rng, trials);
    else if (s == "net") r = gradcheck::check_net(rng, trials);
    else r = gradcheck::check_rots(rng, trials);
    const bool pass = r.max_rel_err <= 1e-4;
    ok = ok && pass;
    out << r.scope << ',' << r.max_rel_err << ',' << r.instances << ',' << (pass ? "pass" : "FAIL") << '\n';
  }
  return ok ? 0 : exit_code(ErrorKind::numeric);
}

}  // namespace rots::cli

#endif
