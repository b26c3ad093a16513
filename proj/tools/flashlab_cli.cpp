// flashlab command-line driver: fit, simulate, plan, layout, trace-stats.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <json.hpp>

#include "flashlab/channel.hpp"
#include "flashlab/controller.hpp"
#include "flashlab/ftl.hpp"
#include "flashlab/models.hpp"
#include "flashlab/raid_ecc.hpp"
#include "flashlab/trace.hpp"

#ifndef FLASHLAB_VERSION
#define FLASHLAB_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flashlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNoConverge = 3;
constexpr int kExitUncorrectable = 4;

struct Globals {
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out = ".";
};

// FNV-1a over the canonical dump
std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + p.string());
  f << text;
}

void write_manifest(const Globals& g, const std::string& command, const json& config,
                    const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["config_hash"] = config_hash(config);
  m["seed"] = g.seed;
  m["outputs"] = outputs;
  m["versions"] = {{"flashlab", FLASHLAB_VERSION},
                   {"compiler", __VERSION__},
                   {"boost", BOOST_LIB_VERSION},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"cli11", std::to_string(CLI11_VERSION_MAJOR) + "." + std::to_string(CLI11_VERSION_MINOR)}};
  write_text(fs::path(g.out) / "manifest.json", m.dump(2) + "\n");
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- schema checking

class Schema {
 public:
  explicit Schema(std::string where) : where_(std::move(where)) {}

  void keys(const json& j, const std::set<std::string>& allowed) {
    if (!j.is_object()) {
      err(where_ + ": expected an object");
      return;
    }
    for (const auto& [k, v] : j.items())
      if (!allowed.count(k)) err(where_ + "." + k + ": unknown key");
  }
  double number(const json& j, const std::string& key, double def, double lo, double hi) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_number()) {
      err(where_ + "." + key + ": expected a number");
      return def;
    }
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi)) {
      std::ostringstream ss;
      ss << where_ << "." << key << ": " << x << " outside [" << lo << ", " << hi << "]";
      err(ss.str());
      return def;
    }
    return x;
  }
  std::string string(const json& j, const std::string& key, const std::string& def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_string()) {
      err(where_ + "." + key + ": expected a string");
      return def;
    }
    return j.at(key).get<std::string>();
  }
  bool boolean(const json& j, const std::string& key, bool def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_boolean()) {
      err(where_ + "." + key + ": expected true/false");
      return def;
    }
    return j.at(key).get<bool>();
  }
  Schema sub(const std::string& name) const {
    Schema s(where_ + "." + name);
    s.errors_ = errors_;
    return s;
  }
  void merge(const Schema& s) { errors_ = s.errors_; }
  void err(const std::string& msg) { errors_->push_back(msg); }
  void check() const {
    if (errors_->empty()) return;
    std::string all = "config schema violations:";
    for (const auto& e : *errors_) all += "\n  " + e;
    throw ConfigError(all);
  }

 private:
  std::string where_;
  std::shared_ptr<std::vector<std::string>> errors_ = std::make_shared<std::vector<std::string>>();
};

// ---------------------------------------------------------------- fit

bool looks_like_cells(const std::string& path) {
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  return header.rfind("state,vth", 0) == 0;
}

BinHistogram load_histogram(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  if (looks_like_cells(path)) return bin_cells(read_cells_csv(f));
  return read_histogram_csv(f);
}

double pec_from_name(const std::string& path) {
  static const std::regex num("([0-9]+(\\.[0-9]+)?)");
  const std::string stem = fs::path(path).stem().string();
  std::string last;
  for (std::sregex_iterator it(stem.begin(), stem.end(), num), end; it != end; ++it) last = (*it)[1];
  if (last.empty()) throw ConfigError("cannot infer P/E cycles from file name " + path + "; pass --pec");
  return std::stod(last);
}

struct FitArgs {
  std::vector<std::string> inputs;
  std::string family = "student_t";
  std::vector<std::string> compare;
  bool dynamic = false;
  std::vector<double> pec;
  double predict = -1.0;
  int max_iter = 1000;
};

int cmd_fit(const Globals& g, const FitArgs& a) {
  if (a.inputs.empty()) throw ConfigError("fit: no input files");
  const VoltageGrid grid;
  json config{{"inputs", a.inputs}, {"family", a.family}, {"compare", a.compare}, {"dynamic", a.dynamic},
              {"pec", a.pec}, {"predict", a.predict}, {"max_iter", a.max_iter}};
  json report;
  bool converged = true;
  std::vector<std::string> outputs;

  if (!a.compare.empty()) {
    const auto hist = load_histogram(a.inputs.front());
    json table = json::array();
    for (const auto& name : a.compare) {
      const auto fr = fit_static(hist, grid, family_from_name(name), nullptr, a.max_iter);
      converged = converged && fr.converged;
      table.push_back({{"family", name}, {"kl", fr.kl_error}, {"converged", fr.converged}});
      std::cout << std::left << std::setw(16) << name << " KL " << std::setprecision(6) << fr.kl_error << "\n";
    }
    std::stable_sort(table.begin(), table.end(),
                     [](const json& x, const json& y) { return x["kl"].get<double>() < y["kl"].get<double>(); });
    report["compare"] = table;
  }

  const Family fam = family_from_name(a.family);
  if (a.dynamic) {
    if (!a.pec.empty() && a.pec.size() != a.inputs.size()) throw ConfigError("fit: --pec needs one value per input");
    std::vector<std::pair<double, ChannelModel>> snaps;
    json fits = json::array();
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
      const double pec = a.pec.empty() ? pec_from_name(a.inputs[i]) : a.pec[i];
      const auto fr = fit_static(load_histogram(a.inputs[i]), grid, fam, nullptr, a.max_iter);
      converged = converged && fr.converged;
      snaps.emplace_back(pec, fr.model);
      fits.push_back({{"input", a.inputs[i]}, {"pec", pec}, {"kl", fr.kl_error}, {"converged", fr.converged}});
      std::cout << a.inputs[i] << " pec " << pec << " KL " << fr.kl_error << "\n";
    }
    const auto dyn = fit_dynamic(snaps);
    report["static_fits"] = fits;
    report["dynamic"] = to_json(dyn);
    json model{{"dynamic", to_json(dyn)}};
    if (a.predict >= 0.0) {
      bool flagged = false;
      const auto m = predict_static(dyn, a.predict, &flagged);
      model["predicted"] = to_json(m);
      model["predicted_pec"] = a.predict;
      model["extrapolation_flagged"] = flagged;
      report["predicted"] = to_json(m);
    }
    write_text(fs::path(g.out) / "model.json", model.dump(2) + "\n");
  } else {
    const auto fr = fit_static(load_histogram(a.inputs.front()), grid, fam, nullptr, a.max_iter);
    converged = converged && fr.converged;
    report["kl"] = fr.kl_error;
    report["iterations"] = fr.iterations;
    report["converged"] = fr.converged;
    std::cout << a.family << " KL " << fr.kl_error << "\n";
    write_text(fs::path(g.out) / "model.json", to_json(fr.model).dump(2) + "\n");
  }
  outputs.push_back("model.json");
  write_text(fs::path(g.out) / "fit_report.json", report.dump(2) + "\n");
  outputs.push_back("fit_report.json");
  write_manifest(g, "fit", config, outputs);
  if (!converged) {
    std::cerr << "fit: optimizer did not converge\n";
    return kExitNoConverge;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct PolicySpec {
  bool warm = false;
  std::string refresh = "none";
  WarmConfig warm_cfg;
};

struct SimulateConfig {
  std::string mode = "analytic";
  Geometry geo = Geometry::scaled_gb(1.0);
  std::string trace_path;
  SynthConfig synth;
  double synth_days = 7.0;
  EnduranceMap endurance = EnduranceMap::defaults();
  double gc_free_fraction = 0.02;
  double ecc_limit = 2e-3;
  std::vector<PolicySpec> policies;
  HeatWatchConfig hw;
};

Geometry parse_geometry(const json& j, Schema& s) {
  s.keys(j, {"gb", "op", "chips", "blocks", "pages_per_block", "page_bytes"});
  const double op = s.number(j, "op", 0.15, 0.0, 10.0);
  Geometry geo = Geometry::scaled_gb(s.number(j, "gb", 1.0, 1e-3, 4096.0), op);
  geo.chips = static_cast<int>(s.number(j, "chips", geo.chips, 1, 1 << 16));
  geo.blocks = static_cast<int>(s.number(j, "blocks", geo.blocks, 1, 1 << 24));
  geo.pages_per_block = static_cast<int>(s.number(j, "pages_per_block", geo.pages_per_block, 2, 1 << 16));
  geo.page_bytes = static_cast<int>(s.number(j, "page_bytes", geo.page_bytes, 512, 1 << 20));
  return geo;
}

SimulateConfig parse_simulate(const json& j, const Globals& g) {
  SimulateConfig c;
  Schema s("config");
  s.keys(j, {"mode", "geometry", "trace", "endurance", "gc_free_fraction", "ecc_limit", "policies", "heatwatch"});
  c.mode = s.string(j, "mode", "analytic");
  if (c.mode != "analytic" && c.mode != "heatwatch") s.err("config.mode: expected \"analytic\" or \"heatwatch\"");
  if (j.contains("geometry")) {
    auto gs = s.sub("geometry");
    c.geo = parse_geometry(j["geometry"], gs);
    s.merge(gs);
  }
  c.gc_free_fraction = s.number(j, "gc_free_fraction", 0.02, 0.0, 0.5);
  c.ecc_limit = s.number(j, "ecc_limit", 2e-3, 0.0, 1.0);
  c.synth.seed = g.seed;
  c.synth.writes_per_s = 2.0;
  if (j.contains("trace")) {
    auto ts = s.sub("trace");
    const auto& t = j["trace"];
    ts.keys(t, {"path", "days", "writes_per_s", "hot_fraction", "hot_share", "read_fraction", "distribution", "zipf_s"});
    c.trace_path = ts.string(t, "path", "");
    c.synth_days = ts.number(t, "days", 7.0, 0.0, 3650.0);
    c.synth.writes_per_s = ts.number(t, "writes_per_s", 2.0, 1e-9, 1e6);
    c.synth.hot_fraction = ts.number(t, "hot_fraction", 0.01, 1e-9, 1.0 - 1e-9);
    c.synth.hot_share = ts.number(t, "hot_share", 0.95, 1e-9, 1.0 - 1e-9);
    c.synth.read_fraction = ts.number(t, "read_fraction", 0.0, 0.0, 1.0 - 1e-9);
    const auto dist = ts.string(t, "distribution", "two_level");
    if (dist == "zipf") {
      c.synth.dist = HotDistribution::Zipf;
    } else if (dist != "two_level") {
      ts.err("config.trace.distribution: expected \"two_level\" or \"zipf\"");
    }
    c.synth.zipf_s = ts.number(t, "zipf_s", 1.0, 0.0, 10.0);
    s.merge(ts);
  }
  if (j.contains("endurance")) {
    const auto& e = j["endurance"];
    if (!e.is_object()) {
      s.err("config.endurance: expected an object of duration -> P/E cycles");
    } else {
      c.endurance.points.clear();
      for (const auto& [k, v] : e.items()) {
        try {
          if (!v.is_number()) throw ConfigError("expected a number");
          c.endurance.points.emplace_back(parse_duration(k), v.get<double>());
        } catch (const std::exception& ex) {
          s.err("config.endurance." + k + ": " + ex.what());
        }
      }
      std::sort(c.endurance.points.begin(), c.endurance.points.end());
    }
  }
  if (j.contains("policies")) {
    if (!j["policies"].is_array()) {
      s.err("config.policies: expected an array");
    } else {
      for (std::size_t i = 0; i < j["policies"].size(); ++i) {
        auto ps = s.sub("policies[" + std::to_string(i) + "]");
        const auto& p = j["policies"][i];
        ps.keys(p, {"warm", "refresh", "h_fraction", "window", "tune"});
        PolicySpec spec;
        spec.warm = ps.boolean(p, "warm", false);
        spec.refresh = ps.string(p, "refresh", "none");
        spec.warm_cfg.h_fraction = ps.number(p, "h_fraction", spec.warm_cfg.h_fraction, 0.0, 0.5);
        spec.warm_cfg.window = static_cast<int>(ps.number(p, "window", spec.warm_cfg.window, 1, 1 << 20));
        spec.warm_cfg.tune = ps.boolean(p, "tune", true);
        try {
          parse_refresh(spec.refresh);
        } catch (const std::exception& ex) {
          ps.err("config.policies[" + std::to_string(i) + "].refresh: " + ex.what());
        }
        c.policies.push_back(spec);
        s.merge(ps);
      }
    }
  }
  if (c.policies.empty()) c.policies.push_back({});
  c.hw.geo = c.geo;
  c.hw.seed = g.seed;
  c.hw.ecc_limit = c.ecc_limit;
  if (j.contains("heatwatch")) {
    auto hs = s.sub("heatwatch");
    const auto& h = j["heatwatch"];
    hs.keys(h, {"trace_days", "writes_per_s", "read_fraction", "hot_fraction", "hot_share", "pec_step", "pec_max",
                "max_samples", "refit_every_pec", "refit_wordlines", "policies", "temperature"});
    c.hw.trace_days = hs.number(h, "trace_days", c.hw.trace_days, 1e-3, 3650.0);
    c.hw.writes_per_s = hs.number(h, "writes_per_s", c.hw.writes_per_s, 1e-6, 1e6);
    c.hw.read_fraction = hs.number(h, "read_fraction", c.hw.read_fraction, 0.0, 0.99);
    c.hw.hot_fraction = hs.number(h, "hot_fraction", c.hw.hot_fraction, 1e-9, 1.0 - 1e-9);
    c.hw.hot_share = hs.number(h, "hot_share", c.hw.hot_share, 1e-9, 1.0 - 1e-9);
    c.hw.pec_step = hs.number(h, "pec_step", c.hw.pec_step, 1.0, 1e6);
    c.hw.pec_max = hs.number(h, "pec_max", c.hw.pec_max, 0.0, 1e7);
    c.hw.max_samples = static_cast<int>(hs.number(h, "max_samples", c.hw.max_samples, 1, 1e7));
    c.hw.refit_every_pec = static_cast<int>(hs.number(h, "refit_every_pec", c.hw.refit_every_pec, 1, 1e7));
    c.hw.refit_wordlines = static_cast<int>(hs.number(h, "refit_wordlines", c.hw.refit_wordlines, 1, 1e6));
    if (h.contains("policies")) {
      c.hw.policies.clear();
      if (!h["policies"].is_array()) hs.err("config.heatwatch.policies: expected an array of names");
      for (const auto& p : h["policies"]) {
        try {
          c.hw.policies.push_back(policy_from_name(p.get<std::string>()));
        } catch (const std::exception& ex) {
          hs.err(std::string("config.heatwatch.policies: ") + ex.what());
        }
      }
    }
    if (h.contains("temperature")) {
      auto ts = hs.sub("temperature");
      const auto& t = h["temperature"];
      ts.keys(t, {"mean_c", "amplitude_c", "period_s", "sigma_c", "noise_interval_s"});
      c.hw.temp.mean_c = ts.number(t, "mean_c", c.hw.temp.mean_c, -60.0, 150.0);
      c.hw.temp.amplitude_c = ts.number(t, "amplitude_c", c.hw.temp.amplitude_c, 0.0, 100.0);
      c.hw.temp.period_s = ts.number(t, "period_s", c.hw.temp.period_s, 1.0, 1e9);
      c.hw.temp.sigma_c = ts.number(t, "sigma_c", c.hw.temp.sigma_c, 0.0, 50.0);
      c.hw.temp.noise_interval_s = ts.number(t, "noise_interval_s", c.hw.temp.noise_interval_s, 1.0, 1e6);
      hs.merge(ts);
    }
    s.merge(hs);
  }
  c.hw.temp.seed = g.seed;
  s.check();
  try {
    c.geo.validate();
    c.endurance.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  return c;
}

std::string sanitize(std::string label) {
  for (auto& ch : label)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  return label;
}

int run_analytic(const Globals& g, const SimulateConfig& c, const json& config) {
  std::vector<TraceEvent> events;
  if (!c.trace_path.empty()) {
    events = read_trace_file(c.trace_path);
  } else {
    SynthConfig sc = c.synth;
    sc.duration_s = c.synth_days * kSecondsPerDay;
    sc.footprint_pages = static_cast<std::uint64_t>(c.geo.logical_pages());
    sc.page_bytes = static_cast<std::uint64_t>(c.geo.page_bytes);
    events = synth_hot(sc);
  }

  std::vector<SimConfig> sims;
  for (const auto& p : c.policies) {
    SimConfig s;
    s.geo = c.geo;
    s.warm = p.warm_cfg;
    s.warm.enabled = p.warm;
    s.refresh = parse_refresh(p.refresh);
    s.endurance = c.endurance;
    s.gc_free_fraction = c.gc_free_fraction;
    s.seed = g.seed;
    sims.push_back(s);
  }

  // independent runs, merged in configuration order
  std::vector<LifetimeReport> reports(sims.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, g.jobs));
  for (std::size_t base = 0; base < sims.size(); base += jobs) {
    std::vector<std::future<LifetimeReport>> batch;
    for (std::size_t i = base; i < std::min(sims.size(), base + jobs); ++i)
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                 [&events, &sims, i] { return run_lifetime(events, sims[i]); }));
    for (std::size_t i = 0; i < batch.size(); ++i) reports[base + i] = batch[i].get();
  }

  json out = json::array();
  std::vector<std::string> outputs{"report.json"};
  bool uncorrectable = false;
  std::map<std::string, int> seen;
  for (const auto& r : reports) {
    std::string name = sanitize(r.config_label);
    if (const int n = seen[name]++; n > 0) name += "_" + std::to_string(n);
    std::ostringstream csv;
    write_series_csv(r, csv);
    const std::string file = "series_" + name + ".csv";
    write_text(fs::path(g.out) / file, csv.str());
    outputs.push_back(file);
    auto j = to_json(r);
    j["series_csv"] = file;
    out.push_back(j);
    for (const auto& row : r.series) uncorrectable = uncorrectable || row.rber_worst > c.ecc_limit;
    std::cout << std::left << std::setw(20) << r.config_label << " lifetime_days "
              << (r.infinite ? std::string("inf") : std::to_string(r.lifetime_days)) << " writes "
              << r.writes.total() << "\n";
  }
  json report{{"mode", "analytic"}, {"events", events.size()}, {"uncorrectable_detected", uncorrectable},
              {"runs", out}};
  write_text(fs::path(g.out) / "report.json", report.dump(2) + "\n");
  write_manifest(g, "simulate", config, outputs);
  if (uncorrectable) {
    std::cerr << "simulate: stored data exceeded the ECC limit during replay\n";
    return kExitUncorrectable;
  }
  return kExitOk;
}

int run_heatwatch_mode(const Globals& g, const SimulateConfig& c, const json& config) {
  const auto rep = run_heatwatch(c.hw);
  std::ostringstream csv;
  write_series_csv(rep, csv);
  write_text(fs::path(g.out) / "series_heatwatch.csv", csv.str());
  json j = to_json(rep);
  j["mode"] = "heatwatch";
  j["series_csv"] = "series_heatwatch.csv";
  write_text(fs::path(g.out) / "report.json", j.dump(2) + "\n");
  for (const auto& p : rep.policies)
    std::cout << std::left << std::setw(16) << policy_name(p.policy) << " lifetime_pec " << p.lifetime_pec << "\n";
  write_manifest(g, "simulate", config, {"report.json", "series_heatwatch.csv"});
  return kExitOk;
}

struct SimulateArgs {
  std::string config;
  std::string trace;
  std::string policy;
  std::string refresh;
  std::string mode;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  json j = a.config.empty() ? json::object() : read_json_file(a.config);
  if (!a.mode.empty()) j["mode"] = a.mode;
  if (!a.trace.empty()) j["trace"]["path"] = a.trace;
  if (!a.policy.empty() || !a.refresh.empty()) {
    if (!a.policy.empty() && a.policy != "warm" && a.policy != "baseline")
      throw ConfigError("--policy: expected warm or baseline");
    j["policies"] = json::array({{{"warm", a.policy == "warm"}, {"refresh", a.refresh.empty() ? "none" : a.refresh}}});
  }
  const auto c = parse_simulate(j, g);
  json config = j;
  config["seed"] = g.seed;
  if (c.mode == "heatwatch") return run_heatwatch_mode(g, c, config);
  return run_analytic(g, c, config);
}

// ---------------------------------------------------------------- plan

int cmd_plan(const Globals& g, const std::string& path) {
  const json j = path.empty() ? json::object() : read_json_file(path);
  Schema s("plan");
  s.keys(j, {"pba_tb", "lba_tb", "parity_fraction", "ecc", "lifetime", "rber_of_pec"});
  const double pba = s.number(j, "pba_tb", 2.4, 1e-9, 1e9);
  const double lba = s.number(j, "lba_tb", 2.0, 1e-9, 1e9);
  const double parity = s.number(j, "parity_fraction", 1.0 / 32.0, 0.0, 0.99);

  std::vector<std::pair<std::string, EccConfig>> engines;
  if (j.contains("ecc")) {
    if (!j["ecc"].is_array()) s.err("plan.ecc: expected an array");
    for (std::size_t i = 0; j["ecc"].is_array() && i < j["ecc"].size(); ++i) {
      auto es = s.sub("ecc[" + std::to_string(i) + "]");
      const auto& e = j["ecc"][i];
      es.keys(e, {"name", "rate", "l", "t", "target_uber"});
      EccConfig ec;
      ec.rate = es.number(e, "rate", ec.rate, 1e-6, 1.0);
      ec.l = static_cast<long>(es.number(e, "l", static_cast<double>(ec.l), 1, 1 << 24));
      ec.t = static_cast<long>(es.number(e, "t", static_cast<double>(ec.t), 0, 1 << 24));
      ec.target_uber = es.number(e, "target_uber", ec.target_uber, 0.0, 1.0);
      engines.emplace_back(es.string(e, "name", "ECC-" + std::to_string(i + 1)), ec);
      s.merge(es);
    }
  } else {
    EccConfig e1;
    e1.rate = 0.93;
    e1.t = 40;
    EccConfig e2;
    e2.rate = 0.90;
    e2.t = 60;
    engines = {{"ECC-1", e1}, {"ECC-2", e2}};
  }
  LifetimeInputs li;
  if (j.contains("lifetime")) {
    auto ls = s.sub("lifetime");
    const auto& l = j["lifetime"];
    ls.keys(l, {"pec", "dwpd", "r_compress"});
    li.pec = ls.number(l, "pec", li.pec, 0.0, 1e9);
    li.dwpd = ls.number(l, "dwpd", li.dwpd, 1e-9, 1e6);
    li.r_compress = ls.number(l, "r_compress", li.r_compress, 1e-9, 1e6);
    s.merge(ls);
  }
  PowerLaw rber_law{2e-4 / 3000.0, 1.0, 0.0};  // RBER = a * PEC^b + c
  if (j.contains("rber_of_pec")) {
    auto rs = s.sub("rber_of_pec");
    const auto& r = j["rber_of_pec"];
    rs.keys(r, {"a", "b", "c"});
    rber_law.a = rs.number(r, "a", rber_law.a, 0.0, 1e6);
    rber_law.b = rs.number(r, "b", rber_law.b, 0.0, 10.0);
    rber_law.c = rs.number(r, "c", rber_law.c, 0.0, 1.0);
    s.merge(rs);
  }
  s.check();

  json table = json::array();
  for (const auto& [name, e] : engines) {
    for (bool with_parity : {false, true}) {
      const double op = op_for_rate(pba, lba, e.rate, with_parity ? parity : 0.0);
      LifetimeInputs in = li;
      in.op = op;
      in.wa = op > 0.0 ? wa_for_op(op) : std::numeric_limits<double>::infinity();
      const double years = op > 0.0 ? lifetime_years(in) : 0.0;
      table.push_back({{"config", name + (with_parity ? ", with superpage parity" : ", no superpage parity")},
                       {"coding_rate", e.rate},
                       {"op", op},
                       {"wa", op > 0.0 ? json(in.wa) : json(nullptr)},
                       {"lifetime_years", years}});
    }
  }

  std::vector<EccConfig> ordered;
  for (const auto& pe : engines) ordered.push_back(pe.second);
  std::stable_sort(ordered.begin(), ordered.end(), [](const EccConfig& x, const EccConfig& y) { return x.rate > y.rate; });
  const auto plan = plan_multirate(ordered, rber_law, pba, lba, parity);
  const double multi = multirate_lifetime(plan.stages, li.dwpd, li.r_compress);
  const auto& strongest = ordered.back();
  LifetimeInputs single = li;
  single.pec = plan.strongest_endurance;
  single.op = op_for_rate(pba, lba, strongest.rate, parity);
  single.wa = wa_for_op(single.op);
  const double fixed = lifetime_years(single);
  json stages = json::array();
  for (std::size_t i = 0; i < plan.stages.size(); ++i)
    stages.push_back({{"pec", plan.stages[i].pec},
                      {"op", plan.stages[i].op},
                      {"wa", plan.stages[i].wa},
                      {"rate", plan.stages[i].rate},
                      {"switch_pec", plan.switch_pec[i]}});
  json out{{"op_fraction", op_fraction(pba, lba)},
           {"op_table", table},
           {"multirate",
            {{"stages", stages},
             {"lifetime_years", multi},
             {"strongest_single_lifetime_years", fixed},
             {"delta_years", multi - fixed}}}};
  std::cout << out.dump(2) << "\n";
  write_text(fs::path(g.out) / "plan.json", out.dump(2) + "\n");
  write_manifest(g, "plan", j, {"plan.json"});
  return kExitOk;
}

// ---------------------------------------------------------------- layout, trace-stats

int cmd_layout(const Globals& g, int m, int n, bool conventional, bool to_file) {
  const auto layout = conventional ? conventional_layout(m, n) : li_raid_layout(m, n);
  std::ostringstream csv;
  write_layout_csv(layout, csv);
  if (to_file) {
    write_text(fs::path(g.out) / "layout.csv", csv.str());
    write_manifest(g, "layout", {{"m", m}, {"n", n}, {"conventional", conventional}}, {"layout.csv"});
  } else {
    std::cout << csv.str();
  }
  if (layout.padded) std::cerr << "layout: m does not divide n, groups padded\n";
  return kExitOk;
}

int cmd_trace_stats(const Globals& g, const std::string& path, const std::string& canonical, std::uint64_t page_bytes,
                    std::uint64_t footprint) {
  ParseStats ps;
  const auto events = read_trace_file(path, &ps);
  std::uint64_t reads = 0, writes = 0, bytes_w = 0;
  std::set<std::uint64_t> pages;
  for (const auto& e : events) {
    if (e.op == 'W') {
      ++writes;
      bytes_w += e.size;
      const std::uint64_t first = e.lba * 512 / page_bytes, last = (e.lba * 512 + e.size - 1) / page_bytes;
      for (std::uint64_t p = first; p <= last; ++p) pages.insert(p);
    } else {
      ++reads;
    }
  }
  json out{{"rows", ps.rows},
           {"skipped", ps.skipped},
           {"events", events.size()},
           {"reads", reads},
           {"writes", writes},
           {"bytes_written", bytes_w},
           {"written_pages", pages.size()},
           {"duration_s", events.empty() ? 0.0 : static_cast<double>(events.back().timestamp_us) * 1e-6}};
  if (writes > 0) {
    const auto curve = hotness_cdf(events, page_bytes, footprint);
    json h = json::object();
    for (double f : {0.01, 0.05, 0.1, 0.2, 0.5}) {
      std::ostringstream key;
      key << f;
      h[key.str()] = cdf_at(curve, f);
    }
    out["hotness_cdf"] = h;
  }
  std::cout << out.dump(2) << "\n";
  std::vector<std::string> outputs{"trace_stats.json"};
  write_text(fs::path(g.out) / "trace_stats.json", out.dump(2) + "\n");
  if (!canonical.empty()) {
    std::ostringstream csv;
    write_canonical(events, csv);
    write_text(canonical, csv.str());
  }
  write_manifest(g, "trace-stats", {{"trace", path}, {"page_bytes", page_bytes}, {"footprint_pages", footprint}},
                 outputs);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flashlab: NAND flash reliability laboratory"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed")->capture_default_str();
  app.add_option("--jobs", g.jobs, "parallel independent runs")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "fit channel models to histograms or cell snapshots");
  fit->add_option("inputs", fa.inputs, "histogram (state,bin,count) or cell (state,vth,layer,bin) CSV files")
      ->required()
      ->check(CLI::ExistingFile);
  fit->add_option("--family", fa.family, "gaussian, normal_laplace or student_t")->capture_default_str();
  fit->add_option("--compare", fa.compare, "families to compare on the first input")->delimiter(',');
  fit->add_flag("--dynamic", fa.dynamic, "fit power-law trajectories across inputs");
  fit->add_option("--pec", fa.pec, "P/E cycles per input (default: parsed from file names)")->delimiter(',');
  fit->add_option("--predict", fa.predict, "predict the channel at this P/E count");
  fit->add_option("--max-iter", fa.max_iter, "simplex iteration cap per run")->check(CLI::PositiveNumber)->capture_default_str();

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "trace-driven lifetime or HeatWatch runs");
  sim->add_option("config", sa.config, "JSON config")->check(CLI::ExistingFile);
  sim->add_option("--trace", sa.trace, "trace file (MSR or canonical CSV)")->check(CLI::ExistingFile);
  sim->add_option("--policy", sa.policy, "baseline or warm");
  sim->add_option("--refresh", sa.refresh, "none, fcr:<dur>, fcr-sweep:<dur>, arfcr");
  sim->add_option("--mode", sa.mode, "analytic or heatwatch");

  std::string plan_in;
  auto* plan = app.add_subcommand("plan", "OP, lifetime and multi-rate ECC tables");
  plan->add_option("inputs", plan_in, "JSON inputs")->check(CLI::ExistingFile);

  int lm = 4, ln = 4;
  bool conventional = false, layout_file = false;
  auto* layout = app.add_subcommand("layout", "RAID group layout as CSV");
  layout->add_option("-m,--chips", lm, "chips per group")->capture_default_str();
  layout->add_option("-n,--wordlines", ln, "wordlines per chip")->capture_default_str();
  layout->add_flag("--conventional", conventional, "same (wordline, page) across chips");
  layout->add_flag("--write", layout_file, "write layout.csv and a manifest into --out");

  std::string trace_in, canonical;
  std::uint64_t page_bytes = 8192, footprint = 0;
  auto* ts = app.add_subcommand("trace-stats", "summarize a block trace");
  ts->add_option("trace", trace_in, "trace file")->required()->check(CLI::ExistingFile);
  ts->add_option("--canonical", canonical, "also write the canonical CSV here");
  ts->add_option("--page-bytes", page_bytes, "page size")->capture_default_str();
  ts->add_option("--footprint-pages", footprint, "footprint for the hotness CDF (0 = written pages)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    fs::create_directories(g.out);
    if (*fit) return cmd_fit(g, fa);
    if (*sim) return cmd_simulate(g, sa);
    if (*plan) return cmd_plan(g, plan_in);
    if (*layout) return cmd_layout(g, lm, ln, conventional, layout_file);
    if (*ts) return cmd_trace_stats(g, trace_in, canonical, page_bytes, footprint);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConvergenceError& e) {
    std::cerr << "non-convergence: " << e.what() << "\n";
    return kExitNoConverge;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
