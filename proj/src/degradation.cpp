#include "flashlab/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace flashlab {

namespace {

constexpr std::array<const char*, kNumRetVars> kRetNames{
    "rber_msb", "rber_lsb", "mu_er", "mu_p1", "mu_p2", "mu_p3", "sigma_er",
    "sigma_p1", "sigma_p2", "sigma_p3", "va", "vb", "vc"};

}  // namespace

const char* ret_var_name(RetVar v) { return kRetNames[static_cast<int>(v)]; }

RetVar ret_var_from_name(const std::string& name) {
  for (int i = 0; i < kNumRetVars; ++i)
    if (name == kRetNames[i]) return static_cast<RetVar>(i);
  throw ConfigError("unknown retention variable: " + name);
}

RetentionModel3D RetentionModel3D::defaults() {
  RetentionModel3D m;
  m[RetVar::RberMsb] = {5.49e-6, 0.16, 1.33e-4, -13.11};
  m[RetVar::RberLsb] = {7.92e-6, 0.25, 3.28e-5, -12.72};
  m[RetVar::MuER] = {1.01e-4, 0.74, 1.52e-3, -27.27};
  m[RetVar::MuP1] = {-1.94e-5, -0.40, 3.51e-4, 114.47};
  m[RetVar::MuP2] = {-4.71e-5, -0.70, 3.23e-4, 189.58};
  m[RetVar::MuP3] = {-7.37e-5, -1.20, 5.75e-4, 264.85};
  m[RetVar::SigmaER] = {1.20e-5, -0.10, 1.63e-6, 17.01};
  m[RetVar::SigmaP1] = {-1.34e-6, 9.83e-3, 7.55e-5, 10.20};
  m[RetVar::SigmaP2] = {-2.12e-6, 9.85e-3, 6.69e-5, 10.65};
  m[RetVar::SigmaP3] = {2.87e-6, 1.40e-2, 3.30e-5, 10.83};
  m[RetVar::Va] = {0.0, 0.0, 1.20e-3, 60.52};
  m[RetVar::Vb] = {-3.72e-5, -0.57, 4.20e-4, 150.56};
  m[RetVar::Vc] = {-6.51e-5, -1.06, 4.81e-4, 227.24};
  return m;
}

double retention_eval(const RetentionModel3D& m, RetVar v, double pec, double t_seconds) {
  if (!(t_seconds >= 1.0)) throw std::invalid_argument("retention_eval: t must be >= 1 s");
  const auto& c = m[v];
  return (c.alpha * pec + c.beta) * std::log(t_seconds) + c.gamma * pec + c.delta;
}

ChannelModel retention_channel(const RetentionModel3D& m, double pec, double t_seconds) {
  ChannelModel cm;
  cm.family = Family::Gaussian;
  for (auto s : kAllStates) {
    cm[s].mu = retention_eval(m, mu_var(s), pec, t_seconds);
    cm[s].sigma = std::max(0.1, retention_eval(m, sigma_var(s), pec, t_seconds));
  }
  return cm;
}

ChannelModel retention_channel_calibrated(const RetentionModel3D& m, double pec, double t_seconds) {
  const ChannelModel base = retention_channel(m, pec, t_seconds);
  const ReadRefs refs{retention_eval(m, RetVar::Va, pec, t_seconds), retention_eval(m, RetVar::Vb, pec, t_seconds),
                      retention_eval(m, RetVar::Vc, pec, t_seconds)};
  const double target = 0.5 * (std::exp(retention_eval(m, RetVar::RberMsb, pec, t_seconds)) +
                               std::exp(retention_eval(m, RetVar::RberLsb, pec, t_seconds)));
  auto scaled = [&](double k) {
    ChannelModel c = base;
    for (auto s : kAllStates) c[s].sigma *= k;
    return c;
  };
  double lo = 1e-3, hi = 1.0;
  while (estimate_rber(scaled(hi), refs).total < target && hi < 1e3) hi *= 2.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (estimate_rber(scaled(mid), refs).total < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return scaled(0.5 * (lo + hi));
}

ReadRefs retention_refs(const RetentionModel3D& m, double pec, double t_seconds, const VoltageGrid& grid) {
  return ReadRefs{grid.snap(retention_eval(m, RetVar::Va, pec, t_seconds)),
                  grid.snap(retention_eval(m, RetVar::Vb, pec, t_seconds)),
                  grid.snap(retention_eval(m, RetVar::Vc, pec, t_seconds))};
}

nlohmann::json to_json(const RetentionModel3D& m) {
  nlohmann::json j;
  for (int i = 0; i < kNumRetVars; ++i) {
    const auto& c = m.coeffs[i];
    j[kRetNames[i]] = {{"alpha", c.alpha}, {"beta", c.beta}, {"gamma", c.gamma}, {"delta", c.delta}};
  }
  return j;
}

RetentionModel3D retention_model_from_json(const nlohmann::json& j) {
  RetentionModel3D m = RetentionModel3D::defaults();
  try {
    for (const auto& [key, val] : j.items()) {
      auto& c = m[ret_var_from_name(key)];
      c.alpha = val.at("alpha").get<double>();
      c.beta = val.at("beta").get<double>();
      c.gamma = val.at("gamma").get<double>();
      c.delta = val.at("delta").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("retention model json: ") + e.what());
  }
  if (m[RetVar::Va].alpha != 0.0 || m[RetVar::Va].beta != 0.0)
    throw ConfigError("retention model json: va has no time term");
  return m;
}

StateDelta pe_cycle_trend(const PeCycleConfig& cfg, double pec) {
  if (!(pec >= 0.0)) throw std::invalid_argument("pe_cycle_trend: pec must be >= 0");
  StateDelta d;
  const double k = pec / 1000.0;
  for (int s = 0; s < kNumStates; ++s) {
    d.dmu[s] = cfg.mu_slope[s] * k;
    d.dsigma[s] = cfg.sigma_slope[s] * k;
  }
  return d;
}

LayerProfile sample_layer_profile(const GammaParams& gamma, const OffsetShape& shape, std::uint64_t seed) {
  if (!(gamma.shape > 0.0) || !(gamma.scale > 0.0)) throw ConfigError("gamma shape and scale must be > 0");
  LayerProfile p;
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> dist(gamma.shape, gamma.scale);
  for (auto& m : p.rber_multiplier) m = dist(rng);
  const double mean = std::accumulate(p.rber_multiplier.begin(), p.rber_multiplier.end(), 0.0) / kNumLayers;
  for (auto& m : p.rber_multiplier) m = std::max(m / mean, 1e-9);
  for (int l = 0; l < kNumLayers; ++l) {
    const double x = 0.5 - static_cast<double>(l) / (kNumLayers - 1);
    p.va_offset[l] = shape.va_span * x;
    p.vb_offset[l] = shape.vb_span * x;
  }
  return p;
}

GammaParams fit_gamma(const std::vector<double>& samples) {
  if (samples.size() < 30) throw std::invalid_argument("fit_gamma: need at least 30 samples");
  double mean = 0.0;
  for (double x : samples) {
    if (!(x > 0.0)) throw std::invalid_argument("fit_gamma: samples must be positive");
    mean += x;
  }
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double x : samples) var += (x - mean) * (x - mean);
  var /= static_cast<double>(samples.size() - 1);
  if (!(var > 0.0)) throw std::invalid_argument("fit_gamma: zero variance");
  return GammaParams{mean * mean / var, var / mean};
}

double program_interference(const InterferenceModel& m, double dv_aggressor, NeighborPosition pos) {
  switch (pos) {
    case NeighborPosition::NextWordline: return m.k_next * dv_aggressor;
    case NeighborPosition::PrevWordline: return m.k_prev * dv_aggressor;
  }
  throw std::invalid_argument("program_interference: unknown position");
}

double program_interference(const InterferenceModel& m, double dv_aggressor, const std::string& pos) {
  if (pos == "next" || pos == "next_wl") return program_interference(m, dv_aggressor, NeighborPosition::NextWordline);
  if (pos == "prev" || pos == "prev_wl") return program_interference(m, dv_aggressor, NeighborPosition::PrevWordline);
  throw std::invalid_argument("program_interference: unknown position " + pos);
}

double retention_interference_offset(const InterferenceModel& m, CellState victim, CellState neighbor,
                                     double t_seconds) {
  if (!(t_seconds > 1.0)) return 0.0;
  double table = m.cap * (3.0 - idx(neighbor)) / 3.0;
  if (victim == CellState::ER) table *= m.er_victim_scale;
  const double scale = std::log(t_seconds) / std::log(m.reference_seconds);
  return std::min(m.cap, table * scale);
}

std::array<double, kNumStates> read_disturb_shift(const ReadDisturbConfig& cfg, double read_count) {
  if (!(read_count >= 0.0)) throw std::invalid_argument("read_disturb_shift: read count must be >= 0");
  std::array<double, kNumStates> d{};
  for (int s = 0; s < kNumStates; ++s) d[s] = cfg.shift_at_reference[s] * read_count / cfg.reference_reads;
  return d;
}

}  // namespace flashlab
