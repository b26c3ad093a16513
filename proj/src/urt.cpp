#include "flashlab/urt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

namespace flashlab {

URTParams URTParams::from_retention(const RetentionModel3D& table, double b_mu, double a_dwell) {
  URTParams p;
  for (int i = 0; i < kNumRetVars; ++i) {
    const auto v = static_cast<RetVar>(i);
    const auto& c = table[v];
    const bool is_mu = v == RetVar::MuER || v == RetVar::MuP1 || v == RetVar::MuP2 || v == RetVar::MuP3;
    auto& pv = p.pvm[i];
    pv.A = 0.0;
    pv.B = is_mu ? b_mu : 0.0;
    pv.C = c.gamma;
    pv.D = c.delta - pv.B * kRoomKelvin;
    auto& sr = p.srrm[i];
    sr.t0 = 1.0;
    sr.a = a_dwell;
    if (c.alpha != 0.0) {
      sr.b = c.alpha;
      sr.c = c.beta / c.alpha;
    } else {
      // beta*ln(t) alone, approximated with a vanishing PEC slope
      sr.b = 0.0;
      sr.c = 0.0;
      if (c.beta != 0.0) {
        sr.b = c.beta * 1e-9;
        sr.c = 1e9;
      }
    }
  }
  return p;
}

void URTParams::validate() const {
  if (!(ea > 0.0)) throw ConfigError("urt: ea must be > 0");
  if (!(t_room > 0.0)) throw ConfigError("urt: t_room must be > 0");
  for (const auto& s : srrm)
    if (!(s.t0 > 0.0)) throw ConfigError("urt: t0 must be > 0");
}

double af(double t_kelvin, double ea, double t_room) {
  if (!(t_kelvin > 0.0) || !(t_room > 0.0)) throw std::invalid_argument("af: temperatures must be > 0 K");
  return std::exp(ea / kBoltzmannEv * (1.0 / t_room - 1.0 / t_kelvin));
}

double af(double t_kelvin, const URTParams& p) { return af(t_kelvin, p.ea, p.t_room); }

double af_between(double from_kelvin, double to_kelvin, double ea) {
  if (!(from_kelvin > 0.0) || !(to_kelvin > 0.0)) throw std::invalid_argument("af: temperatures must be > 0 K");
  return std::exp(ea / kBoltzmannEv * (1.0 / to_kelvin - 1.0 / from_kelvin));
}

double fit_ea(const std::vector<EaSample>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("fit_ea: need at least 2 samples");
  double sxx = 0.0, sxy = 0.0;
  double tmin = samples.front().T1, tmax = samples.front().T1;
  for (const auto& s : samples) {
    if (!(s.t1 > 0.0 && s.t2 > 0.0 && s.T1 > 0.0 && s.T2 > 0.0))
      throw std::invalid_argument("fit_ea: times and temperatures must be > 0");
    const double x = 1.0 / s.T1 - 1.0 / s.T2;
    const double y = std::log(s.t1 / s.t2);
    sxx += x * x;
    sxy += x * y;
    tmin = std::min({tmin, s.T1, s.T2});
    tmax = std::max({tmax, s.T1, s.T2});
  }
  if (!(sxx > 0.0) || tmin == tmax) throw std::invalid_argument("fit_ea: degenerate temperatures");
  return kBoltzmannEv * sxy / sxx;
}

double pvm_predict(const PvmCoeffs& c, double tp_kelvin, double pec) {
  return c.A * tp_kelvin * pec + c.B * tp_kelvin + c.C * pec + c.D;
}

double srrm_delta(const SrrmCoeffs& c, double t_er, double t_ed, double pec) {
  if (t_er == 0.0) return 0.0;
  return c.b * (pec + c.c) * std::log1p(t_er / (c.t0 + c.a * t_ed));
}

double urt_predict(const URTParams& p, RetVar output, double pec, double tp_kelvin, double t_r, double t_d,
                   double af_r, double af_d) {
  const int i = static_cast<int>(output);
  return pvm_predict(p.pvm[i], tp_kelvin, pec) + srrm_delta(p.srrm[i], t_r * af_r, t_d * af_d, pec);
}

PvmCoeffs fit_pvm(const std::vector<PvmSample>& samples) {
  if (samples.size() < 4) throw std::invalid_argument("fit_pvm: need at least 4 samples");
  Eigen::MatrixXd X(samples.size(), 4);
  Eigen::VectorXd y(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    X(i, 0) = s.tp * s.pec;
    X(i, 1) = s.tp;
    X(i, 2) = s.pec;
    X(i, 3) = 1.0;
    y(i) = s.y;
  }
  // column scaling keeps the normal equations well conditioned
  Eigen::VectorXd scale = X.colwise().norm().transpose();
  for (int j = 0; j < 4; ++j)
    if (scale(j) == 0.0) scale(j) = 1.0;
  const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
  const Eigen::VectorXd beta = Xs.colPivHouseholderQr().solve(y).cwiseQuotient(scale);
  return PvmCoeffs{beta(0), beta(1), beta(2), beta(3)};
}

namespace {

struct SrrmInner {
  double b = 0.0;
  double bc = 0.0;
  double sse = 0.0;
};

SrrmInner srrm_linear(const std::vector<SrrmSample>& s, double a, double t0) {
  double s11 = 0, s12 = 0, s22 = 0, r1 = 0, r2 = 0;
  for (const auto& x : s) {
    const double l = std::log1p(x.t_er / (t0 + a * x.t_ed));
    const double g1 = x.pec * l, g2 = l;
    s11 += g1 * g1;
    s12 += g1 * g2;
    s22 += g2 * g2;
    r1 += g1 * x.dy;
    r2 += g2 * x.dy;
  }
  SrrmInner out;
  const double det = s11 * s22 - s12 * s12;
  if (std::fabs(det) > 1e-300 * std::max(1.0, s11 * s22)) {
    out.b = (r1 * s22 - r2 * s12) / det;
    out.bc = (s11 * r2 - s12 * r1) / det;
  } else if (s22 > 0.0) {
    out.bc = r2 / s22;
  }
  for (const auto& x : s) {
    const double l = std::log1p(x.t_er / (t0 + a * x.t_ed));
    const double e = out.b * x.pec * l + out.bc * l - x.dy;
    out.sse += e * e;
  }
  return out;
}

}  // namespace

SrrmCoeffs fit_srrm(const std::vector<SrrmSample>& samples) {
  if (samples.size() < 4) throw std::invalid_argument("fit_srrm: need at least 4 samples");
  // b and b*c enter linearly; search (ln a, ln t0) with Nelder-Mead.
  auto obj = [&](const std::vector<double>& x) {
    return srrm_linear(samples, std::exp(x[0]), std::exp(x[1])).sse;
  };
  std::vector<double> best{std::log(1e-3), 0.0};
  double fbest = obj(best);
  for (double la : {-12.0, -8.0, -4.0, 0.0})
    for (double lt : {-2.0, 0.0, 3.0, 6.0}) {
      const double f = obj({la, lt});
      if (f < fbest) {
        fbest = f;
        best = {la, lt};
      }
    }
  NMOptions opt;
  opt.step = {1.0, 1.0};
  NMResult r = nelder_mead(obj, best, opt);
  for (int i = 0; i < 3 && !r.converged; ++i) r = nelder_mead(obj, r.x, opt);
  const double a = std::exp(r.x[0]), t0 = std::exp(r.x[1]);
  const SrrmInner lin = srrm_linear(samples, a, t0);
  SrrmCoeffs c;
  c.a = a;
  c.t0 = t0;
  c.b = lin.b;
  c.c = lin.b != 0.0 ? lin.bc / lin.b : 0.0;
  return c;
}

double srrm_rmse_percent(const SrrmCoeffs& c, const std::vector<SrrmSample>& samples) {
  double se = 0.0, mag = 0.0;
  for (const auto& s : samples) {
    const double e = srrm_delta(c, s.t_er, s.t_ed, s.pec) - s.dy;
    se += e * e;
    mag += s.dy * s.dy;
  }
  if (mag == 0.0) return se == 0.0 ? 0.0 : 100.0;
  return 100.0 * std::sqrt(se / mag);
}

ChannelModel urt_channel(const URTParams& p, double pec, double tp_kelvin, double t_r_eff, double t_d_eff) {
  ChannelModel m;
  m.family = Family::Gaussian;
  for (auto s : kAllStates) {
    m[s].mu = urt_predict(p, mu_var(s), pec, tp_kelvin, t_r_eff, t_d_eff, 1.0, 1.0);
    m[s].sigma = std::max(0.1, urt_predict(p, sigma_var(s), pec, tp_kelvin, t_r_eff, t_d_eff, 1.0, 1.0));
  }
  return m;
}

nlohmann::json to_json(const URTParams& p) {
  nlohmann::json j;
  j["ea"] = p.ea;
  j["t_room"] = p.t_room;
  for (int i = 0; i < kNumRetVars; ++i) {
    const char* name = ret_var_name(static_cast<RetVar>(i));
    const auto& pv = p.pvm[i];
    const auto& sr = p.srrm[i];
    j["outputs"][name] = {{"pvm", {{"A", pv.A}, {"B", pv.B}, {"C", pv.C}, {"D", pv.D}}},
                          {"srrm", {{"a", sr.a}, {"b", sr.b}, {"c", sr.c}, {"t0", sr.t0}}}};
  }
  return j;
}

URTParams urt_params_from_json(const nlohmann::json& j) {
  URTParams p = URTParams::from_retention(RetentionModel3D::defaults());
  try {
    p.ea = j.value("ea", p.ea);
    p.t_room = j.value("t_room", p.t_room);
    if (j.contains("outputs")) {
      for (const auto& [key, val] : j.at("outputs").items()) {
        const int i = static_cast<int>(ret_var_from_name(key));
        if (val.contains("pvm")) {
          const auto& v = val.at("pvm");
          p.pvm[i] = {v.at("A").get<double>(), v.at("B").get<double>(), v.at("C").get<double>(),
                      v.at("D").get<double>()};
        }
        if (val.contains("srrm")) {
          const auto& v = val.at("srrm");
          p.srrm[i] = {v.at("a").get<double>(), v.at("b").get<double>(), v.at("c").get<double>(),
                       v.at("t0").get<double>()};
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("urt json: ") + e.what());
  }
  p.validate();
  return p;
}

// ---- acceleration log ------------------------------------------------------

void AccelLog::update(double temp_kelvin, double tick_seconds) {
  update_factor(af(temp_kelvin, ea_, t_room_), tick_seconds);
}

void AccelLog::update_factor(double factor, double tick_seconds) {
  if (!(tick_seconds >= 0.0)) throw std::invalid_argument("AccelLog: ticks must be non-decreasing");
  if (tick_seconds == 0.0) return;
  const double next = now_ + tick_seconds;
  for (int k = 0; k < kLevels; ++k) {
    const double len = level_length(k);
    const double b_old = std::floor(now_ / len) * len;
    const double b_new = std::floor(next / len) * len;
    if (b_new == b_old) {
      cur_[k] += factor * tick_seconds;
    } else if (b_new - b_old < 1.5 * len) {
      prev_[k] = cur_[k] + factor * (b_new - now_);
      cur_[k] = factor * (next - b_new);
    } else {
      prev_[k] = factor * len;
      cur_[k] = factor * (next - b_new);
    }
  }
  now_ = next;
}

double AccelLog::effective(double window, bool* clamped) const {
  if (clamped) *clamped = false;
  if (!(window > 0.0)) return 0.0;
  window = std::min(window, now_);
  for (int k = 0; k < kLevels; ++k) {
    const double len = level_length(k);
    const double span = now_ - std::floor(now_ / len) * len;
    if (span + len >= window) {
      if (window <= span) return span > 0.0 ? cur_[k] * window / span : 0.0;
      return cur_[k] + prev_[k] * (window - span) / len;
    }
  }
  if (clamped) *clamped = true;
  const int k = kLevels - 1;
  return cur_[k] + prev_[k];
}

// ---- dwell -----------------------------------------------------------------

DwellTracker::DwellTracker(double drive_bytes, double start_time, double default_dwell)
    : drive_bytes_(drive_bytes), default_dwell_(default_dwell) {
  if (!(drive_bytes > 0.0)) throw ConfigError("DwellTracker: drive size must be > 0");
  history_.push_back(start_time);
}

void DwellTracker::record_write(double bytes, double now) {
  pending_ += bytes;
  while (pending_ >= drive_bytes_) {
    pending_ -= drive_bytes_;
    ++total_drive_writes_;
    history_.push_back(now);
    if (history_.size() > static_cast<std::size_t>(kHistory) + 1) history_.pop_front();
  }
}

double DwellTracker::effective(double now, const AccelLog& accel) const {
  if (total_drive_writes_ == 0) return default_dwell_;
  const int k = std::min(total_drive_writes_, kHistory);
  const double since = history_[history_.size() - 1 - static_cast<std::size_t>(k)];
  const double real = std::max(0.0, now - since);
  return accel.effective(real) / k;
}

// ---- temperature -----------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double unit_from(std::uint64_t x) { return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace

double TempTrace::celsius(double t) const {
  constexpr double kTwoPi = 6.283185307179586;
  double c = mean_c + amplitude_c * std::sin(kTwoPi * t / period_s);
  if (sigma_c > 0.0) {
    const auto slot = static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(t / noise_interval_s)));
    const std::uint64_t h = splitmix64(seed ^ splitmix64(slot));
    const double u1 = unit_from(h), u2 = unit_from(splitmix64(h));
    c += sigma_c * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }
  return c;
}

std::vector<std::pair<double, double>> read_temp_csv(std::istream& is) {
  std::vector<std::pair<double, double>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.rfind("t_seconds", 0) == 0) continue;
    std::istringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw ConfigError("temperature csv: malformed line " + std::to_string(lineno));
    try {
      out.emplace_back(std::stod(a), std::stod(b));
    } catch (const std::exception&) {
      throw ConfigError("temperature csv: bad number on line " + std::to_string(lineno));
    }
    if (out.size() > 1 && out.back().first < out[out.size() - 2].first)
      throw ConfigError("temperature csv: timestamps must be non-decreasing");
  }
  return out;
}

}  // namespace flashlab
