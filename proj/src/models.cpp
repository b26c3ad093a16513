#include "flashlab/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

namespace flashlab {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kPhiDelta = 1e-3;
constexpr double kQFloor = 1e-12;

double phi_exact(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double upper_tail(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

// Mills ratio R(x) = (1 - Phi(x)) / phi(x), continued fraction for large x.
double mills_ratio(double x) {
  if (x < 5.0) return upper_tail(x) / phi_exact(x);
  double f = x;
  for (int k = 60; k >= 1; --k) f = x + k / f;
  return 1.0 / f;
}

// phi(z) * R(x) without overflow; phi_z is the (possibly table-derived) density at z.
double mills_product(double phi_z, double z, double x) {
  if (x > -30.0) return phi_z * mills_ratio(x);
  return upper_tail(x) * std::exp(0.5 * (x * x - z * z));
}

double logit(double p) { return std::log(p / (1.0 - p)); }
double inv_logit(double y) { return 1.0 / (1.0 + std::exp(-y)); }

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::NormalLaplace: return "normal_laplace";
    case Family::StudentT: return "student_t";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  if (name == "gaussian") return Family::Gaussian;
  if (name == "normal_laplace") return Family::NormalLaplace;
  if (name == "student_t") return Family::StudentT;
  throw ConfigError("unknown model family: " + name);
}

CellState misprogram_target(CellState s) {
  if (s == CellState::ER) return CellState::P3;
  if (s == CellState::P1) return CellState::P2;
  return s;
}

void ChannelModel::enforce_constraints() {
  (*this)[CellState::P2].lambda = 0.0;
  (*this)[CellState::P3].lambda = 0.0;
  (*this)[CellState::ER].beta = (*this)[CellState::ER].alpha;
  (*this)[CellState::P3].alpha = (*this)[CellState::P3].beta;
}

void ChannelModel::validate() const {
  for (auto s : kAllStates) {
    const auto& m = (*this)[s];
    if (!std::isfinite(m.mu)) throw ConfigError(std::string("non-finite mu for ") + state_name(s));
    if (!(m.sigma > 0.0)) throw ConfigError(std::string("sigma must be > 0 for ") + state_name(s));
    if (!(m.lambda >= 0.0 && m.lambda <= 1.0))
      throw ConfigError(std::string("lambda outside [0,1] for ") + state_name(s));
    if (family != Family::Gaussian && !(m.alpha > 0.0 && m.beta > 0.0))
      throw ConfigError(std::string("tail parameters must be > 0 for ") + state_name(s));
  }
}

ModelDiagnostics& diagnostics() {
  static ModelDiagnostics d;
  return d;
}

// ---- lookup tables ---------------------------------------------------------

const LookupTables& LookupTables::instance() {
  static const LookupTables tables;
  return tables;
}

LookupTables::LookupTables() {
  const int nz = static_cast<int>(std::lround(-2.0 * kZMin / kZStep)) + 1;
  ztab_.resize(nz);
  for (int i = 0; i < nz; ++i) ztab_[i] = 0.5 * std::erfc(-(kZMin + i * kZStep) * kInvSqrt2);
  ztab_[nz / 2] = 0.5;

  const int mid = (kUPoints - 1) / 2;
  ttab_.resize(kNuGrid.size());
  for (std::size_t t = 0; t < kNuGrid.size(); ++t) {
    auto& tab = ttab_[t];
    tab.resize(kUPoints);
    tab.front() = 0.0;
    tab.back() = 1.0;
    for (int i = 1; i < kUPoints - 1; ++i) {
      const double u = static_cast<double>(i - mid) / mid;
      const double z = u / (1.0 - std::fabs(u));
      if (kNuGrid[t] == 0.0) {
        tab[i] = 0.5 * std::erfc(-z * kInvSqrt2);
      } else {
        boost::math::students_t dist(kNuGrid[t]);
        tab[i] = boost::math::cdf(dist, z);
      }
    }
    tab[mid] = 0.5;
  }
}

double LookupTables::z(double zscore) const {
  const double pos = (zscore - kZMin) * 1000.0;
  if (!(pos > 0.0)) return ztab_.front();
  const double last = static_cast<double>(ztab_.size() - 1);
  if (pos >= last) return ztab_.back();
  const auto i = static_cast<std::size_t>(pos);
  const double w = pos - static_cast<double>(i);
  return ztab_[i] + w * (ztab_[i + 1] - ztab_[i]);
}

double LookupTables::t_on_grid(double zscore, std::size_t table) const {
  const auto& tab = ttab_[table];
  const int mid = (kUPoints - 1) / 2;
  if (std::isinf(zscore)) return zscore > 0 ? 1.0 : 0.0;
  const double u = zscore / (1.0 + std::fabs(zscore));
  const double pos = (u + 1.0) * mid;
  if (!(pos > 0.0)) return 0.0;
  if (pos >= kUPoints - 1) return 1.0;
  const auto i = static_cast<std::size_t>(pos);
  const double w = pos - static_cast<double>(i);
  return tab[i] + w * (tab[i + 1] - tab[i]);
}

double LookupTables::t(double zscore, double nu) const {
  if (std::isnan(nu) || nu < kNuGrid.front()) {
    diagnostics().tcdf_nu_clamped.fetch_add(1, std::memory_order_relaxed);
    nu = kNuGrid.front();
  }
  constexpr std::size_t last_finite = kNuGrid.size() - 2;  // 50
  if (nu >= kNuGrid[last_finite]) {
    // last interval interpolates in 1/nu towards the normal table
    const double w = std::isinf(nu) ? 1.0 : 1.0 - kNuGrid[last_finite] / nu;
    const double lo = t_on_grid(zscore, last_finite);
    if (w == 0.0) return lo;
    return lo + w * (t_on_grid(zscore, last_finite + 1) - lo);
  }
  std::size_t i = 0;
  while (i + 1 < last_finite && kNuGrid[i + 1] <= nu) ++i;
  const double w = std::log(nu / kNuGrid[i]) / std::log(kNuGrid[i + 1] / kNuGrid[i]);
  const double lo = t_on_grid(zscore, i);
  if (w == 0.0) return lo;
  return lo + w * (t_on_grid(zscore, i + 1) - lo);
}

// ---- CDF families ----------------------------------------------------------

double gcdf(double v, double mu, double sigma) {
  return LookupTables::instance().z((v - mu) / sigma);
}

double ncdf(double v, double mu, double sigma, double alpha, double beta) {
  const auto& tables = LookupTables::instance();
  const double z = (v - mu) / sigma;
  double big_phi;
  double phi;
  if (std::fabs(z) <= 8.0) {
    big_phi = tables.z(z);
    phi = (tables.z(z + kPhiDelta) - tables.z(z - kPhiDelta)) / (2.0 * kPhiDelta);
  } else {
    big_phi = 0.5 * std::erfc(-z * kInvSqrt2);
    phi = phi_exact(z);
  }
  const double right = mills_product(phi, z, alpha * sigma - z);
  const double left = mills_product(phi, z, beta * sigma + z);
  double f = big_phi - (beta * right - alpha * left) / (alpha + beta);
  if (f < 0.0 || f > 1.0) {
    if (f < -1e-9 || f > 1.0 + 1e-9)
      diagnostics().ncdf_overshoot.fetch_add(1, std::memory_order_relaxed);
    f = std::clamp(f, 0.0, 1.0);
  }
  return f;
}

double tcdf(double v, double mu, double sigma, double alpha, double beta) {
  const double z = (v - mu) / sigma;
  const double nu = (v <= mu) ? beta : alpha;
  return LookupTables::instance().t(z, nu);
}

double state_cdf(Family f, const StateModel& m, double v) {
  switch (f) {
    case Family::Gaussian: return gcdf(v, m.mu, m.sigma);
    case Family::NormalLaplace: return ncdf(v, m.mu, m.sigma, m.alpha, m.beta);
    case Family::StudentT: return tcdf(v, m.mu, m.sigma, m.alpha, m.beta);
  }
  return 0.0;
}

double mixture_cdf(const ChannelModel& model, CellState x, double v) {
  const CellState y = misprogram_target(x);
  const auto& mx = model[x];
  const double fx = state_cdf(model.family, mx, v);
  if (y == x || mx.lambda == 0.0) return fx;
  return (1.0 - mx.lambda) * fx + mx.lambda * state_cdf(model.family, model[y], v);
}

double mixture_pdf(const ChannelModel& model, CellState x, double v) {
  constexpr double h = 0.25;
  return (mixture_cdf(model, x, v + h) - mixture_cdf(model, x, v - h)) / (2.0 * h);
}

namespace {

void cdf_on_grid(Family f, const StateModel& m, const VoltageGrid& grid, std::vector<double>& out) {
  const auto& v = grid.values();
  out.resize(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = state_cdf(f, m, v[k]);
}

void bins_from_cdf(const std::vector<double>& cdf, double weight, std::vector<double>& dens) {
  const std::size_t n = cdf.size();
  dens[0] += weight * cdf[0];
  for (std::size_t k = 1; k < n; ++k) dens[k] += weight * (cdf[k] - cdf[k - 1]);
  dens[n] += weight * (1.0 - cdf[n - 1]);
}

}  // namespace

std::vector<double> model_density(const ChannelModel& model, const VoltageGrid& grid, CellState x) {
  std::vector<double> dens(VoltageGrid::kBins, 0.0);
  std::vector<double> cdf;
  const auto& mx = model[x];
  const CellState y = misprogram_target(x);
  const double lam = (y == x) ? 0.0 : mx.lambda;
  cdf_on_grid(model.family, mx, grid, cdf);
  bins_from_cdf(cdf, 1.0 - lam, dens);
  if (lam > 0.0) {
    cdf_on_grid(model.family, model[y], grid, cdf);
    bins_from_cdf(cdf, lam, dens);
  }
  return dens;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) kl += p[k] * std::log(p[k] / std::max(q[k], kQFloor));
  }
  return kl;
}

double pooled_kl(const BinHistogram& hist, const ChannelModel& model, const VoltageGrid& grid) {
  double sum = 0.0;
  int used = 0;
  for (auto s : kAllStates) {
    if (hist.total(s) == 0) continue;
    sum += kl_divergence(hist.density(s), model_density(model, grid, s));
    ++used;
  }
  return used ? sum / used : 0.0;
}

double pooled_kl(const ChannelModel& truth, const ChannelModel& model, const VoltageGrid& grid) {
  double sum = 0.0;
  for (auto s : kAllStates)
    sum += kl_divergence(model_density(truth, grid, s), model_density(model, grid, s));
  return sum / kNumStates;
}

// ---- Nelder-Mead -----------------------------------------------------------

NMResult nelder_mead(const Objective& f, std::vector<double> x0, const NMOptions& opt) {
  const std::size_t n = x0.size();
  if (n == 0) throw std::invalid_argument("nelder_mead: empty parameter vector");
  NMResult res;
  auto eval = [&](const std::vector<double>& x) {
    const double v = f(x);
    ++res.evaluations;
    if (std::isnan(v)) {
      std::ostringstream os;
      os << "nelder_mead: objective returned NaN at evaluation " << res.evaluations << " x=[";
      for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
      os << "]";
      throw std::domain_error(os.str());
    }
    return v;
  };

  std::vector<std::vector<double>> pts(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    double h = (i < opt.step.size()) ? opt.step[i] : (x0[i] != 0.0 ? 0.05 * x0[i] : 0.00025);
    if (h == 0.0) h = 0.00025;
    pts[i + 1][i] += h;
  }
  for (std::size_t i = 0; i <= n; ++i) fv[i] = eval(pts[i]);

  const long budget = static_cast<long>(opt.max_iter) * static_cast<long>(n + 2);
  std::vector<std::size_t> order(n + 1);
  std::vector<double> c(n), xr(n), xe(n), xc(n);

  auto diameter = [&]() {
    double d = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double t = pts[i][j] - pts[0][j];
        s += t * t;
      }
      d = std::max(d, std::sqrt(s));
    }
    return d;
  };
  auto sort_simplex = [&]() {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<std::vector<double>> p2(n + 1);
    std::vector<double> f2(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      p2[i] = std::move(pts[order[i]]);
      f2[i] = fv[order[i]];
    }
    pts.swap(p2);
    fv.swap(f2);
  };

  sort_simplex();
  while (res.iterations < opt.max_iter) {
    if (diameter() < opt.tol) {
      res.converged = true;
      break;
    }
    if (res.evaluations + static_cast<long>(n + 2) > budget) break;
    ++res.iterations;

    std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) c[j] += pts[i][j] / static_cast<double>(n);
    const auto& worst = pts[n];
    for (std::size_t j = 0; j < n; ++j) xr[j] = c[j] + (c[j] - worst[j]);
    const double fr = eval(xr);

    bool shrink = false;
    if (fr < fv[0]) {
      for (std::size_t j = 0; j < n; ++j) xe[j] = c[j] + 2.0 * (c[j] - worst[j]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[n] = xe;
        fv[n] = fe;
      } else {
        pts[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      pts[n] = xr;
      fv[n] = fr;
    } else if (fr < fv[n]) {
      for (std::size_t j = 0; j < n; ++j) xc[j] = c[j] + 0.5 * (xr[j] - c[j]);
      const double fc = eval(xc);
      if (fc <= fr) {
        pts[n] = xc;
        fv[n] = fc;
      } else {
        shrink = true;
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) xc[j] = c[j] + 0.5 * (worst[j] - c[j]);
      const double fc = eval(xc);
      if (fc < fv[n]) {
        pts[n] = xc;
        fv[n] = fc;
      } else {
        shrink = true;
      }
    }
    if (shrink) {
      for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
        fv[i] = eval(pts[i]);
      }
    }
    sort_simplex();
  }
  if (!res.converged && diameter() < opt.tol) res.converged = true;
  res.x = pts[0];
  res.f = fv[0];
  return res;
}

// ---- static fitting --------------------------------------------------------

bool param_active(Family f, CellState s, Param p) {
  switch (p) {
    case Param::Mu:
    case Param::Sigma: return true;
    case Param::Lambda: return s == CellState::ER || s == CellState::P1;
    case Param::Alpha:
      if (f == Family::Gaussian) return false;
      return s != CellState::P3;  // alpha_P3 tied to beta_P3
    case Param::Beta:
      if (f == Family::Gaussian) return false;
      return s != CellState::ER;  // beta_ER tied to alpha_ER
  }
  return false;
}

namespace {

constexpr double kNuMin = 0.5;
constexpr double kNuMax = 1e8;

double get_param(const StateModel& m, Param p) {
  switch (p) {
    case Param::Mu: return m.mu;
    case Param::Sigma: return m.sigma;
    case Param::Alpha: return m.alpha;
    case Param::Beta: return m.beta;
    case Param::Lambda: return m.lambda;
  }
  return 0.0;
}

void set_param(StateModel& m, Param p, double v) {
  switch (p) {
    case Param::Mu: m.mu = v; break;
    case Param::Sigma: m.sigma = v; break;
    case Param::Alpha: m.alpha = v; break;
    case Param::Beta: m.beta = v; break;
    case Param::Lambda: m.lambda = v; break;
  }
}

struct Slot {
  CellState state;
  Param param;
};

class Packer {
 public:
  Packer(Family f, const std::vector<CellState>& states) : family_(f) {
    for (auto s : states)
      for (int p = 0; p < kNumParams; ++p)
        if (param_active(f, s, static_cast<Param>(p))) slots_.push_back({s, static_cast<Param>(p)});
  }

  std::vector<double> pack(const ChannelModel& m) const {
    std::vector<double> x;
    for (const auto& sl : slots_) {
      const double v = get_param(m[sl.state], sl.param);
      switch (sl.param) {
        case Param::Mu: x.push_back(v); break;
        case Param::Sigma:
        case Param::Alpha:
        case Param::Beta: x.push_back(std::log(v)); break;
        case Param::Lambda: x.push_back(logit(std::clamp(v, 1e-12, 1.0 - 1e-12))); break;
      }
    }
    return x;
  }

  void unpack(const std::vector<double>& x, ChannelModel& m) const {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      const auto& sl = slots_[i];
      double v = x[i];
      switch (sl.param) {
        case Param::Mu: break;
        case Param::Sigma: v = std::exp(std::clamp(v, -20.0, 20.0)); break;
        case Param::Alpha:
        case Param::Beta:
          v = std::exp(std::clamp(v, -30.0, 30.0));
          if (family_ == Family::StudentT) v = std::clamp(v, kNuMin, kNuMax);
          break;
        case Param::Lambda: v = inv_logit(v); break;
      }
      set_param(m[sl.state], sl.param, v);
    }
    m.enforce_constraints();
  }

  std::vector<double> steps() const {
    std::vector<double> h;
    for (const auto& sl : slots_) h.push_back(sl.param == Param::Mu ? 1.0 : (sl.param == Param::Lambda ? 1.0 : 0.3));
    return h;
  }

  std::size_t size() const { return slots_.size(); }

 private:
  Family family_;
  std::vector<Slot> slots_;
};

struct Fitter {
  const VoltageGrid& grid;
  std::array<std::vector<double>, kNumStates> p;
  std::array<bool, kNumStates> present{};

  double state_kl(const ChannelModel& m, CellState s) const {
    if (!present[idx(s)]) return 0.0;
    return kl_divergence(p[idx(s)], model_density(m, grid, s));
  }

  double pooled(const ChannelModel& m) const {
    double sum = 0.0;
    int used = 0;
    for (auto s : kAllStates) {
      if (!present[idx(s)]) continue;
      sum += state_kl(m, s);
      ++used;
    }
    return used ? sum / used : 0.0;
  }
};

// Runs Nelder-Mead with restarts until the objective stops improving.
NMResult minimise_with_restarts(const Objective& obj, std::vector<double> x0, const std::vector<double>& step,
                                int max_restarts, int& iterations, int max_iter) {
  NMOptions opt;
  opt.step = step;
  opt.max_iter = max_iter;
  NMResult best = nelder_mead(obj, x0, opt);
  iterations += best.iterations;
  for (int r = 0; r < max_restarts; ++r) {
    std::vector<double> small = step;
    for (auto& h : small) h *= (r % 2 == 0) ? 0.3 : 1.0;
    opt.step = small;
    NMResult next = nelder_mead(obj, best.x, opt);
    iterations += next.iterations;
    const double gain = best.f - next.f;
    if (next.f <= best.f) best = next;
    if (gain <= 1e-10 * std::max(1e-12, std::fabs(best.f)) && best.converged) break;
  }
  return best;
}

}  // namespace

ChannelModel initial_guess(const BinHistogram& hist, const VoltageGrid& grid, Family f) {
  ChannelModel m;
  m.family = f;
  const auto& v = grid.values();
  auto centre = [&](int k) {
    if (k == 0) return v.front() - 0.5;
    if (k == VoltageGrid::kSteps) return v.back() + 0.5;
    return 0.5 * (v[k - 1] + v[k]);
  };
  for (auto s : kAllStates) {
    auto& sm = m[s];
    const auto d = hist.density(s);
    double mean = 0.0;
    for (int k = 0; k < VoltageGrid::kBins; ++k) mean += d[k] * centre(k);
    double var = 0.0;
    for (int k = 0; k < VoltageGrid::kBins; ++k) var += d[k] * (centre(k) - mean) * (centre(k) - mean);
    sm.mu = mean;
    sm.sigma = std::max(0.5, std::sqrt(var));
    sm.alpha = 5.0;
    sm.beta = 5.0;
    sm.lambda = (s == CellState::ER || s == CellState::P1) ? 1e-4 : 0.0;
  }
  m.enforce_constraints();
  return m;
}

FitResult fit_static(const BinHistogram& hist, const VoltageGrid& grid, Family f, const ChannelModel* init,
                     int max_iter) {
  if (max_iter < 1) throw ConfigError("fit_static: max_iter must be positive");
  Fitter fit{grid, {}, {}};
  bool any = false;
  for (auto s : kAllStates) {
    fit.present[idx(s)] = hist.total(s) > 0;
    if (fit.present[idx(s)]) {
      fit.p[idx(s)] = hist.density(s);
      any = true;
    }
  }
  if (!any) throw ConfigError("fit_static: empty histogram");

  ChannelModel model = init ? *init : initial_guess(hist, grid, f);
  model.family = f;
  model.enforce_constraints();

  FitResult res;
  res.initial_kl = fit.pooled(model);
  int iterations = 0;

  // Per-state blocks first; misprogram targets are fitted before their sources.
  const std::array<CellState, 4> block_order{CellState::P3, CellState::P2, CellState::ER, CellState::P1};
  for (auto s : block_order) {
    if (!fit.present[idx(s)]) continue;
    Packer pk(f, {s});
    ChannelModel work = model;
    auto obj = [&](const std::vector<double>& x) {
      pk.unpack(x, work);
      return fit.state_kl(work, s);
    };
    const double before = fit.state_kl(model, s);
    NMResult r = minimise_with_restarts(obj, pk.pack(model), pk.steps(), 3, iterations, max_iter);
    if (r.f <= before) pk.unpack(r.x, model);
  }

  // Joint polish over all free parameters.
  Packer all(f, {kAllStates.begin(), kAllStates.end()});
  ChannelModel work = model;
  auto obj = [&](const std::vector<double>& x) {
    all.unpack(x, work);
    return fit.pooled(work);
  };
  std::vector<double> step = all.steps();
  for (auto& h : step) h *= 0.3;
  const double before = fit.pooled(model);
  NMResult r = minimise_with_restarts(obj, all.pack(model), step, 6, iterations, max_iter);
  if (r.f <= before) all.unpack(r.x, model);

  res.model = model;
  res.kl_error = fit.pooled(model);
  if (res.kl_error > res.initial_kl) {
    res.model = init ? *init : initial_guess(hist, grid, f);
    res.model.family = f;
    res.model.enforce_constraints();
    res.kl_error = res.initial_kl;
  }
  res.iterations = iterations;
  res.converged = r.converged;
  return res;
}

// ---- dynamic model ---------------------------------------------------------

double PowerLaw::operator()(double x) const {
  if (a == 0.0) return c;
  return a * std::pow(x, b) + c;
}

namespace {

struct LinFit {
  double a = 0.0;
  double c = 0.0;
  double sse = 0.0;
};

// Least squares y = a*g + c for a fixed regressor g.
LinFit linear_ls(const std::vector<double>& g, const std::vector<double>& y) {
  const double n = static_cast<double>(g.size());
  double sg = 0, sy = 0, sgg = 0, sgy = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    sg += g[i];
    sy += y[i];
    sgg += g[i] * g[i];
    sgy += g[i] * y[i];
  }
  LinFit r;
  const double det = n * sgg - sg * sg;
  if (std::fabs(det) <= 1e-14 * std::max(1.0, n * sgg)) {
    r.a = 0.0;
    r.c = sy / n;
  } else {
    r.a = (n * sgy - sg * sy) / det;
    r.c = (sy - r.a * sg) / n;
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double e = r.a * g[i] + r.c - y[i];
    r.sse += e * e;
  }
  return r;
}

}  // namespace

PowerLaw fit_power_law(const std::vector<std::pair<double, double>>& points) {
  std::vector<double> xs, ys;
  for (const auto& [x, y] : points) {
    if (x > 0.0 && std::isfinite(y)) {
      xs.push_back(x);
      ys.push_back(y);
    }
  }
  if (xs.size() < 3) throw ConfigError("fit_power_law: need at least 3 points with pec > 0");
  const double xmax = *std::max_element(xs.begin(), xs.end());
  double yscale = 0.0;
  for (double y : ys) yscale = std::max(yscale, std::fabs(y));
  if (yscale == 0.0) return PowerLaw{0.0, 1.0, 0.0};

  std::vector<double> u(xs.size()), yn(ys.size()), g(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    u[i] = xs[i] / xmax;
    yn[i] = ys[i] / yscale;
  }
  auto regress = [&](double b) {
    for (std::size_t i = 0; i < u.size(); ++i) g[i] = std::pow(u[i], b);
    return linear_ls(g, yn);
  };

  // Profile the exponent on a grid, then polish (A, b, C) jointly.
  double best_b = 1.0;
  LinFit best = regress(1.0);
  for (int k = -40; k <= 80; ++k) {
    const double b = 0.05 * k;
    if (b == 0.0) continue;
    LinFit r = regress(b);
    if (r.sse < best.sse - 1e-15) {
      best = r;
      best_b = b;
    }
  }
  if (best.a == 0.0) return PowerLaw{0.0, 1.0, best.c * yscale};

  auto mse = [&](const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double e = p[0] * std::pow(u[i], p[1]) + p[2] - yn[i];
      s += e * e;
    }
    return s / static_cast<double>(u.size());
  };
  NMOptions opt;
  opt.tol = 1e-10;
  opt.step = {0.1 * std::max(1e-3, std::fabs(best.a)), 0.05, 0.1 * std::max(1e-3, std::fabs(best.a))};
  NMResult r = nelder_mead(mse, {best.a, best_b, best.c}, opt);
  for (int k = 0; k < 3 && !r.converged; ++k) r = nelder_mead(mse, r.x, opt);
  double b = r.x[1];
  LinFit fin = regress(b);
  if (!(fin.sse <= best.sse)) {
    b = best_b;
    fin = best;
  }
  PowerLaw full;
  full.b = b;
  full.a = fin.a * yscale * std::pow(xmax, -b);
  full.c = fin.c * yscale;
  if (fin.a == 0.0) full.a = 0.0;

  // Nested special cases (a = 0, b = 1) compete with the full law on AICc.
  const double n = static_cast<double>(u.size());
  if (std::sqrt(fin.sse / n) <= 1e-9) return full;
  auto aicc = [&](double sse, double k) {
    if (n - k - 1.0 <= 0.0) return std::numeric_limits<double>::infinity();
    return n * std::log(sse / n + 1e-24) + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0);
  };
  const LinFit lin = regress(1.0);
  double mean = 0.0;
  for (double y : yn) mean += y / n;
  double sse0 = 0.0;
  for (double y : yn) sse0 += (y - mean) * (y - mean);
  const double s_full = aicc(fin.sse, 3.0), s_lin = aicc(lin.sse, 2.0), s_const = aicc(sse0, 1.0);
  if (s_full <= s_lin && s_full <= s_const) return full;
  if (s_lin <= s_const) return PowerLaw{lin.a * yscale / xmax, 1.0, lin.c * yscale};
  return PowerLaw{0.0, 1.0, mean * yscale};
}

DynamicModel fit_dynamic(const std::vector<std::pair<double, ChannelModel>>& snapshots) {
  if (snapshots.empty()) throw ConfigError("fit_dynamic: no snapshots");
  DynamicModel dyn;
  dyn.family = snapshots.front().second.family;
  const auto latest = std::max_element(snapshots.begin(), snapshots.end(),
                                       [](const auto& a, const auto& b) { return a.first < b.first; });
  dyn.max_train_pec = latest->first;
  for (auto s : kAllStates) {
    for (int p = 0; p < kNumParams; ++p) {
      const auto param = static_cast<Param>(p);
      const double last = get_param(latest->second[s], param);
      dyn.last_valid[idx(s)][p] = last;
      if (!param_active(dyn.family, s, param)) {
        dyn.laws[idx(s)][p] = PowerLaw{0.0, 1.0, last};
        continue;
      }
      std::vector<std::pair<double, double>> pts;
      for (const auto& [pec, m] : snapshots) pts.emplace_back(pec, get_param(m[s], param));
      dyn.laws[idx(s)][p] = fit_power_law(pts);
    }
  }
  return dyn;
}

ChannelModel predict_static(const DynamicModel& dyn, double pec, bool* flagged) {
  ChannelModel m;
  m.family = dyn.family;
  bool flag = false;
  for (auto s : kAllStates) {
    for (int p = 0; p < kNumParams; ++p) {
      const auto param = static_cast<Param>(p);
      double v = dyn.laws[idx(s)][p](pec);
      const double fallback = dyn.last_valid[idx(s)][p];
      if (!std::isfinite(v)) {
        v = fallback;
        flag = true;
      }
      if ((param == Param::Sigma || param == Param::Alpha || param == Param::Beta) && !(v > 0.0)) {
        v = fallback;
        flag = true;
      }
      if (param == Param::Lambda && (v < 0.0 || v > 1.0)) {
        v = std::clamp(v, 0.0, 1.0);
        flag = true;
      }
      set_param(m[s], param, v);
    }
  }
  m.enforce_constraints();
  if (flagged) *flagged = flag;
  return m;
}

// ---- applications ----------------------------------------------------------

RberEstimate estimate_rber(const ChannelModel& model, const ReadRefs& refs) {
  if (!refs.valid()) throw std::invalid_argument("estimate_rber: refs must satisfy va < vb < vc");
  RberEstimate r;
  for (auto x : kAllStates) {
    const double fa = mixture_cdf(model, x, refs.va);
    const double fb = mixture_cdf(model, x, refs.vb);
    const double fc = mixture_cdf(model, x, refs.vc);
    const std::array<double, 4> region{fa, fb - fa, fc - fb, 1.0 - fc};
    for (auto d : kAllStates) {
      const double pr = region[idx(d)];
      if (msb_of(d) != msb_of(x)) r.msb += 0.25 * pr;
      if (lsb_of(d) != lsb_of(x)) r.lsb += 0.25 * pr;
    }
  }
  r.total = 0.5 * (r.msb + r.lsb);
  return r;
}

ReadRefs predict_vopt(const ChannelModel& model, VoptMethod method, const VoltageGrid& grid, bool* flagged) {
  bool flag = false;
  std::array<double, 3> v{};
  for (int i = 0; i < 3; ++i) {
    const CellState lo_s = kAllStates[i];
    const CellState hi_s = kAllStates[i + 1];
    const double lo = model[lo_s].mu;
    const double hi = model[hi_s].mu;
    const double mid = 0.5 * (lo + hi);
    if (!(lo < hi)) flag = true;
    if (method == VoptMethod::MeanMidpoint || !(lo < hi)) {
      v[i] = mid;
      continue;
    }
    auto diff = [&](double x) { return mixture_pdf(model, lo_s, x) - mixture_pdf(model, hi_s, x); };
    double a = lo, b = hi;
    double fa = diff(a), fb = diff(b);
    if (!(fa > 0.0 && fb < 0.0)) {
      v[i] = mid;
      flag = true;
      continue;
    }
    for (int it = 0; it < 80 && b - a > 1e-9; ++it) {
      const double m = 0.5 * (a + b);
      const double fm = diff(m);
      if (fm > 0.0) {
        a = m;
      } else {
        b = m;
      }
    }
    v[i] = 0.5 * (a + b);
  }
  ReadRefs refs{grid.snap(v[0]), grid.snap(v[1]), grid.snap(v[2])};
  if (!refs.valid()) flag = true;
  if (flagged) *flagged = flag;
  return refs;
}

LifetimeEstimate estimate_lifetime(const DynamicModel& dyn, double ecc_limit, double pec_step,
                                   const VoltageGrid& grid, double pec_bound) {
  if (!(ecc_limit > 0.0)) throw std::invalid_argument("estimate_lifetime: ecc_limit must be > 0");
  if (!(pec_step > 0.0)) throw std::invalid_argument("estimate_lifetime: pec_step must be > 0");
  for (double pec = 0.0; pec <= pec_bound; pec += pec_step) {
    const ChannelModel m = predict_static(dyn, pec);
    const ReadRefs refs = predict_vopt(m, VoptMethod::PdfIntersection, grid);
    if (!refs.valid() || estimate_rber(m, refs).total > ecc_limit) return {pec, false};
  }
  return {pec_bound, true};
}

double llr(double y, double mu0, double mu1, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("llr: sigma must be > 0");
  const double s2 = sigma * sigma;
  return (mu1 * mu1 - mu0 * mu0) / (2.0 * s2) + y * (mu0 - mu1) / s2;
}

double sample_state(Family f, const StateModel& m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (f) {
    case Family::Gaussian: return m.mu + m.sigma * normal(rng);
    case Family::NormalLaplace: {
      std::exponential_distribution<double> er(m.alpha), el(m.beta);
      const double z = normal(rng);
      return m.mu + m.sigma * z + er(rng) - el(rng);
    }
    case Family::StudentT: {
      std::uniform_real_distribution<double> side(0.0, 1.0);
      const bool left = side(rng) < 0.5;
      const double nu = left ? m.beta : m.alpha;
      double t;
      if (nu >= 1e7) {
        t = normal(rng);
      } else {
        std::student_t_distribution<double> st(nu);
        t = st(rng);
      }
      return left ? m.mu - m.sigma * std::fabs(t) : m.mu + m.sigma * std::fabs(t);
    }
  }
  return m.mu;
}

// ---- serialization ---------------------------------------------------------

nlohmann::json to_json(const ChannelModel& m) {
  nlohmann::json j;
  j["family"] = family_name(m.family);
  for (auto s : kAllStates) {
    const auto& sm = m[s];
    j["states"][state_name(s)] = {{"mu", sm.mu}, {"sigma", sm.sigma}, {"alpha", sm.alpha},
                                  {"beta", sm.beta}, {"lambda", sm.lambda}};
  }
  return j;
}

ChannelModel channel_model_from_json(const nlohmann::json& j) {
  ChannelModel m;
  try {
    m.family = family_from_name(j.at("family").get<std::string>());
    for (auto s : kAllStates) {
      const auto& js = j.at("states").at(state_name(s));
      auto& sm = m[s];
      sm.mu = js.at("mu").get<double>();
      sm.sigma = js.at("sigma").get<double>();
      sm.alpha = js.value("alpha", 5.0);
      sm.beta = js.value("beta", 5.0);
      sm.lambda = js.value("lambda", 0.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model json: ") + e.what());
  }
  m.enforce_constraints();
  m.validate();
  return m;
}

nlohmann::json to_json(const DynamicModel& m) {
  static const char* names[kNumParams] = {"mu", "sigma", "alpha", "beta", "lambda"};
  nlohmann::json j;
  j["family"] = family_name(m.family);
  j["max_train_pec"] = m.max_train_pec;
  for (auto s : kAllStates) {
    for (int p = 0; p < kNumParams; ++p) {
      const auto& law = m.laws[idx(s)][p];
      j["states"][state_name(s)][names[p]] = {
          {"a", law.a}, {"b", law.b}, {"c", law.c}, {"last", m.last_valid[idx(s)][p]}};
    }
  }
  return j;
}

DynamicModel dynamic_model_from_json(const nlohmann::json& j) {
  static const char* names[kNumParams] = {"mu", "sigma", "alpha", "beta", "lambda"};
  DynamicModel m;
  try {
    m.family = family_from_name(j.at("family").get<std::string>());
    m.max_train_pec = j.value("max_train_pec", 0.0);
    for (auto s : kAllStates) {
      for (int p = 0; p < kNumParams; ++p) {
        const auto& r = j.at("states").at(state_name(s)).at(names[p]);
        m.laws[idx(s)][p] = PowerLaw{r.at("a").get<double>(), r.at("b").get<double>(), r.at("c").get<double>()};
        m.last_valid[idx(s)][p] = r.value("last", m.laws[idx(s)][p].c);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dynamic model json: ") + e.what());
  }
  return m;
}

}  // namespace flashlab
