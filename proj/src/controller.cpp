#include "flashlab/controller.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace flashlab {

// ---------------------------------------------------------------- SweepTable

namespace {

// bit errors (msb + lsb) / 2 when state x is read as d
double pair_weight(CellState x, CellState d) {
  return 0.5 * ((msb_of(x) != msb_of(d)) + (lsb_of(x) != lsb_of(d)));
}

}  // namespace

SweepTable::SweepTable(const ChannelModel& model, const VoltageGrid& grid)
    : SweepTable(std::vector<ChannelModel>{model}, grid) {}

SweepTable::SweepTable(const std::vector<ChannelModel>& models, const VoltageGrid& grid) : grid_(grid) {
  if (models.empty()) throw std::invalid_argument("SweepTable: no models");
  for (int s = 0; s < kNumStates; ++s) cdf_[s].assign(VoltageGrid::kSteps + 1, 0.0);
  const double w = 1.0 / static_cast<double>(models.size());
  for (const auto& m : models)
    for (auto s : kAllStates)
      for (int k = 1; k <= VoltageGrid::kSteps; ++k) cdf_[idx(s)][k] += w * mixture_cdf(m, s, grid.value(k));
}

double SweepTable::rber(int ka, int kb, int kc) const {
  if (!(1 <= ka && ka < kb && kb < kc && kc <= VoltageGrid::kSteps))
    throw std::invalid_argument("SweepTable: need 1 <= ka < kb < kc <= 303");
  double r = 0.0;
  for (auto x : kAllStates) {
    const int s = idx(x);
    const double fa = cdf(s, ka), fb = cdf(s, kb), fc = cdf(s, kc);
    const std::array<double, 4> region{fa, fb - fa, fc - fb, 1.0 - fc};
    for (auto d : kAllStates) r += 0.25 * pair_weight(x, d) * region[idx(d)];
  }
  return r;
}

double SweepTable::rber(const ReadRefs& refs) const {
  const int ka = grid_.nearest_step(refs.va), kb = grid_.nearest_step(refs.vb), kc = grid_.nearest_step(refs.vc);
  if (grid_.value(ka) != refs.va || grid_.value(kb) != refs.vb || grid_.value(kc) != refs.vc)
    throw std::invalid_argument("SweepTable: refs are not on the grid");
  return rber(ka, kb, kc);
}

SweepTable::Best SweepTable::minimize() const {
  const int n = VoltageGrid::kSteps;
  // boundary i separates states <= i from states > i; each crossing costs half a bit
  std::array<int, 3> k{};
  for (int i = 0; i < 3; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int v = 1; v <= n; ++v) {
      double e = 0.0;
      for (int s = 0; s < kNumStates; ++s) e += (s <= i) ? 1.0 - cdf(s, v) : cdf(s, v);
      if (e < best) {
        best = e;
        k[i] = v;
      }
    }
  }
  if (!(k[0] < k[1] && k[1] < k[2])) k = {n / 4, n / 2, 3 * n / 4};
  Best b{k[0], k[1], k[2], rber(k[0], k[1], k[2])};
  for (int pass = 0; pass < 20; ++pass) {
    bool moved = false;
    for (int v = 1; v < b.kb; ++v) {
      const double r = rber(v, b.kb, b.kc);
      if (r < b.rber) {
        b.rber = r;
        b.ka = v;
        moved = true;
      }
    }
    for (int v = b.ka + 1; v < b.kc; ++v) {
      const double r = rber(b.ka, v, b.kc);
      if (r < b.rber) {
        b.rber = r;
        b.kb = v;
        moved = true;
      }
    }
    for (int v = b.kb + 1; v <= n; ++v) {
      const double r = rber(b.ka, b.kb, v);
      if (r < b.rber) {
        b.rber = r;
        b.kc = v;
        moved = true;
      }
    }
    if (!moved) break;
  }
  return b;
}

ReadRefs oracle_refs(const ChannelModel& truth, const VoltageGrid& grid, double* rber) {
  const SweepTable t(truth, grid);
  const auto b = t.minimize();
  if (rber) *rber = b.rber;
  return {grid.value(b.ka), grid.value(b.kb), grid.value(b.kc)};
}

// ---------------------------------------------------------------- policies

std::string policy_name(ReadPolicy p) {
  switch (p) {
    case ReadPolicy::Fixed: return "fixed";
    case ReadPolicy::RetentionOnly: return "retention-only";
    case ReadPolicy::LaVAR: return "lavar";
    case ReadPolicy::ReMAR: return "remar";
    case ReadPolicy::HeatWatch: return "heatwatch";
    case ReadPolicy::Oracle: return "oracle";
  }
  return "?";
}

ReadPolicy policy_from_name(const std::string& name) {
  for (auto p : {ReadPolicy::Fixed, ReadPolicy::RetentionOnly, ReadPolicy::LaVAR, ReadPolicy::ReMAR,
                 ReadPolicy::HeatWatch, ReadPolicy::Oracle})
    if (policy_name(p) == name) return p;
  throw ConfigError("unknown read policy: " + name);
}

void ReMarModel::add_sample(double pec, double t_seconds, const ReadRefs& vopt) {
  if (!(t_seconds >= 1.0)) throw std::invalid_argument("ReMAR: retention time must be >= 1 s");
  rows_.push_back({pec, std::log(t_seconds), {vopt.va, vopt.vb, vopt.vc}});
  if (rows_.size() % kRefitEvery == 0) refit();
}

void ReMarModel::refit() {
  const auto n = static_cast<Eigen::Index>(rows_.size());
  for (int b = 0; b < 3; ++b) {
    const int cols = b == 0 ? 2 : 4;
    Eigen::MatrixXd X(n, cols);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = rows_[i];
      if (b == 0) {
        X.row(i) << r.pec, 1.0;
      } else {
        X.row(i) << r.pec * r.lnt, r.lnt, r.pec, 1.0;
      }
      y(i) = r.v[b];
    }
    Eigen::VectorXd scale = X.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < cols; ++j)
      if (scale(j) == 0.0) scale(j) = 1.0;
    const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
    const Eigen::VectorXd beta = Xs.colPivHouseholderQr().solve(y).cwiseQuotient(scale);
    auto& c = coef_[b];
    c = {0.0, 0.0, 0.0, 0.0};
    if (b == 0) {
      c[2] = beta(0);
      c[3] = beta(1);
    } else {
      for (int j = 0; j < 4; ++j) c[j] = beta(j);
    }
  }
  fitted_ = true;
}

ReadRefs ReMarModel::predict(double pec, double t_seconds, const VoltageGrid& grid) const {
  if (!fitted_) throw std::logic_error("ReMAR: model not fitted");
  const double lnt = std::log(std::max(1.0, t_seconds));
  std::array<double, 3> v{};
  for (int b = 0; b < 3; ++b) {
    const auto& c = coef_[b];
    v[b] = (c[0] * pec + c[1]) * lnt + c[2] * pec + c[3];
  }
  return {grid.snap(v[0]), grid.snap(v[1]), grid.snap(v[2])};
}

PolicyRead read_policy(ReadPolicy policy, const ReadContext& ctx, const VoltageGrid& grid) {
  PolicyRead out;
  auto fallback = [&]() {
    out.refs = default_refs();
    out.fallback = true;
    return out;
  };
  switch (policy) {
    case ReadPolicy::Fixed:
      out.refs = default_refs();
      return out;
    case ReadPolicy::RetentionOnly:
      if (!ctx.retention || !(ctx.t_retention >= 1.0)) return fallback();
      out.refs = retention_refs(*ctx.retention, ctx.pec, ctx.t_retention, grid);
      break;
    case ReadPolicy::LaVAR: {
      if (!ctx.retention || !ctx.layers || ctx.layer < 0 || ctx.layer >= kNumLayers || !(ctx.t_retention >= 1.0))
        return fallback();
      const ReadRefs base = retention_refs(*ctx.retention, ctx.pec, ctx.t_retention, grid);
      out.refs = {grid.snap(base.va + ctx.layers->va_offset[ctx.layer]),
                  grid.snap(base.vb + ctx.layers->vb_offset[ctx.layer]), base.vc};
      break;
    }
    case ReadPolicy::ReMAR:
      if (!ctx.remar || !ctx.remar->ready()) return fallback();
      out.refs = ctx.remar->predict(ctx.pec, ctx.t_retention, grid);
      break;
    case ReadPolicy::HeatWatch: {
      if (!ctx.urt || ctx.t_r_eff < 0.0 || ctx.t_d_eff < 0.0) return fallback();
      const ChannelModel m = urt_channel(*ctx.urt, ctx.pec, ctx.tp_kelvin, ctx.t_r_eff, ctx.t_d_eff);
      const ReadRefs mid{0.5 * (m[CellState::ER].mu + m[CellState::P1].mu),
                         0.5 * (m[CellState::P1].mu + m[CellState::P2].mu),
                         0.5 * (m[CellState::P2].mu + m[CellState::P3].mu)};
      out.refs = {grid.snap(mid.va + ctx.heatwatch_offset[0]), grid.snap(mid.vb + ctx.heatwatch_offset[1]),
                  grid.snap(mid.vc + ctx.heatwatch_offset[2])};
      break;
    }
    case ReadPolicy::Oracle:
      if (!ctx.truth) return fallback();
      out.refs = oracle_refs(*ctx.truth, grid);
      break;
  }
  if (!out.refs.valid()) return fallback();
  return out;
}

// ---------------------------------------------------------------- correction flow

std::string stage_name(ReadStage s) {
  switch (s) {
    case ReadStage::Policy: return "policy";
    case ReadStage::Retry: return "retry";
    case ReadStage::Nac: return "nac";
    case ReadStage::Parity: return "parity";
    case ReadStage::Uncorrectable: return "uncorrectable";
  }
  return "?";
}

void apply_retention_interference(ChannelState& page, const InterferenceModel& m, double t_seconds) {
  for (auto& c : page.cells)
    if (c.neighbor) c.vth -= retention_interference_offset(m, c.state, *c.neighbor, t_seconds);
}

namespace {

ReadRefs shifted(const ReadRefs& r, double d) { return {r.va + d, r.vb + d, r.vc + d}; }

double nac_rber(const ChannelState& page, const ReadRefs& base, const ReadFlowConfig& cfg) {
  // refs per neighbour state: each boundary moves by the mean offset of its two victims
  std::array<ReadRefs, kNumStates> per{};
  for (auto n : kAllStates) {
    auto off = [&](CellState v) { return retention_interference_offset(cfg.interference, v, n, cfg.retention_age_s); };
    per[idx(n)] = {base.va - 0.5 * (off(CellState::ER) + off(CellState::P1)),
                   base.vb - 0.5 * (off(CellState::P1) + off(CellState::P2)),
                   base.vc - 0.5 * (off(CellState::P2) + off(CellState::P3))};
  }
  std::uint64_t errors = 0;
  for (std::size_t i = 0; i < page.size(); ++i) {
    const auto& c = page.cells[i];
    const ReadRefs& r = c.neighbor ? per[idx(*c.neighbor)] : base;
    const CellState d = decode_region(page.vth(i), r);
    errors += (msb_of(d) != msb_of(c.state)) + (lsb_of(d) != lsb_of(c.state));
  }
  return page.size() ? static_cast<double>(errors) / (2.0 * static_cast<double>(page.size())) : 0.0;
}

}  // namespace

ReadOutcome read_flow(const ChannelState& page, const ReadRefs& policy_refs, const ReadFlowConfig& cfg,
                      const std::vector<bool>* siblings) {
  if (!policy_refs.valid()) throw std::invalid_argument("read_flow: invalid refs");
  ReadOutcome out;
  out.refs = policy_refs;
  out.rber = measure_rber(page, policy_refs).total;
  out.reads = 1;
  if (out.rber <= cfg.ecc_limit) {
    out.success = true;
    out.stage = ReadStage::Policy;
    return out;
  }
  ReadRefs best = policy_refs;
  double best_rber = out.rber;
  for (int i = 1; i <= cfg.retry_budget; ++i) {
    const int k = (i + 1) / 2;
    const double d = (i % 2 == 1 ? -1.0 : 1.0) * k * cfg.retry_step;
    const ReadRefs r = shifted(policy_refs, d);
    ++out.reads;
    const double e = measure_rber(page, r).total;
    if (e < best_rber) {
      best_rber = e;
      best = r;
    }
    if (e <= cfg.ecc_limit) {
      out.success = true;
      out.stage = ReadStage::Retry;
      out.rber = e;
      out.refs = r;
      return out;
    }
  }
  out.refs = best;
  out.rber = best_rber;
  if (cfg.nac) {
    out.reads += 1 + kNumStates;  // neighbour wordline, then one read per neighbour state
    const double e = nac_rber(page, best, cfg);
    if (e <= cfg.ecc_limit) {
      out.success = true;
      out.stage = ReadStage::Nac;
      out.rber = e;
      return out;
    }
    out.rber = std::min(out.rber, e);
  }
  if (siblings && !siblings->empty()) {
    out.reads += static_cast<int>(siblings->size());
    if (std::all_of(siblings->begin(), siblings->end(), [](bool ok) { return ok; })) {
      out.success = true;
      out.stage = ReadStage::Parity;
      return out;
    }
  }
  out.success = false;
  out.stage = ReadStage::Uncorrectable;
  return out;
}

// ---------------------------------------------------------------- searches

DisparityResult disparity_vref_search(const ChannelState& page) {
  if (page.size() == 0) throw std::invalid_argument("disparity search: empty page");
  const auto& grid = page.grid;
  DisparityResult out;
  const double n = static_cast<double>(page.size());
  auto frac_below = [&](int k) {
    ++out.probes;
    const double v = grid.value(k);
    std::size_t c = 0;
    for (std::size_t i = 0; i < page.size(); ++i) c += page.vth(i) < v;
    return static_cast<double>(c) / n;
  };
  // smallest step in [lo, hi] whose ones-fraction reaches target
  auto search = [&](double target, int lo, int hi) {
    while (lo < hi) {
      const int mid = lo + (hi - lo) / 2;
      if (frac_below(mid) >= target) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    return lo;
  };
  const int kb = search(0.5, 1, VoltageGrid::kSteps);
  const int ka = search(0.25, 1, std::max(1, kb - 1));
  const int kc = search(0.75, std::min(VoltageGrid::kSteps, kb + 1), VoltageGrid::kSteps);
  out.refs = {grid.value(ka), grid.value(kb), grid.value(kc)};

  // scrambled data puts each reference in a sparse valley with 25% of cells per region
  auto count_between = [&](double lo, double hi) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < page.size(); ++i) c += page.vth(i) >= lo && page.vth(i) < hi;
    return static_cast<double>(c) / n;
  };
  const std::array<double, 3> refs{out.refs.va, out.refs.vb, out.refs.vc};
  const std::array<double, 3> targets{0.25, 0.5, 0.75};
  for (int i = 0; i < 3; ++i) {
    if (std::abs(count_between(-1e300, refs[i]) - targets[i]) > 0.05) out.flagged = true;
    if (count_between(refs[i] - 3.0, refs[i] + 3.0) > 0.05) out.flagged = true;
  }
  if (!out.refs.valid()) out.flagged = true;
  return out;
}

RorResult ror_vopt_discovery(const std::function<double(int)>& errors, int start, int dv, int lo, int hi) {
  if (dv < 1 || lo > hi || start < lo || start > hi) throw std::invalid_argument("ror: bad search range");
  RorResult r;
  const double e0 = errors(start);
  r.probes = 1;
  int best = start;
  double best_e = e0;
  int k = start;
  double ek = e0;
  while (k - dv >= lo) {
    const double e = errors(k - dv);
    ++r.probes;
    if (e > ek) break;
    k -= dv;
    ek = e;
    if (e < best_e) {
      best_e = e;
      best = k;
    }
  }
  if (best == start) {
    k = start;
    ek = e0;
    while (k + dv <= hi) {
      const double e = errors(k + dv);
      ++r.probes;
      if (e > ek) break;
      k += dv;
      ek = e;
      if (e < best_e) {
        best_e = e;
        best = k;
      }
    }
  }
  r.step = best;
  r.errors = best_e;
  return r;
}

ReadRefs ror_page_vopt(const ChannelState& page, const ReadRefs& start, int dv, int* probes) {
  const auto& grid = page.grid;
  std::array<int, 3> k{grid.nearest_step(start.va), grid.nearest_step(start.vb), grid.nearest_step(start.vc)};
  if (!(k[0] < k[1] && k[1] < k[2])) throw std::invalid_argument("ror_page_vopt: invalid start refs");
  int total = 0;
  for (int b = 0; b < 3; ++b) {
    auto err = [&](int step) {
      std::array<int, 3> kk = k;
      kk[b] = step;
      const auto rep = measure_rber(page, {grid.value(kk[0]), grid.value(kk[1]), grid.value(kk[2])});
      return static_cast<double>(rep.msb_errors + rep.lsb_errors);
    };
    const int lo = b == 0 ? 1 : k[b - 1] + 1;
    const int hi = b == 2 ? VoltageGrid::kSteps : k[b + 1] - 1;
    const auto r = ror_vopt_discovery(err, k[b], dv, lo, hi);
    k[b] = r.step;
    total += r.probes;
  }
  if (probes) *probes = total;
  return {grid.value(k[0]), grid.value(k[1]), grid.value(k[2])};
}

// ---------------------------------------------------------------- LaVAR

LavarResult lavar_evaluate(const ChannelModel& base, const LayerProfile& profile, const VoltageGrid& grid) {
  std::vector<ChannelModel> layers;
  layers.reserve(kNumLayers);
  for (int l = 0; l < kNumLayers; ++l) layers.push_back(layer_model(base, profile, l, grid));
  LavarResult out;
  const SweepTable block(layers, grid);
  const auto b = block.minimize();
  out.block_refs = {grid.value(b.ka), grid.value(b.kb), grid.value(b.kc)};
  out.block_rber = b.rber;

  const ReadRefs base_refs = oracle_refs(base, grid);
  double sum = 0.0;
  for (int l = 0; l < kNumLayers; ++l) {
    const ReadRefs r{grid.snap(base_refs.va + profile.va_offset[l]), grid.snap(base_refs.vb + profile.vb_offset[l]),
                     base_refs.vc};
    sum += estimate_rber(layers[l], r).total;
  }
  out.lavar_rber = sum / kNumLayers;
  out.reduction = out.block_rber > 0.0 ? 1.0 - out.lavar_rber / out.block_rber : 0.0;
  const auto [mn, mx] = std::minmax_element(profile.va_offset.begin(), profile.va_offset.end());
  out.va_span = *mx - *mn;
  return out;
}

// ---------------------------------------------------------------- HeatWatch

namespace {

// Cumulative effective seconds at a fixed resolution (midpoint rule per slice).
class EffectiveClock {
 public:
  EffectiveClock(const TempTrace& temp, double ea, double horizon, double slice = 60.0) : slice_(slice) {
    const auto n = static_cast<std::size_t>(std::ceil(horizon / slice)) + 2;
    cum_.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      cum_[i + 1] = cum_[i] + slice * af(temp.kelvin((static_cast<double>(i) + 0.5) * slice), ea);
  }
  double at(double t) const {
    const double x = std::max(0.0, t / slice_);
    const auto i = std::min(static_cast<std::size_t>(x), cum_.size() - 2);
    const double f = x - static_cast<double>(i);
    return cum_[i] + f * (cum_[i + 1] - cum_[i]);
  }

 private:
  double slice_;
  std::vector<double> cum_;
};

}  // namespace

std::vector<ReadSample> collect_read_samples(const HeatWatchConfig& cfg, std::uint64_t* reads_seen,
                                             WriteSplit* writes) {
  if (cfg.max_samples < 1) throw ConfigError("heatwatch: max_samples must be >= 1");
  if (!(cfg.read_fraction >= 0.0 && cfg.read_fraction < 1.0)) throw ConfigError("heatwatch: read_fraction outside [0,1)");
  SimConfig sim;
  sim.geo = cfg.geo;
  sim.seed = cfg.seed;
  Ftl ftl(sim);
  ftl.fill(0.0);

  SynthConfig sc;
  sc.duration_s = cfg.trace_days * kSecondsPerDay;
  sc.writes_per_s = cfg.writes_per_s / (1.0 - cfg.read_fraction);  // request rate
  sc.hot_fraction = cfg.hot_fraction;
  sc.hot_share = cfg.hot_share;
  sc.footprint_pages = static_cast<std::uint64_t>(ftl.logical_pages());
  sc.page_bytes = static_cast<std::uint64_t>(cfg.geo.page_bytes);
  sc.read_fraction = cfg.read_fraction;
  sc.seed = cfg.seed;
  const auto events = synth_hot(sc);

  const double ea = cfg.urt.ea;
  const EffectiveClock clock(cfg.temp, ea, sc.duration_s + kSecondsPerDay);
  AccelLog accel(ea, cfg.urt.t_room);
  DwellTracker dwell(cfg.geo.capacity_bytes(), 0.0);

  std::vector<ReadSample> reservoir;
  ReadSample oldest;
  bool have_oldest = false;
  std::uint64_t seen = 0;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  double last = 0.0;

  ftl.on_read = [&](std::int64_t, std::int64_t ppn, double now) {
    ReadSample s;
    const double ts = ftl.page_time(ppn);
    s.t_r = now - ts;
    if (s.t_r < 1.0) return;
    s.t_r_eff_true = clock.at(now) - clock.at(ts);
    s.t_r_eff_log = accel.effective(s.t_r);
    s.t_d_eff = dwell.effective(now, accel);
    s.tp_kelvin = cfg.temp.kelvin(ts);
    ++seen;
    if (!have_oldest || s.t_r_eff_true > oldest.t_r_eff_true) {
      oldest = s;
      have_oldest = true;
    }
    if (reservoir.size() < static_cast<std::size_t>(cfg.max_samples)) {
      reservoir.push_back(s);
    } else {
      std::uniform_int_distribution<std::uint64_t> pick(0, seen - 1);
      const auto j = pick(rng);
      if (j < reservoir.size()) reservoir[j] = s;
    }
  };

  const auto L = static_cast<std::uint64_t>(ftl.logical_pages());
  const auto page = static_cast<std::uint64_t>(cfg.geo.page_bytes);
  for (const auto& e : events) {
    const double now = static_cast<double>(e.timestamp_us) * 1e-6;
    if (now > last) {
      accel.update(cfg.temp.kelvin(now), now - last);
      last = now;
    }
    const auto lpn = static_cast<std::int64_t>((e.lba * 512 / page) % L);
    if (e.op == 'W') {
      ftl.host_write(lpn, now);
      dwell.record_write(static_cast<double>(page), now);
    } else {
      ftl.host_read(lpn, now);
    }
  }
  if (have_oldest) reservoir.push_back(oldest);
  if (reads_seen) *reads_seen = seen;
  if (writes) *writes = ftl.stats().writes;
  return reservoir;
}

HeatWatchReport run_heatwatch(const HeatWatchConfig& cfg) {
  std::uint64_t seen = 0;
  WriteSplit w;
  auto samples = collect_read_samples(cfg, &seen, &w);
  auto rep = run_heatwatch(cfg, samples);
  rep.reads_seen = seen;
  rep.writes = w;
  return rep;
}

HeatWatchReport run_heatwatch(const HeatWatchConfig& cfg, const std::vector<ReadSample>& samples) {
  if (samples.empty()) throw ConfigError("heatwatch: no read samples");
  if (!(cfg.pec_step > 0.0) || !(cfg.pec_max >= 0.0)) throw ConfigError("heatwatch: bad PEC range");
  const VoltageGrid grid;
  HeatWatchReport rep;
  rep.samples = samples;
  for (double p = 0.0; p <= cfg.pec_max + 1e-9; p += cfg.pec_step) rep.pec_axis.push_back(p);
  for (auto p : cfg.policies) {
    PolicyLifetime pl;
    pl.policy = p;
    pl.worst_rber.assign(rep.pec_axis.size(), 0.0);
    rep.policies.push_back(pl);
  }

  std::array<double, 3> offset{};
  double next_refit = 0.0;
  const auto n = samples.size();
  for (std::size_t step = 0; step < rep.pec_axis.size(); ++step) {
    const double pec = rep.pec_axis[step];
    if (pec + 1e-9 >= next_refit) {
      // online fine-tuning: ROR on a few wordlines against the uncorrected prediction
      std::array<double, 3> acc{};
      const int m = std::max(1, std::min<int>(cfg.refit_wordlines, static_cast<int>(n)));
      for (int w = 0; w < m; ++w) {
        const auto& s = samples[(static_cast<std::size_t>(w) * n) / m];
        const ChannelModel truth = urt_channel(cfg.urt, pec, s.tp_kelvin, s.t_r_eff_true, s.t_d_eff);
        const ChannelModel pred = urt_channel(cfg.urt, pec, s.tp_kelvin, s.t_r_eff_log, s.t_d_eff);
        const std::array<double, 3> mid{0.5 * (pred[CellState::ER].mu + pred[CellState::P1].mu),
                                        0.5 * (pred[CellState::P1].mu + pred[CellState::P2].mu),
                                        0.5 * (pred[CellState::P2].mu + pred[CellState::P3].mu)};
        const SweepTable t(truth, grid);
        std::array<int, 3> k{grid.nearest_step(mid[0]), grid.nearest_step(mid[1]), grid.nearest_step(mid[2])};
        if (!(k[0] < k[1] && k[1] < k[2])) continue;
        for (int b = 0; b < 3; ++b) {
          auto err = [&](int v) {
            auto kk = k;
            kk[b] = v;
            return t.rber(kk[0], kk[1], kk[2]);
          };
          const int lo = b == 0 ? 1 : k[b - 1] + 1;
          const int hi = b == 2 ? VoltageGrid::kSteps : k[b + 1] - 1;
          k[b] = ror_vopt_discovery(err, k[b], 1, lo, hi).step;
        }
        for (int b = 0; b < 3; ++b) acc[b] += grid.value(k[b]) - mid[b];
      }
      for (int b = 0; b < 3; ++b) offset[b] = acc[b] / m;
      next_refit += cfg.refit_every_pec;
    }

    for (const auto& s : samples) {
      const ChannelModel truth = urt_channel(cfg.urt, pec, s.tp_kelvin, s.t_r_eff_true, s.t_d_eff);
      ReadContext ctx;
      ctx.pec = pec;
      ctx.t_retention = s.t_r;
      ctx.tp_kelvin = s.tp_kelvin;
      ctx.t_r_eff = s.t_r_eff_log;
      ctx.t_d_eff = s.t_d_eff;
      ctx.retention = &cfg.retention;
      ctx.urt = &cfg.urt;
      ctx.heatwatch_offset = offset;
      ctx.truth = &truth;
      for (auto& pl : rep.policies) {
        double r;
        if (pl.policy == ReadPolicy::Oracle) {
          oracle_refs(truth, grid, &r);
        } else {
          const auto pr = read_policy(pl.policy, ctx, grid);
          r = estimate_rber(truth, pr.refs).total;
        }
        pl.worst_rber[step] = std::max(pl.worst_rber[step], r);
      }
    }
  }

  for (auto& pl : rep.policies) {
    pl.hit_bound = true;
    pl.lifetime_pec = rep.pec_axis.back();
    for (std::size_t i = 0; i < rep.pec_axis.size(); ++i) {
      if (pl.worst_rber[i] > cfg.ecc_limit) {
        pl.lifetime_pec = i == 0 ? 0.0 : rep.pec_axis[i - 1];
        pl.hit_bound = false;
        break;
      }
    }
  }
  return rep;
}

nlohmann::json to_json(const HeatWatchReport& r) {
  nlohmann::json j;
  j["reads_seen"] = r.reads_seen;
  j["samples"] = r.samples.size();
  double max_tr = 0.0, max_eff = 0.0;
  for (const auto& s : r.samples) {
    max_tr = std::max(max_tr, s.t_r);
    max_eff = std::max(max_eff, s.t_r_eff_true);
  }
  j["max_retention_days"] = max_tr / kSecondsPerDay;
  j["max_effective_retention_days"] = max_eff / kSecondsPerDay;
  j["writes"] = to_json(r.writes);
  auto& p = j["policies"] = nlohmann::json::array();
  for (const auto& pl : r.policies)
    p.push_back({{"policy", policy_name(pl.policy)}, {"lifetime_pec", pl.lifetime_pec}, {"hit_bound", pl.hit_bound}});
  return j;
}

void write_series_csv(const HeatWatchReport& r, std::ostream& os) {
  os << "pec";
  for (const auto& pl : r.policies) os << ",worst_rber_" << policy_name(pl.policy);
  os << '\n';
  const auto flags = os.flags();
  for (std::size_t i = 0; i < r.pec_axis.size(); ++i) {
    os << std::defaultfloat << r.pec_axis[i];
    for (const auto& pl : r.policies) os << ',' << std::setprecision(6) << std::scientific << pl.worst_rber[i];
    os << '\n';
    os.flags(flags);
  }
}

}  // namespace flashlab
