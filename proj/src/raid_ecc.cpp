#include "flashlab/raid_ecc.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace flashlab {

void EccConfig::validate() const {
  if (!(t > 0 && t < l)) throw ConfigError("ecc: need 0 < t < l");
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("ecc: rate must be in (0,1)");
  if (!(target_uber > 0.0)) throw ConfigError("ecc: target UBER must be > 0");
}

namespace {

struct Kahan {
  long double sum = 0.0L;
  long double comp = 0.0L;
  void add(long double x) {
    const long double y = x - comp;
    const long double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

double ecc_failure_rate(long l, long t, double ber) {
  if (l <= 0 || t < 0) throw std::invalid_argument("ecc_failure_rate: need l > 0, t >= 0");
  if (!(ber >= 0.0 && ber <= 1.0)) throw std::invalid_argument("ecc_failure_rate: ber outside [0,1]");
  if (t >= l) return 0.0;
  if (ber == 0.0) return 0.0;
  if (ber == 1.0) return 1.0;

  const long double p = ber;
  const long double lp = std::log(p);
  const long double lq = std::log1p(-p);
  const long double lgl = std::lgamma(static_cast<long double>(l) + 1.0L);
  auto log_term = [&](long k) {
    return lgl - std::lgamma(static_cast<long double>(k) + 1.0L) -
           std::lgamma(static_cast<long double>(l - k) + 1.0L) + k * lp + (l - k) * lq;
  };

  // Sum outward from the largest term in [t+1, l]; terms are unimodal in k.
  const long mode = std::clamp(static_cast<long>(std::floor((l + 1) * ber)), t + 1, l);
  const long double lmax = log_term(mode);
  constexpr long double kStop = -60.0L;  // e^-60 relative to the peak
  Kahan acc;
  acc.add(1.0L);
  for (long k = mode + 1; k <= l; ++k) {
    const long double d = log_term(k) - lmax;
    if (d < kStop) break;
    acc.add(std::exp(d));
  }
  for (long k = mode - 1; k > t; --k) {
    const long double d = log_term(k) - lmax;
    if (d < kStop) break;
    acc.add(std::exp(d));
  }
  const long double r = std::exp(lmax) * acc.sum;
  return static_cast<double>(std::min(r, 1.0L));
}

void ParityConfig::validate() const {
  if (chips * dies < 2) throw ConfigError("parity: need chips*dies >= 2");
  if (codewords_per_lb < 1) throw ConfigError("parity: need K >= 1");
  if (!(p_hgbb >= 0.0 && p_hgbb <= 1.0)) throw ConfigError("parity: P_HGBB outside [0,1]");
}

namespace {

// 1 - (1 - p)^k without cancellation
double at_least_one(double p, double k) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  return -std::expm1(k * std::log1p(-p));
}

void check_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + ": probability outside [0,1]");
}

}  // namespace

double lb_fail(const ParityConfig& p, double p_ecfr) {
  p.validate();
  check_prob(p_ecfr, "lb_fail");
  return p.p_hgbb + (1.0 - p.p_hgbb) * at_least_one(p_ecfr, p.codewords_per_lb);
}

double parity_fail(const ParityConfig& p, double p_lbfail) {
  p.validate();
  check_prob(p_lbfail, "parity_fail");
  return p_lbfail * at_least_one(p_lbfail, static_cast<double>(p.chips * p.dies) - 1.0);
}

double op_fraction(double pba, double lba) {
  if (!(lba > 0.0)) throw std::invalid_argument("op_fraction: lba must be > 0");
  return (pba - lba) / lba;
}

double op_for_rate(double pba, double lba, double coding_rate, double parity_fraction) {
  return op_fraction(pba * coding_rate * (1.0 - parity_fraction), lba);
}

double wa_for_op(double op) {
  if (!(op > 0.0)) throw std::invalid_argument("wa_for_op: op must be > 0");
  return (1.0 + op) / (2.0 * op);
}

double lifetime_years(const LifetimeInputs& in) {
  if (!(in.pec > 0.0 && in.dwpd > 0.0 && in.wa > 0.0 && in.r_compress > 0.0 && in.op >= 0.0))
    throw std::invalid_argument("lifetime_years: inputs must be positive");
  return in.pec * (1.0 + in.op) / (365.0 * in.dwpd * in.wa * in.r_compress);
}

double multirate_lifetime(const std::vector<RateStage>& schedule, double dwpd, double r_compress) {
  if (!(dwpd > 0.0 && r_compress > 0.0)) throw std::invalid_argument("multirate_lifetime: inputs must be positive");
  double years = 0.0;
  for (const auto& s : schedule) {
    if (!(s.wa > 0.0) || s.pec < 0.0) throw std::invalid_argument("multirate_lifetime: bad stage");
    years += s.pec * (1.0 + s.op) / (365.0 * dwpd * s.wa * r_compress);
  }
  return years;
}

MultiratePlan plan_multirate(const std::vector<EccConfig>& engines, const std::function<double(double)>& rber_of_pec,
                             double pba, double lba, double parity_fraction, double pec_step, double pec_max) {
  if (engines.empty()) throw ConfigError("plan_multirate: no engines");
  if (!(pec_step > 0.0)) throw ConfigError("plan_multirate: pec_step must be > 0");
  MultiratePlan plan;
  double start = 0.0;
  for (const auto& e : engines) {
    e.validate();
    double pec = start;
    while (pec + pec_step <= pec_max && ecc_failure_rate(e, rber_of_pec(pec + pec_step)) <= e.target_uber)
      pec += pec_step;
    if (pec < start) pec = start;
    RateStage st;
    st.rate = e.rate;
    st.op = op_for_rate(pba, lba, e.rate, parity_fraction);
    st.wa = wa_for_op(st.op);
    st.pec = pec - start;
    plan.stages.push_back(st);
    plan.switch_pec.push_back(pec);
    start = pec;
  }
  plan.strongest_endurance = start;
  return plan;
}

int RaidLayout::group_count() const {
  std::set<int> g;
  for (int x : group)
    if (x != kBlank) g.insert(x);
  return static_cast<int>(g.size());
}

RaidLayout li_raid_layout(int m, int n) {
  if (m < 1 || n < 1) throw ConfigError("li_raid_layout: m and n must be >= 1");
  if (m > 2 * n) throw ConfigError("li_raid_layout: m > 2n is infeasible");
  RaidLayout L;
  L.m = m;
  L.n = n;
  L.padded = (n % m) != 0;
  L.group.assign(static_cast<std::size_t>(m) * n * 2, kBlank);
  for (int j = 0; j < m; ++j) {
    const int off = static_cast<int>((static_cast<long>(j) * n) / m);
    for (int s = 0; s + 1 < n; ++s) {
      const int wl = (off + s) % n;
      for (int f = 0; f < 2; ++f) {
        const PageType page = ((j + f) % 2 == 0) ? PageType::MSB : PageType::LSB;
        L.at(j, wl, page) = 2 * s + f;
      }
    }
  }
  return L;
}

RaidLayout conventional_layout(int m, int n) {
  if (m < 1 || n < 1) throw ConfigError("conventional_layout: m and n must be >= 1");
  RaidLayout L;
  L.m = m;
  L.n = n;
  L.group.assign(static_cast<std::size_t>(m) * n * 2, kBlank);
  for (int j = 0; j < m; ++j)
    for (int wl = 0; wl < n; ++wl) {
      L.at(j, wl, PageType::MSB) = 2 * wl;
      L.at(j, wl, PageType::LSB) = 2 * wl + 1;
    }
  return L;
}

std::vector<int> program_order(const RaidLayout& layout, int chip) {
  // groups are programmed in id order; within a wordline MSB precedes LSB in the listing
  std::vector<int> order(static_cast<std::size_t>(layout.n) * 2, -1);
  for (int wl = 0; wl < layout.n; ++wl)
    for (int p = 0; p < 2; ++p) order[wl * 2 + p] = layout.at(chip, wl, static_cast<PageType>(p));
  return order;
}

WorstGroup layout_worst_group(const RaidLayout& layout, const PageRber& rber, const EccConfig& ecc,
                              const ParityConfig& parity) {
  const int groups = 2 * layout.n;
  std::vector<double> sum(groups, 0.0);
  std::vector<int> count(groups, 0);
  for (int j = 0; j < layout.m; ++j)
    for (int wl = 0; wl < layout.n; ++wl)
      for (int p = 0; p < 2; ++p) {
        const int g = layout.at(j, wl, static_cast<PageType>(p));
        if (g == kBlank) continue;
        sum[g] += rber(j, wl, static_cast<PageType>(p));
        ++count[g];
      }
  WorstGroup w;
  for (int g = 0; g < groups; ++g) {
    if (count[g] == 0) continue;
    const double mean = sum[g] / count[g];
    if (w.group < 0 || mean > w.mean_rber) {
      w.group = g;
      w.mean_rber = mean;
    }
  }
  if (w.group >= 0) {
    ParityConfig pc = parity;
    pc.chips = std::max(layout.m, 2);
    pc.dies = 1;
    w.parity_fail = parity_fail(pc, lb_fail(pc, ecc_failure_rate(ecc, std::min(1.0, w.mean_rber))));
  }
  return w;
}

void write_layout_csv(const RaidLayout& layout, std::ostream& os) {
  os << "chip,wordline,page,group\n";
  for (int j = 0; j < layout.m; ++j)
    for (int wl = 0; wl < layout.n; ++wl)
      for (int p = 0; p < 2; ++p) {
        const int g = layout.at(j, wl, static_cast<PageType>(p));
        os << j << ',' << wl << ',' << (p == 0 ? "MSB" : "LSB") << ',';
        if (g == kBlank) {
          os << "blank";
        } else {
          os << g;
        }
        os << '\n';
      }
}

}  // namespace flashlab
