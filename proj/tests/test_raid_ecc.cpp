#include <doctest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <set>

#include "flashlab/raid_ecc.hpp"

using namespace flashlab;

namespace {

using big = boost::multiprecision::cpp_bin_float_50;

// tail sum by term recurrence in 50 digits
double tail_oracle(long l, long t, double ber) {
  const big p(ber), q = big(1) - p;
  big term = boost::multiprecision::pow(q, l), above = 0;
  for (long k = 0; k < l; ++k) {
    if (k > t) above += term;
    term = term * big(l - k) / big(k + 1) * p / q;
  }
  return static_cast<double>(above + term);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("ecc failure rate") {
  CHECK(ecc_failure_rate(8192, 40, 0.0) == 0.0);
  CHECK(ecc_failure_rate(8, 1, 0.5) == doctest::Approx(247.0 / 256.0).epsilon(1e-14));
  CHECK(tail_oracle(8, 1, 0.5) == doctest::Approx(247.0 / 256.0).epsilon(1e-14));
  const double ref = tail_oracle(100, 2, 0.01);
  CHECK(std::abs(ecc_failure_rate(100, 2, 0.01) - ref) <= 1e-12 * ref);
  for (double ber : {1e-4, 1e-3, 4e-3, 1e-2}) {
    const double r = tail_oracle(8192, 40, ber);
    CHECK(std::abs(ecc_failure_rate(8192, 40, ber) - r) <= 1e-9 * r + 1e-300);
  }
  CHECK(std::isfinite(ecc_failure_rate(1L << 17, 2000, 1e-2)));
}

TEST_CASE("ecc failure rate is monotone in ber and t") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-6.0, -1.0);
  for (int i = 0; i < 200; ++i) {
    const double a = std::pow(10.0, u(rng)), b = std::pow(10.0, u(rng));
    const double lo = std::min(a, b), hi = std::max(a, b);
    CHECK(ecc_failure_rate(4096, 30, lo) <= ecc_failure_rate(4096, 30, hi));
    CHECK(ecc_failure_rate(4096, 31, hi) <= ecc_failure_rate(4096, 30, hi));
  }
}

TEST_CASE("lb and parity failure") {
  ParityConfig p;
  CHECK(lb_fail(p, 0.0) == 0.0);
  CHECK(lb_fail(p, 0.003) == doctest::Approx(0.003));
  p.codewords_per_lb = 4;
  p.p_hgbb = 0.01;
  CHECK(lb_fail(p, 0.001) == doctest::Approx(0.01 + 0.99 * (1 - std::pow(0.999, 4))));
  ParityConfig q;
  CHECK(parity_fail(q, 0.01) == doctest::Approx(0.01 * (1 - std::pow(0.99, 3))));
  CHECK(parity_fail(q, 0.01) == doctest::Approx(2.97e-4).epsilon(0.001));
  CHECK(parity_fail(q, 0.0) == 0.0);
  for (double x = 0.0; x <= 1.0; x += 0.05) CHECK(parity_fail(q, x) <= x);
}

TEST_CASE("op and lifetime") {
  CHECK(op_fraction(2.4, 2.0) == doctest::Approx(0.20));
  CHECK(op_fraction(2.0, 2.0) == 0.0);
  const double parity = 1.0 / 32.0;
  CHECK(std::abs(op_for_rate(2.4, 2.0, 0.93, 0.0) - 0.116) < 5e-4);
  CHECK(std::abs(op_for_rate(2.4, 2.0, 0.93, parity) - 0.081) < 5e-4);
  CHECK(std::abs(op_for_rate(2.4, 2.0, 0.90, 0.0) - 0.080) < 5e-4);
  CHECK(std::abs(op_for_rate(2.4, 2.0, 0.90, parity) - 0.046) < 5e-4);

  LifetimeInputs in{3000, 0.2, 1.0, 2.0, 1.0};
  CHECK(lifetime_years(in) == doctest::Approx(3000 * 1.2 / (365.0 * 2.0)));
  CHECK(multirate_lifetime({RateStage{in.pec, in.op, in.wa, 0.9}}, in.dwpd, in.r_compress) == lifetime_years(in));
  LifetimeInputs twice = in;
  twice.dwpd = 2.0;
  CHECK(lifetime_years(twice) == doctest::Approx(0.5 * lifetime_years(in)));
}

TEST_CASE("multirate plan outlives the strongest engine alone") {
  EccConfig weak{8192, 40, 0.93, 1e-15}, strong{8192, 60, 0.90, 1e-15};
  auto rber = [](double pec) { return 2e-4 * pec / 3000.0; };
  const auto plan = plan_multirate({weak, strong}, rber, 2.4, 2.0, 1.0 / 32.0);
  REQUIRE(plan.stages.size() == 2);
  CHECK(plan.switch_pec[0] > 0.0);
  CHECK(plan.switch_pec[1] >= plan.switch_pec[0]);
  CHECK(ecc_failure_rate(weak, rber(plan.switch_pec[0])) <= weak.target_uber);
  CHECK(ecc_failure_rate(weak, rber(plan.switch_pec[0] + 10.0)) > weak.target_uber);
  const double multi = multirate_lifetime(plan.stages, 1.0, 1.0);
  const double op = op_for_rate(2.4, 2.0, 0.90, 1.0 / 32.0);
  const double single = lifetime_years({plan.strongest_endurance, op, 1.0, wa_for_op(op), 1.0});
  CHECK(multi > single);
}

TEST_CASE("li-raid 4x4 golden layout") {
  std::ostringstream os;
  write_layout_csv(li_raid_layout(4, 4), os);
  CHECK(os.str() == slurp(FLASHLAB_GOLDEN_DIR "/li_raid_4x4.csv"));
  const auto L = li_raid_layout(4, 4);
  CHECK(L.at(0, 0, PageType::MSB) == 0);
  CHECK(L.at(1, 0, PageType::MSB) == kBlank);
  CHECK(L.at(1, 0, PageType::LSB) == kBlank);
}

TEST_CASE("layout invariants") {
  for (auto [m, n] : std::vector<std::pair<int, int>>{{2, 2}, {2, 4}, {4, 4}, {4, 8}, {4, 16}, {8, 8}, {8, 16}}) {
    for (bool li : {true, false}) {
      const auto L = li ? li_raid_layout(m, n) : conventional_layout(m, n);
      CAPTURE(m);
      CAPTURE(n);
      CAPTURE(li);
      std::map<int, std::set<int>> chips, wls;
      std::map<int, int> pages;
      for (int j = 0; j < m; ++j) {
        int blanks = 0;
        for (int wl = 0; wl < n; ++wl)
          for (auto p : {PageType::MSB, PageType::LSB}) {
            const int g = L.at(j, wl, p);
            if (g == kBlank) {
              ++blanks;
              continue;
            }
            chips[g].insert(j);
            wls[g].insert(wl);
            ++pages[g];
          }
        CHECK(blanks == (li ? 2 : 0));
      }
      for (const auto& [g, c] : pages) {
        CHECK(c == m);
        CHECK(chips[g].size() == static_cast<std::size_t>(m));
        if (li) CHECK(wls[g].size() == static_cast<std::size_t>(m));
      }
    }
  }
  const auto big = li_raid_layout(4, 256);
  CHECK(2.0 / (2.0 * big.n) < 0.008);
  CHECK_THROWS(li_raid_layout(9, 4));
}

TEST_CASE("worst group under uniform rber") {
  const auto L = li_raid_layout(4, 8);
  const auto w = layout_worst_group(L, [](int, int, PageType) { return 1e-3; });
  CHECK(w.mean_rber == doctest::Approx(1e-3));
}

TEST_CASE("li-raid worst group never exceeds conventional on monotone layer profiles") {
  // every monotone per-layer LSB profile over four levels, MSB a fixed multiple of LSB
  const int m = 4, n = 4;
  const double levels[] = {1e-4, 2e-4, 5e-4, 1e-3};
  const auto li = li_raid_layout(m, n), conv = conventional_layout(m, n);
  int checked = 0;
  for (double ratio : {1.0, 1.5, 2.4, 4.0})
    for (int code = 0; code < 256; ++code) {
      int lv[4];
      for (int i = 0; i < 4; ++i) lv[i] = (code >> (2 * i)) & 3;
      const bool up = lv[0] <= lv[1] && lv[1] <= lv[2] && lv[2] <= lv[3];
      const bool down = lv[0] >= lv[1] && lv[1] >= lv[2] && lv[2] >= lv[3];
      if (!up && !down) continue;
      auto rber = [&](int, int wl, PageType p) { return levels[lv[wl]] * (p == PageType::MSB ? ratio : 1.0); };
      CHECK(layout_worst_group(li, rber).mean_rber <= layout_worst_group(conv, rber).mean_rber + 1e-18);
      ++checked;
    }
  CHECK(checked == 4 * (2 * 35 - 4));

  std::mt19937_64 rng(7);
  std::gamma_distribution<double> g(2.3, 6.2e-5);
  int strictly_better = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> layer(n);
    for (auto& x : layer) x = g(rng);
    auto rber = [&](int, int wl, PageType p) { return layer[wl] * (p == PageType::MSB ? 2.4 : 1.0); };
    const double a = layout_worst_group(li, rber).mean_rber, b = layout_worst_group(conv, rber).mean_rber;
    CHECK(a <= b);
    strictly_better += a < b;
  }
  CHECK(strictly_better > 150);
}
