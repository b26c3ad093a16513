#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "flashlab/channel.hpp"
#include "flashlab/degradation.hpp"

using namespace flashlab;

TEST_CASE("retention table evaluation") {
  const auto m = RetentionModel3D::defaults();
  const auto& c = m[RetVar::RberMsb];
  CHECK(c.alpha == 5.49e-6);
  CHECK(c.beta == 0.16);
  CHECK(c.gamma == 1.33e-4);
  CHECK(c.delta == -13.11);
  // (5.49e-6*1e4 + 0.16)*10 + 1.33 - 13.11
  CHECK(retention_eval(m, RetVar::RberMsb, 10000, std::exp(10.0)) == doctest::Approx(-9.631).epsilon(1e-9));
  CHECK(retention_eval(m, RetVar::Vb, 3000, 1.0) == doctest::Approx(4.20e-4 * 3000 - 0.0 + 150.56));
  CHECK_THROWS(retention_eval(m, RetVar::Va, 0, 0.5));
}

TEST_CASE("retention variables move in their documented direction") {
  const auto m = RetentionModel3D::defaults();
  for (double pec : {0.0, 3000.0, 10000.0}) {
    auto at = [&](RetVar v, double t) { return retention_eval(m, v, pec, t); };
    for (double t = 10; t < 3e7; t *= 10) {
      CHECK(at(RetVar::RberMsb, t * 10) > at(RetVar::RberMsb, t));
      CHECK(at(RetVar::RberLsb, t * 10) > at(RetVar::RberLsb, t));
      CHECK(at(RetVar::MuER, t * 10) > at(RetVar::MuER, t));
      CHECK(at(RetVar::MuP1, t * 10) < at(RetVar::MuP1, t));
      CHECK(at(RetVar::MuP2, t * 10) < at(RetVar::MuP2, t));
      CHECK(at(RetVar::MuP3, t * 10) < at(RetVar::MuP3, t));
      CHECK(at(RetVar::Vb, t * 10) < at(RetVar::Vb, t));
      CHECK(at(RetVar::Vc, t * 10) < at(RetVar::Vc, t));
    }
  }
}

TEST_CASE("calibrated retention channel reproduces the table RBER") {
  const auto m = RetentionModel3D::defaults();
  const double pec = 5000, t = 30 * kSecondsPerDay;
  const auto ch = retention_channel_calibrated(m, pec, t);
  const ReadRefs refs{retention_eval(m, RetVar::Va, pec, t), retention_eval(m, RetVar::Vb, pec, t),
                      retention_eval(m, RetVar::Vc, pec, t)};
  const double table = 0.5 * (std::exp(retention_eval(m, RetVar::RberMsb, pec, t)) +
                              std::exp(retention_eval(m, RetVar::RberLsb, pec, t)));
  CHECK(estimate_rber(ch, refs).total == doctest::Approx(table).epsilon(1e-6));
  const std::size_t n = 2000000;
  const auto st = sample_page(ch, n, nullptr, 99);
  const double meas = measure_rber(st, refs).total;
  CHECK(std::abs(meas - table) < 3.0 * std::sqrt(table / (2.0 * n)) * 1.5);
  const auto r = retention_refs(m, pec, t, VoltageGrid());
  CHECK(r.valid());
  CHECK(r.vb == VoltageGrid().snap(refs.vb));
}

TEST_CASE("pe cycle trends") {
  PeCycleConfig cfg;
  const auto z = pe_cycle_trend(cfg, 0);
  for (double d : z.dmu) CHECK(d == 0.0);
  const auto a = pe_cycle_trend(cfg, 4000), b = pe_cycle_trend(cfg, 8000);
  CHECK(a.dmu[0] > 0.0);
  CHECK(a.dmu[3] < 0.0);
  for (int s = 0; s < 4; ++s) CHECK(b.dmu[s] == doctest::Approx(2.0 * a.dmu[s]));
}

TEST_CASE("layer profiles") {
  const auto p1 = sample_layer_profile(GammaParams{2.3, 6.2e-5}, OffsetShape{}, 5);
  const auto p2 = sample_layer_profile(GammaParams{2.3, 6.2e-5}, OffsetShape{}, 5);
  CHECK(p1.rber_multiplier == p2.rber_multiplier);
  double sum = 0.0;
  for (double x : p1.rber_multiplier) {
    CHECK(x > 0.0);
    sum += x;
  }
  CHECK(sum / kNumLayers == doctest::Approx(1.0).epsilon(1e-12));
  // top half sits lower than the bottom half by about four steps
  double top = 0, bottom = 0;
  for (int l = 0; l < 50; ++l) bottom += p1.va_offset[l] / 50;
  for (int l = 51; l < kNumLayers; ++l) top += p1.va_offset[l] / 50;
  CHECK(bottom - top == doctest::Approx(4.0).epsilon(0.05));

  const auto tight = sample_layer_profile(GammaParams{1e6, 1e-6}, OffsetShape{}, 1);
  for (double x : tight.rber_multiplier) CHECK(std::abs(x - 1.0) < 0.01);

  double ratio = 0.0;
  for (int seed = 1; seed <= 20; ++seed) {
    auto p = sample_layer_profile(GammaParams{2.29, 6.2e-5}, OffsetShape{}, seed);
    auto v = std::vector<double>(p.rber_multiplier.begin(), p.rber_multiplier.end());
    std::sort(v.begin(), v.end());
    ratio += v.back() / v[v.size() / 2] / 20.0;
  }
  CHECK(ratio > 2.0);
  CHECK_THROWS_AS(sample_layer_profile(GammaParams{0.0, 1.0}, OffsetShape{}, 1), ConfigError);
}

TEST_CASE("gamma fit by moments") {
  std::mt19937_64 rng(12);
  std::gamma_distribution<double> g(2.0, 1e-4);
  std::vector<double> xs(10000);
  for (auto& x : xs) x = g(rng);
  const auto fit = fit_gamma(xs);
  CHECK(std::abs(fit.shape - 2.0) / 2.0 < 0.1);
  CHECK_THROWS(fit_gamma(std::vector<double>(100, 3.0)));

  // binned fitted density against the sample histogram
  const int bins = 40;
  const double hi = *std::max_element(xs.begin(), xs.end());
  std::vector<double> p(bins, 0.0), q(bins, 0.0);
  for (double x : xs) p[std::min(bins - 1, static_cast<int>(x / hi * bins))] += 1.0 / xs.size();
  std::gamma_distribution<double> fitted(fit.shape, fit.scale);
  std::mt19937_64 r2(13);
  for (int i = 0; i < 200000; ++i) q[std::min(bins - 1, static_cast<int>(fitted(r2) / hi * bins))] += 1.0 / 200000;
  double kl = 0.0;
  for (int i = 0; i < bins; ++i)
    if (p[i] > 0 && q[i] > 0) kl += p[i] * std::log(p[i] / q[i]);
  CHECK(kl <= 0.2);
}

TEST_CASE("program and retention interference") {
  InterferenceModel m;
  CHECK(program_interference(m, 100.0, NeighborPosition::NextWordline) == doctest::Approx(2.7));
  CHECK(program_interference(m, 0.0, NeighborPosition::NextWordline) == 0.0);
  CHECK(program_interference(m, 40.0, NeighborPosition::PrevWordline) == doctest::Approx(0.032));
  CHECK(program_interference(m, 10.0, "next") == doctest::Approx(0.27));
  for (auto v : kAllStates) {
    CHECK(retention_interference_offset(m, v, CellState::P3, 1e6) <
          retention_interference_offset(m, v, CellState::ER, 1e6));
    for (auto n : kAllStates)
      for (double t : {1.0, 1e3, 1e6, 1e9}) CHECK(retention_interference_offset(m, v, n, t) <= m.cap);
  }
  CHECK(retention_interference_offset(m, CellState::P2, CellState::ER, m.reference_seconds) > 0.0);
}

TEST_CASE("read disturb") {
  ReadDisturbConfig cfg;
  CHECK(read_disturb_shift(cfg, 0)[0] == 0.0);
  CHECK(read_disturb_shift(cfg, 900000)[0] == doctest::Approx(8.0));
  CHECK(read_disturb_shift(cfg, 450000)[0] == doctest::Approx(4.0));
}
