#include <doctest.h>

#include <cmath>
#include <random>

#include "flashlab/channel.hpp"
#include "flashlab/models.hpp"

using namespace flashlab;

namespace {

ChannelModel fat_tail_truth() {
  ChannelModel t;
  t.family = Family::StudentT;
  t[CellState::ER] = {40, 14, 4, 4, 1e-3};
  t[CellState::P1] = {120, 9, 6, 3, 1e-3};
  t[CellState::P2] = {190, 9.5, 5, 4, 0};
  t[CellState::P3] = {260, 10, 6, 6, 0};
  t.enforce_constraints();
  return t;
}

}  // namespace

TEST_CASE("gcdf reference values") {
  CHECK(gcdf(5.0, 5.0, 2.0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::abs(gcdf(7.0, 5.0, 2.0) - 0.841344746) < 1e-4);
  double prev = 0.0;
  for (double v = -50; v < 60; v += 0.7) {
    const double p = gcdf(v, 5.0, 2.0);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("ncdf limits and symmetry") {
  CHECK(ncdf(100.0, 100.0, 8.0, 2.0, 2.0) == doctest::Approx(0.5).epsilon(1e-6));
  const double big = 1e3 / 8.0;
  for (double v : {80.0, 95.0, 100.0, 110.0, 125.0})
    CHECK(std::abs(ncdf(v, 100.0, 8.0, big, big) - gcdf(v, 100.0, 8.0)) < 1e-3);
}

TEST_CASE("tcdf reference values") {
  CHECK(tcdf(10.0, 10.0, 3.0, 4.0, 4.0) == doctest::Approx(0.5).epsilon(1e-6));
  // nu = 1 is Cauchy: 1/2 + atan(1)/pi
  CHECK(std::abs(tcdf(13.0, 10.0, 3.0, 1.0, 1.0) - 0.75) < 1e-3);
  CHECK(std::abs(tcdf(13.0, 10.0, 3.0, 1e6, 1e6) - gcdf(13.0, 10.0, 3.0)) < 1e-3);
}

TEST_CASE("cdf families stay monotone and bounded on random parameters") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> mu(0, 300), sg(1, 30), tail(0.3, 60);
  VoltageGrid g;
  for (int trial = 0; trial < 60; ++trial) {
    const StateModel s{mu(rng), sg(rng), tail(rng), tail(rng), 0.0};
    for (auto f : {Family::Gaussian, Family::NormalLaplace, Family::StudentT}) {
      double prev = 0.0;
      bool ok = true;
      for (int k = 1; k <= VoltageGrid::kSteps; ++k) {
        const double p = state_cdf(f, s, g.value(k));
        ok = ok && p >= prev - 1e-12 && p >= 0.0 && p <= 1.0;
        prev = p;
      }
      CHECK(ok);
    }
  }
}

TEST_CASE("model density sums to one and carries misprogram mass") {
  auto m = fat_tail_truth();
  m[CellState::ER].lambda = 0.01;
  VoltageGrid g;
  for (auto s : kAllStates) {
    const auto d = model_density(m, g, s);
    double sum = 0.0;
    for (double x : d) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  const auto er = model_density(m, g, CellState::ER);
  double near_p3 = 0.0;
  for (int k = 220; k < VoltageGrid::kBins; ++k) near_p3 += er[k];
  CHECK(near_p3 == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("kl divergence values") {
  CHECK(kl_divergence({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  // 0.5 ln(5/9) + 0.5 ln 5
  CHECK(kl_divergence({0.5, 0.5}, {0.9, 0.1}) == doctest::Approx(0.5108).epsilon(1e-4));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> p(8), q(8);
    double sp = 0, sq = 0;
    for (int i = 0; i < 8; ++i) {
      sp += p[i] = u(rng);
      sq += q[i] = u(rng);
    }
    for (int i = 0; i < 8; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    CHECK(kl_divergence(p, q) >= 0.0);
  }
}

TEST_CASE("nelder mead minima") {
  const auto r1 = nelder_mead([](const std::vector<double>& x) { return (x[0] - 3) * (x[0] - 3); }, {0.0});
  CHECK(std::abs(r1.x[0] - 3.0) < 1e-6);
  CHECK(r1.evaluations <= 1000 * 3);
  NMOptions opt;
  opt.max_iter = 5000;
  const auto r2 = nelder_mead(
      [](const std::vector<double>& x) {
        return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
      },
      {-1.2, 1.0}, opt);
  CHECK(std::abs(r2.x[0] - 1.0) < 1e-3);
  CHECK(std::abs(r2.x[1] - 1.0) < 1e-3);
  CHECK(r2.evaluations <= opt.max_iter * 4);
}

TEST_CASE("static fit on fat-tailed data") {
  const auto truth = fat_tail_truth();
  const auto st = sample_page(truth, 1000000, nullptr, 42);
  const auto h = bin_cells(st);
  const auto ft = fit_static(h, st.grid, Family::StudentT);
  CHECK(ft.kl_error <= 0.01);
  CHECK(ft.kl_error <= ft.initial_kl);
  for (auto s : kAllStates) CHECK(std::abs(ft.model[s].mu - truth[s].mu) <= 1.0);
  const auto fg = fit_static(h, st.grid, Family::Gaussian);
  CHECK(fg.kl_error >= 2.0 * ft.kl_error);

  // refitting data drawn from the fit lands near the same place
  const auto st2 = sample_page(ft.model, 1000000, nullptr, 43);
  const auto again = fit_static(bin_cells(st2), st2.grid, Family::StudentT, &ft.model);
  for (auto s : kAllStates) CHECK(std::abs(again.model[s].mu - ft.model[s].mu) <= 1.0);
}

TEST_CASE("power law fits") {
  std::vector<std::pair<double, double>> pts;
  for (double x : {1000.0, 2500.0, 5000.0, 7500.0, 10000.0}) pts.emplace_back(x, 2.0 * std::sqrt(x) + 1.0);
  const auto p = fit_power_law(pts);
  CHECK(p.a == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(p.b == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(p.c == doctest::Approx(1.0).epsilon(1e-4));

  std::vector<std::pair<double, double>> flat{{1000, 7}, {2000, 7}, {3000, 7}, {4000, 7}};
  const auto q = fit_power_law(flat);
  CHECK(std::abs(q.a) < 1e-9);
  CHECK(q(20000) == doctest::Approx(7.0));

  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<std::pair<double, double>> noisy;
  auto f = [](double x) { return 3.0 * std::pow(x, 0.7) + 10.0; };
  // with four points the nested linear law wins on AICc; eight leave room for the full law
  for (double x = 1250.0; x <= 10000.0; x += 1250.0) noisy.emplace_back(x, f(x) * (1 + noise(rng)));
  const auto n = fit_power_law(noisy);
  for (const auto& [x, y] : noisy) CHECK(std::abs(n(x) - y) / y < 0.03);
  CHECK(std::abs(n(10000) - f(10000)) / f(10000) < 0.03);
}

TEST_CASE("rber estimate and sampled channel agree") {
  ChannelModel m;
  m.family = Family::Gaussian;
  m.states = {StateModel{40, 12, 5, 5, 0}, StateModel{110, 10, 5, 5, 0}, StateModel{180, 10, 5, 5, 0},
              StateModel{250, 10, 5, 5, 0}};
  const ReadRefs r{75, 145, 215};
  const auto est = estimate_rber(m, r);
  const auto st = sample_page(m, 1000000, nullptr, 77);
  const auto meas = measure_rber(st, r);
  const double sd = std::sqrt(est.total / (2.0 * 1e6));
  CHECK(std::abs(meas.total - est.total) < 3.0 * sd * 1.5);

  ChannelModel sep = m;
  for (auto& s : sep.states) s.sigma = 1.0;
  CHECK(estimate_rber(sep, r).total < 1e-15);
}

TEST_CASE("vopt methods") {
  ChannelModel m;
  m.family = Family::Gaussian;
  m.states = {StateModel{40, 10, 5, 5, 0}, StateModel{120, 10, 5, 5, 0}, StateModel{190, 10, 5, 5, 0},
              StateModel{260, 10, 5, 5, 0}};
  VoltageGrid g;
  for (auto method : {VoptMethod::PdfIntersection, VoptMethod::MeanMidpoint}) {
    const auto r = predict_vopt(m, method, g);
    CHECK(r.va == doctest::Approx(80.0));
    CHECK(r.vb == doctest::Approx(155.0));
    CHECK(r.vc == doctest::Approx(225.0));
  }
  // a constant shift moves the midpoint refs by that constant
  ChannelModel s = m;
  for (auto& st : s.states) st.mu += 7.0;
  const auto r0 = predict_vopt(m, VoptMethod::MeanMidpoint, g);
  const auto r1 = predict_vopt(s, VoptMethod::MeanMidpoint, g);
  CHECK(r1.va - r0.va == doctest::Approx(7.0));
  CHECK(r1.vc - r0.vc == doctest::Approx(7.0));
  // the factory refs lose on a shifted channel
  CHECK(estimate_rber(m, default_refs()).total > estimate_rber(m, predict_vopt(m, VoptMethod::PdfIntersection, g)).total);
}

TEST_CASE("dynamic model lifetime") {
  DynamicModel d;
  d.family = Family::Gaussian;
  const double mu[] = {40, 120, 190, 260};
  for (int s = 0; s < 4; ++s) {
    d.laws[s][0] = PowerLaw{0.0, 1.0, mu[s]};
    d.laws[s][1] = PowerLaw{1e-3, 1.0, 6.0};  // sigma grows linearly
    d.laws[s][2] = PowerLaw{0.0, 1.0, 5.0};
    d.laws[s][3] = PowerLaw{0.0, 1.0, 5.0};
    d.laws[s][4] = PowerLaw{0.0, 1.0, 0.0};
  }
  d.max_train_pec = 10000;
  VoltageGrid g;
  CHECK(estimate_lifetime(d, 1e-30, 100, g).pec == 0.0);
  const auto l1 = estimate_lifetime(d, 1e-3, 100, g);
  const auto l2 = estimate_lifetime(d, 2e-3, 100, g);
  CHECK(l2.pec >= l1.pec);
  // crossing located against a dense scan
  double cross = 0.0;
  for (double p = 0; p < 1e5; p += 1) {
    const auto m = predict_static(d, p);
    if (estimate_rber(m, predict_vopt(m, VoptMethod::PdfIntersection, g)).total > 2e-3) {
      cross = p;
      break;
    }
  }
  CHECK(std::abs(l2.pec - cross) <= 100.0);
}

TEST_CASE("llr hand values") {
  CHECK(llr(110.0, 100.0, 120.0, 10.0) == doctest::Approx(0.0));
  CHECK(llr(100.0, 100.0, 120.0, 10.0) > 0.0);
  CHECK(llr(105.0, 100.0, 120.0, 10.0) == doctest::Approx(1.0));
}

TEST_CASE("channel model json round trip") {
  const auto m = fat_tail_truth();
  const auto back = channel_model_from_json(to_json(m));
  CHECK(back.family == m.family);
  for (auto s : kAllStates) {
    CHECK(back[s].mu == m[s].mu);
    CHECK(back[s].lambda == m[s].lambda);
  }
}
