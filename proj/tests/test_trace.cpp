#include <doctest.h>

#include <cmath>
#include <sstream>

#include "flashlab/trace.hpp"

using namespace flashlab;

TEST_CASE("msr parsing") {
  std::istringstream in(
      "128166372003061629,hm,1,Write,8192,4096,1200\n"
      "128166372013061629,hm,1,Read,1048576,16384,300\n"
      "garbage line\n"
      "128166372023061629,hm,1,Write,512,512,80\n");
  ParseStats st;
  const auto ev = parse_msr(in, &st);
  REQUIRE(ev.size() == 3);
  CHECK(st.skipped == 1);
  CHECK(ev[0].timestamp_us == 0);
  CHECK(ev[1].timestamp_us == 1000000);  // 1e7 ticks of 100 ns
  CHECK(ev[2].timestamp_us == 2000000);
  CHECK(ev[0].op == 'W');
  CHECK(ev[1].op == 'R');
  CHECK(ev[0].lba == 16);
  CHECK(ev[1].lba == 2048);
  CHECK(ev[1].size == 16384);
}

TEST_CASE("msr parser keeps file order") {
  std::istringstream in(
      "300,h,0,Write,0,4096,1\n"
      "100,h,0,Write,4096,4096,1\n"
      "200,h,0,Write,8192,4096,1\n");
  const auto ev = parse_msr(in);
  REQUIRE(ev.size() == 3);
  CHECK(ev[0].lba == 0);
  CHECK(ev[1].lba == 8);
  CHECK(ev[2].lba == 16);
}

TEST_CASE("canonical round trip") {
  SynthConfig cfg;
  cfg.duration_s = 100;
  cfg.read_fraction = 0.3;
  const auto ev = synth_hot(cfg);
  std::stringstream ss;
  write_canonical(ev, ss);
  CHECK(ss.str().rfind("timestamp_us,op,lba,size_bytes\n", 0) == 0);
  const auto back = read_canonical(ss);
  CHECK(back == ev);
}

TEST_CASE("synthetic generator is seed deterministic") {
  SynthConfig cfg;
  cfg.duration_s = 500;
  std::ostringstream a, b, c;
  write_canonical(synth_hot(cfg), a);
  write_canonical(synth_hot(cfg), b);
  cfg.seed = 2;
  write_canonical(synth_hot(cfg), c);
  CHECK(a.str() == b.str());
  CHECK(a.str() != c.str());
}

TEST_CASE("hot set knee") {
  SynthConfig cfg;
  cfg.duration_s = 20000;
  cfg.footprint_pages = 20000;
  const auto ev = synth_hot(cfg);
  std::uint64_t n = 0, hot = 0;
  const std::uint64_t hot_pages = 200;
  for (const auto& e : ev) {
    ++n;
    hot += e.lba * 512 / cfg.page_bytes < hot_pages;
  }
  const double share = static_cast<double>(hot) / n;
  CHECK(std::abs(share - 0.95) < 4.0 * std::sqrt(0.95 * 0.05 / n));
  const auto curve = hotness_cdf(ev, cfg.page_bytes, cfg.footprint_pages);
  CHECK(cdf_at(curve, 0.01) == doctest::Approx(0.95).epsilon(0.02));
}

TEST_CASE("no skew gives a diagonal") {
  SynthConfig cfg;
  cfg.duration_s = 20000;
  cfg.writes_per_s = 50;
  cfg.footprint_pages = 1000;
  cfg.hot_fraction = 0.3;
  cfg.hot_share = 0.3;
  const auto curve = hotness_cdf(synth_hot(cfg), cfg.page_bytes, cfg.footprint_pages);
  for (double f : {0.1, 0.3, 0.5, 0.8}) CHECK(std::abs(cdf_at(curve, f) - f) < 0.05);
}

TEST_CASE("single page cdf") {
  std::vector<TraceEvent> ev{{0, 'W', 0, 8192}, {10, 'W', 0, 8192}};
  const auto curve = hotness_cdf(ev);
  // the curve starts at the origin; the first page carries every write
  REQUIRE(curve.size() >= 2);
  CHECK(curve[0].write_fraction == 0.0);
  CHECK(curve[1].write_fraction == 1.0);
}

TEST_CASE("zipf variant skews toward low pages") {
  SynthConfig cfg;
  cfg.duration_s = 5000;
  cfg.footprint_pages = 5000;
  cfg.dist = HotDistribution::Zipf;
  const auto curve = hotness_cdf(synth_hot(cfg), cfg.page_bytes, cfg.footprint_pages);
  CHECK(cdf_at(curve, 0.1) > 0.5);
}
