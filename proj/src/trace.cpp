#include "flashlab/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "flashlab/common.hpp"

namespace flashlab {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string f;
  std::istringstream ss(line);
  while (std::getline(ss, f, ',')) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    std::size_t b = 0;
    while (b < f.size() && f[b] == ' ') ++b;
    out.push_back(f.substr(b));
  }
  return out;
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty()) return false;
  try {
    std::size_t pos = 0;
    out = std::stoull(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

std::vector<TraceEvent> parse_msr(std::istream& is, ParseStats* stats) {
  std::vector<TraceEvent> out;
  ParseStats st;
  std::string line;
  std::uint64_t base = 0;
  bool have_base = false;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    ++st.rows;
    const auto f = split(line);
    std::uint64_t ticks, offset, size;
    if (f.size() < 6 || !parse_u64(f[0], ticks) || !parse_u64(f[4], offset) || !parse_u64(f[5], size) ||
        size == 0) {
      ++st.skipped;
      continue;
    }
    char op;
    if (f[3] == "Write" || f[3] == "write" || f[3] == "W") {
      op = 'W';
    } else if (f[3] == "Read" || f[3] == "read" || f[3] == "R") {
      op = 'R';
    } else {
      ++st.skipped;
      continue;
    }
    if (!have_base) {
      base = ticks;
      have_base = true;
    }
    TraceEvent e;
    e.timestamp_us = ticks >= base ? (ticks - base) / 10 : 0;
    e.op = op;
    e.lba = offset / 512;
    e.size = size;
    out.push_back(e);
  }
  if (stats) *stats = st;
  return out;
}

std::vector<TraceEvent> parse_msr_file(const std::string& path, ParseStats* stats) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace: " + path);
  return parse_msr(in, stats);
}

void write_canonical(const std::vector<TraceEvent>& events, std::ostream& os) {
  os << "timestamp_us,op,lba,size_bytes\n";
  for (const auto& e : events) os << e.timestamp_us << ',' << e.op << ',' << e.lba << ',' << e.size << '\n';
}

std::vector<TraceEvent> read_canonical(std::istream& is, ParseStats* stats) {
  std::vector<TraceEvent> out;
  ParseStats st;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r" || line.rfind("timestamp_us", 0) == 0) continue;
    ++st.rows;
    const auto f = split(line);
    TraceEvent e;
    if (f.size() != 4 || f[1].size() != 1 || (f[1][0] != 'R' && f[1][0] != 'W') || !parse_u64(f[0], e.timestamp_us) ||
        !parse_u64(f[2], e.lba) || !parse_u64(f[3], e.size) || e.size == 0) {
      ++st.skipped;
      continue;
    }
    e.op = f[1][0];
    out.push_back(e);
  }
  if (stats) *stats = st;
  return out;
}

std::vector<TraceEvent> read_trace_file(const std::string& path, ParseStats* stats) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace: " + path);
  std::string first;
  std::getline(in, first);
  in.clear();
  in.seekg(0);
  if (first.rfind("timestamp_us", 0) == 0) return read_canonical(in, stats);
  return parse_msr(in, stats);
}

std::vector<TraceEvent> synth_hot(const SynthConfig& cfg) {
  if (!(cfg.hot_fraction > 0.0 && cfg.hot_fraction < 1.0)) throw ConfigError("synth_hot: hot_fraction outside (0,1)");
  if (!(cfg.hot_share > 0.0 && cfg.hot_share < 1.0)) throw ConfigError("synth_hot: hot_share outside (0,1)");
  if (cfg.footprint_pages < 2) throw ConfigError("synth_hot: footprint too small");
  if (!(cfg.writes_per_s > 0.0) || !(cfg.duration_s >= 0.0)) throw ConfigError("synth_hot: bad rate or duration");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto hot_pages = std::clamp<std::uint64_t>(
      static_cast<std::uint64_t>(std::ceil(cfg.hot_fraction * static_cast<double>(cfg.footprint_pages))), 1,
      cfg.footprint_pages - 1);
  std::uniform_int_distribution<std::uint64_t> hot(0, hot_pages - 1);
  std::uniform_int_distribution<std::uint64_t> cold(hot_pages, cfg.footprint_pages - 1);

  std::discrete_distribution<std::uint64_t> zipf;
  if (cfg.dist == HotDistribution::Zipf) {
    std::vector<double> w(cfg.footprint_pages);
    for (std::uint64_t k = 0; k < cfg.footprint_pages; ++k) w[k] = 1.0 / std::pow(static_cast<double>(k + 1), cfg.zipf_s);
    zipf = std::discrete_distribution<std::uint64_t>(w.begin(), w.end());
  }

  const auto count = static_cast<std::uint64_t>(std::floor(cfg.duration_s * cfg.writes_per_s));
  const std::uint64_t sectors = cfg.page_bytes / 512;
  std::vector<TraceEvent> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    TraceEvent e;
    e.timestamp_us = static_cast<std::uint64_t>(std::llround(static_cast<double>(i) * 1e6 / cfg.writes_per_s));
    e.op = (cfg.read_fraction > 0.0 && unit(rng) < cfg.read_fraction) ? 'R' : 'W';
    std::uint64_t page;
    if (cfg.dist == HotDistribution::Zipf) {
      page = zipf(rng);
    } else {
      page = (unit(rng) < cfg.hot_share) ? hot(rng) : cold(rng);
    }
    e.lba = page * sectors;
    e.size = cfg.page_bytes;
    out.push_back(e);
  }
  return out;
}

std::vector<CdfPoint> hotness_cdf(const std::vector<TraceEvent>& events, std::uint64_t page_bytes,
                                  std::uint64_t footprint_pages) {
  if (page_bytes == 0) throw std::invalid_argument("hotness_cdf: page size must be > 0");
  std::unordered_map<std::uint64_t, std::uint64_t> writes;
  std::uint64_t total = 0;
  for (const auto& e : events) {
    if (e.op != 'W') continue;
    const std::uint64_t first = e.lba * 512 / page_bytes;
    const std::uint64_t last = (e.lba * 512 + e.size - 1) / page_bytes;
    for (std::uint64_t p = first; p <= last; ++p) {
      ++writes[p];
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("hotness_cdf: trace has no writes");
  std::vector<std::uint64_t> counts;
  counts.reserve(writes.size());
  for (const auto& kv : writes) counts.push_back(kv.second);
  std::sort(counts.begin(), counts.end(), std::greater<>());
  const double pages = static_cast<double>(std::max<std::uint64_t>(counts.size(), footprint_pages));
  std::vector<CdfPoint> curve;
  curve.reserve(counts.size() + 1);
  curve.push_back({0.0, 0.0});
  std::uint64_t cum = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    cum += counts[i];
    curve.push_back({static_cast<double>(i + 1) / pages, static_cast<double>(cum) / static_cast<double>(total)});
  }
  if (curve.back().page_fraction < 1.0) curve.push_back({1.0, 1.0});
  return curve;
}

double cdf_at(const std::vector<CdfPoint>& curve, double page_fraction) {
  if (curve.empty()) return 0.0;
  auto it = std::lower_bound(curve.begin(), curve.end(), page_fraction,
                             [](const CdfPoint& p, double x) { return p.page_fraction < x; });
  if (it == curve.end()) return curve.back().write_fraction;
  if (it == curve.begin()) return it->write_fraction;
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (page_fraction - lo.page_fraction) / (hi.page_fraction - lo.page_fraction);
  return lo.write_fraction + w * (hi.write_fraction - lo.write_fraction);
}

}  // namespace flashlab
