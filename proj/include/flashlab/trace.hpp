#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace flashlab {

struct TraceEvent {
  std::uint64_t timestamp_us = 0;
  char op = 'W';  // 'R' or 'W'
  std::uint64_t lba = 0;  // 512-byte sectors
  std::uint64_t size = 0;  // bytes

  bool operator==(const TraceEvent&) const = default;
};

struct ParseStats {
  std::size_t rows = 0;
  std::size_t skipped = 0;
};

// MSR Cambridge: Timestamp(100 ns ticks),Hostname,DiskNumber,Type,Offset,Size,ResponseTime
std::vector<TraceEvent> parse_msr(std::istream& is, ParseStats* stats = nullptr);
std::vector<TraceEvent> parse_msr_file(const std::string& path, ParseStats* stats = nullptr);

// timestamp_us,op,lba,size_bytes
void write_canonical(const std::vector<TraceEvent>& events, std::ostream& os);
std::vector<TraceEvent> read_canonical(std::istream& is, ParseStats* stats = nullptr);
std::vector<TraceEvent> read_trace_file(const std::string& path, ParseStats* stats = nullptr);

enum class HotDistribution { TwoLevel, Zipf };

struct SynthConfig {
  double duration_s = 86400.0;
  double writes_per_s = 10.0;
  double hot_fraction = 0.01;
  double hot_share = 0.95;
  std::uint64_t footprint_pages = 100000;
  std::uint64_t page_bytes = 8192;
  double read_fraction = 0.0;
  HotDistribution dist = HotDistribution::TwoLevel;
  double zipf_s = 1.0;
  std::uint64_t seed = 1;
};

// Hot set is the first ceil(hot_fraction * footprint) pages; one page per request.
std::vector<TraceEvent> synth_hot(const SynthConfig& cfg);

struct CdfPoint {
  double page_fraction = 0.0;
  double write_fraction = 0.0;
};

// Pages sorted by write count, most-written first. Page fractions are over the written pages,
// or over footprint_pages when that is larger.
std::vector<CdfPoint> hotness_cdf(const std::vector<TraceEvent>& events, std::uint64_t page_bytes = 8192,
                                  std::uint64_t footprint_pages = 0);
double cdf_at(const std::vector<CdfPoint>& curve, double page_fraction);

}  // namespace flashlab
