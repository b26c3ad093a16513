#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <tuple>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flashlab/common.hpp"
#include "flashlab/trace.hpp"

namespace flashlab {

struct Geometry {
  int chips = 8;
  int blocks = 1024;  // whole drive; blocks_per_chip = blocks / chips
  int pages_per_block = 128;
  int page_bytes = 8192;
  double op_fraction = 0.15;

  static Geometry scaled_gb(double gb, double op_fraction = 0.15);
  int blocks_per_chip() const { return blocks / chips; }
  int wordlines_per_block() const { return pages_per_block / 2; }
  std::int64_t physical_pages() const { return static_cast<std::int64_t>(blocks) * pages_per_block; }
  std::int64_t logical_pages() const;
  double capacity_bytes() const { return static_cast<double>(logical_pages()) * page_bytes; }
  void validate() const;
};

// Retention guarantee (seconds) -> P/E endurance, log-log interpolated.
struct EnduranceMap {
  std::vector<std::pair<double, double>> points;

  static EnduranceMap defaults();
  double endurance(double retention_s) const;
  void validate() const;
};

// Pool membership is pinned; free blocks stay in their pool's free list.
enum class Pool : std::uint8_t { Cold = 0, Hot = 1 };

struct BlockMetadata {
  std::uint32_t pec = 0;
  double program_epoch = 0.0;  // time the block was opened
  Pool pool = Pool::Cold;
  bool free = true;
  int valid = 0;
  int write_ptr = 0;
  std::uint64_t cold_seq = 0;  // host-cold open order, 0 if none
  std::uint64_t generation = 0;
  int stream = -1;
  int layer_profile = 0;
  double dwell_at_program = 0.0;
};

enum class RefreshMode { None, Fcr, Adaptive };

struct RefreshConfig {
  RefreshMode mode = RefreshMode::None;
  double period_s = 3.0 * kSecondsPerDay;
  // false: blocks older than the period are refreshed; true: every period all data is swept
  bool sweep = false;
  std::vector<double> tiers_s{90.0 * kSecondsPerDay, 21.0 * kSecondsPerDay, 3.0 * kSecondsPerDay};
};

// Parses "none", "fcr:3d", "fcr:12h", "arfcr".
RefreshConfig parse_refresh(const std::string& spec);
double parse_duration(const std::string& text);

struct WarmConfig {
  bool enabled = false;
  double h_fraction = 0.06;
  double h_step = 0.02;
  int window = 16;
  int max_window = 128;
  bool tune = true;
  double hot_retention_s = 3.0 * kSecondsPerDay;
  double wear_level_pec = 1000.0;
};

struct SimConfig {
  Geometry geo;
  WarmConfig warm;
  RefreshConfig refresh;
  EnduranceMap endurance = EnduranceMap::defaults();
  double gc_free_fraction = 0.02;
  std::uint64_t seed = 1;
  std::uint64_t audit_every = 0;  // host writes between full mapping audits, 0 = off
};

struct WriteSplit {
  std::uint64_t host_hot = 0;
  std::uint64_t host_cold = 0;
  std::uint64_t gc = 0;
  std::uint64_t refresh = 0;
  std::uint64_t demotion = 0;

  std::uint64_t host() const { return host_hot + host_cold; }
  std::uint64_t total() const { return host_hot + host_cold + gc + refresh + demotion; }
};

struct WarmCounters {
  std::uint32_t hot_writes = 0;
  std::uint32_t cold_writes = 0;
  std::uint32_t hot_hits = 0;
  std::uint32_t cooldown_entries = 0;
};

struct FtlStats {
  WriteSplit writes;
  std::uint64_t host_reads = 0;
  std::uint64_t erases_hot = 0;
  std::uint64_t erases_cold = 0;
  std::uint64_t hot_refreshes = 0;  // must stay zero
  std::uint64_t hot_refresh_skips = 0;  // due hot blocks left alone
  std::uint64_t hot_refresh_skipped_pages = 0;
  std::uint64_t refreshed_blocks = 0;
  std::uint64_t demoted_pages = 0;
  std::uint64_t programs = 0;
  std::uint64_t audits = 0;
};

class Ftl {
 public:
  explicit Ftl(const SimConfig& cfg);

  // Sequentially writes every logical page at time `now`; stats are reset afterwards.
  void fill(double now = 0.0);
  void host_write(std::int64_t lpn, double now);
  void host_read(std::int64_t lpn, double now);
  // Runs refresh work due at `now`.
  void advance(double now);
  // 0 disables refresh; otherwise switches the active refresh period.
  void set_refresh_period(double period_s, double now);
  double refresh_period() const { return period_; }

  void reset_stats();
  void audit() const;

  const FtlStats& stats() const { return stats_; }
  const WarmCounters& warm_counters() const { return warm_; }
  const BlockMetadata& block(int b) const { return blocks_[b]; }
  const SimConfig& config() const { return cfg_; }
  std::int64_t logical_pages() const { return static_cast<std::int64_t>(l2p_.size()); }
  std::int64_t l2p(std::int64_t lpn) const { return l2p_[lpn]; }
  double page_time(std::int64_t ppn) const { return page_time_[ppn]; }
  int hot_blocks() const { return static_cast<int>(hot_fifo_.size()); }
  int hot_capacity() const;
  int free_blocks() const { return static_cast<int>(free_cold_.size() + free_hot_.size()); }
  int hot_members() const { return hot_members_; }
  std::uint64_t lifetime_erases() const { return lifetime_erases_; }
  double h_fraction() const { return h_fraction_; }
  int window() const { return window_; }
  std::uint64_t epochs() const { return epochs_; }
  std::vector<std::pair<double, int>> tuning_history() const { return tuning_history_; }

  // Called for each host read with (lpn, ppn, now).
  std::function<void(std::int64_t, std::int64_t, double)> on_read;

 private:
  enum Stream { kHostCold = 0, kHostHot, kGc, kRefresh, kNumStreams };

  int allocate_block(Stream s, double now);
  int take_free(std::set<std::pair<std::uint32_t, int>>& pool_free, Stream s, double now);
  void grow_hot(double now);
  std::int64_t append(Stream s, std::int64_t lpn, double now);
  void invalidate(std::int64_t ppn);
  void erase(int b);
  void ensure_free(double now);
  void gc_cold(double now);
  void evict_hot(double now);
  void migrate_block(int b, Stream dest, double now, std::uint64_t WriteSplit::*counter);
  void close_if_open(int b);
  bool is_open(int b) const;
  void refresh_block(int b, double now);
  bool in_cooldown(int b) const;
  double oldest_valid(int b) const;
  void refresh_due(double now);
  void end_epoch(double now);

  SimConfig cfg_;
  int ppb_;
  std::vector<std::int64_t> l2p_;
  std::vector<std::int64_t> p2l_;
  std::vector<double> page_time_;
  std::vector<BlockMetadata> blocks_;
  std::set<std::pair<std::uint32_t, int>> free_cold_;  // (pec, id)
  std::set<std::pair<std::uint32_t, int>> free_hot_;
  std::array<int, kNumStreams> open_{};
  int hot_members_ = 0;
  bool in_gc_ = false;
  std::vector<int> migrating_;
  std::uint64_t lifetime_erases_ = 0;
  std::deque<int> hot_fifo_;
  std::uint64_t next_cold_seq_ = 1;
  int gc_threshold_;
  FtlStats stats_;
  WarmCounters warm_;

  // refresh bookkeeping
  std::priority_queue<std::tuple<double, int, std::uint64_t>, std::vector<std::tuple<double, int, std::uint64_t>>,
                      std::greater<>>
      age_heap_;
  double next_sweep_ = 0.0;
  double period_ = 0.0;

  // WARM tuning
  double h_fraction_ = 0.0;
  int window_ = 1;
  int h_dir_ = 1;
  int w_dir_ = 1;
  double last_objective_ = -1.0;
  double last_utility_ = -std::numeric_limits<double>::infinity();
  std::uint64_t epochs_ = 0;
  bool settling_ = false;
  std::uint64_t epoch_host_writes_ = 0;
  double epoch_start_ = 0.0;
  FtlStats epoch_base_;
  WarmCounters epoch_warm_base_;
  std::vector<std::pair<double, int>> tuning_history_;
  std::uint64_t writes_since_audit_ = 0;
};

struct PhaseReport {
  std::string label;
  double refresh_period_s = 0.0;  // 0 = no refresh
  double pec_from = 0.0;
  double pec_to = 0.0;
  double days = 0.0;
  double erases_per_day = 0.0;
  double wear_level_writes_per_day = 0.0;
  bool reached = true;
  WriteSplit writes;  // measured over one trace replay
  double trace_days = 0.0;
};

struct SeriesRow {
  int day = 0;
  double rber_avg = 0.0;
  double rber_worst = 0.0;
  std::uint64_t writes_host = 0;
  std::uint64_t writes_gc = 0;
  std::uint64_t writes_refresh = 0;
  double pec_mean = 0.0;
};

struct LifetimeReport {
  std::string config_label;
  bool infinite = false;
  double lifetime_days = 0.0;
  double cold_lifetime_days = 0.0;
  double hot_lifetime_days = 0.0;
  WriteSplit writes;  // last phase replay
  FtlStats stats;
  double trace_days = 0.0;
  double write_amplification = 0.0;
  double final_h_fraction = 0.0;
  int final_window = 0;
  std::vector<PhaseReport> phases;
  std::vector<SeriesRow> series;
};

nlohmann::json to_json(const WriteSplit& w);
nlohmann::json to_json(const LifetimeReport& r);
void write_series_csv(const LifetimeReport& r, std::ostream& os);

// Replays `events` once against `ftl`, starting at time offset `t0` (seconds). Returns end time.
double replay(Ftl& ftl, const std::vector<TraceEvent>& events, double t0, std::vector<SeriesRow>* series = nullptr);

// Analytic lifetime: replays the trace per refresh phase after a warm-up pass and extrapolates
// days to endurance from measured erase rates.
LifetimeReport run_lifetime(const std::vector<TraceEvent>& events, const SimConfig& cfg);

}  // namespace flashlab
