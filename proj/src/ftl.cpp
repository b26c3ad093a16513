#include "flashlab/ftl.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "flashlab/degradation.hpp"

namespace flashlab {

Geometry Geometry::scaled_gb(double gb, double op_fraction) {
  if (!(gb > 0.0)) throw ConfigError("geometry: capacity must be > 0");
  Geometry g;
  g.op_fraction = op_fraction;
  // 1 MiB blocks; capacity counts physical blocks
  g.blocks = std::max(16, static_cast<int>(std::llround(gb * 1024.0)));
  g.chips = std::clamp(g.blocks / 128, 1, 8);
  while (g.blocks % g.chips != 0) --g.chips;
  return g;
}

std::int64_t Geometry::logical_pages() const {
  return static_cast<std::int64_t>(std::floor(static_cast<double>(physical_pages()) / (1.0 + op_fraction)));
}

void Geometry::validate() const {
  if (chips < 1 || blocks < 16 || blocks % chips != 0) throw ConfigError("geometry: blocks must split evenly over chips");
  if (pages_per_block < 2 || pages_per_block % 2 != 0) throw ConfigError("geometry: pages per block must be even");
  if (page_bytes <= 0) throw ConfigError("geometry: page size must be > 0");
  if (!(op_fraction > 0.0 && op_fraction < 1.0)) throw ConfigError("geometry: op_fraction outside (0,1)");
}

EnduranceMap EnduranceMap::defaults() {
  EnduranceMap m;
  m.points = {{3.0 * kSecondsPerYear, 3000.0}, {3.0 * kSecondsPerDay, 150000.0}};
  return m;
}

void EnduranceMap::validate() const {
  if (points.size() < 2) throw ConfigError("endurance map: need at least two points");
  auto p = points;
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i].first > 0.0 && p[i].second > 0.0)) throw ConfigError("endurance map: values must be > 0");
    if (i > 0 && !(p[i].first > p[i - 1].first && p[i].second < p[i - 1].second))
      throw ConfigError("endurance map: shorter retention must give strictly larger endurance");
  }
}

double EnduranceMap::endurance(double retention_s) const {
  if (!(retention_s > 0.0)) throw std::invalid_argument("endurance: retention must be > 0");
  auto p = points;
  std::sort(p.begin(), p.end());
  // log-log linear, extended past the ends with the nearest segment
  std::size_t i = 1;
  while (i + 1 < p.size() && retention_s > p[i].first) ++i;
  const double x0 = std::log(p[i - 1].first), x1 = std::log(p[i].first);
  const double y0 = std::log(p[i - 1].second), y1 = std::log(p[i].second);
  const double x = std::log(retention_s);
  return std::exp(y0 + (y1 - y0) * (x - x0) / (x1 - x0));
}

namespace {

double native_retention(const EnduranceMap& e) {
  double r = 0.0;
  for (const auto& p : e.points) r = std::max(r, p.first);
  return r;
}

}  // namespace

double parse_duration(const std::string& text) {
  if (text.empty()) throw ConfigError("empty duration");
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad duration: " + text);
  }
  const std::string unit = text.substr(pos);
  double mult;
  if (unit.empty() || unit == "s") {
    mult = 1.0;
  } else if (unit == "m") {
    mult = 60.0;
  } else if (unit == "h") {
    mult = 3600.0;
  } else if (unit == "d") {
    mult = kSecondsPerDay;
  } else if (unit == "w") {
    mult = 7.0 * kSecondsPerDay;
  } else if (unit == "mo") {
    mult = 30.0 * kSecondsPerDay;
  } else if (unit == "y") {
    mult = kSecondsPerYear;
  } else {
    throw ConfigError("bad duration unit: " + text);
  }
  if (!(v > 0.0)) throw ConfigError("duration must be > 0: " + text);
  return v * mult;
}

RefreshConfig parse_refresh(const std::string& spec) {
  RefreshConfig r;
  if (spec.empty() || spec == "none") return r;
  if (spec == "arfcr" || spec == "adaptive") {
    r.mode = RefreshMode::Adaptive;
    return r;
  }
  std::string rest;
  if (spec.rfind("fcr-sweep:", 0) == 0) {
    r.sweep = true;
    rest = spec.substr(10);
  } else if (spec.rfind("fcr:", 0) == 0) {
    rest = spec.substr(4);
  } else if (spec == "fcr") {
    rest = "3d";
  } else {
    throw ConfigError("unknown refresh policy: " + spec);
  }
  r.mode = RefreshMode::Fcr;
  r.period_s = parse_duration(rest);
  return r;
}

// ---------------------------------------------------------------- Ftl

Ftl::Ftl(const SimConfig& cfg) : cfg_(cfg), ppb_(cfg.geo.pages_per_block) {
  cfg_.geo.validate();
  cfg_.endurance.validate();
  if (!(cfg_.gc_free_fraction > 0.0 && cfg_.gc_free_fraction < cfg_.geo.op_fraction))
    throw ConfigError("gc threshold must be in (0, op_fraction)");
  if (cfg_.warm.enabled) {
    const auto& w = cfg_.warm;
    if (!(w.h_step > 0.0) || !(w.h_fraction >= w.h_step) || w.h_fraction > cfg_.geo.op_fraction + 1e-12)
      throw ConfigError("warm: need h_step <= h_fraction <= op_fraction");
    if (w.window < 1 || w.max_window > 128 || w.window > w.max_window || (w.window & (w.window - 1)) != 0 ||
        (w.max_window & (w.max_window - 1)) != 0)
      throw ConfigError("warm: window must be a power of two <= 128");
  }
  const auto L = cfg_.geo.logical_pages();
  l2p_.assign(L, -1);
  p2l_.assign(cfg_.geo.physical_pages(), -1);
  page_time_.assign(cfg_.geo.physical_pages(), 0.0);
  blocks_.resize(cfg_.geo.blocks);
  for (int b = 0; b < cfg_.geo.blocks; ++b) free_cold_.insert({0u, b});
  open_.fill(-1);
  gc_threshold_ = std::max(2, static_cast<int>(std::ceil(cfg_.gc_free_fraction * cfg_.geo.blocks)));
  h_fraction_ = cfg_.warm.enabled ? cfg_.warm.h_fraction : 0.0;
  window_ = cfg_.warm.window;
  if (cfg_.refresh.mode == RefreshMode::Fcr) period_ = cfg_.refresh.period_s;
}

int Ftl::hot_capacity() const {
  if (!cfg_.warm.enabled) return 0;
  return std::max(2, static_cast<int>(std::llround(h_fraction_ * cfg_.geo.blocks)));
}

bool Ftl::is_open(int b) const {
  return std::find(open_.begin(), open_.end(), b) != open_.end();
}

void Ftl::close_if_open(int b) {
  for (auto& o : open_)
    if (o == b) o = -1;
}

// Cold blocks move to the hot pool while the cold pool keeps its GC reserve plus 1% of
// capacity as spare pages; cold GC runs to free them.
void Ftl::grow_hot(double now) {
  const int reserve = gc_threshold_ + static_cast<int>(std::ceil(0.01 * cfg_.geo.blocks));
  while (hot_members_ < hot_capacity()) {
    std::int64_t cold_valid = 0;
    for (const auto& m : blocks_)
      if (m.pool == Pool::Cold) cold_valid += m.valid;
    const std::int64_t cold_pages = static_cast<std::int64_t>(cfg_.geo.blocks - hot_members_ - 1) * ppb_;
    if (cold_pages - cold_valid < static_cast<std::int64_t>(reserve) * ppb_) return;
    if (static_cast<int>(free_cold_.size()) <= gc_threshold_) {
      in_gc_ = true;
      try {
        while (static_cast<int>(free_cold_.size()) <= gc_threshold_) gc_cold(now);
      } catch (...) {
        in_gc_ = false;
        throw;
      }
      in_gc_ = false;
    }
    auto it = free_cold_.begin();
    const int b = it->second;
    free_cold_.erase(it);
    blocks_[b].pool = Pool::Hot;
    free_hot_.insert({blocks_[b].pec, b});
    ++hot_members_;
  }
}

int Ftl::take_free(std::set<std::pair<std::uint32_t, int>>& pool_free, Stream s, double now) {
  auto it = pool_free.begin();
  const int b = it->second;
  pool_free.erase(it);
  auto& m = blocks_[b];
  m.free = false;
  m.valid = 0;
  m.write_ptr = 0;
  m.program_epoch = now;
  m.stream = s;
  m.cold_seq = (s == kHostCold) ? next_cold_seq_++ : 0;
  if (m.pool == Pool::Hot) hot_fifo_.push_back(b);
  if (period_ > 0.0 && !cfg_.refresh.sweep) age_heap_.push({now, b, m.generation});
  return b;
}

int Ftl::allocate_block(Stream s, double now) {
  if (s == kHostHot) {
    if (free_hot_.empty()) grow_hot(now);
    while (free_hot_.empty()) {
      if (hot_fifo_.empty()) throw std::runtime_error("hot pool has no blocks");
      evict_hot(now);
    }
    return take_free(free_hot_, s, now);
  }
  if (!in_gc_ && static_cast<int>(free_cold_.size()) < gc_threshold_) ensure_free(now);
  if (free_cold_.empty()) throw std::runtime_error("drive full: no free blocks after GC");
  return take_free(free_cold_, s, now);
}

std::int64_t Ftl::append(Stream s, std::int64_t lpn, double now) {
  int b = open_[s];
  if (b < 0 || blocks_[b].write_ptr >= ppb_) {
    open_[s] = -1;
    b = allocate_block(s, now);
    open_[s] = b;
  }
  auto& m = blocks_[b];
  const std::int64_t ppn = static_cast<std::int64_t>(b) * ppb_ + m.write_ptr;
  ++m.write_ptr;
  ++m.valid;
  p2l_[ppn] = lpn;
  l2p_[lpn] = ppn;
  page_time_[ppn] = now;
  ++stats_.programs;
  return ppn;
}

void Ftl::invalidate(std::int64_t ppn) {
  if (ppn < 0) return;
  const int b = static_cast<int>(ppn / ppb_);
  p2l_[ppn] = -1;
  --blocks_[b].valid;
}

void Ftl::erase(int b) {
  auto& m = blocks_[b];
  if (m.valid != 0) throw std::logic_error("erase of block with valid pages");
  close_if_open(b);
  const std::int64_t base = static_cast<std::int64_t>(b) * ppb_;
  std::fill(p2l_.begin() + base, p2l_.begin() + base + ppb_, -1);
  ++m.pec;
  ++m.generation;
  ++lifetime_erases_;
  m.write_ptr = 0;
  m.cold_seq = 0;
  m.stream = -1;
  m.free = true;
  if (m.pool == Pool::Hot) {
    ++stats_.erases_hot;
    auto it = std::find(hot_fifo_.begin(), hot_fifo_.end(), b);
    if (it != hot_fifo_.end()) hot_fifo_.erase(it);
    if (hot_members_ > hot_capacity()) {
      m.pool = Pool::Cold;
      --hot_members_;
      free_cold_.insert({m.pec, b});
    } else {
      free_hot_.insert({m.pec, b});
    }
  } else {
    ++stats_.erases_cold;
    free_cold_.insert({m.pec, b});
  }
}

void Ftl::migrate_block(int b, Stream dest, double now, std::uint64_t WriteSplit::*counter) {
  close_if_open(b);
  migrating_.push_back(b);
  const std::int64_t base = static_cast<std::int64_t>(b) * ppb_;
  const int end = blocks_[b].write_ptr;
  for (int p = 0; p < end; ++p) {
    const std::int64_t lpn = p2l_[base + p];
    if (lpn < 0) continue;
    invalidate(base + p);
    append(dest, lpn, now);
    ++(stats_.writes.*counter);
  }
  migrating_.pop_back();
  erase(b);
}

void Ftl::gc_cold(double now) {
  int victim = -1;
  int best = ppb_ + 1;
  for (int b = 0; b < cfg_.geo.blocks; ++b) {
    const auto& m = blocks_[b];
    if (m.free || m.pool != Pool::Cold || is_open(b)) continue;
    if (std::find(migrating_.begin(), migrating_.end(), b) != migrating_.end()) continue;
    if (m.valid < best) {  // strict: lowest id wins ties
      best = m.valid;
      victim = b;
    }
  }
  if (victim < 0 || best >= ppb_) throw std::runtime_error("drive full: GC found no reclaimable block");
  migrate_block(victim, kGc, now, &WriteSplit::gc);
}

void Ftl::ensure_free(double now) {
  in_gc_ = true;
  try {
    while (static_cast<int>(free_cold_.size()) < gc_threshold_) gc_cold(now);
  } catch (...) {
    in_gc_ = false;
    throw;
  }
  in_gc_ = false;
}

// Hot-pool GC: oldest block first; its valid pages go back to the cold pool through the
// cooldown window.
void Ftl::evict_hot(double now) {
  const int b = hot_fifo_.front();
  const std::uint64_t before = stats_.writes.demotion;
  migrate_block(b, kHostCold, now, &WriteSplit::demotion);
  stats_.demoted_pages += stats_.writes.demotion - before;
}

bool Ftl::in_cooldown(int b) const {
  const auto& m = blocks_[b];
  if (m.pool != Pool::Cold || m.cold_seq == 0) return false;
  return m.cold_seq + static_cast<std::uint64_t>(window_) >= next_cold_seq_;
}

void Ftl::host_write(std::int64_t lpn, double now) {
  if (lpn < 0 || lpn >= logical_pages()) throw std::out_of_range("host_write: lpn out of range");
  const std::int64_t old = l2p_[lpn];
  Stream s = kHostCold;
  if (cfg_.warm.enabled && old >= 0) {
    const int b = static_cast<int>(old / ppb_);
    if (blocks_[b].pool == Pool::Hot) {
      s = kHostHot;
      ++warm_.hot_hits;
    } else if (in_cooldown(b)) {
      s = kHostHot;
      ++warm_.cooldown_entries;
    }
  }
  invalidate(old);
  l2p_[lpn] = -1;
  append(s, lpn, now);
  if (s == kHostHot) {
    ++stats_.writes.host_hot;
    ++warm_.hot_writes;
  } else {
    ++stats_.writes.host_cold;
    ++warm_.cold_writes;
  }
  if (cfg_.warm.enabled && cfg_.warm.tune && ++epoch_host_writes_ >= static_cast<std::uint64_t>(logical_pages()))
    end_epoch(now);
  if (cfg_.audit_every > 0 && ++writes_since_audit_ >= cfg_.audit_every) {
    writes_since_audit_ = 0;
    audit();
    ++stats_.audits;
  }
}

void Ftl::host_read(std::int64_t lpn, double now) {
  if (lpn < 0 || lpn >= logical_pages()) throw std::out_of_range("host_read: lpn out of range");
  ++stats_.host_reads;
  if (on_read && l2p_[lpn] >= 0) on_read(lpn, l2p_[lpn], now);
}

void Ftl::fill(double now) {
  const bool tune = cfg_.warm.tune;
  cfg_.warm.tune = false;
  for (std::int64_t lpn = 0; lpn < logical_pages(); ++lpn) host_write(lpn, now);
  cfg_.warm.tune = tune;
  reset_stats();
  epoch_start_ = now;
  next_sweep_ = now + period_;
}

void Ftl::reset_stats() {
  stats_ = FtlStats{};
  warm_ = WarmCounters{};
  epoch_base_ = stats_;
  epoch_warm_base_ = warm_;
  epoch_host_writes_ = 0;
}

void Ftl::refresh_block(int b, double now) {
  auto& m = blocks_[b];
  if (m.free || m.valid == 0) return;
  if (m.pool == Pool::Hot) {
    if (cfg_.warm.enabled) {  // hot data is never refreshed
      ++stats_.hot_refresh_skips;
      stats_.hot_refresh_skipped_pages += static_cast<std::uint64_t>(m.valid);
      return;
    }
    ++stats_.hot_refreshes;
  }
  ++stats_.refreshed_blocks;
  migrate_block(b, kRefresh, now, &WriteSplit::refresh);
}

void Ftl::refresh_due(double now) {
  if (cfg_.refresh.sweep) {
    while (next_sweep_ <= now) {
      const double t = next_sweep_;
      std::vector<int> targets;
      for (int b = 0; b < cfg_.geo.blocks; ++b) {
        const auto& m = blocks_[b];
        if (!m.free && m.valid > 0 && m.program_epoch < t) targets.push_back(b);
      }
      for (int b : targets) refresh_block(b, t);
      next_sweep_ += period_;
    }
    return;
  }
  // age runs from the oldest valid page, not from when the block was opened
  std::vector<std::pair<double, int>> due;
  while (!age_heap_.empty()) {
    const auto [epoch, b, gen] = age_heap_.top();
    if (epoch + period_ > now) break;
    age_heap_.pop();
    if (blocks_[b].generation != gen || blocks_[b].free || blocks_[b].valid == 0) continue;
    const double oldest = oldest_valid(b);
    if (oldest + period_ > now) {
      age_heap_.push({oldest, b, gen});
      continue;
    }
    due.push_back({oldest + period_, b});
  }
  // due blocks stop taking pages before any of them is migrated
  for (const auto& d : due) close_if_open(d.second);
  for (const auto& [t, b] : due) refresh_block(b, t);
}

double Ftl::oldest_valid(int b) const {
  const std::int64_t base = static_cast<std::int64_t>(b) * ppb_;
  double t = std::numeric_limits<double>::infinity();
  for (int p = 0; p < blocks_[b].write_ptr; ++p)
    if (p2l_[base + p] >= 0) t = std::min(t, page_time_[base + p]);
  return t;
}

void Ftl::advance(double now) {
  if (period_ > 0.0) refresh_due(now);
}

void Ftl::set_refresh_period(double period_s, double now) {
  if (period_s < 0.0) throw ConfigError("refresh period must be >= 0");
  period_ = period_s;
  age_heap_ = {};
  next_sweep_ = now + period_s;
  if (period_ > 0.0 && !cfg_.refresh.sweep)
    for (int b = 0; b < cfg_.geo.blocks; ++b)
      if (!blocks_[b].free) age_heap_.push({blocks_[b].program_epoch, b, blocks_[b].generation});
}

void Ftl::end_epoch(double now) {
  const double dt = now - epoch_start_;
  ++epochs_;
  // the epoch after a change only settles the pools
  const bool settling = settling_;
  settling_ = !settling_;
  if (!settling && dt > 0.0) {
    const auto& w = cfg_.warm;
    const double step = w.h_step;
    const std::uint32_t hot_w = warm_.hot_writes - epoch_warm_base_.hot_writes;
    const std::uint32_t hits = warm_.hot_hits - epoch_warm_base_.hot_hits;
    const double demoted = static_cast<double>(stats_.demoted_pages - epoch_base_.demoted_pages);
    const double er_hot = static_cast<double>(stats_.erases_hot - epoch_base_.erases_hot) / dt;
    const double er_cold = static_cast<double>(stats_.erases_cold - epoch_base_.erases_cold) / dt;

    // fill-time bound: the hot pool turns over within the hot-tier retention
    const double fill_blocks = static_cast<double>(hot_w) / dt * w.hot_retention_s / ppb_;
    double h_max = std::floor(fill_blocks / cfg_.geo.blocks / step + 1e-9) * step;
    h_max = std::clamp(h_max, step, cfg_.geo.op_fraction);

    const double n_hot = hot_members_;
    const double n_cold = cfg_.geo.blocks - n_hot;
    const double e_native = cfg_.endurance.endurance(native_retention(cfg_.endurance));
    const double e_hot = cfg_.endurance.endurance(w.hot_retention_s);
    const double inf = std::numeric_limits<double>::infinity();
    const double cold_life = er_cold > 0.0 ? e_native * n_cold / er_cold : inf;
    const double hot_life = er_hot > 0.0 ? e_hot * n_hot / er_hot : inf;
    const double objective = std::min(cold_life, hot_life);

    if (last_objective_ >= 0.0 && objective < last_objective_) h_dir_ = -h_dir_;
    last_objective_ = objective;
    double h = h_fraction_ + h_dir_ * step;
    if (h > h_max + 1e-12 || h < step - 1e-12) {
      h_dir_ = -h_dir_;
      h = std::clamp(h, step, h_max);
    }
    h_fraction_ = std::clamp(h, step, h_max);

    const double utility = static_cast<double>(hits) - demoted;
    if (utility < last_utility_) w_dir_ = -w_dir_;
    last_utility_ = utility;
    int nw = w_dir_ > 0 ? window_ * 2 : window_ / 2;
    if (nw < 1 || nw > w.max_window) {
      w_dir_ = -w_dir_;
      nw = std::clamp(nw, 1, w.max_window);
    }
    window_ = nw;
    tuning_history_.push_back({h_fraction_, window_});
  }
  epoch_start_ = now;
  epoch_base_ = stats_;
  epoch_warm_base_ = warm_;
  epoch_host_writes_ = 0;
}

void Ftl::audit() const {
  std::vector<int> valid(cfg_.geo.blocks, 0);
  for (std::int64_t lpn = 0; lpn < logical_pages(); ++lpn) {
    const std::int64_t ppn = l2p_[lpn];
    if (ppn < 0) continue;
    if (p2l_[ppn] != lpn) throw std::logic_error("audit: l2p/p2l mismatch");
    ++valid[ppn / ppb_];
  }
  std::int64_t mapped = 0;
  for (auto x : p2l_)
    if (x >= 0) ++mapped;
  std::int64_t live = 0;
  for (auto x : l2p_)
    if (x >= 0) ++live;
  if (mapped != live) throw std::logic_error("audit: stale physical mappings");
  int hot = 0;
  std::uint64_t pec_sum = 0;
  for (int b = 0; b < cfg_.geo.blocks; ++b) {
    const auto& m = blocks_[b];
    if (valid[b] != m.valid) throw std::logic_error("audit: valid count mismatch");
    if (m.free && m.valid != 0) throw std::logic_error("audit: free block holds data");
    if (m.pool == Pool::Hot) ++hot;
    pec_sum += m.pec;
  }
  if (hot != hot_members_) throw std::logic_error("audit: hot membership mismatch");
  if (pec_sum != lifetime_erases_) throw std::logic_error("audit: PEC does not match erases");
  if (free_cold_.size() + free_hot_.size() >
      static_cast<std::size_t>(std::count_if(blocks_.begin(), blocks_.end(), [](const auto& m) { return m.free; })))
    throw std::logic_error("audit: free list mismatch");
}

// ---------------------------------------------------------------- reports

nlohmann::json to_json(const WriteSplit& w) {
  return {{"host_hot", w.host_hot}, {"host_cold", w.host_cold}, {"gc", w.gc},
          {"refresh", w.refresh},   {"demotion", w.demotion},   {"total", w.total()}};
}

nlohmann::json to_json(const LifetimeReport& r) {
  nlohmann::json j;
  j["config"] = r.config_label;
  j["infinite"] = r.infinite;
  j["lifetime_days"] = r.infinite ? nlohmann::json() : nlohmann::json(r.lifetime_days);
  auto finite = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); };
  j["cold_lifetime_days"] = finite(r.cold_lifetime_days);
  j["hot_lifetime_days"] = finite(r.hot_lifetime_days);
  j["trace_days"] = r.trace_days;
  j["write_amplification"] = r.write_amplification;
  j["writes"] = to_json(r.writes);
  j["hot_refreshes"] = r.stats.hot_refreshes;
  j["hot_refresh_skips"] = r.stats.hot_refresh_skips;
  j["refreshed_blocks"] = r.stats.refreshed_blocks;
  j["host_reads"] = r.stats.host_reads;
  j["warm"] = {{"h_fraction", r.final_h_fraction}, {"window", r.final_window}};
  auto& ph = j["phases"] = nlohmann::json::array();
  for (const auto& p : r.phases)
    ph.push_back({{"label", p.label},
                  {"refresh_period_s", p.refresh_period_s},
                  {"pec_from", p.pec_from},
                  {"pec_to", p.pec_to},
                  {"days", finite(p.days)},
                  {"reached", p.reached},
                  {"erases_per_day", p.erases_per_day},
                  {"wear_level_writes_per_day", p.wear_level_writes_per_day},
                  {"trace_days", p.trace_days},
                  {"writes", to_json(p.writes)}});
  return j;
}

void write_series_csv(const LifetimeReport& r, std::ostream& os) {
  os << "day,rber_avg,rber_worst,writes_host,writes_gc,writes_refresh,pec_mean\n";
  const auto flags = os.flags();
  for (const auto& s : r.series) {
    os << s.day << ',' << std::setprecision(6) << std::scientific << s.rber_avg << ',' << s.rber_worst << ','
       << std::defaultfloat << s.writes_host << ',' << s.writes_gc << ',' << s.writes_refresh << ','
       << std::fixed << std::setprecision(3) << s.pec_mean << '\n';
    os.flags(flags);
  }
}

namespace {

SeriesRow snapshot(const Ftl& ftl, double now, int day, const WriteSplit& since) {
  static const RetentionModel3D table = RetentionModel3D::defaults();
  SeriesRow row;
  row.day = day;
  row.writes_host = since.host();
  row.writes_gc = since.gc;
  row.writes_refresh = since.refresh;
  const int n = ftl.config().geo.blocks;
  double sum = 0.0, pec = 0.0;
  int used = 0;
  for (int b = 0; b < n; ++b) {
    const auto& m = ftl.block(b);
    pec += m.pec;
    if (m.free || m.valid == 0) continue;
    const double age = std::max(1.0, now - m.program_epoch);
    const double r = 0.5 * (std::exp(retention_eval(table, RetVar::RberMsb, m.pec, age)) +
                            std::exp(retention_eval(table, RetVar::RberLsb, m.pec, age)));
    sum += r;
    row.rber_worst = std::max(row.rber_worst, r);
    ++used;
  }
  row.rber_avg = used ? sum / used : 0.0;
  row.pec_mean = pec / n;
  return row;
}

WriteSplit diff(const WriteSplit& a, const WriteSplit& b) {
  return {a.host_hot - b.host_hot, a.host_cold - b.host_cold, a.gc - b.gc, a.refresh - b.refresh,
          a.demotion - b.demotion};
}

}  // namespace

double replay(Ftl& ftl, const std::vector<TraceEvent>& events, double t0, std::vector<SeriesRow>* series) {
  const auto L = static_cast<std::uint64_t>(ftl.logical_pages());
  const auto page = static_cast<std::uint64_t>(ftl.config().geo.page_bytes);
  double now = t0;
  int day = 0;
  double next_day = t0 + kSecondsPerDay;
  WriteSplit last = ftl.stats().writes;
  for (const auto& e : events) {
    now = t0 + static_cast<double>(e.timestamp_us) * 1e-6;
    while (series && now >= next_day) {
      ftl.advance(next_day);
      series->push_back(snapshot(ftl, next_day, day, diff(ftl.stats().writes, last)));
      last = ftl.stats().writes;
      ++day;
      next_day += kSecondsPerDay;
    }
    ftl.advance(now);
    const std::uint64_t first = e.lba * 512 / page;
    const std::uint64_t lastp = (e.lba * 512 + std::max<std::uint64_t>(e.size, 1) - 1) / page;
    for (std::uint64_t p = first; p <= lastp; ++p) {
      const auto lpn = static_cast<std::int64_t>(p % L);
      if (e.op == 'W') {
        ftl.host_write(lpn, now);
      } else {
        ftl.host_read(lpn, now);
      }
    }
  }
  if (series && (series->empty() || now > next_day - kSecondsPerDay))
    series->push_back(snapshot(ftl, now, day, diff(ftl.stats().writes, last)));
  return now;
}

namespace {

struct Measured {
  FtlStats stats;
  double days = 0.0;
  int n_hot = 0;
  double h = 0.0;
  int window = 0;
  std::vector<SeriesRow> series;
};

double trace_span(const std::vector<TraceEvent>& events) {
  if (events.empty()) return 0.0;
  const double span = static_cast<double>(events.back().timestamp_us - events.front().timestamp_us) * 1e-6;
  // one mean inter-arrival gap closes the loop
  return span * static_cast<double>(events.size()) / std::max<double>(1.0, static_cast<double>(events.size() - 1));
}

// Warm-up pass, then one measured pass.
Measured measure(const std::vector<TraceEvent>& events, const SimConfig& cfg, double period, bool series) {
  SimConfig c = cfg;
  c.refresh.mode = period > 0.0 ? RefreshMode::Fcr : RefreshMode::None;
  c.refresh.period_s = period > 0.0 ? period : c.refresh.period_s;
  Ftl ftl(c);
  ftl.fill(0.0);
  const double span = std::max(trace_span(events), 1.0);
  const double base = events.empty() ? 0.0 : static_cast<double>(events.front().timestamp_us) * 1e-6;
  replay(ftl, events, -base, nullptr);
  ftl.reset_stats();
  Measured m;
  replay(ftl, events, span - base, series ? &m.series : nullptr);
  m.stats = ftl.stats();
  m.days = span / kSecondsPerDay;
  m.n_hot = ftl.hot_members();
  m.h = ftl.h_fraction();
  m.window = ftl.window();
  return m;
}

}  // namespace

LifetimeReport run_lifetime(const std::vector<TraceEvent>& events, const SimConfig& cfg) {
  cfg.geo.validate();
  cfg.endurance.validate();
  LifetimeReport rep;
  const double inf = std::numeric_limits<double>::infinity();
  const auto& E = cfg.endurance;
  const double n = cfg.geo.blocks;
  const double e_native = E.endurance(native_retention(E));
  const bool warm = cfg.warm.enabled;
  rep.config_label = std::string(warm ? "warm" : "baseline") +
                     (cfg.refresh.mode == RefreshMode::None
                          ? ""
                          : cfg.refresh.mode == RefreshMode::Adaptive ? "+arfcr" : "+fcr");

  const bool any_write = std::any_of(events.begin(), events.end(), [](const TraceEvent& e) { return e.op == 'W'; });
  if (!any_write) {
    rep.infinite = true;
    rep.lifetime_days = inf;
    rep.cold_lifetime_days = inf;
    rep.hot_lifetime_days = inf;
    rep.trace_days = trace_span(events) / kSecondsPerDay;
    return rep;
  }

  const bool no_refresh = cfg.refresh.mode == RefreshMode::None;
  Measured pre = measure(events, cfg, 0.0, no_refresh);
  const double days = pre.days;
  const double n_hot = pre.n_hot;
  const double n_cold = n - n_hot;
  const double er_cold = static_cast<double>(pre.stats.erases_cold) / days;
  const double er_hot = static_cast<double>(pre.stats.erases_hot) / days;

  PhaseReport p0;
  p0.label = "pre-refresh";
  p0.pec_from = 0.0;
  p0.pec_to = e_native;
  p0.writes = pre.stats.writes;
  p0.trace_days = days;
  p0.erases_per_day = er_cold + er_hot;
  double mean_pec;
  if (!warm) {
    p0.days = p0.erases_per_day > 0.0 ? e_native * n / p0.erases_per_day : inf;
    rep.cold_lifetime_days = p0.days;
    rep.hot_lifetime_days = inf;
    mean_pec = e_native;
  } else {
    const double e_hot = E.endurance(cfg.warm.hot_retention_s);
    rep.cold_lifetime_days = er_cold > 0.0 ? e_native * n_cold / er_cold : inf;
    rep.hot_lifetime_days = er_hot > 0.0 ? e_hot * n_hot / er_hot : inf;
    p0.days = std::min(rep.cold_lifetime_days, rep.hot_lifetime_days);
    const double hot_pec = std::isfinite(p0.days) ? er_hot * p0.days / std::max(1.0, n_hot) : 0.0;
    const double cold_pec = std::isfinite(p0.days) ? er_cold * p0.days / std::max(1.0, n_cold) : 0.0;
    mean_pec = (n_cold * cold_pec + n_hot * hot_pec) / n;
  }
  rep.phases.push_back(p0);
  rep.writes = pre.stats.writes;
  rep.stats = pre.stats;
  rep.series = std::move(pre.series);
  rep.final_h_fraction = pre.h;
  rep.final_window = pre.window;
  rep.trace_days = days;

  // A hot-limited WARM drive wears out before the refresh phase; refresh phases are still
  // replayed so their write split is reported, but contribute no days.
  const bool hot_limited = warm && rep.hot_lifetime_days < rep.cold_lifetime_days;
  rep.lifetime_days = p0.days;
  if (!no_refresh && std::isfinite(p0.days)) {
    std::vector<double> periods;
    if (cfg.refresh.mode == RefreshMode::Fcr) {
      periods.push_back(cfg.refresh.period_s);
    } else {
      periods = cfg.refresh.tiers_s;
      std::sort(periods.begin(), periods.end(), std::greater<>());
    }
    double total = p0.days;
    double pec = mean_pec;
    for (std::size_t i = 0; i < periods.size(); ++i) {
      const double target = E.endurance(periods[i]);
      if (target <= pec) continue;
      Measured m = measure(events, cfg, periods[i], i + 1 == periods.size());
      PhaseReport ph;
      ph.label = "refresh";
      ph.refresh_period_s = periods[i];
      ph.pec_from = pec;
      ph.pec_to = target;
      ph.writes = m.stats.writes;
      ph.trace_days = m.days;
      double erases = static_cast<double>(m.stats.erases_cold + m.stats.erases_hot) / m.days;
      if (warm && m.n_hot > 0) {
        // global wear leveling: the whole hot pool moves every wear_level_pec hot-block cycles
        const double hot_rate = static_cast<double>(m.stats.erases_hot) / m.days;
        const double rotations = hot_rate / (cfg.warm.wear_level_pec * m.n_hot);
        const double cold_fill = static_cast<double>(cfg.geo.logical_pages()) / cfg.geo.physical_pages();
        ph.wear_level_writes_per_day = rotations * m.n_hot * cfg.geo.pages_per_block * cold_fill;
        erases += rotations * m.n_hot;
      }
      ph.erases_per_day = erases;
      ph.reached = !hot_limited;
      ph.days = hot_limited ? 0.0 : (erases > 0.0 ? (target - pec) * n / erases : inf);
      total += ph.days;
      pec = target;
      rep.phases.push_back(ph);
      rep.writes = m.stats.writes;
      rep.stats = m.stats;
      rep.final_h_fraction = m.h;
      rep.final_window = m.window;
      rep.series = std::move(m.series);
    }
    rep.lifetime_days = total;
  }
  rep.infinite = !std::isfinite(rep.lifetime_days);
  const double host = static_cast<double>(rep.writes.host());
  rep.write_amplification = host > 0.0 ? static_cast<double>(rep.writes.total()) / host : 0.0;
  return rep;
}

}  // namespace flashlab
