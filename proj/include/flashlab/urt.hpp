#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "flashlab/degradation.hpp"
#include "flashlab/models.hpp"

namespace flashlab {

inline constexpr double kBoltzmannEv = 8.62e-5;
inline constexpr double kRoomKelvin = 293.15;

inline double celsius_to_kelvin(double c) { return c + 273.15; }

struct PvmCoeffs {
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double D = 0.0;
};

struct SrrmCoeffs {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double t0 = 1.0;
};

// Outputs share the retention-table variable set.
struct URTParams {
  std::array<PvmCoeffs, kNumRetVars> pvm{};
  std::array<SrrmCoeffs, kNumRetVars> srrm{};
  double ea = 1.04;
  double t_room = kRoomKelvin;

  // Calibration pack built from the retention table plus synthetic program-temperature terms.
  static URTParams from_retention(const RetentionModel3D& table, double b_mu = 0.01, double a_dwell = 1e-6);
  void validate() const;
};

// Effective time = real time * af(T); af > 1 above room temperature.
double af(double t_kelvin, double ea, double t_room = kRoomKelvin);
double af(double t_kelvin, const URTParams& p);
// Factor carrying time at `from` to equivalent time at `to`.
double af_between(double from_kelvin, double to_kelvin, double ea);

// t1 at T1 is equivalent to t2 at T2.
struct EaSample {
  double t1 = 0.0;
  double T1 = 0.0;
  double t2 = 0.0;
  double T2 = 0.0;
};
double fit_ea(const std::vector<EaSample>& samples);

double pvm_predict(const PvmCoeffs& c, double tp_kelvin, double pec);
double srrm_delta(const SrrmCoeffs& c, double t_er, double t_ed, double pec);
double urt_predict(const URTParams& p, RetVar output, double pec, double tp_kelvin, double t_r, double t_d,
                   double af_r, double af_d);

struct PvmSample {
  double tp = 0.0;
  double pec = 0.0;
  double y = 0.0;
};
PvmCoeffs fit_pvm(const std::vector<PvmSample>& samples);

struct SrrmSample {
  double t_er = 0.0;
  double t_ed = 0.0;
  double pec = 0.0;
  double dy = 0.0;
};
SrrmCoeffs fit_srrm(const std::vector<SrrmSample>& samples);
double srrm_rmse_percent(const SrrmCoeffs& c, const std::vector<SrrmSample>& samples);

// Gaussian channel from URT means and sigmas at effective retention/dwell times.
ChannelModel urt_channel(const URTParams& p, double pec, double tp_kelvin, double t_r_eff, double t_d_eff);

nlohmann::json to_json(const URTParams& p);
URTParams urt_params_from_json(const nlohmann::json& j);

// 26 doubling intervals of 0.5 s * 2^k. Each level keeps the effective time of its current
// (partial) aligned block and of the block before it.
class AccelLog {
 public:
  static constexpr int kLevels = 26;

  explicit AccelLog(double ea = 1.04, double t_room = kRoomKelvin) : ea_(ea), t_room_(t_room) {}

  static double level_length(int k) { return 0.5 * static_cast<double>(1ull << k); }
  static double max_window() { return level_length(kLevels - 1) * 2.0; }

  // Advance the clock by tick_seconds at constant temperature.
  void update(double temp_kelvin, double tick_seconds);
  void update_factor(double factor, double tick_seconds);

  // Effective seconds over the last `window` real seconds; clamps to the log span.
  double effective(double window, bool* clamped = nullptr) const;

  double now() const { return now_; }
  double current(int k) const { return cur_[k]; }
  double previous(int k) const { return prev_[k]; }
  static constexpr std::size_t stored_reals() { return 2 * kLevels; }

 private:
  double ea_;
  double t_room_;
  double now_ = 0.0;
  std::array<double, kLevels> cur_{};
  std::array<double, kLevels> prev_{};
};

class DwellTracker {
 public:
  static constexpr int kHistory = 20;

  DwellTracker(double drive_bytes, double start_time = 0.0, double default_dwell = 0.5);

  void record_write(double bytes, double now);
  int drive_writes() const { return total_drive_writes_; }
  double effective(double now, const AccelLog& accel) const;

 private:
  double drive_bytes_;
  double default_dwell_;
  double pending_ = 0.0;
  int total_drive_writes_ = 0;
  std::deque<double> history_;  // start time, then completion times; at most kHistory + 1
};

struct TempTrace {
  double mean_c = 35.0;
  double amplitude_c = 15.0;
  double period_s = kSecondsPerDay;
  double sigma_c = 3.0;
  double noise_interval_s = 60.0;  // noise is held constant within each interval
  std::uint64_t seed = 1;

  double celsius(double t) const;
  double kelvin(double t) const { return celsius_to_kelvin(celsius(t)); }
};

std::vector<std::pair<double, double>> read_temp_csv(std::istream& is);

}  // namespace flashlab
