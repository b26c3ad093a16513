#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "flashlab/common.hpp"
#include "flashlab/grid.hpp"
#include "flashlab/layer_profile.hpp"
#include "flashlab/models.hpp"

namespace flashlab {

// Variable = (alpha*PEC + beta)*ln(t) + gamma*PEC + delta, t in seconds.
struct RetentionCoeffs {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
};

enum class RetVar : int {
  RberMsb = 0, RberLsb, MuER, MuP1, MuP2, MuP3, SigmaER, SigmaP1, SigmaP2, SigmaP3, Va, Vb, Vc
};
inline constexpr int kNumRetVars = 13;

const char* ret_var_name(RetVar v);
RetVar ret_var_from_name(const std::string& name);
inline RetVar mu_var(CellState s) { return static_cast<RetVar>(static_cast<int>(RetVar::MuER) + idx(s)); }
inline RetVar sigma_var(CellState s) { return static_cast<RetVar>(static_cast<int>(RetVar::SigmaER) + idx(s)); }

struct RetentionModel3D {
  std::array<RetentionCoeffs, kNumRetVars> coeffs{};

  static RetentionModel3D defaults();
  const RetentionCoeffs& operator[](RetVar v) const { return coeffs[static_cast<int>(v)]; }
  RetentionCoeffs& operator[](RetVar v) { return coeffs[static_cast<int>(v)]; }
};

double retention_eval(const RetentionModel3D& m, RetVar v, double pec, double t_seconds);

// Gaussian channel with the table's means and sigmas.
ChannelModel retention_channel(const RetentionModel3D& m, double pec, double t_seconds);
// Same means; sigmas scaled by a common factor so RBER at the table refs equals the
// table's (MSB+LSB)/2 RBER.
ChannelModel retention_channel_calibrated(const RetentionModel3D& m, double pec, double t_seconds);
ReadRefs retention_refs(const RetentionModel3D& m, double pec, double t_seconds, const VoltageGrid& grid);

nlohmann::json to_json(const RetentionModel3D& m);
RetentionModel3D retention_model_from_json(const nlohmann::json& j);

struct StateDelta {
  std::array<double, kNumStates> dmu{};
  std::array<double, kNumStates> dsigma{};
};

// Slopes per 1000 P/E cycles; calibrated, not measured.
struct PeCycleConfig {
  std::array<double, kNumStates> mu_slope{0.5, 0.2, -0.1, -0.2};
  std::array<double, kNumStates> sigma_slope{0.2, 0.1, 0.1, 0.1};
};

StateDelta pe_cycle_trend(const PeCycleConfig& cfg, double pec);

struct GammaParams {
  double shape = 2.3;
  double scale = 6.2e-5;
};

// Linear ramp over layers: va_offset(l) = va_span*(0.5 - l/100), likewise for vb.
struct OffsetShape {
  double va_span = 8.0;
  double vb_span = 8.0;
};

inline constexpr double kMsbLsbRatio = 2.4;

LayerProfile sample_layer_profile(const GammaParams& gamma, const OffsetShape& shape, std::uint64_t seed);
GammaParams fit_gamma(const std::vector<double>& samples);

enum class NeighborPosition { NextWordline, PrevWordline };

struct InterferenceModel {
  double k_next = 0.027;
  double k_prev = 0.0008;
  double cap = 2.0;
  double er_victim_scale = 0.5;
  double reference_seconds = 24.0 * kSecondsPerDay;
};

double program_interference(const InterferenceModel& m, double dv_aggressor, NeighborPosition pos);
double program_interference(const InterferenceModel& m, double dv_aggressor, const std::string& pos);

// Extra retention loss (downward, in steps) of a victim relative to a P3 neighbour.
double retention_interference_offset(const InterferenceModel& m, CellState victim, CellState neighbor,
                                     double t_seconds);

struct ReadDisturbConfig {
  double reference_reads = 900000.0;
  std::array<double, kNumStates> shift_at_reference{8.0, 2.0, 1.0, 0.5};
};

std::array<double, kNumStates> read_disturb_shift(const ReadDisturbConfig& cfg, double read_count);

}  // namespace flashlab
