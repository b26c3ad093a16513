#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flashlab/channel.hpp"
#include "flashlab/degradation.hpp"
#include "flashlab/ftl.hpp"
#include "flashlab/grid.hpp"
#include "flashlab/models.hpp"
#include "flashlab/urt.hpp"

namespace flashlab {

// ---------------------------------------------------------------- grid sweeps

// Per-state CDF of a model at every grid step; exact RBER of any grid triple in O(1).
class SweepTable {
 public:
  SweepTable(const ChannelModel& model, const VoltageGrid& grid);
  // Mean over several models (e.g. the layers of a block).
  SweepTable(const std::vector<ChannelModel>& models, const VoltageGrid& grid);

  double rber(int ka, int kb, int kc) const;
  double rber(const ReadRefs& refs) const;  // refs must lie on the grid
  const VoltageGrid& grid() const { return grid_; }

  struct Best {
    int ka = 0, kb = 0, kc = 0;
    double rber = 0.0;
  };
  // Per-boundary sweep followed by full-range coordinate passes until no step improves.
  Best minimize() const;

 private:
  double cdf(int s, int k) const { return cdf_[s][k]; }
  VoltageGrid grid_;
  std::array<std::vector<double>, kNumStates> cdf_;  // index 1..303, [0] = 0
};

ReadRefs oracle_refs(const ChannelModel& truth, const VoltageGrid& grid, double* rber = nullptr);

// ---------------------------------------------------------------- read policies

enum class ReadPolicy { Fixed, RetentionOnly, LaVAR, ReMAR, HeatWatch, Oracle };

std::string policy_name(ReadPolicy p);
ReadPolicy policy_from_name(const std::string& name);

// Online least squares per boundary: V = (a*PEC + b) ln t + c*PEC + d; Va drops the time terms.
class ReMarModel {
 public:
  static constexpr int kRefitEvery = 100;

  void add_sample(double pec, double t_seconds, const ReadRefs& vopt);
  bool ready() const { return fitted_; }
  std::size_t samples() const { return rows_.size(); }
  ReadRefs predict(double pec, double t_seconds, const VoltageGrid& grid) const;
  const std::array<std::array<double, 4>, 3>& coefficients() const { return coef_; }

 private:
  void refit();
  struct Row {
    double pec, lnt;
    std::array<double, 3> v;
  };
  std::vector<Row> rows_;
  std::array<std::array<double, 4>, 3> coef_{};
  bool fitted_ = false;
};

struct ReadContext {
  double pec = 0.0;
  double t_retention = 0.0;  // real seconds since program
  int layer = -1;
  // HeatWatch inputs
  double tp_kelvin = kRoomKelvin;
  double t_r_eff = -1.0;
  double t_d_eff = -1.0;

  const RetentionModel3D* retention = nullptr;
  const LayerProfile* layers = nullptr;
  const ReMarModel* remar = nullptr;
  const URTParams* urt = nullptr;
  std::array<double, 3> heatwatch_offset{};
  const ChannelModel* truth = nullptr;
};

struct PolicyRead {
  ReadRefs refs;
  bool fallback = false;  // metadata missing, fixed refs used
};

PolicyRead read_policy(ReadPolicy policy, const ReadContext& ctx, const VoltageGrid& grid);

// ---------------------------------------------------------------- correction flow

enum class ReadStage { Policy, Retry, Nac, Parity, Uncorrectable };
std::string stage_name(ReadStage s);

struct ReadFlowConfig {
  double ecc_limit = 2e-3;
  int retry_budget = 10;
  double retry_step = 2.0;
  bool nac = true;
  InterferenceModel interference;
  double retention_age_s = 0.0;  // scales the neighbour offsets
};

struct ReadOutcome {
  bool success = false;
  ReadStage stage = ReadStage::Uncorrectable;
  int reads = 0;
  double rber = 1.0;
  ReadRefs refs;
};

// siblings: decodability of the other pages in the parity group, nullptr = no parity.
ReadOutcome read_flow(const ChannelState& page, const ReadRefs& policy_refs, const ReadFlowConfig& cfg,
                      const std::vector<bool>* siblings = nullptr);

// Shifts every cell down by its retention-interference offset (relative to a P3 neighbour).
void apply_retention_interference(ChannelState& page, const InterferenceModel& m, double t_seconds);

// ---------------------------------------------------------------- reference searches

struct DisparityResult {
  ReadRefs refs;
  int probes = 0;
  bool flagged = false;  // population not balanced
};

DisparityResult disparity_vref_search(const ChannelState& page);

struct RorResult {
  int step = 0;
  int probes = 0;
  double errors = 0.0;
};

// errors(step) for steps in [lo, hi]; descends in -dv steps while non-increasing, then probes +dv.
RorResult ror_vopt_discovery(const std::function<double(int)>& errors, int start, int dv = 1, int lo = 1,
                             int hi = VoltageGrid::kSteps);

// Per-boundary ROR on a page, other refs held at `start`.
ReadRefs ror_page_vopt(const ChannelState& page, const ReadRefs& start, int dv = 1, int* probes = nullptr);

// ---------------------------------------------------------------- LaVAR

struct LavarResult {
  ReadRefs block_refs;
  double block_rber = 0.0;  // mean over layers at the block-level optimum
  double lavar_rber = 0.0;  // mean over layers with per-layer offsets
  double reduction = 0.0;   // 1 - lavar/block
  double va_span = 0.0;
};

LavarResult lavar_evaluate(const ChannelModel& base, const LayerProfile& profile, const VoltageGrid& grid);

// ---------------------------------------------------------------- HeatWatch direct mode

struct HeatWatchConfig {
  Geometry geo = Geometry::scaled_gb(1.0);
  double trace_days = 7.0;
  double writes_per_s = 2.0;
  double read_fraction = 0.5;
  double hot_fraction = 0.01;
  double hot_share = 0.95;
  TempTrace temp;
  double ecc_limit = 2e-3;
  double pec_step = 100.0;
  double pec_max = 40000.0;
  int max_samples = 1000;
  int refit_every_pec = 1000;
  int refit_wordlines = 10;
  std::uint64_t seed = 1;
  std::vector<ReadPolicy> policies{ReadPolicy::Fixed, ReadPolicy::RetentionOnly, ReadPolicy::HeatWatch,
                                   ReadPolicy::Oracle};
  URTParams urt = URTParams::from_retention(RetentionModel3D::defaults());
  RetentionModel3D retention = RetentionModel3D::defaults();
};

// One recorded host read: real ages plus the logged effective times.
struct ReadSample {
  double t_r = 0.0;
  double t_r_eff_true = 0.0;  // exact integral of the acceleration factor
  double t_r_eff_log = 0.0;   // from the acceleration log
  double t_d_eff = 0.0;
  double tp_kelvin = kRoomKelvin;
};

struct PolicyLifetime {
  ReadPolicy policy = ReadPolicy::Fixed;
  double lifetime_pec = 0.0;
  bool hit_bound = false;
  std::vector<double> worst_rber;  // per PEC step
};

struct HeatWatchReport {
  std::vector<ReadSample> samples;
  std::uint64_t reads_seen = 0;
  std::vector<double> pec_axis;
  std::vector<PolicyLifetime> policies;
  WriteSplit writes;
};

std::vector<ReadSample> collect_read_samples(const HeatWatchConfig& cfg, std::uint64_t* reads_seen = nullptr,
                                             WriteSplit* writes = nullptr);
HeatWatchReport run_heatwatch(const HeatWatchConfig& cfg);
HeatWatchReport run_heatwatch(const HeatWatchConfig& cfg, const std::vector<ReadSample>& samples);

nlohmann::json to_json(const HeatWatchReport& r);
void write_series_csv(const HeatWatchReport& r, std::ostream& os);

}  // namespace flashlab
