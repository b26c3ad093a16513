#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "flashlab/common.hpp"

namespace flashlab {

struct EccConfig {
  long l = 8192;  // codeword bits
  long t = 40;    // correctable bits
  double rate = 0.9;
  double target_uber = 1e-15;

  void validate() const;
};

// P(more than t of l bits in error); log-space binomial tail.
double ecc_failure_rate(long l, long t, double ber);
inline double ecc_failure_rate(const EccConfig& e, double ber) { return ecc_failure_rate(e.l, e.t, ber); }

struct ParityConfig {
  int chips = 4;
  int dies = 1;
  int codewords_per_lb = 1;
  double p_hgbb = 0.0;

  void validate() const;
};

double lb_fail(const ParityConfig& p, double p_ecfr);
double parity_fail(const ParityConfig& p, double p_lbfail);

double op_fraction(double pba, double lba);
// Spare capacity left after coding and superpage parity.
double op_for_rate(double pba, double lba, double coding_rate, double parity_fraction);
// Greedy-GC write amplification under uniform random writes.
double wa_for_op(double op);

struct LifetimeInputs {
  double pec = 3000.0;
  double op = 0.15;
  double dwpd = 1.0;
  double wa = 1.0;
  double r_compress = 1.0;
};

double lifetime_years(const LifetimeInputs& in);

struct RateStage {
  double pec = 0.0;  // P/E cycles spent in this stage
  double op = 0.0;
  double wa = 1.0;
  double rate = 1.0;
};

double multirate_lifetime(const std::vector<RateStage>& schedule, double dwpd, double r_compress);

// Engines ordered weakest (highest rate) first. Each engine runs until its failure rate at
// rber(PEC) exceeds its target UBER; the last engine's endurance bounds the schedule.
struct MultiratePlan {
  std::vector<RateStage> stages;
  std::vector<double> switch_pec;  // cumulative PEC at each hand-off
  double strongest_endurance = 0.0;
};

MultiratePlan plan_multirate(const std::vector<EccConfig>& engines, const std::function<double(double)>& rber_of_pec,
                             double pba, double lba, double parity_fraction, double pec_step = 10.0,
                             double pec_max = 1e6);

inline constexpr int kBlank = -1;

struct RaidLayout {
  int m = 0;  // chips
  int n = 0;  // wordlines per chip
  bool padded = false;
  std::vector<int> group;  // [(chip * n + wl) * 2 + page]

  int at(int chip, int wl, PageType page) const { return group[(chip * n + wl) * 2 + static_cast<int>(page)]; }
  int& at(int chip, int wl, PageType page) { return group[(chip * n + wl) * 2 + static_cast<int>(page)]; }
  int group_count() const;
};

RaidLayout li_raid_layout(int m, int n);
RaidLayout conventional_layout(int m, int n);

// Program order position of each page on its chip, -1 for blanks.
std::vector<int> program_order(const RaidLayout& layout, int chip);

struct WorstGroup {
  int group = -1;
  double mean_rber = 0.0;
  double parity_fail = 0.0;
};

using PageRber = std::function<double(int chip, int wl, PageType page)>;

WorstGroup layout_worst_group(const RaidLayout& layout, const PageRber& rber, const EccConfig& ecc = {},
                              const ParityConfig& parity = {});

void write_layout_csv(const RaidLayout& layout, std::ostream& os);

}  // namespace flashlab
