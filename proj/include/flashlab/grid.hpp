#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "flashlab/common.hpp"

namespace flashlab {

// Read-retry voltage grid: steps V_1..V_303, bins 0..303.
// bin_k holds V_k <= v < V_{k+1}; bin 0 is below V_1, bin 303 at or above V_303.
class VoltageGrid {
 public:
  static constexpr int kSteps = 303;
  static constexpr int kBins = kSteps + 1;

  explicit VoltageGrid(double gap_after_101 = 0.0, double gap_after_202 = 0.0);

  double value(int k) const;  // k in [1, 303]
  int bin_of(double v) const;
  double snap(double v) const;  // nearest grid value
  int nearest_step(double v) const;
  double lowest() const { return values_.front(); }
  double highest() const { return values_.back(); }
  const std::vector<double>& values() const { return values_; }
  double gap_after_101() const { return gap1_; }
  double gap_after_202() const { return gap2_; }

 private:
  double gap1_;
  double gap2_;
  std::vector<double> values_;  // values_[k-1] = V_k
};

// Reference voltages in voltage units. Policy outputs are snapped to the grid;
// the factory default (50,190,330) is kept as given even though 330 is past V_303
// on a gapless grid.
struct ReadRefs {
  double va = 50.0;
  double vb = 190.0;
  double vc = 330.0;

  bool valid() const { return va < vb && vb < vc; }
  bool operator==(const ReadRefs&) const = default;
};

inline ReadRefs default_refs() { return ReadRefs{50.0, 190.0, 330.0}; }

struct BinHistogram {
  std::array<std::vector<std::uint64_t>, kNumStates> counts;

  BinHistogram();
  std::uint64_t total(CellState s) const;
  std::vector<double> density(CellState s) const;
  void add(CellState s, int bin, std::uint64_t n = 1);
};

}  // namespace flashlab
