#include "flashlab/grid.hpp"

#include <algorithm>
#include <cmath>

namespace flashlab {

const char* state_name(CellState s) {
  switch (s) {
    case CellState::ER: return "ER";
    case CellState::P1: return "P1";
    case CellState::P2: return "P2";
    case CellState::P3: return "P3";
  }
  return "?";
}

CellState state_from_name(std::string_view name) {
  if (name == "ER" || name == "0") return CellState::ER;
  if (name == "P1" || name == "1") return CellState::P1;
  if (name == "P2" || name == "2") return CellState::P2;
  if (name == "P3" || name == "3") return CellState::P3;
  throw ConfigError("unknown cell state: " + std::string(name));
}

VoltageGrid::VoltageGrid(double gap_after_101, double gap_after_202)
    : gap1_(gap_after_101), gap2_(gap_after_202) {
  if (!(gap1_ >= 0.0) || !(gap2_ >= 0.0) || !std::isfinite(gap1_) || !std::isfinite(gap2_))
    throw ConfigError("grid gaps must be finite and non-negative");
  values_.resize(kSteps);
  for (int k = 1; k <= kSteps; ++k) {
    double v = k;
    if (k > 101) v += gap1_;
    if (k > 202) v += gap2_;
    values_[k - 1] = v;
  }
}

double VoltageGrid::value(int k) const {
  if (k < 1 || k > kSteps) throw std::out_of_range("grid step out of range");
  return values_[k - 1];
}

int VoltageGrid::bin_of(double v) const {
  // number of steps V_k with V_k <= v
  auto it = std::upper_bound(values_.begin(), values_.end(), v);
  return static_cast<int>(it - values_.begin());
}

int VoltageGrid::nearest_step(double v) const {
  if (v <= values_.front()) return 1;
  if (v >= values_.back()) return kSteps;
  auto it = std::lower_bound(values_.begin(), values_.end(), v);
  int hi = static_cast<int>(it - values_.begin());  // index of first >= v
  int lo = hi - 1;
  return (v - values_[lo] <= values_[hi] - v) ? lo + 1 : hi + 1;
}

double VoltageGrid::snap(double v) const { return values_[nearest_step(v) - 1]; }

BinHistogram::BinHistogram() {
  for (auto& c : counts) c.assign(VoltageGrid::kBins, 0);
}

std::uint64_t BinHistogram::total(CellState s) const {
  std::uint64_t t = 0;
  for (auto c : counts[idx(s)]) t += c;
  return t;
}

std::vector<double> BinHistogram::density(CellState s) const {
  const auto& c = counts[idx(s)];
  std::vector<double> d(c.size(), 0.0);
  const double n = static_cast<double>(total(s));
  if (n == 0) return d;
  for (std::size_t k = 0; k < c.size(); ++k) d[k] = static_cast<double>(c[k]) / n;
  return d;
}

void BinHistogram::add(CellState s, int bin, std::uint64_t n) {
  counts[idx(s)].at(static_cast<std::size_t>(bin)) += n;
}

}  // namespace flashlab
