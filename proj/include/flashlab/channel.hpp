#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "flashlab/common.hpp"
#include "flashlab/grid.hpp"
#include "flashlab/layer_profile.hpp"
#include "flashlab/models.hpp"

namespace flashlab {

struct Cell {
  CellState state = CellState::ER;
  double vth = 0.0;  // before ChannelState::mean_shift
  int layer = 0;
  std::optional<CellState> neighbor;
};

struct ReadNoise {
  bool enabled = false;
  double p0 = 0.01;
  double d = 3.0;

  double flip_probability(double vth, double vref) const;
};

struct ChannelState {
  std::vector<Cell> cells;
  VoltageGrid grid;
  std::uint64_t seed = 0;
  // Pending pure mean shifts per true state; kept apart so shifts compose exactly.
  std::array<double, kNumStates> mean_shift{};

  double vth(std::size_t i) const { return cells[i].vth + mean_shift[idx(cells[i].state)]; }
  std::size_t size() const { return cells.size(); }
};

struct RBERReport {
  double total = 0.0;
  double msb = 0.0;
  double lsb = 0.0;
  std::uint64_t cells = 0;
  std::uint64_t msb_errors = 0;
  std::uint64_t lsb_errors = 0;
  std::uint64_t er_p1 = 0;
  std::uint64_t p1_p2 = 0;
  std::uint64_t p2_p3 = 0;
  std::uint64_t multi = 0;  // non-adjacent transitions
};

// Model with a layer's state shifts and sigma scale applied.
// ER and P1 means move so the midpoint refs shift by (va_offset, vb_offset); sigmas scale so
// RBER at the shifted refs is rber_multiplier times the base value.
ChannelModel layer_model(const ChannelModel& base, const LayerProfile& profile, int layer,
                         const VoltageGrid& grid);

ChannelState sample_page(const ChannelModel& model, std::size_t n_cells, const LayerProfile* profile,
                         std::uint64_t seed, const VoltageGrid& grid = VoltageGrid());

int read_cell(double vth, double vref, const ReadNoise& noise = {}, std::mt19937_64* rng = nullptr);

// Region decode: ER below va, P1 below vb, P2 below vc, else P3.
CellState decode_region(double vth, const ReadRefs& refs);

std::vector<std::uint8_t> read_page(const ChannelState& state, const ReadRefs& refs, PageType page,
                                    const ReadNoise& noise = {}, std::uint64_t noise_seed = 0);

RBERReport measure_rber(const ChannelState& state, const ReadRefs& refs, const ReadNoise& noise = {},
                        std::uint64_t noise_seed = 0);

BinHistogram bin_cells(const ChannelState& state);

// Pure mean shifts accumulate lazily; any non-zero dsigma materializes an affine, rank-preserving
// widening about each state's empirical mean.
ChannelState& apply_shift(ChannelState& state, const std::array<double, kNumStates>& dmu,
                          const std::array<double, kNumStates>& dsigma = {});

void write_cells_csv(const ChannelState& state, std::ostream& os);
ChannelState read_cells_csv(std::istream& is, const VoltageGrid& grid = VoltageGrid());
void write_histogram_csv(const BinHistogram& hist, std::ostream& os);
BinHistogram read_histogram_csv(std::istream& is);

}  // namespace flashlab
