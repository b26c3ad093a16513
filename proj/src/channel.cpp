#include "flashlab/channel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace flashlab {

double ReadNoise::flip_probability(double vth, double vref) const {
  if (!enabled) return 0.0;
  return std::clamp(p0 * std::exp(-std::fabs(vref - vth) / d), 0.0, 1.0);
}

ChannelModel layer_model(const ChannelModel& base, const LayerProfile& profile, int layer,
                         const VoltageGrid& grid) {
  if (layer < 0 || layer >= kNumLayers) throw std::out_of_range("layer outside [0,100]");
  const double a = profile.va_offset[layer];
  const double b = profile.vb_offset[layer];
  const double mult = profile.rber_multiplier[layer];
  if (!(mult > 0.0)) throw ConfigError("rber multiplier must be > 0");

  ChannelModel shifted = base;
  shifted[CellState::ER].mu += 2.0 * (a - b);
  shifted[CellState::P1].mu += 2.0 * b;
  if (mult == 1.0) return shifted;

  const ReadRefs base_refs = predict_vopt(base, VoptMethod::MeanMidpoint, grid);
  const double target = mult * estimate_rber(base, base_refs).total;
  // refs move with the means; keep them off the grid so the scale solve stays smooth
  const ReadRefs refs{0.5 * (shifted[CellState::ER].mu + shifted[CellState::P1].mu),
                      0.5 * (shifted[CellState::P1].mu + shifted[CellState::P2].mu),
                      0.5 * (shifted[CellState::P2].mu + shifted[CellState::P3].mu)};
  auto rber_at = [&](double k) {
    ChannelModel m = shifted;
    for (auto s : kAllStates) m[s].sigma = base[s].sigma * k;
    return estimate_rber(m, refs).total;
  };
  double lo = 1e-3, hi = 1.0;
  while (rber_at(hi) < target && hi < 1e3) hi *= 2.0;
  for (int it = 0; it < 80; ++it) {
    const double m = 0.5 * (lo + hi);
    if (rber_at(m) < target) {
      lo = m;
    } else {
      hi = m;
    }
  }
  const double k = 0.5 * (lo + hi);
  for (auto s : kAllStates) shifted[s].sigma = base[s].sigma * k;
  return shifted;
}

ChannelState sample_page(const ChannelModel& model, std::size_t n_cells, const LayerProfile* profile,
                         std::uint64_t seed, const VoltageGrid& grid) {
  for (auto s : kAllStates) {
    const double lam = model[s].lambda;
    if (!(lam >= 0.0 && lam <= 1.0)) throw ConfigError("lambda outside [0,1]");
  }
  if (n_cells == 0) throw ConfigError("sample_page: n_cells must be > 0");
  ChannelModel m = model;
  m.enforce_constraints();
  m.validate();

  std::vector<ChannelModel> per_layer;
  if (profile) {
    per_layer.reserve(kNumLayers);
    for (int l = 0; l < kNumLayers; ++l) per_layer.push_back(layer_model(m, *profile, l, grid));
  }

  ChannelState st;
  st.grid = grid;
  st.seed = seed;
  st.cells.resize(n_cells);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> any_state(0, kNumStates - 1);
  for (std::size_t i = 0; i < n_cells; ++i) {
    Cell& c = st.cells[i];
    c.state = static_cast<CellState>(i % kNumStates);
    c.layer = static_cast<int>((i * kNumLayers) / n_cells);
    const ChannelModel& lm = profile ? per_layer[c.layer] : m;
    CellState draw = c.state;
    const CellState target = misprogram_target(c.state);
    if (target != c.state && unit(rng) < lm[c.state].lambda) draw = target;
    c.vth = sample_state(lm.family, lm[draw], rng);
    c.neighbor = static_cast<CellState>(any_state(rng));
  }
  return st;
}

int read_cell(double vth, double vref, const ReadNoise& noise, std::mt19937_64* rng) {
  int bit = vth < vref ? 1 : 0;
  if (noise.enabled && rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(*rng) < noise.flip_probability(vth, vref)) bit ^= 1;
  }
  return bit;
}

CellState decode_region(double vth, const ReadRefs& refs) {
  if (vth < refs.va) return CellState::ER;
  if (vth < refs.vb) return CellState::P1;
  if (vth < refs.vc) return CellState::P2;
  return CellState::P3;
}

namespace {

void check_refs(const ReadRefs& refs) {
  if (!refs.valid()) throw std::invalid_argument("read refs must satisfy va < vb < vc");
}

// (msb, lsb) as read through the sense amplifier.
std::pair<int, int> sense(double v, const ReadRefs& refs, const ReadNoise& noise, std::mt19937_64& rng) {
  const int ra = read_cell(v, refs.va, noise, &rng);
  const int rb = read_cell(v, refs.vb, noise, &rng);
  const int rc = read_cell(v, refs.vc, noise, &rng);
  return {(ra == 1 || rc == 0) ? 1 : 0, rb};
}

CellState from_bits(int msb, int lsb) {
  if (msb && lsb) return CellState::ER;
  if (!msb && lsb) return CellState::P1;
  if (!msb && !lsb) return CellState::P2;
  return CellState::P3;
}

}  // namespace

std::vector<std::uint8_t> read_page(const ChannelState& state, const ReadRefs& refs, PageType page,
                                    const ReadNoise& noise, std::uint64_t noise_seed) {
  check_refs(refs);
  std::mt19937_64 rng(noise_seed);
  std::vector<std::uint8_t> bits(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double v = state.vth(i);
    if (page == PageType::LSB) {
      bits[i] = static_cast<std::uint8_t>(read_cell(v, refs.vb, noise, &rng));
    } else {
      const int ra = read_cell(v, refs.va, noise, &rng);
      const int rc = read_cell(v, refs.vc, noise, &rng);
      bits[i] = static_cast<std::uint8_t>((ra == 1 || rc == 0) ? 1 : 0);
    }
  }
  return bits;
}

RBERReport measure_rber(const ChannelState& state, const ReadRefs& refs, const ReadNoise& noise,
                        std::uint64_t noise_seed) {
  check_refs(refs);
  std::mt19937_64 rng(noise_seed);
  RBERReport r;
  r.cells = state.size();
  for (std::size_t i = 0; i < state.size(); ++i) {
    const CellState truth = state.cells[i].state;
    const double v = state.vth(i);
    CellState got;
    if (noise.enabled) {
      const auto [msb, lsb] = sense(v, refs, noise, rng);
      got = from_bits(msb, lsb);
    } else {
      got = decode_region(v, refs);
    }
    if (got == truth) continue;
    if (msb_of(got) != msb_of(truth)) ++r.msb_errors;
    if (lsb_of(got) != lsb_of(truth)) ++r.lsb_errors;
    const int lo = std::min(idx(got), idx(truth));
    const int hi = std::max(idx(got), idx(truth));
    if (hi - lo != 1) {
      ++r.multi;
    } else if (lo == 0) {
      ++r.er_p1;
    } else if (lo == 1) {
      ++r.p1_p2;
    } else {
      ++r.p2_p3;
    }
  }
  if (r.cells) {
    const double n = static_cast<double>(r.cells);
    r.msb = r.msb_errors / n;
    r.lsb = r.lsb_errors / n;
    r.total = (r.msb_errors + r.lsb_errors) / (2.0 * n);
  }
  return r;
}

BinHistogram bin_cells(const ChannelState& state) {
  BinHistogram h;
  for (std::size_t i = 0; i < state.size(); ++i) h.add(state.cells[i].state, state.grid.bin_of(state.vth(i)));
  return h;
}

ChannelState& apply_shift(ChannelState& state, const std::array<double, kNumStates>& dmu,
                          const std::array<double, kNumStates>& dsigma) {
  const bool widen = std::any_of(dsigma.begin(), dsigma.end(), [](double d) { return d != 0.0; });
  if (!widen) {
    for (int s = 0; s < kNumStates; ++s) state.mean_shift[s] += dmu[s];
    return state;
  }
  std::array<double, kNumStates> sum{}, sum2{};
  std::array<std::size_t, kNumStates> n{};
  for (std::size_t i = 0; i < state.size(); ++i) {
    const int s = idx(state.cells[i].state);
    const double v = state.vth(i);
    sum[s] += v;
    sum2[s] += v * v;
    ++n[s];
  }
  std::array<double, kNumStates> centre{}, scale{};
  for (int s = 0; s < kNumStates; ++s) {
    if (n[s] == 0) continue;
    centre[s] = sum[s] / n[s];
    const double sd = std::sqrt(std::max(0.0, sum2[s] / n[s] - centre[s] * centre[s]));
    if (dsigma[s] != 0.0 && !(sd + dsigma[s] > 0.0))
      throw std::invalid_argument(std::string("apply_shift: sigma would become non-positive for ") +
                                  state_name(static_cast<CellState>(s)));
    scale[s] = (sd > 0.0) ? (sd + dsigma[s]) / sd : 1.0;
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    const int s = idx(state.cells[i].state);
    const double v = state.vth(i);
    state.cells[i].vth = centre[s] + dmu[s] + (v - centre[s]) * scale[s];
  }
  state.mean_shift.fill(0.0);
  return state;
}

void write_cells_csv(const ChannelState& state, std::ostream& os) {
  os << "state,vth,layer,bin\n";
  os.precision(17);
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& c = state.cells[i];
    const double v = state.vth(i);
    os << state_name(c.state) << ',' << v << ',' << c.layer << ',' << state.grid.bin_of(v) << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    out.push_back(field);
  }
  return out;
}

}  // namespace

ChannelState read_cells_csv(std::istream& is, const VoltageGrid& grid) {
  ChannelState st;
  st.grid = grid;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.rfind("state", 0) == 0) continue;
    auto f = split_csv(line);
    if (f.size() < 2) throw ConfigError("cells csv: malformed line " + std::to_string(lineno));
    Cell c;
    c.state = state_from_name(f[0]);
    try {
      c.vth = std::stod(f[1]);
      c.layer = f.size() > 2 ? std::stoi(f[2]) : 0;
    } catch (const std::exception&) {
      throw ConfigError("cells csv: bad number on line " + std::to_string(lineno));
    }
    if (!std::isfinite(c.vth) || c.layer < 0 || c.layer >= kNumLayers)
      throw ConfigError("cells csv: value out of range on line " + std::to_string(lineno));
    st.cells.push_back(c);
  }
  return st;
}

void write_histogram_csv(const BinHistogram& hist, std::ostream& os) {
  os << "state,bin,count\n";
  for (auto s : kAllStates)
    for (int k = 0; k < VoltageGrid::kBins; ++k)
      if (hist.counts[idx(s)][k]) os << state_name(s) << ',' << k << ',' << hist.counts[idx(s)][k] << '\n';
}

BinHistogram read_histogram_csv(std::istream& is) {
  BinHistogram h;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.rfind("state", 0) == 0) continue;
    auto f = split_csv(line);
    if (f.size() != 3) throw ConfigError("histogram csv: expected 3 fields on line " + std::to_string(lineno));
    int bin;
    unsigned long long count;
    try {
      bin = std::stoi(f[1]);
      count = std::stoull(f[2]);
    } catch (const std::exception&) {
      throw ConfigError("histogram csv: bad number on line " + std::to_string(lineno));
    }
    if (bin < 0 || bin >= VoltageGrid::kBins)
      throw ConfigError("histogram csv: bin out of range on line " + std::to_string(lineno));
    h.add(state_from_name(f[0]), bin, count);
  }
  return h;
}

}  // namespace flashlab
