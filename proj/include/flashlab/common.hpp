#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace flashlab {

// MLC states in ascending voltage order.
enum class CellState : std::uint8_t { ER = 0, P1 = 1, P2 = 2, P3 = 3 };

inline constexpr int kNumStates = 4;
inline constexpr std::array<CellState, kNumStates> kAllStates{
    CellState::ER, CellState::P1, CellState::P2, CellState::P3};

enum class PageType : std::uint8_t { MSB = 0, LSB = 1 };

inline constexpr int idx(CellState s) { return static_cast<int>(s); }

// Gray mapping (MSB, LSB): ER=(1,1) P1=(0,1) P2=(0,0) P3=(1,0).
inline constexpr int msb_of(CellState s) {
  return (s == CellState::ER || s == CellState::P3) ? 1 : 0;
}
inline constexpr int lsb_of(CellState s) {
  return (s == CellState::ER || s == CellState::P1) ? 1 : 0;
}

const char* state_name(CellState s);
CellState state_from_name(std::string_view name);

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kSecondsPerYear = 365.0 * kSecondsPerDay;

}  // namespace flashlab
