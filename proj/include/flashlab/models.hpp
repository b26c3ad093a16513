#pragma once

#include <array>
#include <atomic>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flashlab/common.hpp"
#include "flashlab/grid.hpp"

namespace flashlab {

enum class Family { Gaussian, NormalLaplace, StudentT };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// alpha: right tail, beta: left tail. Rates for normal-Laplace, degrees of freedom for Student's t.
struct StateModel {
  double mu = 0.0;
  double sigma = 1.0;
  double alpha = 5.0;
  double beta = 5.0;
  double lambda = 0.0;
};

struct ChannelModel {
  Family family = Family::Gaussian;
  std::array<StateModel, kNumStates> states{};

  StateModel& operator[](CellState s) { return states[idx(s)]; }
  const StateModel& operator[](CellState s) const { return states[idx(s)]; }

  // lambda_P2 = lambda_P3 = 0, beta_ER = alpha_ER, alpha_P3 = beta_P3
  void enforce_constraints();
  void validate() const;
};

// ER -> P3 and P1 -> P2; P2/P3 map to themselves.
CellState misprogram_target(CellState s);

struct ModelDiagnostics {
  std::atomic<long> ncdf_overshoot{0};
  std::atomic<long> tcdf_nu_clamped{0};
};
ModelDiagnostics& diagnostics();

class LookupTables {
 public:
  static const LookupTables& instance();

  static constexpr std::array<double, 10> kNuGrid{0.5, 1, 2, 3, 5, 8, 12, 20, 50, 0 /*inf*/};

  double z(double zscore) const;
  // t-table CDF at z for nu, log-interpolated between neighbouring tables.
  double t(double zscore, double nu) const;
  double t_on_grid(double zscore, std::size_t table) const;

 private:
  LookupTables();
  static constexpr double kZMin = -8.5;
  static constexpr double kZStep = 1e-3;
  std::vector<double> ztab_;
  static constexpr int kUPoints = 8001;
  std::vector<std::vector<double>> ttab_;
};

double gcdf(double v, double mu, double sigma);
double ncdf(double v, double mu, double sigma, double alpha, double beta);
double tcdf(double v, double mu, double sigma, double alpha, double beta);

double state_cdf(Family f, const StateModel& m, double v);
double mixture_cdf(const ChannelModel& model, CellState intended, double v);
double mixture_pdf(const ChannelModel& model, CellState intended, double v);

// Mass per bin 0..303 for cells intended to be in state X; tails fold into bins 0 and 303.
std::vector<double> model_density(const ChannelModel& model, const VoltageGrid& grid,
                                  CellState intended);

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);
// Equal-weight average over the four states.
double pooled_kl(const BinHistogram& hist, const ChannelModel& model, const VoltageGrid& grid);
double pooled_kl(const ChannelModel& truth, const ChannelModel& model, const VoltageGrid& grid);

using Objective = std::function<double(const std::vector<double>&)>;

struct NMOptions {
  double tol = 1e-8;
  int max_iter = 1000;
  std::vector<double> step;  // initial simplex edge per coordinate; empty = automatic
};

struct NMResult {
  std::vector<double> x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

NMResult nelder_mead(const Objective& f, std::vector<double> x0, const NMOptions& opt = {});

struct FitResult {
  ChannelModel model;
  double kl_error = 0.0;
  double initial_kl = 0.0;
  int iterations = 0;
  bool converged = false;
};

ChannelModel initial_guess(const BinHistogram& hist, const VoltageGrid& grid, Family f);
// max_iter caps each simplex run
FitResult fit_static(const BinHistogram& hist, const VoltageGrid& grid, Family f,
                     const ChannelModel* init = nullptr, int max_iter = 1000);

struct PowerLaw {
  double a = 0.0;
  double b = 1.0;
  double c = 0.0;
  double operator()(double x) const;
};

PowerLaw fit_power_law(const std::vector<std::pair<double, double>>& points);

enum class Param { Mu = 0, Sigma = 1, Alpha = 2, Beta = 3, Lambda = 4 };
inline constexpr int kNumParams = 5;

// True for the 16 free parameters of the constrained model (10 for Gaussian).
bool param_active(Family f, CellState s, Param p);

struct DynamicModel {
  Family family = Family::Gaussian;
  std::array<std::array<PowerLaw, kNumParams>, kNumStates> laws{};
  std::array<std::array<double, kNumParams>, kNumStates> last_valid{};
  double max_train_pec = 0.0;
};

DynamicModel fit_dynamic(const std::vector<std::pair<double, ChannelModel>>& snapshots);
ChannelModel predict_static(const DynamicModel& dyn, double pec, bool* flagged = nullptr);

struct RberEstimate {
  double msb = 0.0;
  double lsb = 0.0;
  double total = 0.0;
};

RberEstimate estimate_rber(const ChannelModel& model, const ReadRefs& refs);

enum class VoptMethod { PdfIntersection, MeanMidpoint };

ReadRefs predict_vopt(const ChannelModel& model, VoptMethod method, const VoltageGrid& grid,
                      bool* flagged = nullptr);

struct LifetimeEstimate {
  double pec = 0.0;
  bool hit_bound = false;
};

LifetimeEstimate estimate_lifetime(const DynamicModel& dyn, double ecc_limit, double pec_step,
                                   const VoltageGrid& grid, double pec_bound = 1e6);

double llr(double y, double mu0, double mu1, double sigma);

// Draw one threshold voltage from a single state's distribution.
double sample_state(Family f, const StateModel& m, std::mt19937_64& rng);

nlohmann::json to_json(const ChannelModel& m);
ChannelModel channel_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DynamicModel& m);
DynamicModel dynamic_model_from_json(const nlohmann::json& j);

}  // namespace flashlab
