#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "irseg/features.hpp"
#include "irseg/generative.hpp"
#include "irseg/error.hpp"
#include "irseg/grid.hpp"

namespace irseg {

/// Pairwise cliques of the pixel lattice: 4-neighbour (first) or 8-neighbour (second).
enum class CliqueOrder { kFirst, kSecond };

std::string to_string(CliqueOrder o);
CliqueOrder parse_clique_order(const std::string& s);

/// Class 0 is clear (label -1), class 1 is cloud (label +1).
struct MrfModel {
  GaussianClassModel classes;
  double beta = 1.0;
  CliqueOrder order = CliqueOrder::kFirst;

  double gamma_cov() const { return classes.gamma_cov(); }
};

/// Labels on {-1, +1} plus the per-pixel class log-likelihood terms
/// -1/2 log|S_k| - 1/2 (x - mu_k)^T S_k^-1 (x - mu_k) (column 0: clear, column 1: cloud).
struct LatticeState {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::int8_t> labels;
  Eigen::MatrixXd loglik;
  /// Sum of the likelihood terms plus beta * y_i * y_j over every clique counted once.
  double energy = 0;

  std::size_t size() const { return labels.size(); }
  LabelMask mask() const;
};

/// Per-pixel likelihood terms of the energy for every row of `features`.
Eigen::MatrixXd energy_likelihood_terms(const GaussianClassModel& classes, const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Sum of neighbouring labels of `pixel` over the clique order (in-bounds neighbours only).
int neighbor_label_sum(const LatticeState& state, std::size_t pixel, CliqueOrder order);
/// psi(y_i) = y_i * beta * sum_{j in N(i)} y_j for the candidate label y_i.
double clique_potential(const LatticeState& state, std::size_t pixel, int candidate, double beta, CliqueOrder order);
/// -1/2 log|S_k| - 1/2 mahalanobis(x, k) + psi for a single sample.
double pixel_energy(const Eigen::Ref<const Eigen::VectorXd>& x, int candidate, const GaussianClassModel& classes,
                    double psi);

double total_energy(const LatticeState& state, double beta, CliqueOrder order);

/// Labels from the likelihood terms alone (ties go to clear).
LatticeState ml_state(const MrfModel& model, const FeatureMatrix& features);
/// Same, from precomputed likelihood terms.
LatticeState ml_state(const Eigen::MatrixXd& loglik, std::size_t width, std::size_t height, double beta,
                      CliqueOrder order);

/// One raster-order pass of per-pixel argmax of the energy given the current
/// neighbour labels; labels only change on a strict improvement. Returns the
/// number of changed labels; `state.energy` is updated.
std::size_t map_sweep(LatticeState& state, double beta, CliqueOrder order);

/// ML initialization followed by sweeps until no label changes (or `max_sweeps`).
LatticeState map_iterate(const MrfModel& model, const FeatureMatrix& features, int max_sweeps = 100);

/// Posterior of the cloud class per pixel: softmax of the two candidate energies
/// given the neighbour labels in `state`.
ProbabilityMap mrf_posterior(const LatticeState& state, double beta, CliqueOrder order);

/// Supervised estimation: pooled per-class mean and unbiased covariance over all images.
MrfModel fit_mrf_supervised(const std::vector<const FeatureMatrix*>& images, const std::vector<const LabelMask*>& labels,
                            double gamma_cov, double beta, CliqueOrder order);

struct IcmOptions {
  double gamma_cov = 1.0;
  double beta = 1.0;
  CliqueOrder order = CliqueOrder::kFirst;
  std::uint64_t seed = 0;
  int max_iter = 50;
  /// Use the likelihood terms only in the first relabelling.
  bool likelihood_first_pass = false;
};

struct IcmFit {
  MrfModel model;
  std::vector<double> energy;  // total energy of each accepted iteration
  std::vector<LatticeState> states;
  int iterations = 0;
  int reseeds = 0;
};

/// Unsupervised ICM: random initial labels, then alternating class-statistic
/// estimation and MAP relabelling until the total energy stops increasing.
IcmFit icm_fit(const std::vector<const FeatureMatrix*>& images, const IcmOptions& opts);

struct SaSchedule {
  /// Initial temperature; a negative value selects the automatic default
  /// (standard deviation of |dE| over all pixels at the ML initialization).
  double initial_temperature = -1;
  double alpha = 0.75;
  /// Number of proposals; 0 means one per pixel.
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;
};

struct SaResult {
  LatticeState state;  // best-energy state visited
  std::size_t steps = 0;
  std::size_t accepted = 0;
  double initial_temperature = 0;
  double final_temperature = 0;
};

/// Metropolis acceptance for an energy-maximizing chain: dE = E(y) - E(y_flip);
/// accepted when dE <= 0, else with probability exp(-dE / T).
bool sa_accept(double delta_e, double temperature, double u);

/// Normalized flip-sampling weights w_i proportional to E(flip_i) - min_j E(flip_j);
/// uniform when all flip energies coincide.
std::vector<double> sa_sampling_weights(const LatticeState& state, double beta, CliqueOrder order);

SaResult sa_optimize(const MrfModel& model, const FeatureMatrix& features, const SaSchedule& schedule);
SaResult sa_optimize(LatticeState init, double beta, CliqueOrder order, const SaSchedule& schedule);

}  // namespace irseg
