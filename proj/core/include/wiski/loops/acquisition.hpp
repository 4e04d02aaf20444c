#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wiski/loops/data.hpp"
#include "wiski/loops/objectives.hpp"
#include "wiski/loops/surrogate.hpp"

namespace wiski::loops {

struct Acquisition {
  std::vector<Eigen::Index> indices;  // rows of the pool, in pick order
  std::vector<double> scores;         // UCB value, or mean fantasy variance for NIPV
};

/// Sequential-greedy batch UCB: argmax of mean + sqrt(beta) * std, then fantasize the pick
/// through fantasy_variance and repeat. Ties go to the lowest index; picks are not repeated.
/// `fantasy_noise` is used only by fixed-noise surrogates.
Acquisition ucb_acquire(const Surrogate& model, const Eigen::Ref<const Eigen::MatrixXd>& pool, double beta, int q,
                        double fantasy_noise = 0.0);

/// Greedy batch NIPV: each pick minimizes the mean latent variance over `test_points` after
/// fantasizing it together with the earlier picks. Fantasy updates use the rank-one
/// Sherman-Morrison form on the joint posterior covariance. `pool_noise` holds each
/// candidate's observation noise (target units); empty uses the model's noise.
Acquisition nipv_acquire(const Surrogate& model, const Eigen::Ref<const Eigen::MatrixXd>& pool,
                         const Eigen::Ref<const Eigen::MatrixXd>& test_points, int q,
                         const Eigen::VectorXd& pool_noise = {});

struct BayesOptConfig {
  int iterations = 200;
  int q = 3;
  int initial_points = 5;
  int pool_size = 512;
  double beta = 2.0;
  RefitOptions refit;
  std::uint64_t seed = 0;
};

struct BayesOptTrace {
  std::vector<double> best_value;  // best noiseless -f so far, after each iteration (maximization)
  std::vector<double> elapsed_ms;  // refit + acquisition + conditioning per iteration
  std::vector<int> refit_steps;
  double initial_best = 0.0;
};

/// Maximizes -f for a minimization test problem on [-1, 1]^d.
BayesOptTrace bayes_opt_loop(const TestObjective& objective, const SurrogateConfig& model_config,
                             const BayesOptConfig& config);

enum class ActiveStrategy { kNipv, kRandom };

struct ActiveLearningConfig {
  ActiveStrategy strategy = ActiveStrategy::kNipv;
  int initial_points = 10;
  int rounds = 20;
  int q = 6;
  int pool_size = 600;
  int test_size = 400;
  RefitOptions refit;
  std::uint64_t seed = 0;
};

struct ActiveLearningTrace {
  std::vector<Eigen::Index> acquired;  // acquisitions made so far, after each round (0 for the initial fit)
  std::vector<double> rmse;            // test RMSE against the noiseless field
  std::vector<double> elapsed_ms;
};

/// Field task with known heteroscedastic noise: a fixed candidate pool, a fixed test set,
/// q acquisitions per round chosen by NIPV or uniformly at random, refit after each round.
ActiveLearningTrace active_learning_loop(const FieldTask& field, const SurrogateConfig& model_config,
                                         const ActiveLearningConfig& config);

}  // namespace wiski::loops
