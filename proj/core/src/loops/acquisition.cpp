#include "wiski/loops/acquisition.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "wiski/error.hpp"

namespace wiski::loops {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_batch(Eigen::Index pool, int q, const char* who) {
  if (pool == 0) throw InvalidArgument(std::string(who) + ": empty candidate pool");
  if (q < 1 || q > pool) throw InvalidArgument(std::string(who) + ": need 1 <= q <= pool size");
}

std::pair<double, double> mean_and_std(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, var > 0.0 ? std::sqrt(var) : 1.0};
}

Eigen::MatrixXd gather(const Eigen::Ref<const Eigen::MatrixXd>& X, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  return out;
}

}  // namespace

Acquisition ucb_acquire(const Surrogate& model, const Eigen::Ref<const Eigen::MatrixXd>& pool, double beta, int q,
                        double fantasy_noise) {
  check_batch(pool.rows(), q, "ucb_acquire");
  if (!(beta >= 0.0)) throw InvalidArgument("ucb_acquire: beta must be non-negative");
  const Eigen::Index p = pool.rows();
  model.prepare();
  Eigen::VectorXd mean(p), var(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const PosteriorGaussian g = model.predict(pool.row(i).transpose());
    mean[i] = g.mean;
    var[i] = g.variance;
  }
  const double root_beta = std::sqrt(beta);
  std::vector<bool> taken(static_cast<std::size_t>(p), false);
  Acquisition out;
  for (int k = 0; k < q; ++k) {
    if (k > 0) var = model.fantasy_variance(gather(pool, out.indices), pool, fantasy_noise);
    Eigen::Index best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < p; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      const double score = mean[i] + root_beta * std::sqrt(std::max(var[i], 0.0));
      if (score > best_score || best < 0) {
        best = i;
        best_score = score;
      }
    }
    taken[static_cast<std::size_t>(best)] = true;
    out.indices.push_back(best);
    out.scores.push_back(best_score);
  }
  return out;
}

Acquisition nipv_acquire(const Surrogate& model, const Eigen::Ref<const Eigen::MatrixXd>& pool,
                         const Eigen::Ref<const Eigen::MatrixXd>& test_points, int q,
                         const Eigen::VectorXd& pool_noise) {
  check_batch(pool.rows(), q, "nipv_acquire");
  if (test_points.rows() == 0) throw InvalidArgument("nipv_acquire: empty test set");
  const Eigen::Index p = pool.rows();
  const auto t = static_cast<double>(test_points.rows());
  if (pool_noise.size() != 0) require_dims(pool_noise.size() == p, "nipv_acquire: one noise value per candidate");
  model.prepare();

  Eigen::VectorXd noise(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    noise[i] = pool_noise.size() != 0 ? pool_noise[i] : model.predict(pool.row(i).transpose()).noise;
  }
  Eigen::VectorXd test_var(test_points.rows());
  for (Eigen::Index i = 0; i < test_points.rows(); ++i) test_var[i] = model.predict(test_points.row(i).transpose()).variance;
  Eigen::MatrixXd c_tp = model.posterior_covariance(test_points, pool);
  Eigen::MatrixXd c_pp = model.posterior_covariance(pool, pool);

  std::vector<bool> taken(static_cast<std::size_t>(p), false);
  Acquisition out;
  for (int k = 0; k < q; ++k) {
    const double base = test_var.sum();
    Eigen::Index best = -1;
    double best_score = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < p; ++c) {
      if (taken[static_cast<std::size_t>(c)]) continue;
      const double denom = std::max(c_pp(c, c), 0.0) + noise[c];
      const double score = (base - c_tp.col(c).squaredNorm() / denom) / t;
      if (score < best_score || best < 0) {
        best = c;
        best_score = score;
      }
    }
    const double denom = std::max(c_pp(best, best), 0.0) + noise[best];
    const Eigen::VectorXd u_t = c_tp.col(best);
    const Eigen::VectorXd u_p = c_pp.col(best);
    c_tp.noalias() -= u_t * u_p.transpose() / denom;
    c_pp.noalias() -= u_p * u_p.transpose() / denom;
    test_var -= u_t.cwiseAbs2() / denom;
    taken[static_cast<std::size_t>(best)] = true;
    out.indices.push_back(best);
    out.scores.push_back(best_score);
  }
  return out;
}

BayesOptTrace bayes_opt_loop(const TestObjective& objective, const SurrogateConfig& model_config,
                             const BayesOptConfig& config) {
  if (config.iterations < 0 || config.initial_points < 2 || config.pool_size < config.q) {
    throw InvalidArgument("bayes_opt_loop: need iterations >= 0, initial_points >= 2, pool_size >= q");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int d = objective.dims;

  std::vector<double> observed;
  double best = -std::numeric_limits<double>::infinity();
  auto evaluate = [&](const Eigen::VectorXd& x) {
    const double clean = -objective.value(x);
    best = std::max(best, clean);
    const double y = clean + objective.noise_sd * normal(rng);
    observed.push_back(y);
    return y;
  };

  const Eigen::MatrixXd X0 = uniform_points(config.initial_points, d, rng());
  Eigen::VectorXd y0(X0.rows());
  for (Eigen::Index i = 0; i < X0.rows(); ++i) y0[i] = evaluate(X0.row(i).transpose());
  auto model = make_surrogate(model_config, X0, y0);

  BayesOptTrace trace;
  trace.initial_best = best;
  for (int it = 0; it < config.iterations; ++it) {
    const auto start = Clock::now();
    const auto [mean, sd] = mean_and_std(observed);
    model->set_target_transform(mean, sd);
    model->reset_optimizer();
    trace.refit_steps.push_back(refit(*model, config.refit));
    const Eigen::MatrixXd pool = uniform_points(config.pool_size, d, rng());
    const Acquisition acq = ucb_acquire(*model, pool, config.beta, config.q);
    for (Eigen::Index idx : acq.indices) {
      const Eigen::VectorXd x = pool.row(idx).transpose();
      model->condition(x, evaluate(x));
    }
    trace.elapsed_ms.push_back(elapsed_ms(start));
    trace.best_value.push_back(best);
  }
  return trace;
}

ActiveLearningTrace active_learning_loop(const FieldTask& field, const SurrogateConfig& model_config,
                                         const ActiveLearningConfig& config) {
  if (model_config.noise_mode != NoiseMode::kFixed) {
    throw InvalidArgument("active_learning_loop: the field task uses known noise (fixed-noise mode)");
  }
  if (config.initial_points < 2 || config.q < 1 || config.rounds < 0 ||
      config.pool_size < config.initial_points + config.q * config.rounds || config.test_size < 1) {
    throw InvalidArgument("active_learning_loop: pool too small for the requested rounds");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.5, 1.5);

  const Eigen::MatrixXd pool_all = uniform_points(config.pool_size, 2, rng());
  Eigen::VectorXd noise_all(config.pool_size);
  for (Eigen::Index i = 0; i < noise_all.size(); ++i) noise_all[i] = std::pow(field.noise_sd * unif(rng), 2);
  const Eigen::MatrixXd test = uniform_points(config.test_size, 2, rng());
  Eigen::VectorXd test_truth(test.rows());
  for (Eigen::Index i = 0; i < test.rows(); ++i) test_truth[i] = field.value(test.row(i).transpose());
  auto observe = [&](Eigen::Index idx) {
    return field.value(pool_all.row(idx).transpose()) + std::sqrt(noise_all[idx]) * normal(rng);
  };

  std::vector<Eigen::Index> remaining(static_cast<std::size_t>(config.pool_size));
  std::iota(remaining.begin(), remaining.end(), 0);
  std::shuffle(remaining.begin(), remaining.end(), rng);
  const std::vector<Eigen::Index> init(remaining.begin(), remaining.begin() + config.initial_points);
  remaining.erase(remaining.begin(), remaining.begin() + config.initial_points);
  std::sort(remaining.begin(), remaining.end());

  const Eigen::MatrixXd X0 = gather(pool_all, init);
  Eigen::VectorXd y0(X0.rows()), v0(X0.rows());
  for (std::size_t i = 0; i < init.size(); ++i) {
    y0[static_cast<Eigen::Index>(i)] = observe(init[i]);
    v0[static_cast<Eigen::Index>(i)] = noise_all[init[i]];
  }
  auto model = make_surrogate(model_config, X0, y0, &v0);
  model->set_target_transform(y0.mean(), 1.0);

  ActiveLearningTrace trace;
  auto record = [&](Eigen::Index acquired, double ms) {
    model->prepare();
    double se = 0.0;
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      const double r = model->predict(test.row(i).transpose()).mean - test_truth[i];
      se += r * r;
    }
    trace.acquired.push_back(acquired);
    trace.rmse.push_back(std::sqrt(se / static_cast<double>(test.rows())));
    trace.elapsed_ms.push_back(ms);
  };

  const auto start0 = Clock::now();
  refit(*model, config.refit);
  record(0, elapsed_ms(start0));
  Eigen::Index acquired = 0;
  for (int round = 0; round < config.rounds; ++round) {
    const auto start = Clock::now();
    std::vector<Eigen::Index> picks;
    if (config.strategy == ActiveStrategy::kNipv) {
      Eigen::VectorXd pool_noise(static_cast<Eigen::Index>(remaining.size()));
      for (std::size_t i = 0; i < remaining.size(); ++i) pool_noise[static_cast<Eigen::Index>(i)] = noise_all[remaining[i]];
      const Acquisition acq = nipv_acquire(*model, gather(pool_all, remaining), test, config.q, pool_noise);
      for (Eigen::Index j : acq.indices) picks.push_back(j);
    } else {
      std::vector<Eigen::Index> order(remaining.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      picks.assign(order.begin(), order.begin() + config.q);
    }
    std::vector<Eigen::Index> chosen;
    for (Eigen::Index j : picks) chosen.push_back(remaining[static_cast<std::size_t>(j)]);
    for (Eigen::Index idx : chosen) model->condition(pool_all.row(idx).transpose(), observe(idx), noise_all[idx]);
    std::sort(picks.begin(), picks.end(), std::greater<>());
    for (Eigen::Index j : picks) remaining.erase(remaining.begin() + j);
    model->reset_optimizer();
    refit(*model, config.refit);
    acquired += config.q;
    record(acquired, elapsed_ms(start));
  }
  return trace;
}

}  // namespace wiski::loops
