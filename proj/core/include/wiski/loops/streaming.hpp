#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "wiski/dirichlet.hpp"
#include "wiski/loops/data.hpp"
#include "wiski/loops/surrogate.hpp"

namespace wiski::loops {

struct StreamConfig {
  /// Batch Adam steps on the pretraining MLL.
  int pretrain_epochs = 200;
  double batch_lr = 5e-2;
  double online_lr = 5e-3;
  /// Hyper steps after each observation; 0 freezes the hyperparameters.
  int steps_per_observation = 1;
  /// Hyper steps run only on every k-th observation (1 means every observation).
  int hyper_every = 1;
  /// Test metrics are recomputed every k observations and carried forward in between;
  /// 0 evaluates only once after the stream.
  int eval_every = 1;
  double alpha_eps = 0.01;
  std::uint64_t seed = 0;
};

/// One streamed observation. Test metrics reflect the model before it saw this observation.
struct MetricsRow {
  Eigen::Index step = 0;
  double elapsed_ms = 0.0;  // condition plus hyper steps, monotonic clock
  double rmse = 0.0;        // test RMSE (regression) on standardized targets
  double nll = 0.0;         // mean test negative log predictive density
  double accuracy = 0.0;    // test accuracy (classification)
  KernelParams params;
};

struct StreamResult {
  std::vector<MetricsRow> rows;
  double final_rmse = 0.0;
  double final_nll = 0.0;
  double final_accuracy = 0.0;
  KernelParams final_params;
  /// Model after the stream (regression only).
  std::shared_ptr<Surrogate> final_model;
};

struct RegressionMetrics {
  double rmse = 0.0;
  double nll = 0.0;
};

RegressionMetrics evaluate_regression(const Surrogate& model, const Dataset& test);

/// Pretrains on data.train's first n_pretrain rows, then streams the rest: metrics,
/// condition, hyper steps.
StreamResult stream_regression(const SurrogateConfig& model_config, const PreparedData& data,
                               const StreamConfig& config);

/// One heteroscedastic regression head per class on Dirichlet-transformed labels.
class DirichletClassifier {
 public:
  /// `model_config.noise_mode` is forced to fixed noise. Each head's constant offset
  /// is the mean transformed target of the initial batch.
  DirichletClassifier(SurrogateConfig model_config, int num_classes, const Eigen::Ref<const Eigen::MatrixXd>& X0,
                      const Eigen::Ref<const Eigen::VectorXd>& labels0, double alpha_eps = 0.01);

  int num_classes() const { return static_cast<int>(heads.size()); }
  void condition(const Eigen::Ref<const Eigen::VectorXd>& x, int label);
  /// Hyper step on every head.
  void hyper_step(double lr);
  /// Argmax of the head means; ties go to the lowest class id.
  int predict_class(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Monte Carlo softmax over latent posterior samples.
  Eigen::VectorXd probabilities(const Eigen::Ref<const Eigen::VectorXd>& x, int samples, std::mt19937_64& rng) const;
  double accuracy(const Dataset& test) const;

  std::vector<std::unique_ptr<Surrogate>> heads;

 private:
  double alpha_eps_;
};

/// Labels in data.y must be integers in [0, num_classes).
StreamResult stream_classification(const SurrogateConfig& model_config, int num_classes, const PreparedData& data,
                                   const StreamConfig& config);

}  // namespace wiski::loops
