#include "wiski/loops/streaming.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "wiski/error.hpp"

namespace wiski::loops {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void validate(const StreamConfig& c) {
  if (c.pretrain_epochs < 0 || c.steps_per_observation < 0 || c.hyper_every < 1 || c.eval_every < 0) {
    throw InvalidArgument("StreamConfig: step counts must be non-negative and hyper_every >= 1");
  }
  if (!(c.batch_lr >= 0.0) || !(c.online_lr >= 0.0)) throw InvalidArgument("StreamConfig: negative learning rate");
}

int label_of(double value, int num_classes) {
  const int label = static_cast<int>(std::lround(value));
  if (label < 0 || label >= num_classes || std::abs(value - label) > 1e-9) {
    throw InvalidArgument("class label " + std::to_string(value) + " outside [0, " + std::to_string(num_classes) + ")");
  }
  return label;
}

bool due(Eigen::Index step, int every) { return every > 0 && step % every == 0; }

}  // namespace

RegressionMetrics evaluate_regression(const Surrogate& model, const Dataset& test) {
  RegressionMetrics out;
  if (test.size() == 0) return out;
  model.prepare();
  double se = 0.0, nll = 0.0;
  for (Eigen::Index i = 0; i < test.size(); ++i) {
    const PosteriorGaussian p = model.predict(test.X.row(i).transpose());
    const double var = std::max(p.observation_variance(), 1e-12);
    const double r = test.y[i] - p.mean;
    se += r * r;
    nll += 0.5 * (kLog2Pi + std::log(var) + r * r / var);
  }
  const auto n = static_cast<double>(test.size());
  out.rmse = std::sqrt(se / n);
  out.nll = nll / n;
  return out;
}

StreamResult stream_regression(const SurrogateConfig& model_config, const PreparedData& data,
                               const StreamConfig& config) {
  validate(config);
  const Dataset& train = data.train;
  if (data.n_pretrain < 1 || data.n_pretrain >= train.size()) {
    throw InvalidArgument("stream_regression: need 1 <= n_pretrain < training size");
  }
  auto model = make_surrogate(model_config, train.X.topRows(data.n_pretrain), train.y.head(data.n_pretrain));
  if (model->n() >= 2) {
    for (int e = 0; e < config.pretrain_epochs; ++e) model->hyper_step(config.batch_lr);
  }
  model->reset_optimizer();

  StreamResult result;
  RegressionMetrics current = evaluate_regression(*model, data.test);
  for (Eigen::Index i = data.n_pretrain; i < train.size(); ++i) {
    const Eigen::Index step = i - data.n_pretrain;
    if (step > 0 && due(step, config.eval_every)) current = evaluate_regression(*model, data.test);
    MetricsRow row;
    row.step = step;
    row.rmse = current.rmse;
    row.nll = current.nll;

    const auto start = Clock::now();
    model->condition(train.X.row(i).transpose(), train.y[i]);
    if (model->n() >= 2 && due(step, config.hyper_every)) {
      for (int s = 0; s < config.steps_per_observation; ++s) model->hyper_step(config.online_lr);
    }
    row.elapsed_ms = elapsed_ms(start);
    row.params = model->params();
    result.rows.push_back(std::move(row));
  }
  const RegressionMetrics final_metrics = evaluate_regression(*model, data.test);
  result.final_rmse = final_metrics.rmse;
  result.final_nll = final_metrics.nll;
  result.final_params = model->params();
  result.final_model = std::move(model);
  return result;
}

DirichletClassifier::DirichletClassifier(SurrogateConfig model_config, int num_classes,
                                         const Eigen::Ref<const Eigen::MatrixXd>& X0,
                                         const Eigen::Ref<const Eigen::VectorXd>& labels0, double alpha_eps)
    : alpha_eps_(alpha_eps) {
  if (num_classes < 1) throw InvalidArgument("DirichletClassifier: need at least one class");
  require_dims(X0.rows() == labels0.size(), "DirichletClassifier: X0 and labels0 row counts differ");
  model_config.noise_mode = NoiseMode::kFixed;
  const Eigen::Index n0 = X0.rows();
  Eigen::MatrixXd targets(n0, num_classes);
  Eigen::MatrixXd noise(n0, num_classes);
  for (Eigen::Index i = 0; i < n0; ++i) {
    const auto t = dirichlet_transform(label_of(labels0[i], num_classes), num_classes, alpha_eps);
    for (int c = 0; c < num_classes; ++c) {
      targets(i, c) = t[static_cast<std::size_t>(c)].target;
      noise(i, c) = t[static_cast<std::size_t>(c)].noise;
    }
  }
  // Without data, fall back to the class-averaged target.
  double prior_offset = 0.0;
  for (const auto& t : dirichlet_transform(0, num_classes, alpha_eps)) prior_offset += t.target / num_classes;
  for (int c = 0; c < num_classes; ++c) {
    const double offset = n0 > 0 ? targets.col(c).mean() : prior_offset;
    const Eigen::VectorXd y = targets.col(c);
    const Eigen::VectorXd v = noise.col(c);
    auto head = make_surrogate(model_config, X0, y, &v);
    head->set_target_transform(offset, 1.0);
    heads.push_back(std::move(head));
  }
}

void DirichletClassifier::condition(const Eigen::Ref<const Eigen::VectorXd>& x, int label) {
  const auto t = dirichlet_transform(label, num_classes(), alpha_eps_);
  for (int c = 0; c < num_classes(); ++c) {
    heads[static_cast<std::size_t>(c)]->condition(x, t[static_cast<std::size_t>(c)].target,
                                                  t[static_cast<std::size_t>(c)].noise);
  }
}

void DirichletClassifier::hyper_step(double lr) {
  for (auto& h : heads) {
    if (h->n() >= 2) h->hyper_step(lr);
  }
}

int DirichletClassifier::predict_class(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  int best = 0;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < num_classes(); ++c) {
    const double mean = heads[static_cast<std::size_t>(c)]->predict(x).mean;
    if (mean > best_mean) {
      best_mean = mean;
      best = c;
    }
  }
  return best;
}

Eigen::VectorXd DirichletClassifier::probabilities(const Eigen::Ref<const Eigen::VectorXd>& x, int samples,
                                                   std::mt19937_64& rng) const {
  if (samples < 1) throw InvalidArgument("probabilities: need at least one sample");
  const int c_total = num_classes();
  Eigen::VectorXd mean(c_total), sd(c_total);
  for (int c = 0; c < c_total; ++c) {
    const PosteriorGaussian p = heads[static_cast<std::size_t>(c)]->predict(x);
    mean[c] = p.mean;
    sd[c] = std::sqrt(std::max(p.variance, 0.0));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(c_total);
  Eigen::VectorXd f(c_total);
  for (int s = 0; s < samples; ++s) {
    for (int c = 0; c < c_total; ++c) f[c] = mean[c] + sd[c] * normal(rng);
    const Eigen::ArrayXd e = (f.array() - f.maxCoeff()).exp();
    probs += (e / e.sum()).matrix();
  }
  return probs / static_cast<double>(samples);
}

double DirichletClassifier::accuracy(const Dataset& test) const {
  if (test.size() == 0) return 0.0;
  for (const auto& h : heads) h->prepare();
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < test.size(); ++i) {
    if (predict_class(test.X.row(i).transpose()) == label_of(test.y[i], num_classes())) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

StreamResult stream_classification(const SurrogateConfig& model_config, int num_classes, const PreparedData& data,
                                   const StreamConfig& config) {
  validate(config);
  const Dataset& train = data.train;
  if (data.n_pretrain < 1 || data.n_pretrain >= train.size()) {
    throw InvalidArgument("stream_classification: need 1 <= n_pretrain < training size");
  }
  for (Eigen::Index i = 0; i < train.size(); ++i) label_of(train.y[i], num_classes);
  for (Eigen::Index i = 0; i < data.test.size(); ++i) label_of(data.test.y[i], num_classes);

  DirichletClassifier clf(model_config, num_classes, train.X.topRows(data.n_pretrain), train.y.head(data.n_pretrain),
                          config.alpha_eps);
  for (int e = 0; e < config.pretrain_epochs; ++e) clf.hyper_step(config.batch_lr);
  for (auto& h : clf.heads) h->reset_optimizer();

  StreamResult result;
  double current = clf.accuracy(data.test);
  for (Eigen::Index i = data.n_pretrain; i < train.size(); ++i) {
    const Eigen::Index step = i - data.n_pretrain;
    if (step > 0 && due(step, config.eval_every)) current = clf.accuracy(data.test);
    MetricsRow row;
    row.step = step;
    row.accuracy = current;
    const auto start = Clock::now();
    clf.condition(train.X.row(i).transpose(), label_of(train.y[i], num_classes));
    if (due(step, config.hyper_every)) {
      for (int s = 0; s < config.steps_per_observation; ++s) clf.hyper_step(config.online_lr);
    }
    row.elapsed_ms = elapsed_ms(start);
    row.params = clf.heads.front()->params();
    result.rows.push_back(std::move(row));
  }
  result.final_accuracy = clf.accuracy(data.test);
  result.final_params = clf.heads.front()->params();
  return result;
}

}  // namespace wiski::loops
