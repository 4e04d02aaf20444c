#include "wiski/loops/surrogate.hpp"

#include <cmath>

#include "wiski/error.hpp"

namespace wiski::loops {
namespace {

class WiskiSurrogate final : public Surrogate {
 public:
  explicit WiskiSurrogate(WiskiModel model) : model_(std::move(model)) {}

  std::unique_ptr<Surrogate> clone() const override { return std::make_unique<WiskiSurrogate>(*this); }
  SurrogateKind kind() const override { return SurrogateKind::kWiski; }
  Eigen::Index n() const override { return model_.n(); }
  const KernelParams& params() const override { return model_.params(); }

  void condition(const Eigen::Ref<const Eigen::VectorXd>& x, double y, double noise_var) override {
    if (model_.noise_mode() == NoiseMode::kFixed) {
      model_.condition(x, y, noise_var);
    } else {
      model_.condition(x, y);
    }
  }
  PosteriorGaussian predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override { return model_.predict(x); }
  Eigen::VectorXd fantasy_variance(const Eigen::Ref<const Eigen::MatrixXd>& Xf,
                                   const Eigen::Ref<const Eigen::MatrixXd>& Xq, double fantasy_noise) const override {
    return model_.fantasy_variance(Xf, Xq, fantasy_noise);
  }
  Eigen::MatrixXd posterior_covariance(const Eigen::Ref<const Eigen::MatrixXd>& Xa,
                                       const Eigen::Ref<const Eigen::MatrixXd>& Xb) const override {
    return model_.posterior_covariance(Xa, Xb);
  }
  NoiseMode noise_mode() const override { return model_.noise_mode(); }
  double objective() const override { return model_.objective(); }
  HyperStepResult hyper_step(double lr) override { return model_.hyper_step(adam_, lr); }
  void set_target_transform(double offset, double scale) override { model_.set_target_transform(offset, scale); }
  void prepare() const override { model_.prepare(); }
  const WiskiModel* wiski_model() const override { return &model_; }

 private:
  WiskiModel model_;
};

class ExactSurrogate final : public Surrogate {
 public:
  explicit ExactSurrogate(ExactGp gp) : gp_(std::move(gp)) {}

  std::unique_ptr<Surrogate> clone() const override { return std::make_unique<ExactSurrogate>(*this); }
  SurrogateKind kind() const override { return SurrogateKind::kExact; }
  Eigen::Index n() const override { return gp_.n(); }
  const KernelParams& params() const override { return gp_.params(); }

  void condition(const Eigen::Ref<const Eigen::VectorXd>& x, double y, double noise_var) override {
    if (gp_.noise_mode() == NoiseMode::kFixed) {
      gp_.append(x, y, noise_var);
    } else {
      gp_.append(x, y);
    }
  }
  PosteriorGaussian predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override { return gp_.predict(x); }
  Eigen::VectorXd fantasy_variance(const Eigen::Ref<const Eigen::MatrixXd>& Xf,
                                   const Eigen::Ref<const Eigen::MatrixXd>& Xq, double fantasy_noise) const override {
    return gp_.fantasy_variance(Xf, Xq, fantasy_noise);
  }
  Eigen::MatrixXd posterior_covariance(const Eigen::Ref<const Eigen::MatrixXd>& Xa,
                                       const Eigen::Ref<const Eigen::MatrixXd>& Xb) const override {
    return gp_.posterior_covariance(Xa, Xb);
  }
  NoiseMode noise_mode() const override { return gp_.noise_mode(); }
  double objective() const override { return gp_.objective(); }
  HyperStepResult hyper_step(double lr) override { return gp_.hyper_step(adam_, lr); }
  void set_target_transform(double offset, double scale) override { gp_.set_target_transform(offset, scale); }

 private:
  ExactGp gp_;
};

}  // namespace

std::string to_string(SurrogateKind kind) { return kind == SurrogateKind::kWiski ? "wiski" : "exact"; }

SurrogateKind parse_surrogate_kind(const std::string& name) {
  if (name == "wiski") return SurrogateKind::kWiski;
  if (name == "exact") return SurrogateKind::kExact;
  throw InvalidArgument("unknown model '" + name + "' (expected wiski or exact)");
}

std::unique_ptr<Surrogate> make_surrogate(const SurrogateConfig& config, const Eigen::Ref<const Eigen::MatrixXd>& X0,
                                          const Eigen::Ref<const Eigen::VectorXd>& y0, const Eigen::VectorXd* noise0) {
  const bool fixed = config.noise_mode == NoiseMode::kFixed;
  if (fixed && noise0 == nullptr) throw InvalidArgument("make_surrogate: fixed-noise mode needs initial noise");
  if (config.kind == SurrogateKind::kWiski) {
    if (fixed) {
      return std::make_unique<WiskiSurrogate>(
          WiskiModel::init_fixed_noise(config.grid, config.spec, config.params, X0, y0, *noise0, config.options));
    }
    return std::make_unique<WiskiSurrogate>(WiskiModel::init(config.grid, config.spec, config.params, X0, y0,
                                                             config.options));
  }
  ExactGp gp(config.spec, config.params, config.noise_mode, config.options.priors);
  gp.set_learn_noise(config.options.learn_noise);
  for (Eigen::Index i = 0; i < X0.rows(); ++i) {
    if (fixed) {
      gp.append(X0.row(i).transpose(), y0[i], (*noise0)[i]);
    } else {
      gp.append(X0.row(i).transpose(), y0[i]);
    }
  }
  return std::make_unique<ExactSurrogate>(std::move(gp));
}

int refit(Surrogate& surrogate, const RefitOptions& options) {
  if (surrogate.n() < 2) return 0;
  int steps = 0;
  double previous = 0.0;
  while (steps < options.max_steps) {
    // r.objective is the value before this step, so each iteration checks the previous step's gain.
    const HyperStepResult r = surrogate.hyper_step(options.lr);
    ++steps;
    if (r.skipped) break;
    if (steps > 1 && r.objective - previous < options.rel_tol * std::abs(previous)) break;
    previous = r.objective;
  }
  return steps;
}

}  // namespace wiski::loops
