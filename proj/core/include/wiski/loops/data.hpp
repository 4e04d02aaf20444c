#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace wiski::loops {

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;

  Eigen::Index size() const { return X.rows(); }
  int dims() const { return static_cast<int>(X.cols()); }
};

/// Train/test split with the first `n_pretrain` training rows reserved for batch pretraining.
struct PreparedData {
  Dataset train;
  Dataset test;
  Eigen::Index n_pretrain = 0;
  Eigen::VectorXd feature_min;
  Eigen::VectorXd feature_max;
  double target_mean = 0.0;
  double target_std = 1.0;
};

struct PrepareOptions {
  double test_fraction = 0.1;
  double pretrain_fraction = 0.05;
  /// Zero-mean unit-variance targets (population variance); off for class labels.
  bool standardize_targets = true;
  /// Shuffle before splitting; off keeps the arrival order (non-i.i.d. streams).
  bool shuffle = true;
};

/// Seeded split, then min-max feature scaling to [-1, 1] and target standardization
/// from training statistics only. Constant features map to 0 with a warning.
PreparedData prepare_dataset(const Dataset& raw, std::uint64_t seed, const PrepareOptions& options = {});

/// Reads a comma-separated file with a header row. `target_column` is a header name or a
/// zero-based index; an empty string selects the last column. Throws FormatError on bad cells.
Dataset read_csv(const std::filesystem::path& path, const std::string& target_column = "");

/// All columns of a headed numeric CSV; the header is returned through `header` when given.
Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path, std::vector<std::string>* header = nullptr);

/// y = sin(2 pi x) + noise on x ~ U[-1, 1].
Dataset make_sine(Eigen::Index n, double noise_sd, std::uint64_t seed);
/// Noiseless linear function of d uniform inputs.
Dataset make_linear(Eigen::Index n, int dims, std::uint64_t seed);
/// Two interleaved crescents in [-1, 1]^2 with labels 0/1.
Dataset make_banana(Eigen::Index n, std::uint64_t seed);
/// Two Gaussian clusters separated along both axes, labels 0/1.
Dataset make_blobs(Eigen::Index n, std::uint64_t seed);

/// Smooth 2-D random field with per-location observation noise, standing in for a
/// spatial incidence map: a Matern-1/2 draw on a coarse lattice, bilinearly interpolated.
struct FieldTask {
  Eigen::MatrixXd lattice;  // field values on a (res x res) lattice over [-1, 1]^2
  double noise_sd = 0.05;

  double value(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

FieldTask make_field(int resolution, double lengthscale, double noise_sd, std::uint64_t seed);

/// Uniform points in [-1, 1]^d.
Eigen::MatrixXd uniform_points(Eigen::Index n, int dims, std::uint64_t seed);

}  // namespace wiski::loops
