#include "wiski/linalg/toeplitz.hpp"

#include <unsupported/Eigen/FFT>

#include "wiski/error.hpp"

namespace wiski::linalg {
namespace {

Eigen::FFT<double>& thread_fft() {
  thread_local Eigen::FFT<double> fft;
  return fft;
}

Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

ToeplitzOperator::ToeplitzOperator(Eigen::VectorXd first_column, ToeplitzPath path)
    : column_(std::move(first_column)) {
  if (column_.size() < 1) throw InvalidArgument("ToeplitzOperator: empty first column");
  if (!column_.allFinite()) throw InvalidArgument("ToeplitzOperator: non-finite first column");
  const Eigen::Index p = column_.size();
  const bool fft = path == ToeplitzPath::kFft || (path == ToeplitzPath::kAuto && p >= kFftMinSize);
  if (fft) {
    // Circulant embedding [c_0 .. c_{p-1}, 0 .., c_{p-1} .. c_1] of length >= 2p.
    fft_size_ = next_pow2(2 * p);
    std::vector<double> embed(static_cast<std::size_t>(fft_size_), 0.0);
    for (Eigen::Index i = 0; i < p; ++i) embed[static_cast<std::size_t>(i)] = column_[i];
    for (Eigen::Index i = 1; i < p; ++i) {
      embed[static_cast<std::size_t>(fft_size_ - i)] = column_[i];
    }
    thread_fft().fwd(spectrum_, embed);
  } else {
    direct_ = dense();
  }
}

Eigen::MatrixXd ToeplitzOperator::dense() const {
  const Eigen::Index p = size();
  Eigen::MatrixXd t(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < p; ++i) t(i, j) = entry(i, j);
  }
  return t;
}

void ToeplitzOperator::apply_fft(const double* in, double* out) const {
  auto& fft = thread_fft();
  thread_local std::vector<double> buffer;
  thread_local std::vector<std::complex<double>> freq;
  buffer.assign(static_cast<std::size_t>(fft_size_), 0.0);
  const Eigen::Index p = size();
  std::copy(in, in + p, buffer.begin());
  fft.fwd(freq, buffer);
  for (std::size_t k = 0; k < freq.size(); ++k) freq[k] *= spectrum_[k];
  fft.inv(buffer, freq);
  std::copy(buffer.begin(), buffer.begin() + p, out);
}

Eigen::VectorXd ToeplitzOperator::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  require_dims(v.size() == size(), "toeplitz apply: vector length does not match operator size");
  if (!uses_fft()) return direct_ * v;
  Eigen::VectorXd out(size());
  Eigen::VectorXd in = v;
  apply_fft(in.data(), out.data());
  return out;
}

Eigen::MatrixXd ToeplitzOperator::apply_columns(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  require_dims(x.rows() == size(), "toeplitz apply: row count does not match operator size");
  if (!uses_fft()) return direct_ * x;
  Eigen::MatrixXd in = x;
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) apply_fft(in.col(c).data(), out.col(c).data());
  return out;
}

Eigen::MatrixXd ToeplitzOperator::apply_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  require_dims(x.cols() == size(), "toeplitz apply: column count does not match operator size");
  if (!uses_fft()) return x * direct_;
  return apply_columns(x.transpose()).transpose();
}

}  // namespace wiski::linalg
