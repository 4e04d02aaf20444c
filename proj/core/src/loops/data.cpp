#include "wiski/loops/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "wiski/error.hpp"
#include "wiski/log.hpp"

namespace wiski::loops {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\"");
  return s.substr(first, last - first + 1);
}

Dataset select_rows(const Dataset& d, const std::vector<Eigen::Index>& rows) {
  Dataset out{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), d.X.cols()),
              Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()))};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = d.X.row(rows[i]);
    out.y[static_cast<Eigen::Index>(i)] = d.y[rows[i]];
  }
  return out;
}

}  // namespace

PreparedData prepare_dataset(const Dataset& raw, std::uint64_t seed, const PrepareOptions& options) {
  if (options.test_fraction < 0.0 || options.test_fraction >= 1.0 || options.pretrain_fraction < 0.0 ||
      options.pretrain_fraction > 1.0) {
    throw InvalidArgument("prepare_dataset: fractions must lie in [0, 1)");
  }
  const Eigen::Index n = raw.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (options.shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  const auto n_test = static_cast<Eigen::Index>(std::floor(options.test_fraction * static_cast<double>(n)));
  const Eigen::Index n_train = n - n_test;
  const auto n_pretrain = static_cast<Eigen::Index>(std::ceil(options.pretrain_fraction * static_cast<double>(n_train)));
  if (n_train < 2 || n_pretrain < 1 || n_pretrain >= n_train) {
    throw InvalidArgument("prepare_dataset: dataset of " + std::to_string(n) + " rows is too small for the split");
  }

  PreparedData out;
  out.train = select_rows(raw, {order.begin(), order.begin() + n_train});
  out.test = select_rows(raw, {order.begin() + n_train, order.end()});
  out.n_pretrain = n_pretrain;

  out.feature_min = out.train.X.colwise().minCoeff().transpose();
  out.feature_max = out.train.X.colwise().maxCoeff().transpose();
  for (Eigen::Index k = 0; k < raw.X.cols(); ++k) {
    const double lo = out.feature_min[k];
    const double range = out.feature_max[k] - lo;
    auto scale = [&](Eigen::MatrixXd& X) {
      if (range > 0.0) {
        X.col(k) = (2.0 * (X.col(k).array() - lo) / range - 1.0).matrix();
      } else {
        X.col(k).setZero();
      }
    };
    if (!(range > 0.0)) log_warning("feature " + std::to_string(k) + " is constant on the training split, set to 0");
    scale(out.train.X);
    scale(out.test.X);
  }

  if (options.standardize_targets) {
    out.target_mean = out.train.y.mean();
    const double var = (out.train.y.array() - out.target_mean).square().mean();
    out.target_std = var > 0.0 ? std::sqrt(var) : 1.0;
    out.train.y = ((out.train.y.array() - out.target_mean) / out.target_std).matrix();
    out.test.y = ((out.test.y.array() - out.target_mean) / out.target_std).matrix();
  }
  return out;
}

Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path, std::vector<std::string>* header_out) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);
  const auto cols = static_cast<Eigen::Index>(header.size());

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (static_cast<Eigen::Index>(cells.size()) != cols) {
      throw FormatError(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(cols));
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim(cells[c]);
      const char* end = cell.data() + cell.size();
      const auto res = std::from_chars(cell.data(), end, values[c]);
      if (cell.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(values[c])) {
        throw FormatError(path.string() + ": non-numeric cell '" + cell + "' at row " + std::to_string(line_no) +
                          ", column " + std::to_string(c + 1));
      }
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw FormatError(path.string() + ": dataset is empty");

  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) out(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
  }
  if (header_out != nullptr) *header_out = std::move(header);
  return out;
}

Dataset read_csv(const std::filesystem::path& path, const std::string& target_column) {
  std::vector<std::string> header;
  const Eigen::MatrixXd table = read_csv_matrix(path, &header);
  const auto cols = static_cast<Eigen::Index>(header.size());
  if (cols < 2) throw FormatError(path.string() + ": need at least one feature and one target column");

  Eigen::Index target = cols - 1;
  if (!target_column.empty()) {
    const auto it = std::find(header.begin(), header.end(), target_column);
    if (it != header.end()) {
      target = it - header.begin();
    } else {
      Eigen::Index idx = -1;
      const auto res = std::from_chars(target_column.data(), target_column.data() + target_column.size(), idx);
      if (res.ec != std::errc() || res.ptr != target_column.data() + target_column.size() || idx < 0 || idx >= cols) {
        throw FormatError(path.string() + ": no target column '" + target_column + "'");
      }
      target = idx;
    }
  }

  Dataset out{Eigen::MatrixXd(table.rows(), cols - 1), table.col(target)};
  Eigen::Index f = 0;
  for (Eigen::Index c = 0; c < cols; ++c) {
    if (c != target) out.X.col(f++) = table.col(c);
  }
  return out;
}

Eigen::MatrixXd uniform_points(Eigen::Index n, int dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::MatrixXd X(n, dims);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < dims; ++k) X(i, k) = unif(rng);
  }
  return X;
}

Dataset make_sine(Eigen::Index n, double noise_sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d{Eigen::MatrixXd(n, 1), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    d.X(i, 0) = unif(rng);
    d.y[i] = std::sin(2.0 * M_PI * d.X(i, 0)) + noise_sd * normal(rng);
  }
  return d;
}

Dataset make_linear(Eigen::Index n, int dims, std::uint64_t seed) {
  Dataset d{uniform_points(n, dims, seed), Eigen::VectorXd(n)};
  Eigen::VectorXd coef(dims);
  for (int k = 0; k < dims; ++k) coef[k] = 1.0 - 0.5 * k;
  d.y = d.X * coef;
  return d;
}

Dataset make_banana(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  std::normal_distribution<double> normal(0.0, 0.22);
  Dataset d{Eigen::MatrixXd(n, 2), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = angle(rng);
    double a = std::cos(t);
    double b = std::sin(t);
    if (label == 1) {
      a = 1.0 - a;
      b = 0.5 - b;
    }
    // Moons live in [-1, 2] x [-0.5, 1]; map to roughly [-1, 1]^2.
    d.X(i, 0) = (a + normal(rng) - 0.5) / 1.6;
    d.X(i, 1) = (b + normal(rng) - 0.25) / 0.9;
    d.y[i] = label;
  }
  return d;
}

Dataset make_blobs(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.15);
  Dataset d{Eigen::MatrixXd(n, 2), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double c = label == 0 ? -0.5 : 0.5;
    d.X(i, 0) = c + normal(rng);
    d.X(i, 1) = c + normal(rng);
    d.y[i] = label;
  }
  return d;
}

double FieldTask::value(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::Index res = lattice.rows();
  const double h = 2.0 / static_cast<double>(res - 1);
  auto locate = [&](double v, Eigen::Index& i, double& frac) {
    const double u = (std::clamp(v, -1.0, 1.0) + 1.0) / h;
    i = std::min<Eigen::Index>(static_cast<Eigen::Index>(u), res - 2);
    frac = u - static_cast<double>(i);
  };
  Eigen::Index i = 0, j = 0;
  double fx = 0.0, fy = 0.0;
  locate(x[0], i, fx);
  locate(x[1], j, fy);
  return (1 - fx) * (1 - fy) * lattice(i, j) + fx * (1 - fy) * lattice(i + 1, j) + (1 - fx) * fy * lattice(i, j + 1) +
         fx * fy * lattice(i + 1, j + 1);
}

FieldTask make_field(int resolution, double lengthscale, double noise_sd, std::uint64_t seed) {
  if (resolution < 2) throw InvalidArgument("make_field: resolution must be at least 2");
  const Eigen::Index res = resolution;
  const Eigen::Index n = res * res;
  const double h = 2.0 / static_cast<double>(res - 1);
  Eigen::MatrixXd pts(n, 2);
  for (Eigen::Index i = 0; i < res; ++i) {
    for (Eigen::Index j = 0; j < res; ++j) pts.row(i * res + j) << -1.0 + h * i, -1.0 + h * j;
  }
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const double r = (pts.row(a) - pts.row(b)).cwiseAbs().sum();
      k(a, b) = std::exp(-r / lengthscale);
    }
  }
  k.diagonal().array() += 1e-8;
  const Eigen::MatrixXd chol = k.llt().matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
  const Eigen::VectorXd f = chol * z;
  FieldTask task;
  task.lattice.resize(res, res);
  for (Eigen::Index i = 0; i < res; ++i) {
    for (Eigen::Index j = 0; j < res; ++j) task.lattice(i, j) = f[i * res + j];
  }
  task.noise_sd = noise_sd;
  return task;
}

}  // namespace wiski::loops
