#include "wiski/snapshot.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "wiski/error.hpp"

namespace wiski {
namespace {

constexpr std::array<char, 8> kMagic = {'W', 'I', 'S', 'K', 'I', 'S', 'N', 'P'};
// Guards against absurd allocations when reading a corrupted header.
constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 32;

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw FormatError("snapshot: unexpected end of data");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t get_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

void put_array(std::ostream& out, const double* data, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) put_f64(out, data[i]);
}

void get_array(std::istream& in, double* data, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) data[i] = get_f64(in);
}

std::uint64_t get_count(std::istream& in, const char* what) {
  const std::uint64_t v = get_u64(in);
  if (v > kMaxEntries) throw FormatError(std::string("snapshot: implausible ") + what);
  return v;
}

}  // namespace

void save_snapshot(const WiskiModel& model, std::ostream& out) {
  const Grid& grid = model.grid();
  const WiskiCaches& c = model.caches();
  const KernelParams& p = model.params();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kSnapshotVersion);
  put_u32(out, model.noise_mode() == NoiseMode::kFixed ? 1u : 0u);
  put_u32(out, model.spec().family == KernelFamily::kMatern12 ? 1u : 0u);
  put_u32(out, static_cast<std::uint32_t>(grid.dims()));
  for (int k = 0; k < grid.dims(); ++k) {
    put_f64(out, grid.bounds()[static_cast<std::size_t>(k)].lower);
    put_f64(out, grid.bounds()[static_cast<std::size_t>(k)].upper);
    put_u64(out, static_cast<std::uint64_t>(grid.size(k)));
  }
  put_array(out, p.log_lengthscales.data(), p.log_lengthscales.size());
  put_f64(out, p.log_outputscale);
  put_f64(out, p.log_noise);
  put_f64(out, model.target_offset());
  put_f64(out, model.target_scale());
  put_u64(out, static_cast<std::uint64_t>(c.n));
  put_u64(out, static_cast<std::uint64_t>(c.root.dim()));
  put_u64(out, static_cast<std::uint64_t>(c.root.rank()));
  put_array(out, c.wty.data(), c.wty.size());
  put_array(out, c.wt1.data(), c.wt1.size());
  put_f64(out, c.yty);
  put_f64(out, c.y_sum);
  put_f64(out, c.inv_noise_sum);
  put_f64(out, c.log_noise_sum);
  put_array(out, c.root.L.data(), c.root.L.size());
  put_array(out, c.root.J.data(), c.root.J.size());
  const auto& proj = model.projection();
  put_u64(out, proj ? 1u : 0u);
  if (proj) {
    put_u64(out, static_cast<std::uint64_t>(proj->in_dims()));
    put_u64(out, static_cast<std::uint64_t>(proj->out_dims()));
    const Eigen::VectorXd phi = proj->params();
    put_array(out, phi.data(), phi.size());
  }
  if (!out) throw FormatError("snapshot: write failed");
}

void save_snapshot(const WiskiModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("snapshot: cannot open " + path.string() + " for writing");
  save_snapshot(model, out);
}

WiskiModel load_snapshot(std::istream& in, const ModelOptions& options) {
  std::array<char, 8> magic;
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("snapshot: bad magic");
  const std::uint32_t version = get_u32(in);
  if (version != kSnapshotVersion) {
    throw FormatError("snapshot: unsupported version " + std::to_string(version));
  }
  const std::uint32_t mode_code = get_u32(in);
  const std::uint32_t family_code = get_u32(in);
  const std::uint32_t dims = get_u32(in);
  if (mode_code > 1 || family_code > 1 || dims == 0 || dims > 16) throw FormatError("snapshot: bad header");
  const NoiseMode mode = mode_code == 1 ? NoiseMode::kFixed : NoiseMode::kHomoscedastic;
  const KernelSpec spec{family_code == 1 ? KernelFamily::kMatern12 : KernelFamily::kRbf, static_cast<int>(dims)};

  std::vector<Interval> bounds(dims);
  std::vector<Eigen::Index> sizes(dims);
  for (std::uint32_t k = 0; k < dims; ++k) {
    bounds[k].lower = get_f64(in);
    bounds[k].upper = get_f64(in);
    sizes[k] = static_cast<Eigen::Index>(get_count(in, "grid size"));
  }
  Grid grid = Grid::build(bounds, sizes);

  KernelParams params = KernelParams::defaults(static_cast<int>(dims));
  get_array(in, params.log_lengthscales.data(), params.log_lengthscales.size());
  params.log_outputscale = get_f64(in);
  params.log_noise = get_f64(in);
  const double offset = get_f64(in);
  const double scale = get_f64(in);

  WiskiCaches c;
  c.n = static_cast<Eigen::Index>(get_count(in, "observation count"));
  const auto m = static_cast<Eigen::Index>(get_count(in, "grid size"));
  const auto r = static_cast<Eigen::Index>(get_count(in, "rank"));
  if (m != grid.size() || r < 1 || r > m) throw FormatError("snapshot: root shape disagrees with grid");
  c.wty.resize(m);
  c.wt1.resize(m);
  get_array(in, c.wty.data(), m);
  get_array(in, c.wt1.data(), m);
  c.yty = get_f64(in);
  c.y_sum = get_f64(in);
  c.inv_noise_sum = get_f64(in);
  c.log_noise_sum = get_f64(in);
  c.root.L.resize(m, r);
  c.root.J.resize(m, r);
  get_array(in, c.root.L.data(), m * r);
  get_array(in, c.root.J.data(), m * r);

  std::optional<ProjectionMap> projection;
  if (get_u64(in) == 1) {
    const auto in_dims = static_cast<Eigen::Index>(get_count(in, "projection input size"));
    const auto out_dims = static_cast<Eigen::Index>(get_count(in, "projection output size"));
    if (out_dims != static_cast<Eigen::Index>(dims)) throw FormatError("snapshot: projection output size mismatch");
    ProjectionMap map{Eigen::MatrixXd::Zero(out_dims, in_dims), Eigen::VectorXd::Zero(out_dims)};
    Eigen::VectorXd phi(map.num_params());
    get_array(in, phi.data(), phi.size());
    map.set_params(phi);
    projection = std::move(map);
  }
  WiskiModel model =
      WiskiModel::from_caches(std::move(grid), spec, params, mode, std::move(c), options, std::move(projection));
  model.set_target_transform(offset, scale);
  return model;
}

WiskiModel load_snapshot(const std::filesystem::path& path, const ModelOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("snapshot: cannot open " + path.string());
  return load_snapshot(in, options);
}

}  // namespace wiski
