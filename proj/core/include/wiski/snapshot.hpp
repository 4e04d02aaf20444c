#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "wiski/wiski_model.hpp"

namespace wiski {

/// Binary checkpoint of a WiskiModel. All integers are little-endian uint64 (uint32 for
/// the header fields), all reals little-endian IEEE-754 binary64.
///
///   "WISKISNP"            8-byte magic
///   u32 version           kSnapshotVersion
///   u32 noise_mode        0 homoscedastic, 1 fixed
///   u32 kernel_family     0 rbf, 1 matern12
///   u32 dims
///   dims x {f64 lower, f64 upper, u64 size}
///   f64 log_lengthscales[dims], f64 log_outputscale, f64 log_noise
///   f64 target_offset, f64 target_scale
///   u64 n, u64 m, u64 r
///   f64 wty[m], f64 wt1[m]
///   f64 yty, f64 y_sum, f64 inv_noise_sum, f64 log_noise_sum
///   f64 L[m * r], f64 J[m * r]   column-major
///   u64 has_projection, then if set: u64 in_dims, u64 out_dims, f64 params[out * in + out]
inline constexpr std::uint32_t kSnapshotVersion = 1;

void save_snapshot(const WiskiModel& model, std::ostream& out);
void save_snapshot(const WiskiModel& model, const std::filesystem::path& path);

/// Restores the model; `options.rank` is taken from the stored root.
WiskiModel load_snapshot(std::istream& in, const ModelOptions& options = {});
WiskiModel load_snapshot(const std::filesystem::path& path, const ModelOptions& options = {});

}  // namespace wiski
