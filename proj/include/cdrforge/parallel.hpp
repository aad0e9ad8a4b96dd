#pragma once

namespace cdrforge {

/// Selects between the OpenMP kernels and their serial reference versions.
/// Both produce bit-identical results.
enum class Execution { serial, parallel };

} // namespace cdrforge
