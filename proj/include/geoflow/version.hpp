#pragma once

#include <fftw3.h>

#include <Eigen/Core>
#include <string>

namespace geoflow {

inline constexpr const char* kVersion = "0.1.0";

/// Library and dependency versions, one `name version` pair per line.
inline std::string version_lines() {
  return std::string("geoflow ") + kVersion + "\neigen " + std::to_string(EIGEN_WORLD_VERSION) + "." +
         std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION) + "\nfftw " +
         std::string(fftw_version) + "\n";
}

}  // namespace geoflow
