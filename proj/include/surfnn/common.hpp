#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace surfnn {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Index3 = std::array<int, 3>;
using Face = std::array<int, 3>;

// Failure categories; the CLI maps them onto exit codes 2, 3 and 4.
enum class ErrorKind { Input, Numerical, Topology };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InputError : Error {
  explicit InputError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

struct TopologyError : Error {
  explicit TopologyError(const std::string& what) : Error(ErrorKind::Topology, what) {}
};

enum class Reduction { Sum, Mean };

template <typename T>
inline T zero_value() {
  if constexpr (std::is_arithmetic_v<T>) {
    return T(0);
  } else {
    return T::Zero();
  }
}

}  // namespace surfnn
