#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace nfpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
// Row-major N x 3 / N x 2 point sets. Rows are points.
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

enum class ErrorCode {
  DimensionMismatch,
  DegenerateInput,
  UnknownPart,
  InvalidConfig,
  NonInvertibleLayer,
  EmptyDataset,
  DivergedTraining,
  SingularCovariance,
  BehindCamera,
  DegenerateConfiguration,
  NegativeScale,
  EmptyMask,
  RepresentationMismatch,
  NoActiveTerms,
  TooFewFrames,
  NonFiniteValue,
  AllStartsDiverged,
  IoError,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Representation { AngleAxis, Rot6D };

constexpr int rotation_dim(Representation r) { return r == Representation::AngleAxis ? 3 : 6; }
std::string_view to_string(Representation r);
Representation representation_from_string(std::string_view s);

}  // namespace nfpose
