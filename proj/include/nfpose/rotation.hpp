#pragma once

#include "nfpose/types.hpp"

#include <array>
#include <span>

namespace nfpose {

// Continuous 6D rotation encoding: the first two columns of a rotation
// matrix, orthonormalised by Gram-Schmidt on decode.
struct Rot6D {
  Vec3 a = Vec3::UnitX();
  Vec3 b = Vec3::UnitY();
};

// Rodrigues. Total function; stable at the origin.
Mat3 angle_axis_to_matrix(const Vec3& v);
// dR/dv_k for k = 0..2.
std::array<Mat3, 3> angle_axis_jacobian(const Vec3& v);
// Pulls back an adjoint dL/dR to dL/dv.
Vec3 angle_axis_adjoint(const Vec3& v, const Mat3& dR);

// Throws DegenerateInput when |a| < 1e-8 or the rejected b is < 1e-8.
Mat3 rot6d_to_matrix(const Rot6D& r);
// Returns (dL/da, dL/db) given dL/dR.
std::pair<Vec3, Vec3> rot6d_adjoint(const Rot6D& r, const Mat3& dR);

Rot6D matrix_to_rot6d(const Mat3& m);

// Angle in [0, pi]. At angle pi the axis sign is canonicalised so that the
// first non-negligible component is positive.
Vec3 matrix_to_angle_axis(const Mat3& m);

// Representation-generic views over a flat parameter slice of length
// rotation_dim(rep).
Mat3 params_to_matrix(Representation rep, std::span<const double> p);
// Accumulates dL/dp into `grad` (same length as p).
void params_adjoint(Representation rep, std::span<const double> p, const Mat3& dR,
                    std::span<double> grad);
void matrix_to_params(Representation rep, const Mat3& m, std::span<double> out);

Mat3 skew(const Vec3& v);

}  // namespace nfpose
