#include "nfpose/rotation.hpp"

#include <cmath>

namespace nfpose {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::UnknownPart: return "UnknownPart";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NonInvertibleLayer: return "NonInvertibleLayer";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DivergedTraining: return "DivergedTraining";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::NegativeScale: return "NegativeScale";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::RepresentationMismatch: return "RepresentationMismatch";
    case ErrorCode::NoActiveTerms: return "NoActiveTerms";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::AllStartsDiverged: return "AllStartsDiverged";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::string_view to_string(Representation r) {
  return r == Representation::AngleAxis ? "angle_axis" : "rot6d";
}

Representation representation_from_string(std::string_view s) {
  if (s == "angle_axis" || s == "aa") return Representation::AngleAxis;
  if (s == "rot6d" || s == "6d") return Representation::Rot6D;
  throw Error(ErrorCode::ConfigError, "unknown representation '" + std::string(s) + "'");
}

Mat3 skew(const Vec3& v) {
  Mat3 k;
  k << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return k;
}

namespace {

constexpr double kSmallAngle = 1e-8;
// Below this angle the derivative coefficients switch to their series.
constexpr double kSeriesAngle = 5e-2;

// R = I + a K + b K^2 with a = sin(t)/t, b = (1 - cos t)/t^2.
struct RodriguesCoeffs {
  double a, b;
  // da/dt / t and db/dt / t
  double da, db;
};

RodriguesCoeffs rodrigues_coeffs(double t) {
  RodriguesCoeffs c{};
  const double t2 = t * t;
  if (t < kSmallAngle) {
    c.a = 1.0 - t2 / 6.0;
    c.b = 0.5 - t2 / 24.0;
  } else {
    c.a = std::sin(t) / t;
    const double h = std::sin(0.5 * t) / t;
    c.b = 2.0 * h * h;
  }
  if (t < kSeriesAngle) {
    const double t4 = t2 * t2;
    c.da = -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0 + t4 * t2 / 45360.0;
    c.db = -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0 + t4 * t2 / 453600.0;
  } else {
    const double s = std::sin(t), co = std::cos(t);
    c.da = (t * co - s) / (t2 * t);
    c.db = (t * s - 2.0 * (1.0 - co)) / (t2 * t2);
  }
  return c;
}

}  // namespace

Mat3 angle_axis_to_matrix(const Vec3& v) {
  const RodriguesCoeffs c = rodrigues_coeffs(v.norm());
  const Mat3 k = skew(v);
  return Mat3::Identity() + c.a * k + c.b * (k * k);
}

std::array<Mat3, 3> angle_axis_jacobian(const Vec3& v) {
  const RodriguesCoeffs c = rodrigues_coeffs(v.norm());
  const Mat3 k = skew(v);
  const Mat3 k2 = k * k;
  std::array<Mat3, 3> out;
  for (int i = 0; i < 3; ++i) {
    const Mat3 ki = skew(Vec3::Unit(i));
    out[i] = (c.da * v[i]) * k + c.a * ki + (c.db * v[i]) * k2 + c.b * (ki * k + k * ki);
  }
  return out;
}

Vec3 angle_axis_adjoint(const Vec3& v, const Mat3& dR) {
  const auto jac = angle_axis_jacobian(v);
  return {(jac[0].array() * dR.array()).sum(), (jac[1].array() * dR.array()).sum(),
          (jac[2].array() * dR.array()).sum()};
}

namespace {

constexpr double kDegenerate6D = 1e-8;

struct GramSchmidt {
  double na, nu;
  Vec3 c1, u, c2, c3;
};

GramSchmidt gram_schmidt(const Rot6D& r) {
  GramSchmidt g{};
  g.na = r.a.norm();
  if (!(g.na >= kDegenerate6D)) throw Error(ErrorCode::DegenerateInput, "6D first column too small");
  g.c1 = r.a / g.na;
  g.u = r.b - g.c1.dot(r.b) * g.c1;
  g.nu = g.u.norm();
  if (!(g.nu >= kDegenerate6D)) throw Error(ErrorCode::DegenerateInput, "6D columns are parallel");
  g.c2 = g.u / g.nu;
  g.c3 = g.c1.cross(g.c2);
  return g;
}

}  // namespace

Mat3 rot6d_to_matrix(const Rot6D& r) {
  const GramSchmidt g = gram_schmidt(r);
  Mat3 m;
  m.col(0) = g.c1;
  m.col(1) = g.c2;
  m.col(2) = g.c3;
  return m;
}

std::pair<Vec3, Vec3> rot6d_adjoint(const Rot6D& r, const Mat3& dR) {
  const GramSchmidt g = gram_schmidt(r);
  Vec3 dc1 = dR.col(0);
  Vec3 dc2 = dR.col(1);
  const Vec3 dc3 = dR.col(2);
  // c3 = c1 x c2
  dc1 += g.c2.cross(dc3);
  dc2 += dc3.cross(g.c1);
  // c2 = u / |u|
  const Vec3 du = (dc2 - g.c2 * g.c2.dot(dc2)) / g.nu;
  // u = b - (c1.b) c1
  const double c1b = g.c1.dot(r.b);
  const Vec3 db = du - g.c1 * g.c1.dot(du);
  dc1 += -c1b * du - g.c1.dot(du) * r.b;
  // c1 = a / |a|
  const Vec3 da = (dc1 - g.c1 * g.c1.dot(dc1)) / g.na;
  return {da, db};
}

Rot6D matrix_to_rot6d(const Mat3& m) { return Rot6D{m.col(0), m.col(1)}; }

Vec3 matrix_to_angle_axis(const Mat3& m) {
  const Vec3 w(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  const double sin_t = 0.5 * w.norm();
  const double cos_t = 0.5 * (m.trace() - 1.0);
  const double t = std::atan2(sin_t, cos_t);
  if (t < 1e-7) {
    // R - R^T = 2 sin(t) [axis]x, and sin(t)/t -> 1.
    return 0.5 * w;
  }
  if (t < M_PI - 1e-6) {
    return (t / (2.0 * sin_t)) * w;
  }
  // Near pi: axis from the symmetric part, sym(R) = cos(t) I + (1 - cos t) n n^T.
  const Mat3 s = (0.5 * (m + m.transpose()) - cos_t * Mat3::Identity()) / (1.0 - cos_t);
  int k = 0;
  s.diagonal().maxCoeff(&k);
  Vec3 n = s.col(k) / std::sqrt(std::max(s(k, k), 1e-300));
  n.normalize();
  // Residual antisymmetric part fixes the sign when sin(t) is not negligible.
  if (w.dot(n) < 0.0) n = -n;
  if (sin_t < 1e-12) {
    for (int i = 0; i < 3; ++i) {
      if (std::abs(n[i]) > 1e-9) {
        if (n[i] < 0.0) n = -n;
        break;
      }
    }
  }
  return t * n;
}

Mat3 params_to_matrix(Representation rep, std::span<const double> p) {
  if (rep == Representation::AngleAxis) return angle_axis_to_matrix(Vec3(p[0], p[1], p[2]));
  return rot6d_to_matrix(Rot6D{Vec3(p[0], p[1], p[2]), Vec3(p[3], p[4], p[5])});
}

void params_adjoint(Representation rep, std::span<const double> p, const Mat3& dR,
                    std::span<double> grad) {
  if (rep == Representation::AngleAxis) {
    const Vec3 g = angle_axis_adjoint(Vec3(p[0], p[1], p[2]), dR);
    for (int i = 0; i < 3; ++i) grad[i] += g[i];
    return;
  }
  const auto [ga, gb] = rot6d_adjoint(Rot6D{Vec3(p[0], p[1], p[2]), Vec3(p[3], p[4], p[5])}, dR);
  for (int i = 0; i < 3; ++i) {
    grad[i] += ga[i];
    grad[3 + i] += gb[i];
  }
}

void matrix_to_params(Representation rep, const Mat3& m, std::span<double> out) {
  if (rep == Representation::AngleAxis) {
    const Vec3 v = matrix_to_angle_axis(m);
    for (int i = 0; i < 3; ++i) out[i] = v[i];
    return;
  }
  for (int i = 0; i < 3; ++i) {
    out[i] = m(i, 0);
    out[3 + i] = m(i, 1);
  }
}

}  // namespace nfpose
