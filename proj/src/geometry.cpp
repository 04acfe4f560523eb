#include "rumpl/geometry.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "rumpl/errors.hpp"
#include "rumpl/skeleton.hpp"

namespace rumpl {

namespace {

constexpr double kRotationTol = 1e-9;
constexpr double kMinDepth = 1e-9;
constexpr double kDegenerateRatio = 1e-10;

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

// Distance from pixel p to the line l (a·u + b·v + c = 0).
double point_line_distance(const Vec2& p, const Vec3& l) {
  const double n = std::hypot(l.x(), l.y());
  if (n == 0.0) return 0.0;
  return std::abs(l.x() * p.x() + l.y() * p.y() + l.z()) / n;
}

}  // namespace

void CameraCalib::validate() const {
  if (!K.allFinite() || !R.allFinite() || !T.allFinite()) {
    throw CalibrationError("calibration contains non-finite values");
  }
  const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > kRotationTol || std::abs(R.determinant() - 1.0) > kRotationTol) {
    throw CalibrationError("R is not a proper rotation (orthonormality error " + std::to_string(ortho) + ")");
  }
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0) {
    throw CalibrationError("K must be upper triangular with K[2][2] = 1");
  }
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0)) {
    throw CalibrationError("K focal lengths must be positive");
  }
}

Points3 to_homogeneous(const Pixels& pixels) {
  if (!pixels.allFinite()) throw InvalidInput("to_homogeneous: non-finite pixel coordinates");
  Points3 out(pixels.rows(), 3);
  out.leftCols<2>() = pixels;
  out.col(2).setOnes();
  return out;
}

RaySet pixels_to_rays(const Pixels& pixels, const CameraCalib& calib, bool normalize) {
  const Points3 hom = to_homogeneous(pixels);
  const Eigen::FullPivLU<Mat3> lu(calib.K);
  if (!lu.isInvertible()) throw CalibrationError("pixels_to_rays: singular intrinsic matrix");
  // D = Rᵀ·K⁻¹·P_homᵀ, one column per keypoint.
  const Eigen::Matrix<double, 3, Eigen::Dynamic> dirs = calib.R.transpose() * lu.solve(hom.transpose());
  RaySet rays(static_cast<size_t>(pixels.rows()));
  for (Eigen::Index j = 0; j < pixels.rows(); ++j) {
    rays[j].origin = calib.T;
    rays[j].direction = dirs.col(j);
    if (normalize) rays[j].direction.normalize();
  }
  return rays;
}

double camera_depth(const Vec3& X, const CameraCalib& calib) { return calib.R.row(2).dot(X - calib.T); }

Vec2 project(const Vec3& X, const CameraCalib& calib) {
  const Vec3 cam = calib.R * (X - calib.T);
  if (!(cam.z() > kMinDepth)) throw BehindCamera("project: point is behind the camera");
  const Vec3 h = calib.K * cam;
  return h.head<2>() / h.z();
}

Eigen::Matrix<double, 3, 4> projection_matrix(const CameraCalib& calib) {
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = calib.R;
  rt.col(3) = -calib.R * calib.T;
  return calib.K * rt;
}

Vec3 triangulate_dlt(std::span<const Vec2> pixels, std::span<const CameraCalib> calibs,
                     std::span<const double> weights) {
  if (pixels.size() != calibs.size() || pixels.size() != weights.size()) {
    throw InvalidInput("triangulate_dlt: pixels, calibrations and weights differ in length");
  }
  int usable = 0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("triangulate_dlt: weights must be finite and >= 0");
    if (w > 0.0) ++usable;
  }
  if (usable < 2) throw InsufficientViews("triangulate_dlt: need at least two views with positive weight");

  Eigen::Matrix<double, Eigen::Dynamic, 4> A(2 * usable, 4);
  int row = 0;
  for (size_t i = 0; i < pixels.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    const auto P = projection_matrix(calibs[i]);
    A.row(row++) = weights[i] * (pixels[i].x() * P.row(2) - P.row(0));
    A.row(row++) = weights[i] * (pixels[i].y() * P.row(2) - P.row(1));
  }
  if (!(A.cwiseAbs().maxCoeff() > 0.0)) throw DegenerateGeometry("triangulate_dlt: all constraint rows vanish");

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s.size() < 4 || s(2) < kDegenerateRatio * s(0)) {
    throw DegenerateGeometry("triangulate_dlt: rank-deficient system (parallel rays)");
  }
  const Eigen::Vector4d X = svd.matrixV().col(3);
  if (std::abs(X(3)) < kDegenerateRatio * X.head<3>().norm()) {
    throw DegenerateGeometry("triangulate_dlt: solution at infinity");
  }
  return X.head<3>() / X(3);
}

double point_ray_distance(const Vec3& X, const Ray& ray) {
  const double n = ray.direction.norm();
  if (!(n > 1e-12)) throw InvalidInput("point_ray_distance: zero ray direction");
  const Vec3 u = ray.direction / n;
  const Vec3 d = X - ray.origin;
  return (d - d.dot(u) * u).norm();
}

Mat3 fundamental_matrix(const CameraCalib& a, const CameraCalib& b) {
  if ((a.T - b.T).norm() < 1e-12) throw DegenerateGeometry("fundamental_matrix: coincident camera centers");
  // x_b = R_rel·x_a + t_rel in camera coordinates.
  const Mat3 R_rel = b.R * a.R.transpose();
  const Vec3 t_rel = b.R * (a.T - b.T);
  const Mat3 E = skew(t_rel) * R_rel;
  return b.K.inverse().transpose() * E * a.K.inverse();
}

double epipolar_error(const Pose2D& pose_a, const CameraCalib& calib_a, const Pose2D& pose_b,
                      const CameraCalib& calib_b) {
  if (pose_a.size() != pose_b.size()) throw InvalidInput("epipolar_error: keypoint counts differ");
  if (pose_a.size() == 0) throw InvalidInput("epipolar_error: empty poses");
  const Mat3 F = fundamental_matrix(calib_a, calib_b);

  double weighted = 0.0, weight_sum = 0.0, plain = 0.0;
  for (int j = 0; j < pose_a.size(); ++j) {
    const Vec2 pa = pose_a.pixels.row(j).transpose();
    const Vec2 pb = pose_b.pixels.row(j).transpose();
    const Vec3 ha(pa.x(), pa.y(), 1.0), hb(pb.x(), pb.y(), 1.0);
    const double d = 0.5 * (point_line_distance(pb, F * ha) + point_line_distance(pa, F.transpose() * hb));
    const double w = std::min(pose_a.conf(j), pose_b.conf(j));
    weighted += w * d;
    weight_sum += w;
    plain += d;
  }
  if (weight_sum > 0.0) return weighted / weight_sum;
  return plain / pose_a.size();
}

Mat3 look_at_rotation(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 up = Vec3::UnitZ();
  if (forward.cross(up).norm() < 1e-6) up = Vec3::UnitY();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 R;
  R.row(0) = right.transpose();
  R.row(1) = down.transpose();
  R.row(2) = forward.transpose();
  return R;
}

}  // namespace rumpl
