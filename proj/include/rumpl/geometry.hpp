#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace rumpl {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// M×2 pixel coordinates, one keypoint per row.
using Pixels = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
/// M×3 coordinates, one point per row.
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Pinhole view. A world point X maps to camera coordinates R·(X − T) and to
/// pixels by K·x_cam divided by depth. T is the camera center in world meters.
struct CameraCalib {
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 T = Vec3::Zero();

  /// Throws CalibrationError unless R is a proper rotation and K an upper
  /// triangular intrinsic matrix with positive focal lengths.
  void validate() const;
};

/// Line through `origin` along `direction` (not normalized).
struct Ray {
  Vec3 origin;
  Vec3 direction;
};

using RaySet = std::vector<Ray>;

Points3 to_homogeneous(const Pixels& pixels);

/// Each keypoint becomes the ray from the camera center through the pixel:
/// origin T, direction Rᵀ·K⁻¹·(u, v, 1). Directions keep their magnitude
/// unless `normalize` is set.
RaySet pixels_to_rays(const Pixels& pixels, const CameraCalib& calib, bool normalize = false);

/// Depth of X along the optical axis.
double camera_depth(const Vec3& X, const CameraCalib& calib);

/// Throws BehindCamera when the depth is ≤ 1e-9.
Vec2 project(const Vec3& X, const CameraCalib& calib);

/// 3×4 projection matrix K·R·[I | −T].
Eigen::Matrix<double, 3, 4> projection_matrix(const CameraCalib& calib);

/// Weighted linear triangulation. Each view contributes the two rows of
/// p × (P·X) = 0 scaled by its weight; the SVD null vector is returned.
/// Throws InsufficientViews when fewer than two weights are positive and
/// DegenerateGeometry when the system is rank deficient.
Vec3 triangulate_dlt(std::span<const Vec2> pixels, std::span<const CameraCalib> calibs,
                     std::span<const double> weights);

double point_ray_distance(const Vec3& X, const Ray& ray);

/// F with p_bᵀ·F·p_a = 0 for corresponding pixels.
Mat3 fundamental_matrix(const CameraCalib& a, const CameraCalib& b);

struct Pose2D;

/// Confidence-weighted mean of the symmetric point-to-epipolar-line distance
/// in pixels. Each keypoint is weighted by min(conf_a, conf_b); with all
/// weights zero the plain mean is used.
double epipolar_error(const Pose2D& pose_a, const CameraCalib& calib_a, const Pose2D& pose_b,
                      const CameraCalib& calib_b);

/// Rotation whose rows are the camera axes (right, down, forward) for a camera
/// at `eye` looking at `target` with world +z as up.
Mat3 look_at_rotation(const Vec3& eye, const Vec3& target);

}  // namespace rumpl
