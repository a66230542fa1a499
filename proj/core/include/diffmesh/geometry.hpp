#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diffmesh/tensor.hpp"

namespace diffmesh {

// Triangle list with counter-clockwise winding; fixed per dataset.
struct MeshTopology {
  std::int64_t vertex_count = 0;
  std::vector<std::int64_t> faces;  // F x 3 vertex indices

  std::int64_t face_count() const {
    return static_cast<std::int64_t>(faces.size() / 3);
  }
  void validate() const;  // indices in range, no repeated index per face
};

// Greedy farthest point sampling seeded at index 0. Ties break toward the
// lowest index; the result lists indices in selection order.
std::vector<std::int64_t> farthest_point_sample(std::span<const double> xyz,
                                                std::int64_t count,
                                                std::int64_t k);

struct FaceNormals {
  std::vector<double> normals;  // F x 3 unit vectors, zero rows if degenerate
  std::vector<std::uint8_t> degenerate;
  std::size_t degenerate_count = 0;
};
FaceNormals face_normals(std::span<const double> verts,
                         const MeshTopology& topo);

// Fixed non-negative M x N matrix with rows summing to 1; maps vertices to
// joints as convex combinations.
struct JointRegressor {
  std::int64_t joint_count = 0;
  std::int64_t vertex_count = 0;
  std::vector<double> weights;  // M x N

  void validate() const;
};

std::vector<double> regress_joints(std::span<const double> verts,
                                   const JointRegressor& regressor);
Tensor regress_joints(const Tensor& verts, const JointRegressor& regressor);

struct Camera {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

// Pinhole projection u = fx x/z + cx, v = fy y/z + cy. Throws naming the
// point index when z <= 0.
std::vector<double> project_points(std::span<const double> points,
                                   const Camera& camera);

struct Similarity {
  double scale = 1.0;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  std::array<double, 3> translation{0, 0, 0};
  // False when the cross-covariance was rank-deficient and the fit fell back
  // to translation only.
  bool rotation_valid = true;
};

// Least-squares similarity transform (Umeyama) mapping source onto target;
// rotation is proper (det +1). The 3x3 SVD uses one-sided cyclic Jacobi.
Similarity umeyama_fit(std::span<const double> source,
                       std::span<const double> target, std::int64_t count);

std::array<double, 3> apply_similarity(const Similarity& s, const double* p);
std::vector<double> procrustes_align(std::span<const double> pred,
                                     std::span<const double> gt,
                                     std::int64_t count);

struct Metrics {
  double joint_err = 0.0;      // E_J
  double joint_err_pa = 0.0;   // E_PJ
  double vertex_err = 0.0;     // E_V
  double vertex_err_pa = 0.0;  // E_PV
};

// Mean per joint/vertex position error, with and without Procrustes
// alignment (alignment estimated on the respective point set). Values are in
// the input length units.
Metrics compute_metrics(std::span<const double> pred_verts,
                        std::span<const double> gt_verts, std::int64_t count,
                        const JointRegressor& regressor);

double mean_point_distance(std::span<const double> a,
                           std::span<const double> b, std::int64_t count);

// "v x y z" then "f i j k" lines, 1-based indices, 9 significant digits.
void write_obj(const std::string& path, std::span<const double> verts,
               std::int64_t count, const MeshTopology& topo);

struct ObjData {
  std::vector<double> verts;
  MeshTopology topo;
};
ObjData read_obj(const std::string& path);

}  // namespace diffmesh
