#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mfac {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Two-layer ReLU network f(x) = (1/sqrt(M)) sum_m b_m ReLU(x . W_m) with a
/// frozen +-1 output layer b. Only W is trained; every update is clamped
/// into the box |W - W(0)| <= R / sqrt(M) around the frozen initialization.
class TwoLayerNet {
 public:
  TwoLayerNet() = default;

  /// Rows of W(0) ~ Normal(0, I_d / d), b_m ~ Unif{-1, +1}, from a dedicated
  /// generator seeded with `seed`.
  static TwoLayerNet initialize(int width, int in_dim, double radius, std::uint64_t seed);

  /// Assembles a net from explicit parameters (checkpoints, tests). The
  /// initialization defaults to `weights` when `init_weights` is empty.
  static TwoLayerNet from_parameters(Matrix weights, std::vector<int> signs, double radius,
                                     Matrix init_weights = {}, std::uint64_t seed = 0);

  int width() const { return static_cast<int>(weights_.rows()); }
  int in_dim() const { return static_cast<int>(weights_.cols()); }
  double radius() const { return radius_; }
  std::uint64_t seed() const { return seed_; }
  /// R / sqrt(M), the per-coordinate half-width of the projection box.
  double box_half_width() const;

  const Matrix& weights() const { return weights_; }
  const Matrix& init_weights() const { return init_weights_; }
  const std::vector<int>& signs() const { return signs_; }

  /// Throws std::invalid_argument on dimension mismatch.
  double forward(std::span<const double> x) const;

  /// Row m = (b_m / sqrt(M)) 1{x . W_m > 0} x, the gradient of forward in W.
  /// Pre-activations exactly at zero count as inactive.
  Matrix feature_map(std::span<const double> x) const;

  /// Per-coordinate clamp of `proposed` into the box around W(0), which is the
  /// Euclidean projection onto that box.
  Matrix project(const Matrix& proposed) const;

  /// Replaces W with the projection of `proposed`.
  void set_weights_projected(const Matrix& proposed);

  /// Same net with W replaced verbatim (no projection); used for averaged
  /// iterates that are convex combinations of in-box points.
  TwoLayerNet with_weights(const Matrix& weights) const;

  /// max |W - W(0)|.
  double max_deviation() const;

  // Checkpoint formats. JSON keeps every field by name. The binary form is
  // little-endian throughout:
  //   8 bytes magic "MFACNET1"
  //   u32 M, u32 d, f64 R, u64 seed
  //   M*d f64 weights (row-major), M*d f64 initial weights (row-major)
  //   M   i8  signs
  std::string to_json() const;
  static TwoLayerNet from_json(const std::string& text);
  void write_binary(std::ostream& out) const;
  static TwoLayerNet read_binary(std::istream& in);

 private:
  void check_input(std::span<const double> x) const;

  Matrix weights_;
  Matrix init_weights_;
  std::vector<int> signs_;
  double radius_ = 0.0;
  std::uint64_t seed_ = 0;
};

}  // namespace mfac
