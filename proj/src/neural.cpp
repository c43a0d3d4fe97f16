#include "mfac/neural.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

#include "mfac/random.hpp"

namespace mfac {

static_assert(std::endian::native == std::endian::little,
              "binary checkpoints assume a little-endian host");

TwoLayerNet TwoLayerNet::initialize(int width, int in_dim, double radius, std::uint64_t seed) {
  if (width < 1 || in_dim < 1) throw std::invalid_argument("net width and input dim must be >= 1");
  if (!(radius >= 0.0)) throw std::invalid_argument("projection radius must be non-negative");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in_dim)));
  TwoLayerNet net;
  net.weights_.resize(width, in_dim);
  net.signs_.resize(static_cast<std::size_t>(width));
  for (int m = 0; m < width; ++m) {
    for (int j = 0; j < in_dim; ++j) net.weights_(m, j) = normal(rng);
    net.signs_[static_cast<std::size_t>(m)] = (rng() >> 63) ? 1 : -1;
  }
  net.init_weights_ = net.weights_;
  net.radius_ = radius;
  net.seed_ = seed;
  return net;
}

TwoLayerNet TwoLayerNet::from_parameters(Matrix weights, std::vector<int> signs, double radius,
                                         Matrix init_weights, std::uint64_t seed) {
  if (weights.rows() < 1 || weights.cols() < 1) throw std::invalid_argument("empty weight matrix");
  if (static_cast<Eigen::Index>(signs.size()) != weights.rows())
    throw std::invalid_argument("one output sign per hidden unit is required");
  for (int b : signs)
    if (b != 1 && b != -1) throw std::invalid_argument("output signs must be +1 or -1");
  if (init_weights.size() == 0) init_weights = weights;
  if (init_weights.rows() != weights.rows() || init_weights.cols() != weights.cols())
    throw std::invalid_argument("initial weights differ in shape");
  TwoLayerNet net;
  net.weights_ = std::move(weights);
  net.init_weights_ = std::move(init_weights);
  net.signs_ = std::move(signs);
  net.radius_ = radius;
  net.seed_ = seed;
  return net;
}

double TwoLayerNet::box_half_width() const {
  return radius_ / std::sqrt(static_cast<double>(width()));
}

void TwoLayerNet::check_input(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) != weights_.cols())
    throw std::invalid_argument("net input has dimension " + std::to_string(x.size()) +
                                ", expected " + std::to_string(weights_.cols()));
}

double TwoLayerNet::forward(std::span<const double> x) const {
  check_input(x);
  Eigen::Map<const Vector> input(x.data(), static_cast<Eigen::Index>(x.size()));
  const Vector pre = weights_ * input;
  double sum = 0.0;
  for (Eigen::Index m = 0; m < pre.size(); ++m)
    if (pre[m] > 0.0) sum += signs_[static_cast<std::size_t>(m)] * pre[m];
  return sum / std::sqrt(static_cast<double>(width()));
}

Matrix TwoLayerNet::feature_map(std::span<const double> x) const {
  check_input(x);
  Eigen::Map<const Vector> input(x.data(), static_cast<Eigen::Index>(x.size()));
  const Vector pre = weights_ * input;
  const double scale = 1.0 / std::sqrt(static_cast<double>(width()));
  Matrix phi = Matrix::Zero(weights_.rows(), weights_.cols());
  for (Eigen::Index m = 0; m < pre.size(); ++m)
    if (pre[m] > 0.0) phi.row(m) = (signs_[static_cast<std::size_t>(m)] * scale) * input.transpose();
  return phi;
}

Matrix TwoLayerNet::project(const Matrix& proposed) const {
  if (proposed.rows() != weights_.rows() || proposed.cols() != weights_.cols())
    throw std::invalid_argument("proposed weights differ in shape");
  const double half = box_half_width();
  return proposed.array()
      .max(init_weights_.array() - half)
      .min(init_weights_.array() + half)
      .matrix();
}

void TwoLayerNet::set_weights_projected(const Matrix& proposed) { weights_ = project(proposed); }

TwoLayerNet TwoLayerNet::with_weights(const Matrix& weights) const {
  if (weights.rows() != weights_.rows() || weights.cols() != weights_.cols())
    throw std::invalid_argument("weights differ in shape");
  TwoLayerNet copy = *this;
  copy.weights_ = weights;
  return copy;
}

double TwoLayerNet::max_deviation() const {
  return (weights_ - init_weights_).cwiseAbs().maxCoeff();
}

namespace {

std::vector<double> flatten(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

Matrix unflatten(const std::vector<double>& v, int rows, int cols) {
  if (v.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw std::invalid_argument("checkpoint weight array has the wrong length");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw std::runtime_error("truncated net checkpoint");
  return value;
}

constexpr char kMagic[8] = {'M', 'F', 'A', 'C', 'N', 'E', 'T', '1'};

}  // namespace

std::string TwoLayerNet::to_json() const {
  nlohmann::ordered_json j;
  j["width"] = width();
  j["in_dim"] = in_dim();
  j["radius"] = radius_;
  j["seed"] = seed_;
  j["weights"] = flatten(weights_);
  j["init_weights"] = flatten(init_weights_);
  j["signs"] = signs_;
  return j.dump();
}

TwoLayerNet TwoLayerNet::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const int rows = j.at("width").get<int>();
  const int cols = j.at("in_dim").get<int>();
  return from_parameters(unflatten(j.at("weights").get<std::vector<double>>(), rows, cols),
                         j.at("signs").get<std::vector<int>>(), j.at("radius").get<double>(),
                         unflatten(j.at("init_weights").get<std::vector<double>>(), rows, cols),
                         j.at("seed").get<std::uint64_t>());
}

void TwoLayerNet::write_binary(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(width()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(in_dim()));
  put<double>(out, radius_);
  put<std::uint64_t>(out, seed_);
  out.write(reinterpret_cast<const char*>(weights_.data()),
            static_cast<std::streamsize>(weights_.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(init_weights_.data()),
            static_cast<std::streamsize>(init_weights_.size() * sizeof(double)));
  for (int b : signs_) put<std::int8_t>(out, static_cast<std::int8_t>(b));
}

TwoLayerNet TwoLayerNet::read_binary(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a net checkpoint (bad magic)");
  const auto rows = static_cast<int>(get<std::uint32_t>(in));
  const auto cols = static_cast<int>(get<std::uint32_t>(in));
  const double radius = get<double>(in);
  const auto seed = get<std::uint64_t>(in);
  Matrix weights(rows, cols), init(rows, cols);
  const auto bytes = static_cast<std::streamsize>(weights.size() * sizeof(double));
  if (!in.read(reinterpret_cast<char*>(weights.data()), bytes) ||
      !in.read(reinterpret_cast<char*>(init.data()), bytes))
    throw std::runtime_error("truncated net checkpoint");
  std::vector<int> signs(static_cast<std::size_t>(rows));
  for (auto& b : signs) b = get<std::int8_t>(in);
  return from_parameters(std::move(weights), std::move(signs), radius, std::move(init), seed);
}

}  // namespace mfac
