#pragma once

#include "hypalign/geometry.hpp"
#include "hypalign/optim.hpp"
#include "hypalign/point_cloud.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>
#include <variant>
#include <vector>

namespace hypalign::registration {

using geometry::Matrix;
using geometry::Vector;
using geometry::VectorRef;

enum class Nonlinearity { none, relu, elu, tanh };
enum class LayerType { hyperlinear, mobius };

std::string_view to_string(Nonlinearity n);
std::string_view to_string(LayerType t);
Nonlinearity parse_nonlinearity(std::string_view name);
LayerType parse_layer_type(std::string_view name);

/// exp0(W log0(x)) (+) b. W may be rectangular; b lives in the output ball.
struct HyperLinearLayer {
  Matrix W;
  Vector b;
};

/// P (v (+) x) with P in SO(d): an isometry of the ball.
struct MobiusLayer {
  Matrix P;
  Vector v;
};

using Layer = std::variant<HyperLinearLayer, MobiusLayer>;

int layer_in_dim(const Layer& layer);
int layer_out_dim(const Layer& layer);

/// Layers applied in order with the hyperbolic nonlinearity between
/// consecutive layers (never after the last one).
struct RegistrationNetwork {
  std::vector<Layer> layers;
  Nonlinearity nonlinearity = Nonlinearity::elu;
  double margin = geometry::kDefaultMargin;

  /// Throws std::invalid_argument on incompatible adjacent dimensions, a
  /// non-special-orthogonal P or a bias outside the ball.
  void validate() const;
  /// Parameters in layer order: (W, b) or (P, v).
  std::vector<optim::ParamView> parameters();
  std::size_t parameter_count() const;
};

Vector hyper_linear_forward(const HyperLinearLayer& layer, const VectorRef& x,
                            double margin = geometry::kDefaultMargin);
Vector mobius_forward(const MobiusLayer& layer, const VectorRef& x,
                      double margin = geometry::kDefaultMargin);
/// exp0(sigma(log0(x))) with sigma applied coordinatewise; ELU uses alpha = 1.
Vector hyper_nonlinearity(Nonlinearity tag, const VectorRef& x,
                          double margin = geometry::kDefaultMargin);

Vector forward_point(const RegistrationNetwork& net, const VectorRef& x);

/// Push-forward of a cloud: labels and weights are copied unchanged.
PointCloud network_forward(const RegistrationNetwork& net, const PointCloud& X);

struct NetworkGradient {
  /// Same order and shapes as RegistrationNetwork::parameters().
  std::vector<Matrix> params;
  /// One row per input point.
  Points inputs;
};

/// Reverse-mode gradient of sum_i <upstream_i, f(x_i)>.
NetworkGradient network_backward(const RegistrationNetwork& net, const PointCloud& X,
                                 const Points& upstream);

struct ArchSpec {
  int dim = 10;
  int layers = 10;
  int hidden = 20;
  LayerType type = LayerType::hyperlinear;
  Nonlinearity nonlinearity = Nonlinearity::elu;
};

/// Layer dimension sequence: dim -> hidden -> ... -> hidden -> dim for
/// hyperlinear stacks, dim throughout for Mobius stacks.
std::vector<int> layer_dims(const ArchSpec& arch);

/// Near-identity initialization: W = padded identity + N(0, 1e-2) noise,
/// P = orthogonalized identity + small skew part, biases within 1e-3 of the
/// origin.
RegistrationNetwork init_network(const ArchSpec& arch, std::mt19937_64& rng);

}  // namespace hypalign::registration
