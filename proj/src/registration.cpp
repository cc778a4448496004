#include "hypalign/registration.hpp"

#include "hypalign/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hypalign::registration {

namespace geo = geometry;

std::string_view to_string(Nonlinearity n) {
  switch (n) {
    case Nonlinearity::none: return "none";
    case Nonlinearity::relu: return "relu";
    case Nonlinearity::elu: return "elu";
    case Nonlinearity::tanh: return "tanh";
  }
  throw std::invalid_argument("unknown nonlinearity");
}

std::string_view to_string(LayerType t) {
  return t == LayerType::hyperlinear ? "hyperlinear" : "mobius";
}

Nonlinearity parse_nonlinearity(std::string_view name) {
  for (auto n : {Nonlinearity::none, Nonlinearity::relu, Nonlinearity::elu, Nonlinearity::tanh}) {
    if (to_string(n) == name) return n;
  }
  throw std::invalid_argument("unknown nonlinearity '" + std::string(name) + "'");
}

LayerType parse_layer_type(std::string_view name) {
  if (name == "hyperlinear") return LayerType::hyperlinear;
  if (name == "mobius") return LayerType::mobius;
  throw std::invalid_argument("unknown layer type '" + std::string(name) + "'");
}

int layer_in_dim(const Layer& layer) {
  if (const auto* h = std::get_if<HyperLinearLayer>(&layer)) return static_cast<int>(h->W.cols());
  return static_cast<int>(std::get<MobiusLayer>(layer).P.cols());
}

int layer_out_dim(const Layer& layer) {
  if (const auto* h = std::get_if<HyperLinearLayer>(&layer)) return static_cast<int>(h->W.rows());
  return static_cast<int>(std::get<MobiusLayer>(layer).P.rows());
}

void RegistrationNetwork::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string where = "layer " + std::to_string(l) + ": ";
    if (const auto* h = std::get_if<HyperLinearLayer>(&layers[l])) {
      if (h->W.rows() != h->b.size()) throw std::invalid_argument(where + "bias/weight mismatch");
      if (!h->W.allFinite()) throw std::invalid_argument(where + "non-finite weights");
      if (!(h->b.squaredNorm() < 1.0)) throw std::invalid_argument(where + "bias outside ball");
    } else {
      const auto& m = std::get<MobiusLayer>(layers[l]);
      if (m.P.rows() != m.v.size()) throw std::invalid_argument(where + "P/v mismatch");
      if (!geo::is_special_orthogonal(m.P)) {
        throw std::invalid_argument(where + "P is not special orthogonal");
      }
      if (!(m.v.squaredNorm() < 1.0)) throw std::invalid_argument(where + "v outside ball");
    }
    if (l > 0 && layer_in_dim(layers[l]) != layer_out_dim(layers[l - 1])) {
      throw std::invalid_argument(where + "input dimension does not match previous layer");
    }
  }
  if (!layers.empty() && layer_in_dim(layers.front()) != layer_out_dim(layers.back())) {
    throw std::invalid_argument("network input and output dimensions differ");
  }
}

std::vector<optim::ParamView> RegistrationNetwork::parameters() {
  std::vector<optim::ParamView> out;
  for (auto& layer : layers) {
    if (auto* h = std::get_if<HyperLinearLayer>(&layer)) {
      out.push_back({optim::Manifold::euclidean,
                     Eigen::Map<Matrix>(h->W.data(), h->W.rows(), h->W.cols())});
      out.push_back({optim::Manifold::ball, Eigen::Map<Matrix>(h->b.data(), h->b.size(), 1)});
    } else {
      auto& m = std::get<MobiusLayer>(layer);
      out.push_back({optim::Manifold::stiefel_special,
                     Eigen::Map<Matrix>(m.P.data(), m.P.rows(), m.P.cols())});
      out.push_back({optim::Manifold::ball, Eigen::Map<Matrix>(m.v.data(), m.v.size(), 1)});
    }
  }
  return out;
}

std::size_t RegistrationNetwork::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers) {
    if (const auto* h = std::get_if<HyperLinearLayer>(&layer)) {
      count += static_cast<std::size_t>(h->W.size() + h->b.size());
    } else {
      const auto& m = std::get<MobiusLayer>(layer);
      count += static_cast<std::size_t>(m.P.size() + m.v.size());
    }
  }
  return count;
}

namespace {

double activate(Nonlinearity tag, double s) {
  switch (tag) {
    case Nonlinearity::none: return s;
    case Nonlinearity::relu: return s > 0.0 ? s : 0.0;
    case Nonlinearity::elu: return s > 0.0 ? s : std::expm1(s);
    case Nonlinearity::tanh: return std::tanh(s);
  }
  return s;
}

double activate_slope(Nonlinearity tag, double s) {
  switch (tag) {
    case Nonlinearity::none: return 1.0;
    case Nonlinearity::relu: return s > 0.0 ? 1.0 : 0.0;
    case Nonlinearity::elu: return s > 0.0 ? 1.0 : std::exp(s);
    case Nonlinearity::tanh: {
      const double t = std::tanh(s);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

// Intermediate values of one layer (plus the following nonlinearity).
struct LayerTape {
  Vector input;
  Vector z;       // log0(input)            (hyperlinear)
  Vector pre;     // W z                    (hyperlinear)
  Vector e;       // exp0(W z)              (hyperlinear)
  Vector w;       // v (+) input            (mobius)
  Vector rotated; // P w before the guard   (mobius)
  Vector out;     // layer output
  bool has_act = false;
  Vector s;       // log0(out)
  Vector q;       // sigma(s)
};

void check_input_dim(const RegistrationNetwork& net, Eigen::Index d) {
  if (!net.layers.empty() && layer_in_dim(net.layers.front()) != d) {
    throw std::invalid_argument("network expects dimension " +
                                std::to_string(layer_in_dim(net.layers.front())) + ", got " +
                                std::to_string(d));
  }
}

std::vector<LayerTape> record(const RegistrationNetwork& net, const VectorRef& x) {
  std::vector<LayerTape> tape(net.layers.size());
  Vector h = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    LayerTape& t = tape[l];
    t.input = h;
    if (const auto* hl = std::get_if<HyperLinearLayer>(&net.layers[l])) {
      t.z = geo::log0(h);
      t.pre = hl->W * t.z;
      t.e = geo::exp0(t.pre, net.margin);
      t.out = geo::mobius_add(t.e, hl->b, net.margin);
    } else {
      const auto& m = std::get<MobiusLayer>(net.layers[l]);
      t.w = geo::mobius_add(m.v, h, net.margin);
      t.rotated = m.P * t.w;
      t.out = geo::project_to_ball(t.rotated, net.margin);
    }
    h = t.out;
    t.has_act = l + 1 < net.layers.size() && net.nonlinearity != Nonlinearity::none;
    if (t.has_act) {
      t.s = geo::log0(h);
      t.q = t.s.unaryExpr([&](double s) { return activate(net.nonlinearity, s); });
      h = geo::exp0(t.q, net.margin);
    }
  }
  return tape;
}

}  // namespace

Vector hyper_linear_forward(const HyperLinearLayer& layer, const VectorRef& x, double margin) {
  if (layer.W.cols() != x.size() || layer.W.rows() != layer.b.size()) {
    throw std::invalid_argument("hyperlinear layer: dimension mismatch");
  }
  return geo::mobius_add(geo::exp0(layer.W * geo::log0(x), margin), layer.b, margin);
}

Vector mobius_forward(const MobiusLayer& layer, const VectorRef& x, double margin) {
  if (layer.P.cols() != x.size() || layer.v.size() != x.size()) {
    throw std::invalid_argument("mobius layer: dimension mismatch");
  }
  return geo::apply_isometry(layer.P, layer.v, x, margin);
}

Vector hyper_nonlinearity(Nonlinearity tag, const VectorRef& x, double margin) {
  if (tag == Nonlinearity::none) return x;
  const Vector s = geo::log0(x);
  return geo::exp0(s.unaryExpr([&](double v) { return activate(tag, v); }), margin);
}

Vector forward_point(const RegistrationNetwork& net, const VectorRef& x) {
  check_input_dim(net, x.size());
  if (net.layers.empty()) return x;
  auto tape = record(net, x);
  return tape.back().out;
}

PointCloud network_forward(const RegistrationNetwork& net, const PointCloud& X) {
  check_input_dim(net, X.dim());
  PointCloud out;
  out.labels = X.labels;
  out.weights = X.weights;
  if (net.layers.empty()) {
    out.points = X.points;
    return out;
  }
  out.points.resize(X.points.rows(), layer_out_dim(net.layers.back()));
  parallel_for(X.size(), [&](std::size_t i) {
    out.points.row(static_cast<Eigen::Index>(i)) = forward_point(net, X.point(i)).transpose();
  });
  return out;
}

NetworkGradient network_backward(const RegistrationNetwork& net, const PointCloud& X,
                                 const Points& upstream) {
  check_input_dim(net, X.dim());
  const int out_dim = net.layers.empty() ? X.dim() : layer_out_dim(net.layers.back());
  if (upstream.rows() != X.points.rows() || upstream.cols() != out_dim) {
    throw std::invalid_argument("network_backward: upstream gradient shape mismatch");
  }

  NetworkGradient grad;
  for (const auto& layer : net.layers) {
    if (const auto* hl = std::get_if<HyperLinearLayer>(&layer)) {
      grad.params.push_back(Matrix::Zero(hl->W.rows(), hl->W.cols()));
      grad.params.push_back(Matrix::Zero(hl->b.size(), 1));
    } else {
      const auto& m = std::get<MobiusLayer>(layer);
      grad.params.push_back(Matrix::Zero(m.P.rows(), m.P.cols()));
      grad.params.push_back(Matrix::Zero(m.v.size(), 1));
    }
  }
  grad.inputs = Points::Zero(X.points.rows(), X.points.cols());

  // Points are processed in order so parameter sums are reproducible.
  for (std::size_t i = 0; i < X.size(); ++i) {
    const auto tape = record(net, X.point(i));
    Vector g = upstream.row(static_cast<Eigen::Index>(i)).transpose();
    for (std::size_t l = net.layers.size(); l-- > 0;) {
      const LayerTape& t = tape[l];
      if (t.has_act) {
        Vector gq = geo::exp0_vjp(t.q, g, net.margin);
        for (Eigen::Index k = 0; k < gq.size(); ++k) {
          gq[k] *= activate_slope(net.nonlinearity, t.s[k]);
        }
        g = geo::log0_vjp(t.out, gq);
      }
      if (const auto* hl = std::get_if<HyperLinearLayer>(&net.layers[l])) {
        const auto add = geo::mobius_add_vjp(t.e, hl->b, g, net.margin);
        const Vector ga = geo::exp0_vjp(t.pre, add.du, net.margin);
        grad.params[2 * l] += ga * t.z.transpose();
        grad.params[2 * l + 1] += add.dv;
        g = geo::log0_vjp(t.input, hl->W.transpose() * ga);
      } else {
        const auto& m = std::get<MobiusLayer>(net.layers[l]);
        const Vector g1 = geo::project_to_ball_vjp(t.rotated, g, net.margin);
        grad.params[2 * l] += g1 * t.w.transpose();
        const auto add = geo::mobius_add_vjp(m.v, t.input, m.P.transpose() * g1, net.margin);
        grad.params[2 * l + 1] += add.du;
        g = add.dv;
      }
    }
    grad.inputs.row(static_cast<Eigen::Index>(i)) = g.transpose();
  }
  return grad;
}

std::vector<int> layer_dims(const ArchSpec& arch) {
  if (arch.dim < 1 || arch.layers < 0 || arch.hidden < 1) {
    throw std::invalid_argument("architecture needs dim >= 1, layers >= 0, hidden >= 1");
  }
  std::vector<int> dims(static_cast<std::size_t>(arch.layers) + 1, arch.dim);
  if (arch.type == LayerType::hyperlinear) {
    for (int l = 1; l < arch.layers; ++l) dims[static_cast<std::size_t>(l)] = arch.hidden;
  }
  return dims;
}

namespace {

Vector small_ball_point(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector dir(dim);
  for (int k = 0; k < dim; ++k) dir[k] = normal(rng);
  return (1e-3 * unit(rng) / dir.norm()) * dir;
}

}  // namespace

RegistrationNetwork init_network(const ArchSpec& arch, std::mt19937_64& rng) {
  const auto dims = layer_dims(arch);
  std::normal_distribution<double> noise(0.0, 1e-2);
  RegistrationNetwork net;
  net.nonlinearity = arch.nonlinearity;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    if (arch.type == LayerType::hyperlinear) {
      HyperLinearLayer layer;
      layer.W = Matrix::Identity(out, in);
      layer.W += Matrix::NullaryExpr(out, in, [&]() { return noise(rng); });
      layer.b = small_ball_point(out, rng);
      net.layers.emplace_back(std::move(layer));
    } else {
      MobiusLayer layer;
      const Matrix a = Matrix::NullaryExpr(in, in, [&]() { return noise(rng); });
      layer.P = optim::retract(optim::Manifold::stiefel_special, Matrix::Identity(in, in),
                               0.5 * (a - a.transpose()));
      layer.v = small_ball_point(in, rng);
      net.layers.emplace_back(std::move(layer));
    }
  }
  net.validate();
  return net;
}

}  // namespace hypalign::registration
