#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdia/core/rng.hpp"
#include "fdia/gnn/chebyshev.hpp"
#include "fdia/grid/laplacian.hpp"
#include "fdia/nn/checkpoint.hpp"
#include "fdia/nn/core.hpp"
#include "fdia/scenario/dataset.hpp"

namespace fdia::gnn {

/// Detector input from a dataset: one row per snapshot holding
/// [P_1, Q_1, P_2, Q_2, ...] (node-major, channel minor). The injections are
/// the first 2n columns of Z (all P, then all Q).
inline Tensor injection_features(const HonestDataset& d) {
  const Index n = d.bus_count();
  if (d.Z.cols() < 2 * n) throw ConfigError("dataset has fewer than 2n measurement columns");
  for (Index i = 0; i < n && i < static_cast<Index>(d.z_names.size()); ++i)
    if (d.z_names[static_cast<std::size_t>(i)].rfind("p_inj_", 0) != 0 ||
        d.z_names[static_cast<std::size_t>(n + i)].rfind("q_inj_", 0) != 0)
      throw ConfigError("dataset columns do not start with the bus injections");
  Tensor f(d.Z.rows(), 2 * n);
  for (Index i = 0; i < n; ++i) {
    f.col(2 * i) = d.Z.col(i);
    f.col(2 * i + 1) = d.Z.col(n + i);
  }
  return f;
}

/// Per-feature shift and scale; a constant feature keeps scale 1.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  bool fitted() const { return mean.size() > 0; }

  static Standardizer fit(const Tensor& x) {
    if (x.rows() < 1) throw ConfigError("cannot standardize an empty split");
    Standardizer s;
    s.mean = x.colwise().mean();
    s.scale.resize(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      const double sd = std::sqrt((x.col(j).array() - s.mean[j]).square().mean());
      s.scale[j] = sd > 0 ? sd : 1.0;
    }
    return s;
  }

  Tensor apply(const Tensor& x) const {
    if (!fitted()) throw ConfigError("standardization has not been fitted");
    if (x.cols() != mean.size()) throw ConfigError("feature count does not match the standardization");
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }
};

enum class ModelKind { gnn, mlp };

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "gnn") return ModelKind::gnn;
  if (s == "mlp") return ModelKind::mlp;
  throw ConfigError("unknown model '" + s + "' (gnn, mlp)");
}

inline const char* to_string(ModelKind k) { return k == ModelKind::gnn ? "gnn" : "mlp"; }

/// Architecture. For the GNN `widths` are the Chebyshev channel counts
/// c_1..c_L (input has 2 channels); for the MLP they are the hidden layer
/// widths.
struct Architecture {
  ModelKind kind = ModelKind::gnn;
  Index nodes = 0;
  Index order = 3;
  std::vector<Index> widths{32, 32, 32};
  nn::Activation activation = nn::Activation::relu;

  void validate() const {
    if (nodes < 1) throw ConfigError("model needs at least one node");
    if (kind == ModelKind::gnn && order < 1) throw ConfigError("Chebyshev order K must be at least 1");
    if (kind == ModelKind::mlp && widths.empty()) throw ConfigError("the MLP needs at least one hidden layer");
    for (Index w : widths)
      if (w < 1) throw ConfigError("layer widths must be positive");
  }
};

inline nlohmann::json to_json(const Architecture& a) {
  return {{"kind", to_string(a.kind)},
          {"nodes", a.nodes},
          {"order", a.order},
          {"widths", a.widths},
          {"activation", nn::to_string(a.activation)},
          {"input_channels", 2},
          {"flatten_order", "node-major, channel-minor"}};
}

inline Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture a;
  a.kind = parse_model_kind(j.at("kind").get<std::string>());
  a.nodes = j.at("nodes").get<Index>();
  a.order = j.at("order").get<Index>();
  a.widths = j.at("widths").get<std::vector<Index>>();
  a.activation = nn::parse_activation(j.at("activation").get<std::string>());
  a.validate();
  return a;
}

/// Closed-form parameter count of the GNN:
/// K * sum_l (c_{l-1} + 1) c_l + n c_L + 1 with c_0 = 2.
inline Index gnn_parameter_formula(Index nodes, Index order, const std::vector<Index>& widths) {
  Index s = 0;
  Index prev = 2;
  for (Index c : widths) {
    s += order * (prev + 1) * c;
    prev = c;
  }
  return s + nodes * prev + 1;
}

/// Closed-form parameter count of the MLP on 2n inputs.
inline Index mlp_parameter_formula(Index nodes, const std::vector<Index>& widths) {
  Index s = 0;
  Index prev = 2 * nodes;
  for (Index c : widths) {
    s += (prev + 1) * c;
    prev = c;
  }
  return s + prev + 1;
}

inline Index parameter_formula(const Architecture& a) {
  return a.kind == ModelKind::gnn ? gnn_parameter_formula(a.nodes, a.order, a.widths)
                                  : mlp_parameter_formula(a.nodes, a.widths);
}

/// Binary attack detector: a Chebyshev graph-convolution stack followed by a
/// dense sigmoid head on the flattened node features, or a dense MLP on the
/// same flattened input.
class Detector {
public:
  Detector() = default;

  /// `scaled_laplacian` is required for the GNN and ignored by the MLP.
  Detector(Architecture arch, SparseMatrix scaled_laplacian = {}) : arch_(std::move(arch)), lt_(std::move(scaled_laplacian)) {
    arch_.validate();
    if (arch_.kind == ModelKind::gnn) {
      if (lt_.rows() != arch_.nodes || lt_.cols() != arch_.nodes)
        throw ConfigError("scaled Laplacian is " + std::to_string(lt_.rows()) + "x" + std::to_string(lt_.cols()) +
                          ", model has " + std::to_string(arch_.nodes) + " nodes");
      Index prev = 2;
      for (Index c : arch_.widths) {
        cheb_.push_back(make_cheb_layer(arch_.order, prev, c));
        prev = c;
      }
      head_ = nn::make_dense(arch_.nodes * prev, 1);
    } else {
      Index prev = 2 * arch_.nodes;
      for (Index c : arch_.widths) {
        dense_.push_back(nn::make_dense(prev, c));
        prev = c;
      }
      head_ = nn::make_dense(prev, 1);
    }
  }

  const Architecture& architecture() const { return arch_; }
  Index nodes() const { return arch_.nodes; }
  Index features() const { return 2 * arch_.nodes; }
  const SparseMatrix& scaled_laplacian() const { return lt_; }
  std::vector<ChebLayerParams>& cheb_layers() { return cheb_; }
  std::vector<nn::DenseParams>& dense_layers() { return dense_; }
  nn::DenseParams& head() { return head_; }

  Standardizer standardizer;

  /// Glorot-uniform weights, zero biases.
  void initialize(Rng& rng) {
    for (auto& l : cheb_)
      for (auto& t : l.theta) {
        nn::glorot_uniform(t, l.inputs(), l.outputs(), rng);
        l.bias.setZero();
      }
    for (auto& d : dense_) {
      nn::glorot_uniform(d.weights, d.inputs(), d.outputs(), rng);
      d.bias.setZero();
    }
    nn::glorot_uniform(head_.weights, head_.inputs(), head_.outputs(), rng);
    head_.bias.setZero();
  }

  /// Every trainable tensor in a fixed order, named for checkpoints.
  std::vector<nn::NamedTensor> parameters() {
    std::vector<nn::NamedTensor> out;
    for (std::size_t l = 0; l < cheb_.size(); ++l) {
      for (std::size_t k = 0; k < cheb_[l].theta.size(); ++k)
        out.push_back({"cheb" + std::to_string(l) + ".theta" + std::to_string(k), &cheb_[l].theta[k]});
      out.push_back({"cheb" + std::to_string(l) + ".bias", &cheb_[l].bias});
    }
    for (std::size_t l = 0; l < dense_.size(); ++l) {
      out.push_back({"dense" + std::to_string(l) + ".weights", &dense_[l].weights});
      out.push_back({"dense" + std::to_string(l) + ".bias", &dense_[l].bias});
    }
    out.push_back({"head.weights", &head_.weights});
    out.push_back({"head.bias", &head_.bias});
    return out;
  }

  std::vector<Tensor*> parameter_pointers() {
    std::vector<Tensor*> out;
    for (auto& p : parameters()) out.push_back(p.value);
    return out;
  }

  /// Number of allocated trainable scalars.
  Index parameter_count() const {
    Index s = head_.parameter_count();
    for (const auto& l : cheb_) s += l.parameter_count();
    for (const auto& d : dense_) s += d.parameter_count();
    return s;
  }

  /// Logits for already standardized rows (batch x 2n).
  Eigen::VectorXd logits(const Tensor& xs) const { return forward(xs, nullptr); }

  /// Attack probabilities for raw feature rows.
  Eigen::VectorXd predict(const Tensor& raw) const { return probabilities(standardizer.apply(raw)); }

  /// Attack probabilities for already standardized rows.
  Eigen::VectorXd probabilities(const Tensor& xs) const {
    return logits(xs).unaryExpr([](double v) { return nn::sigmoid(v); });
  }

  /// Mean cross-entropy over the batch and its gradient for every tensor of
  /// parameters(), in the same order.
  double loss_and_gradient(const Tensor& xs, const Eigen::VectorXd& y, std::vector<Tensor>& grads) const {
    Cache cache;
    const Eigen::VectorXd z = forward(xs, &cache);
    Eigen::VectorXd dz;
    const double loss = nn::sigmoid_bce_with_gradient(y, z, dz);
    backward(cache, dz, grads);
    return loss;
  }

  double loss(const Tensor& xs, const Eigen::VectorXd& y) const {
    return nn::binary_cross_entropy(y, probabilities(xs));
  }

  /// Rows of one sample (node-major, 2 channels) to the stacked (n * batch) x 2 layout.
  Tensor to_node_rows(const Tensor& xs) const {
    const Index n = arch_.nodes;
    const Index b = xs.rows();
    Tensor x0(n * b, 2);
    for (Index s = 0; s < b; ++s)
      for (Index i = 0; i < n; ++i) {
        x0(s * n + i, 0) = xs(s, 2 * i);
        x0(s * n + i, 1) = xs(s, 2 * i + 1);
      }
    return x0;
  }

  /// Stacked (n * batch) x c node features flattened per sample to batch x (n c),
  /// node-major then channel.
  Tensor flatten(const Tensor& h, Index batch) const {
    const Index n = arch_.nodes;
    const Index c = h.cols();
    Tensor f(batch, n * c);
    for (Index ch = 0; ch < c; ++ch)
      for (Index s = 0; s < batch; ++s)
        for (Index i = 0; i < n; ++i) f(s, i * c + ch) = h(s * n + i, ch);
    return f;
  }

  Tensor unflatten(const Tensor& f, Index channels) const {
    const Index n = arch_.nodes;
    const Index batch = f.rows();
    Tensor h(n * batch, channels);
    for (Index ch = 0; ch < channels; ++ch)
      for (Index s = 0; s < batch; ++s)
        for (Index i = 0; i < n; ++i) h(s * n + i, ch) = f(s, i * channels + ch);
    return h;
  }

  /// Output of every Chebyshev layer for standardized rows (layer 0 is the input).
  std::vector<Tensor> hidden_outputs(const Tensor& xs) const {
    std::vector<Tensor> out{to_node_rows(xs)};
    for (const auto& l : cheb_) out.push_back(cheb_layer_forward(l, lt_, out.back(), arch_.activation));
    return out;
  }

private:
  struct Cache {
    Index batch = 0;
    std::vector<ChebLayerCache> cheb;
    std::vector<Tensor> dense_in, dense_pre;
    Tensor head_in;
    Index last_channels = 0;
  };

  Eigen::VectorXd forward(const Tensor& xs, Cache* cache) const {
    if (xs.cols() != features())
      throw ConfigError("detector expects " + std::to_string(features()) + " features, got " +
                        std::to_string(xs.cols()));
    Tensor head_in;
    if (arch_.kind == ModelKind::gnn) {
      Tensor h = to_node_rows(xs);
      if (cache) cache->cheb.resize(cheb_.size());
      for (std::size_t l = 0; l < cheb_.size(); ++l)
        h = cheb_layer_forward(cheb_[l], lt_, h, arch_.activation, cache ? &cache->cheb[l] : nullptr);
      if (cache) cache->last_channels = h.cols();
      head_in = flatten(h, xs.rows());
    } else {
      head_in = xs;
      for (const auto& d : dense_) {
        Tensor pre = nn::dense_forward(d, head_in);
        Tensor out = nn::activate(arch_.activation, pre);
        if (cache) {
          cache->dense_in.push_back(std::move(head_in));
          cache->dense_pre.push_back(std::move(pre));
        }
        head_in = std::move(out);
      }
    }
    Eigen::VectorXd z = nn::dense_forward(head_, head_in).col(0);
    if (cache) {
      cache->batch = xs.rows();
      cache->head_in = std::move(head_in);
    }
    return z;
  }

  void backward(const Cache& cache, const Eigen::VectorXd& dz, std::vector<Tensor>& grads) const {
    grads.clear();
    const Tensor dy = dz;
    auto hg = nn::dense_backward(head_, cache.head_in, dy);
    std::vector<Tensor> body;
    if (arch_.kind == ModelKind::gnn) {
      Tensor dh = unflatten(hg.input, cache.last_channels);
      std::vector<ChebLayerGrad> per_layer(cheb_.size());
      for (std::size_t l = cheb_.size(); l-- > 0;) {
        per_layer[l] = cheb_layer_backward(cheb_[l], lt_, cache.cheb[l], dh, arch_.activation, l > 0);
        if (l > 0) dh = std::move(per_layer[l].input);
      }
      for (auto& g : per_layer) {
        for (auto& t : g.theta) grads.push_back(std::move(t));
        grads.push_back(std::move(g.bias));
      }
    } else {
      Tensor dh = hg.input;
      std::vector<nn::DenseGrad> per_layer(dense_.size());
      for (std::size_t l = dense_.size(); l-- > 0;) {
        const Tensor dpre = dh.cwiseProduct(nn::activate_derivative(arch_.activation, cache.dense_pre[l]));
        per_layer[l] = nn::dense_backward(dense_[l], cache.dense_in[l], dpre);
        if (l > 0) dh = per_layer[l].input;
      }
      for (auto& g : per_layer) {
        grads.push_back(std::move(g.weights));
        grads.push_back(std::move(g.bias));
      }
    }
    grads.push_back(std::move(hg.weights));
    grads.push_back(std::move(hg.bias));
  }

  Architecture arch_;
  SparseMatrix lt_;
  std::vector<ChebLayerParams> cheb_;
  std::vector<nn::DenseParams> dense_;
  nn::DenseParams head_;
};

/// Builds a detector for a case; the GNN uses the case's scaled Laplacian.
inline Detector make_detector(const GridCase& c, Architecture arch) {
  arch.nodes = c.bus_count();
  if (arch.kind == ModelKind::gnn) return Detector(std::move(arch), case_laplacian(c).scaled);
  return Detector(std::move(arch));
}

}  // namespace fdia::gnn
