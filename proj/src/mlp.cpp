#include "phiml/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "phiml/errors.hpp"

namespace phiml {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

std::vector<double> bce_terms(std::span<const double> logits, std::span<const double> labels) {
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = softplus(logits[i]) - labels[i] * logits[i];
  return out;
}

LossEval mean_bce_loss(std::span<const double> logits, std::span<const double> labels,
                       std::span<const std::size_t> /*rows*/) {
  LossEval out;
  out.grad.resize(logits.size());
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.value += (softplus(logits[i]) - labels[i] * logits[i]) * inv_n;
    out.grad[i] = (sigmoid(logits[i]) - labels[i]) * inv_n;
  }
  return out;
}

void MlpParams::validate() const {
  if (hidden_dim < 1) throw UsageError("hidden_dim must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw UsageError("dropout_rate must lie in [0,1)");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
}

MlpNetwork::MlpNetwork(std::size_t input_dims, std::size_t hidden_dim, std::size_t hidden_layers) {
  sizes_.push_back(input_dims);
  for (std::size_t i = 0; i < hidden_layers; ++i) sizes_.push_back(hidden_dim);
  sizes_.push_back(1);
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

void MlpNetwork::initialize(Rng& rng) {
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(1, sizes_[l])));
    const std::size_t w0 = weight_offset(l);
    for (std::size_t i = 0; i < sizes_[l + 1] * sizes_[l]; ++i) params_[w0 + i] = rng.uniform(-limit, limit);
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(bias_offset(l)), sizes_[l + 1], 0.0);
  }
}

std::vector<double> MlpNetwork::logits(const Matrix& x) const {
  if (x.cols() != input_dims()) throw UsageError("feature dimension mismatch");
  std::vector<double> out(x.rows());
  std::vector<double> a, next;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    a.assign(row.begin(), row.end());
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], outn = sizes_[l + 1];
      const double* w = params_.data() + weight_offset(l);
      const double* b = params_.data() + bias_offset(l);
      next.assign(outn, 0.0);
      for (std::size_t o = 0; o < outn; ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * a[i];
        bool hidden = l + 2 < sizes_.size();
        next[o] = hidden ? std::max(0.0, acc) : acc;
      }
      a.swap(next);
    }
    out[r] = a[0];
  }
  return out;
}

double MlpNetwork::loss_and_gradient(const Matrix& x, std::span<const double> labels,
                                     std::span<const std::size_t> rows, const BatchLoss& loss,
                                     double dropout_rate, Rng* dropout_rng, std::vector<double>& grad) const {
  const std::size_t batch = rows.size();
  const std::size_t layers = sizes_.size() - 1;
  // activations[l] is the (post-dropout) input to layer l, batch x sizes_[l]
  std::vector<std::vector<double>> activations(layers);
  std::vector<std::vector<double>> masks(layers);  // derivative factor of each hidden unit
  activations[0].resize(batch * sizes_[0]);
  std::vector<double> batch_labels(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    auto row = x.row(rows[b]);
    std::copy(row.begin(), row.end(), activations[0].begin() + static_cast<std::ptrdiff_t>(b * sizes_[0]));
    batch_labels[b] = labels[rows[b]];
  }
  const double keep = 1.0 - dropout_rate;
  std::vector<double> logits(batch);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes_[l], outn = sizes_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* bias = params_.data() + bias_offset(l);
    const bool hidden = l + 1 < layers;
    std::vector<double> out(batch * outn);
    std::vector<double> mask(hidden ? batch * outn : 0);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* a = activations[l].data() + b * in;
      for (std::size_t o = 0; o < outn; ++o) {
        double acc = bias[o];
        for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * a[i];
        if (!hidden) {
          logits[b] = acc;
          continue;
        }
        double factor = acc > 0.0 ? 1.0 : 0.0;
        if (dropout_rng && dropout_rate > 0.0) factor *= dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
        mask[b * outn + o] = factor;
        out[b * outn + o] = acc * factor;
      }
    }
    if (hidden) {
      activations[l + 1] = std::move(out);
      masks[l + 1] = std::move(mask);
    }
  }

  LossEval eval = loss(logits, batch_labels, rows);
  if (eval.grad.size() != batch) throw UsageError("batch loss returned a gradient of the wrong size");

  grad.assign(params_.size(), 0.0);
  std::vector<double> delta = std::move(eval.grad);  // batch x sizes_[l+1]
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = sizes_[l], outn = sizes_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    double* gw = grad.data() + weight_offset(l);
    double* gb = grad.data() + bias_offset(l);
    const auto& a = activations[l];
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < outn; ++o) {
        double d = delta[b * outn + o];
        if (d == 0.0) continue;
        gb[o] += d;
        for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += d * a[b * in + i];
      }
    }
    if (l == 0) break;
    std::vector<double> prev(batch * in, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < outn; ++o) {
        double d = delta[b * outn + o];
        if (d == 0.0) continue;
        for (std::size_t i = 0; i < in; ++i) prev[b * in + i] += d * w[o * in + i];
      }
    }
    const auto& m = masks[l];
    for (std::size_t i = 0; i < prev.size(); ++i) prev[i] *= m[i];
    delta = std::move(prev);
  }
  return eval.value;
}

nlohmann::json MlpNetwork::to_json() const { return {{"layer_sizes", sizes_}, {"parameters", params_}}; }

MlpNetwork MlpNetwork::from_json(const nlohmann::json& doc) {
  auto sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
  if (sizes.size() < 2 || sizes.back() != 1) throw DataError("malformed network layer sizes");
  MlpNetwork net(sizes.front(), sizes.size() > 2 ? sizes[1] : 1, sizes.size() - 2);
  if (net.sizes_ != sizes) throw DataError("unsupported network layer sizes");
  auto params = doc.at("parameters").get<std::vector<double>>();
  if (params.size() != net.params_.size()) throw DataError("network parameter count mismatch");
  net.params_ = std::move(params);
  return net;
}

MlpModel::MlpModel(MlpNetwork network) : network_(std::move(network)) {}

ClassScores MlpModel::scores(const Matrix& x) const {
  auto z = network_.logits(x);
  ClassScores out(x.rows(), 2);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double p = sigmoid(z[r]);
    out(r, 0) = 1.0 - p;
    out(r, 1) = p;
  }
  return out;
}

nlohmann::json MlpModel::to_json() const { return {{"type", "mlp"}, {"network", network_.to_json()}}; }

std::shared_ptr<const MlpModel> MlpModel::from_json(const nlohmann::json& doc) {
  return std::make_shared<MlpModel>(MlpNetwork::from_json(doc.at("network")));
}

Adam::Adam(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
  beta1_t_ *= beta1_;
  beta2_t_ *= beta2_;
  const double c1 = 1.0 - beta1_t_;
  const double c2 = 1.0 - beta2_t_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

FittedModel fit_mlp(const Dataset& data, const MlpParams& params) {
  return fit_mlp(data.features, data.labels, params);
}

FittedModel fit_mlp(const Matrix& x, std::span<const double> y, const MlpParams& params) {
  params.validate();
  const std::size_t n = x.rows();
  if (n == 0) throw DataError("cannot fit a network on empty data");
  if (y.size() != n) throw UsageError("label count does not match feature rows");
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw UsageError("network classifier requires binary labels in {0,1}");
  }

  Rng init_rng(derive_seed(params.seed, "mlp-init"));
  Rng order_rng(derive_seed(params.seed, "mlp-order"));
  Rng dropout_rng(derive_seed(params.seed, "mlp-dropout"));

  MlpNetwork net(x.cols(), params.hidden_dim, params.hidden_layers);
  net.initialize(init_rng);
  if (!params.initial_parameters.empty()) {
    if (params.initial_parameters.size() != net.parameters().size()) {
      throw UsageError("initial network parameters have the wrong size");
    }
    net.parameters() = params.initial_parameters;
  }
  const BatchLoss loss = params.loss ? params.loss : BatchLoss(mean_bce_loss);
  Adam adam(net.parameters().size(), params.learning_rate, params.beta1, params.beta2, params.epsilon);

  const std::size_t batch = params.batch_size == 0 ? n : std::min(params.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    if (batch < n) order_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      std::span<const std::size_t> rows(order.data() + start, std::min(batch, n - start));
      net.loss_and_gradient(x, y, rows, loss, params.dropout_rate, &dropout_rng, grad);
      adam.step(net.parameters(), grad);
    }
  }
  return FittedModel(std::make_shared<MlpModel>(std::move(net)));
}

}  // namespace phiml
