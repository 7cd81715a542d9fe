#include "wifiloc/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "text_util.hpp"

namespace wifiloc {

namespace {

constexpr double kProbEps = 1e-12;

double sigmoid(double d) {
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

}  // namespace

std::vector<int> architecture_dims(Architecture arch) {
  switch (arch) {
    case Architecture::A:
      return {2, 10, 20, 50, 100, 2};
    case Architecture::B:
      return {2, 10, 20, 50, 100, 50, 20, 10, 2};
    case Architecture::C:
      return {2, 10, 20, 50, 100, 200, 500, 1000, 2000, 2};
    case Architecture::D:
      return {2, 10, 20, 50, 100, 200, 1000, 200, 100, 50, 20, 10, 2};
    case Architecture::Custom:
      break;
  }
  throw ConfigError("custom architectures have no fixed layer dims");
}

char architecture_tag(Architecture arch) {
  switch (arch) {
    case Architecture::A: return 'A';
    case Architecture::B: return 'B';
    case Architecture::C: return 'C';
    case Architecture::D: return 'D';
    case Architecture::Custom: return 'X';
  }
  return 'X';
}

Architecture parse_architecture(const std::string& name) {
  if (name == "A" || name == "a") return Architecture::A;
  if (name == "B" || name == "b") return Architecture::B;
  if (name == "C" || name == "c") return Architecture::C;
  if (name == "D" || name == "d") return Architecture::D;
  throw ConfigError("unknown network architecture '" + name + "' (expected A, B, C or D)");
}

Mlp::Mlp(Architecture arch, std::vector<DenseLayer> layers, InputNormalization norm)
    : arch_(arch), layers_(std::move(layers)), norm_(norm) {
  if (layers_.empty()) throw ConfigError("network needs at least one layer");
  if (layers_.front().in_dim() != 2 || layers_.back().out_dim() != 2)
    throw ConfigError("network must map 2 inputs to 2 outputs");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bias.size() != layers_[i].out_dim()) throw ConfigError("bias size mismatch");
    if (i > 0 && layers_[i].in_dim() != layers_[i - 1].out_dim())
      throw ConfigError("layer dims do not chain at layer " + std::to_string(i));
  }
  if (arch_ != Architecture::Custom && dims() != architecture_dims(arch_))
    throw ConfigError(std::string("layer dims do not match architecture ") + architecture_tag(arch_));
  if (!(norm_.euc_scale_m > 0.0) || !(norm_.fspl_scale_m > 0.0))
    throw ConfigError("input normalization scales must be > 0");
}

std::vector<int> Mlp::dims() const {
  std::vector<int> d;
  if (layers_.empty()) return d;
  d.push_back(layers_.front().in_dim());
  for (const auto& l : layers_) d.push_back(l.out_dim());
  return d;
}

std::size_t Mlp::weight_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size());
  return n;
}

std::size_t Mlp::bias_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.bias.size());
  return n;
}

std::size_t Mlp::neuron_count() const { return bias_count(); }

Eigen::MatrixXd Mlp::logits(const Eigen::MatrixXd& raw) const {
  Eigen::MatrixXd a(2, raw.cols());
  a.row(0) = raw.row(0) / norm_.euc_scale_m;
  a.row(1) = raw.row(1) / norm_.fspl_scale_m;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = layers_[i].weights * a;
    z.colwise() += layers_[i].bias;
    if (i + 1 < layers_.size()) {
      a = z.cwiseMax(0.0);
    } else {
      return z;
    }
  }
  return a;
}

ClassProbabilities Mlp::forward(double d_euc_m, double d_fspl_m) const {
  if (!std::isfinite(d_euc_m) || !std::isfinite(d_fspl_m))
    throw DomainError("classifier inputs must be finite");
  Eigen::MatrixXd x(2, 1);
  x << d_euc_m, d_fspl_m;
  const Eigen::MatrixXd z = logits(x);
  return softmax2(z(0, 0), z(1, 0));
}

void Mlp::p_los_batch(std::span<const double> d_euc_m, std::span<const double> d_fspl_m,
                      std::span<double> p_los) const {
  const auto n = d_euc_m.size();
  if (d_fspl_m.size() != n || p_los.size() != n) throw DomainError("batch size mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(d_euc_m[i]) || !std::isfinite(d_fspl_m[i]))
      throw DomainError("classifier inputs must be finite");

  // Column blocks keep the activations cache-sized and the buffers reusable.
  constexpr Eigen::Index kBlock = 256;
  Eigen::Index width = 2;
  for (const auto& l : layers_) width = std::max(width, l.weights.rows());
  Eigen::MatrixXd buf_a(width, kBlock), buf_b(width, kBlock);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const Eigen::Index m = std::min<Eigen::Index>(kBlock, static_cast<Eigen::Index>(n - start));
    for (Eigen::Index c = 0; c < m; ++c) {
      buf_a(0, c) = d_euc_m[start + c] / norm_.euc_scale_m;
      buf_a(1, c) = d_fspl_m[start + c] / norm_.fspl_scale_m;
    }
    Eigen::Index rows = 2;
    Eigen::MatrixXd* in = &buf_a;
    Eigen::MatrixXd* out = &buf_b;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      auto z = out->topLeftCorner(l.weights.rows(), m);
      z.noalias() = l.weights * in->topLeftCorner(rows, m);
      z.colwise() += l.bias;
      if (i + 1 < layers_.size()) z = z.cwiseMax(0.0);
      rows = l.weights.rows();
      std::swap(in, out);
    }
    for (Eigen::Index c = 0; c < m; ++c) p_los[start + c] = sigmoid((*in)(1, c) - (*in)(0, c));
  }
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_)
    if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

Mlp build_network(const std::vector<int>& dims, Rng& rng, InputNormalization norm) {
  if (dims.size() < 2) throw ConfigError("network needs at least two layer sizes");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int in = dims[i];
    const int out = dims[i + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    // Row-major fill order so the draw sequence matches the file layout.
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) l.weights(r, c) = rng.uniform(-bound, bound);
    layers.push_back(std::move(l));
  }
  return Mlp(Architecture::Custom, std::move(layers), norm);
}

Mlp build_network(Architecture arch, Rng& rng, InputNormalization norm) {
  Mlp m = build_network(architecture_dims(arch), rng, norm);
  return Mlp(arch, std::move(m.layers()), norm);
}

ClassProbabilities softmax2(double z_nlos, double z_los) {
  const double d = z_los - z_nlos;
  return {sigmoid(d), sigmoid(-d)};
}

double cross_entropy(int y, double y_hat) {
  const double p = std::clamp(y_hat, kProbEps, 1.0 - kProbEps);
  return -y * std::log(p) - (1 - y) * std::log(1.0 - p);
}

ClassProbabilities get_probs(const Mlp& mlp, double d_euc_m, double d_fspl_m) {
  return mlp.forward(d_euc_m, d_fspl_m);
}

LinkClass get_label(const Mlp& mlp, double d_euc_m, double d_fspl_m) {
  return mlp.forward(d_euc_m, d_fspl_m).p_los >= 0.5 ? LinkClass::Los : LinkClass::Nlos;
}

namespace {

// Per-sample loss = logsumexp(z) - z_label.
double batch_loss(const Eigen::MatrixXd& z, std::span<const int> labels) {
  double total = 0.0;
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const double m = std::max(z(0, c), z(1, c));
    const double lse = m + std::log(std::exp(z(0, c) - m) + std::exp(z(1, c) - m));
    total += lse - z(labels[static_cast<std::size_t>(c)], c);
  }
  return total;
}

}  // namespace

Gradients compute_gradients(const Mlp& mlp, const Eigen::MatrixXd& raw,
                            std::span<const int> labels) {
  const auto& layers = mlp.layers();
  const auto L = layers.size();
  const Eigen::Index n = raw.cols();
  if (static_cast<std::size_t>(n) != labels.size() || n == 0)
    throw DomainError("gradient batch size mismatch");

  // acts[i] is the input to layer i; pre[i] its pre-activation.
  std::vector<Eigen::MatrixXd> acts(L);
  std::vector<Eigen::MatrixXd> pre(L);
  acts[0].resize(2, n);
  acts[0].row(0) = raw.row(0) / mlp.normalization().euc_scale_m;
  acts[0].row(1) = raw.row(1) / mlp.normalization().fspl_scale_m;
  for (std::size_t i = 0; i < L; ++i) {
    pre[i] = layers[i].weights * acts[i];
    pre[i].colwise() += layers[i].bias;
    if (i + 1 < L) acts[i + 1] = pre[i].cwiseMax(0.0);
  }

  Gradients g;
  g.loss = batch_loss(pre[L - 1], labels) / static_cast<double>(n);
  g.weights.resize(L);
  g.bias.resize(L);

  Eigen::MatrixXd dz(2, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto p = softmax2(pre[L - 1](0, c), pre[L - 1](1, c));
    const int y = labels[static_cast<std::size_t>(c)];
    dz(0, c) = p.p_nlos - (y == 0 ? 1.0 : 0.0);
    dz(1, c) = p.p_los - (y == 1 ? 1.0 : 0.0);
  }
  dz /= static_cast<double>(n);

  for (std::size_t k = L; k-- > 0;) {
    g.weights[k].noalias() = dz * acts[k].transpose();
    g.bias[k] = dz.rowwise().sum();
    if (k == 0) break;
    Eigen::MatrixXd da = layers[k].weights.transpose() * dz;
    dz = (pre[k - 1].array() > 0.0).select(da, 0.0);
  }
  return g;
}

double mean_loss(const Mlp& mlp, const Eigen::MatrixXd& raw, std::span<const int> labels) {
  return batch_loss(mlp.logits(raw), labels) / static_cast<double>(raw.cols());
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
  if (!(max_majority_fraction >= 0.5 && max_majority_fraction <= 1.0))
    throw ConfigError("max majority fraction must lie in [0.5, 1]");
}

namespace {

struct Split {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Split gather(std::span<const LabeledSample> data, std::span<const std::size_t> idx) {
  Split s{Eigen::MatrixXd(2, static_cast<Eigen::Index>(idx.size())), {}};
  s.y.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& d = data[idx[k]];
    s.x(0, static_cast<Eigen::Index>(k)) = d.d_euc_m;
    s.x(1, static_cast<Eigen::Index>(k)) = d.d_fspl_m;
    s.y.push_back(static_cast<int>(d.label));
  }
  return s;
}

double split_accuracy(const Mlp& mlp, const Split& s) {
  constexpr Eigen::Index kChunk = 4096;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < s.x.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, s.x.cols() - start);
    const Eigen::MatrixXd z = mlp.logits(s.x.middleCols(start, n));
    for (Eigen::Index c = 0; c < n; ++c) {
      const int pred = z(1, c) - z(0, c) >= 0.0 ? 1 : 0;
      if (pred == s.y[static_cast<std::size_t>(start + c)]) ++correct;
    }
  }
  return s.y.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(s.y.size());
}

template <class Vec>
void shuffle(Vec& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

}  // namespace

TrainResult train(Mlp& mlp, std::span<const LabeledSample> data, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> los;
  std::vector<std::size_t> nlos;
  for (std::size_t i = 0; i < data.size(); ++i)
    (data[i].label == LinkClass::Los ? los : nlos).push_back(i);
  if (los.empty() || nlos.empty())
    throw DegenerateDataError("training data contains a single class");

  Rng rng = Rng(cfg.seed).derive(Stream::Training);

  // Down-sample the majority class to at most max_majority_fraction.
  auto& major = los.size() >= nlos.size() ? los : nlos;
  const auto& minor = los.size() >= nlos.size() ? nlos : los;
  const double f = cfg.max_majority_fraction;
  const auto cap = f >= 1.0 ? major.size()
                            : static_cast<std::size_t>(std::floor(minor.size() * f / (1.0 - f)));
  if (major.size() > cap) {
    shuffle(major, rng);
    major.resize(cap);
    std::sort(major.begin(), major.end());
  }

  std::vector<std::size_t> all(los);
  all.insert(all.end(), nlos.begin(), nlos.end());
  std::sort(all.begin(), all.end());
  shuffle(all, rng);
  const auto n_test = static_cast<std::size_t>(std::llround(all.size() * cfg.test_fraction));
  if (n_test == 0 || n_test >= all.size())
    throw DegenerateDataError("train/test split leaves an empty partition");

  const Split test = gather(data, std::span(all).first(n_test));
  const Split tr = gather(data, std::span(all).subspan(n_test));
  const auto n_train = tr.y.size();

  auto& layers = mlp.layers();
  const auto L = layers.size();
  std::vector<Eigen::MatrixXd> m_w(L), v_w(L);
  std::vector<Eigen::VectorXd> m_b(L), v_b(L);
  for (std::size_t i = 0; i < L; ++i) {
    m_w[i] = Eigen::MatrixXd::Zero(layers[i].weights.rows(), layers[i].weights.cols());
    v_w[i] = m_w[i];
    m_b[i] = Eigen::VectorXd::Zero(layers[i].bias.size());
    v_b[i] = m_b[i];
  }

  TrainResult result;
  result.train_size = n_train;
  result.test_size = n_test;
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  std::size_t t = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, n_train - start);
      Eigen::MatrixXd xb(2, static_cast<Eigen::Index>(n));
      std::vector<int> yb(n);
      for (std::size_t k = 0; k < n; ++k) {
        xb.col(static_cast<Eigen::Index>(k)) = tr.x.col(static_cast<Eigen::Index>(order[start + k]));
        yb[k] = tr.y[order[start + k]];
      }
      const Gradients g = compute_gradients(mlp, xb, yb);
      loss_sum += g.loss * static_cast<double>(n);
      // Running accuracy from the pre-update weights of each batch.
      {
        const Eigen::MatrixXd z = mlp.logits(xb);
        for (std::size_t k = 0; k < n; ++k) {
          const auto c = static_cast<Eigen::Index>(k);
          if ((z(1, c) - z(0, c) >= 0.0 ? 1 : 0) == yb[k]) ++correct;
        }
      }

      ++t;
      for (std::size_t i = 0; i < L; ++i) {
        if (cfg.optimizer == Optimizer::Momentum) {
          m_w[i] = cfg.momentum * m_w[i] - cfg.learning_rate * g.weights[i];
          m_b[i] = cfg.momentum * m_b[i] - cfg.learning_rate * g.bias[i];
          layers[i].weights += m_w[i];
          layers[i].bias += m_b[i];
        } else {
          const double b1 = cfg.adam_beta1;
          const double b2 = cfg.adam_beta2;
          const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
          const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
          const double step = cfg.learning_rate * std::sqrt(c2) / c1;
          m_w[i] = b1 * m_w[i] + (1.0 - b1) * g.weights[i];
          v_w[i] = b2 * v_w[i] + (1.0 - b2) * g.weights[i].cwiseAbs2();
          m_b[i] = b1 * m_b[i] + (1.0 - b1) * g.bias[i];
          v_b[i] = b2 * v_b[i] + (1.0 - b2) * g.bias[i].cwiseAbs2();
          layers[i].weights.array() -=
              step * m_w[i].array() / (v_w[i].array().sqrt() + cfg.adam_epsilon);
          layers[i].bias.array() -= step * m_b[i].array() / (v_b[i].array().sqrt() + cfg.adam_epsilon);
        }
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(n_train);
    m.train_acc = static_cast<double>(correct) / static_cast<double>(n_train);
    m.test_acc = split_accuracy(mlp, test);
    result.epochs.push_back(m);
    if (!mlp.all_finite()) throw DomainError("training diverged: non-finite weights");
  }
  result.final_test_acc = result.epochs.empty() ? split_accuracy(mlp, test) : result.epochs.back().test_acc;
  return result;
}

double accuracy(const Mlp& mlp, std::span<const LabeledSample> data) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  return split_accuracy(mlp, gather(data, idx));
}

void write_metrics_csv(std::span<const EpochMetrics> metrics, const std::string& path) {
  auto out = detail::open_out(path);
  out << "epoch,train_loss,train_acc,test_acc\n";
  for (const auto& m : metrics) {
    out << m.epoch << ',' << detail::exact(m.train_loss) << ',' << detail::exact(m.train_acc) << ','
        << detail::exact(m.test_acc) << '\n';
  }
}

}  // namespace wifiloc
