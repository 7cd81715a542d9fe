#pragma once

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wifiloc/propagation.hpp"
#include "wifiloc/rng.hpp"
#include "wifiloc/types.hpp"

namespace wifiloc {

/// Fully-connected LOS/NLOS network layouts, 2 inputs to 2 outputs.
enum class Architecture { A, B, C, D, Custom };

std::vector<int> architecture_dims(Architecture arch);
char architecture_tag(Architecture arch);
Architecture parse_architecture(const std::string& name);

struct ClassProbabilities {
  double p_los = 0.5;
  double p_nlos = 0.5;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
};

/// Both distances are divided by these before entering the network.
struct InputNormalization {
  double euc_scale_m = 15.0;
  double fspl_scale_m = 15.0;
};

/// Dense layers with rectifiers between them and a 2-way softmax on top.
/// Output index 0 is NLOS and index 1 is LOS, matching LinkClass.
class Mlp {
 public:
  Mlp() = default;
  Mlp(Architecture arch, std::vector<DenseLayer> layers, InputNormalization norm = {});

  Architecture architecture() const { return arch_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const InputNormalization& normalization() const { return norm_; }
  std::vector<int> dims() const;

  std::size_t weight_count() const;
  std::size_t bias_count() const;
  std::size_t parameter_count() const { return weight_count() + bias_count(); }
  /// Neurons in the hidden and output layers (inputs not counted).
  std::size_t neuron_count() const;

  /// Raw inputs (row 0 = d_euc, row 1 = d_fspl, one column per sample) to
  /// pre-softmax logits (2 x N). Normalization is applied here.
  Eigen::MatrixXd logits(const Eigen::MatrixXd& raw_inputs) const;

  ClassProbabilities forward(double d_euc_m, double d_fspl_m) const;
  /// p_LOS for each (d_euc[i], d_fspl[i]).
  void p_los_batch(std::span<const double> d_euc_m, std::span<const double> d_fspl_m,
                   std::span<double> p_los) const;

  bool all_finite() const;

 private:
  Architecture arch_ = Architecture::Custom;
  std::vector<DenseLayer> layers_;
  InputNormalization norm_;
};

/// Uniform(-b, b) weights with b = sqrt(6 / (in + out)), zero biases.
Mlp build_network(Architecture arch, Rng& rng, InputNormalization norm = {});
Mlp build_network(const std::vector<int>& dims, Rng& rng, InputNormalization norm = {});

/// Stable two-class softmax of the logits (z_nlos, z_los).
ClassProbabilities softmax2(double z_nlos, double z_los);

/// -y log(y_hat) - (1 - y) log(1 - y_hat) with y_hat clamped to [1e-12, 1 - 1e-12].
double cross_entropy(int y, double y_hat);

ClassProbabilities get_probs(const Mlp& mlp, double d_euc_m, double d_fspl_m);
/// LOS iff p_LOS >= 0.5.
LinkClass get_label(const Mlp& mlp, double d_euc_m, double d_fspl_m);

/// Per-layer gradients of the mean cross-entropy over a batch.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;
  double loss = 0.0;
};

/// Forward + backward pass. labels[i] is 1 for LOS.
Gradients compute_gradients(const Mlp& mlp, const Eigen::MatrixXd& raw_inputs,
                            std::span<const int> labels);

/// Mean cross-entropy without gradients.
double mean_loss(const Mlp& mlp, const Eigen::MatrixXd& raw_inputs, std::span<const int> labels);

enum class Optimizer { Momentum, Adam };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 100;
  Optimizer optimizer = Optimizer::Momentum;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  /// Majority class is down-sampled until it makes up at most this share.
  double max_majority_fraction = 0.6;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double final_test_acc = 0.0;
};

/// Mini-batch gradient descent on mean cross-entropy. Deterministic given
/// cfg.seed. Throws DegenerateDataError when only one class is present.
TrainResult train(Mlp& mlp, std::span<const LabeledSample> data, const TrainConfig& cfg);

/// Fraction of samples whose get_label matches the stored label.
double accuracy(const Mlp& mlp, std::span<const LabeledSample> data);

void write_metrics_csv(std::span<const EpochMetrics> metrics, const std::string& path);

/// Versioned little-endian binary container with a trailing FNV-1a checksum.
void save_weights(const Mlp& mlp, const std::string& path);
std::string serialize_weights(const Mlp& mlp);
/// Throws FormatError on truncation, corruption or an architecture other than
/// `expected` (when given).
Mlp load_weights(const std::string& path, std::optional<Architecture> expected = std::nullopt);
Mlp deserialize_weights(const std::string& bytes, std::optional<Architecture> expected = std::nullopt);

/// Source of LOS probabilities for the measurement model.
class LinkClassifier {
 public:
  virtual ~LinkClassifier() = default;
  virtual void p_los(std::span<const double> d_euc_m, std::span<const double> d_fspl_m,
                     std::span<double> out) const = 0;
};

class MlpClassifier : public LinkClassifier {
 public:
  explicit MlpClassifier(const Mlp& mlp) : mlp_(&mlp) {}
  void p_los(std::span<const double> d_euc_m, std::span<const double> d_fspl_m,
             std::span<double> out) const override {
    mlp_->p_los_batch(d_euc_m, d_fspl_m, out);
  }

 private:
  const Mlp* mlp_;
};

/// Returns the same p_LOS for every input.
class ConstantClassifier : public LinkClassifier {
 public:
  explicit ConstantClassifier(double p_los) : p_(p_los) {}
  void p_los(std::span<const double>, std::span<const double>, std::span<double> out) const override {
    for (double& v : out) v = p_;
  }

 private:
  double p_;
};

}  // namespace wifiloc
