#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kamir/awareness.hpp"

namespace kamir {

// familiar = 0, unfamiliar = 1; fixed at creation.
struct LabeledVector {
  std::vector<float> values;
  int label = 0;
};

struct ClassifierHyper {
  std::vector<std::uint32_t> hidden = {64};
  std::uint32_t epochs = 200;
  float lr = 1e-3f;
  std::uint32_t batch = 32;
  std::uint64_t seed = 1;
  float threshold = 0.5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
};

// MLP over awareness vectors: ReLU hidden layers, single sigmoid output
// giving P(unfamiliar). Inputs pass through raw (they are bounded cosines;
// no standardization).
class AwarenessClassifier {
 public:
  AwarenessClassifier() = default;
  AwarenessClassifier(std::uint32_t input_dim, std::span<const std::uint32_t> hidden,
                      float threshold, std::uint64_t seed);

  std::span<const std::uint32_t> layer_sizes() const { return sizes_; }  // input, hidden..., 1
  std::uint32_t input_dim() const { return sizes_.front(); }
  float threshold() const { return threshold_; }
  std::span<const float> params() const { return params_; }
  std::span<float> params_mut() { return params_; }

  // Pre-sigmoid output.
  double raw_logit(std::span<const float> x) const;

 private:
  std::vector<std::uint32_t> sizes_;
  float threshold_ = 0.5f;
  std::vector<float> params_;  // per layer: W (out x in) row-major, then bias
};

struct Prediction {
  AwLabel label = AwLabel::unlabeled;
  double probability = 0.0;  // P(unfamiliar)
};

// Binary cross-entropy minimized with Adam; deterministic per hyper.seed.
// Requires at least 2 examples per class. epochs = 0 returns the seeded
// initialization unchanged.
AwarenessClassifier train_classifier(std::span<const LabeledVector> data,
                                     const ClassifierHyper& hyper,
                                     std::vector<double>* loss_history = nullptr);

// label = unfamiliar iff probability >= threshold (ties resolve unfamiliar).
Prediction classify(const AwarenessClassifier& clf, std::span<const float> vec);

struct Evaluation {
  double accuracy = 0.0;
  std::optional<double> auc;  // absent on single-class data
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

Evaluation evaluate(const AwarenessClassifier& clf, std::span<const LabeledVector> data);

// Mann-Whitney rank AUC with average ranks for ties (a tie counts 1/2).
// Returns nullopt when only one class is present.
std::optional<double> auc_from_scores(std::span<const double> scores, std::span<const int> labels);

// Max relative error between analytic gradients and central finite
// differences (h = 1e-3, 32-bit compute, 64-bit loss accumulation) over all
// parameters of the mean batch loss.
double gradient_check(const AwarenessClassifier& clf, std::span<const LabeledVector> batch);

// Checkpoint: magic "KAMCLF01", u32 layer count, the layer sizes as u32 LE,
// threshold as f32 LE, then weights/biases per layer as f32 LE.
void save_classifier(const AwarenessClassifier& clf, const std::string& path);
AwarenessClassifier load_classifier(const std::string& path);

}  // namespace kamir
