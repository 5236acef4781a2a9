#include "kamir/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "internal_util.hpp"

namespace kamir {

namespace {

constexpr char kClassifierMagic[9] = "KAMCLF01";

std::size_t param_count(std::span<const std::uint32_t> sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    n += static_cast<std::size_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  return n;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Numerically stable BCE with logits.
double bce_with_logit(double z, int y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

struct Scratch {
  std::vector<std::vector<float>> acts;  // per layer input activation
  std::vector<std::vector<float>> zs;    // pre-activation per layer
};

// Forward pass; dot products accumulate in double, hidden activations are
// stored as float32, the final logit stays double.
double forward_logit(std::span<const std::uint32_t> sizes, std::span<const float> params,
                     std::span<const float> x, Scratch* scratch) {
  const std::size_t layers = sizes.size() - 1;
  std::vector<float> cur(x.begin(), x.end());
  if (scratch) {
    scratch->acts.assign(layers, {});
    scratch->zs.assign(layers, {});
  }
  std::size_t off = 0;
  double logit = 0.0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    if (scratch) scratch->acts[l] = cur;
    std::vector<float> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = params[off + in * out + o];  // bias
      const float* wr = params.data() + off + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(wr[i]) * cur[i];
      if (l + 1 == layers) logit = acc;
      z[o] = static_cast<float>(acc);
    }
    if (scratch) scratch->zs[l] = z;
    if (l + 1 < layers) {
      for (auto& v : z) v = v > 0.0f ? v : 0.0f;  // ReLU
      cur = std::move(z);
    }
    off += in * out + out;
  }
  return logit;
}

// Accumulates the gradient of scale * BCE(example) into grad.
void backprop_example(std::span<const std::uint32_t> sizes, std::span<const float> params,
                      std::span<const float> x, int label, double scale,
                      std::span<float> grad) {
  Scratch s;
  const double z = forward_logit(sizes, params, x, &s);
  const std::size_t layers = sizes.size() - 1;

  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  }

  std::vector<float> dz(1, static_cast<float>((sigmoid(z) - label) * scale));
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    const auto& a = s.acts[l];
    float* gw = grad.data() + offsets[l];
    float* gb = gw + in * out;
    for (std::size_t o = 0; o < out; ++o) {
      const float g = dz[o];
      gb[o] += g;
      for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += g * a[i];
    }
    if (l == 0) break;
    const float* w = params.data() + offsets[l];
    std::vector<float> dprev(in, 0.0f);
    for (std::size_t o = 0; o < out; ++o) {
      const float g = dz[o];
      for (std::size_t i = 0; i < in; ++i) dprev[i] += g * w[o * in + i];
    }
    const auto& zprev = s.zs[l - 1];
    for (std::size_t i = 0; i < in; ++i)
      if (zprev[i] <= 0.0f) dprev[i] = 0.0f;
    dz = std::move(dprev);
  }
}

double batch_loss(std::span<const std::uint32_t> sizes, std::span<const float> params,
                  std::span<const LabeledVector> batch) {
  double total = 0.0;
  for (const auto& ex : batch)
    total += bce_with_logit(forward_logit(sizes, params, ex.values, nullptr), ex.label);
  return total / static_cast<double>(batch.size());
}

void validate_data(std::span<const LabeledVector> data, std::size_t min_per_class) {
  if (data.empty()) throw DataError("classifier: empty data");
  const std::size_t k = data.front().values.size();
  std::size_t per_class[2] = {0, 0};
  for (const auto& ex : data) {
    if (ex.values.size() != k) throw DataError("classifier: vectors have mismatched lengths");
    if (ex.label != 0 && ex.label != 1) throw DataError("classifier: label must be 0 or 1");
    ++per_class[ex.label];
  }
  if (min_per_class > 0 && (per_class[0] < min_per_class || per_class[1] < min_per_class))
    throw DataError("classifier: need at least " + std::to_string(min_per_class) +
                    " examples per class (got " + std::to_string(per_class[0]) + " familiar, " +
                    std::to_string(per_class[1]) + " unfamiliar)");
}

}  // namespace

AwarenessClassifier::AwarenessClassifier(std::uint32_t input_dim,
                                         std::span<const std::uint32_t> hidden, float threshold,
                                         std::uint64_t seed)
    : threshold_(threshold) {
  if (input_dim == 0) throw DataError("classifier: input_dim must be >= 1");
  if (!(threshold > 0.0f && threshold < 1.0f))
    throw DataError("classifier: threshold must be in (0, 1)");
  sizes_.push_back(input_dim);
  for (auto h : hidden) {
    if (h == 0) throw DataError("classifier: hidden width must be >= 1");
    sizes_.push_back(h);
  }
  sizes_.push_back(1);
  params_.assign(param_count(sizes_), 0.0f);
  SeededRng rng(seed);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const float std_dev = std::sqrt(2.0f / static_cast<float>(in));
    for (std::size_t i = 0; i < in * out; ++i)
      params_[off + i] = static_cast<float>(rng.next_gaussian() * std_dev);
    off += in * out + out;  // biases stay zero
  }
}

double AwarenessClassifier::raw_logit(std::span<const float> x) const {
  if (x.size() != input_dim())
    throw DataError("classifier: input length " + std::to_string(x.size()) +
                    " does not match expected " + std::to_string(input_dim()));
  return forward_logit(sizes_, params_, x, nullptr);
}

AwarenessClassifier train_classifier(std::span<const LabeledVector> data,
                                     const ClassifierHyper& hyper,
                                     std::vector<double>* loss_history) {
  validate_data(data, 2);
  if (hyper.batch == 0) throw DataError("classifier: batch size must be >= 1");
  const auto input_dim = static_cast<std::uint32_t>(data.front().values.size());
  AwarenessClassifier clf(input_dim, hyper.hidden, hyper.threshold, hyper.seed);
  if (loss_history) loss_history->clear();
  if (hyper.epochs == 0) return clf;

  SeededRng rng(hyper.seed ^ 0x5157434c462e7472ull);  // training stream, distinct from init
  detail::AdamState adam(clf.params().size(), hyper.beta1, hyper.beta2, hyper.adam_eps);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<float> grad(clf.params().size(), 0.0f);

  for (std::uint32_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = order.size(); i-- > 1;) {
      const std::size_t j = rng.next_below(i + 1);
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t end = std::min(order.size(), start + hyper.batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0f);
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = data[order[i]];
        loss += bce_with_logit(forward_logit(clf.layer_sizes(), clf.params(), ex.values, nullptr),
                               ex.label);
        backprop_example(clf.layer_sizes(), clf.params(), ex.values, ex.label, scale, grad);
      }
      adam.step(clf.params_mut(), grad, hyper.lr);
      epoch_loss += loss * scale * (static_cast<double>(end - start) / data.size());
    }
    if (loss_history) loss_history->push_back(epoch_loss);
  }
  return clf;
}

Prediction classify(const AwarenessClassifier& clf, std::span<const float> vec) {
  const double p = sigmoid(clf.raw_logit(vec));
  Prediction out;
  out.probability = p;
  out.label = p >= clf.threshold() ? AwLabel::unfamiliar : AwLabel::familiar;
  return out;
}

std::optional<double> auc_from_scores(std::span<const double> scores,
                                      std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("auc: scores/labels size mismatch");
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += (y == 1);
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie groups (Mann-Whitney with 1/2 per tie).
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t)
      if (labels[idx[t]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double auc = (rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0) /
                     (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return auc;
}

Evaluation evaluate(const AwarenessClassifier& clf, std::span<const LabeledVector> data) {
  validate_data(data, 0);
  Evaluation ev;
  std::vector<double> scores(data.size());
  std::vector<int> labels(data.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto pred = classify(clf, data[i].values);
    scores[i] = pred.probability;
    labels[i] = data[i].label;
    const int predicted = pred.label == AwLabel::unfamiliar ? 1 : 0;
    if (predicted == data[i].label) ++correct;
    if (predicted == 1 && data[i].label == 1) ++ev.tp;
    if (predicted == 1 && data[i].label == 0) ++ev.fp;
    if (predicted == 0 && data[i].label == 0) ++ev.tn;
    if (predicted == 0 && data[i].label == 1) ++ev.fn;
  }
  ev.accuracy = static_cast<double>(correct) / data.size();
  ev.auc = auc_from_scores(scores, labels);
  return ev;
}

double gradient_check(const AwarenessClassifier& clf, std::span<const LabeledVector> batch) {
  if (batch.empty()) throw DataError("gradient_check: empty batch");
  validate_data(batch, 0);

  std::vector<float> analytic(clf.params().size(), 0.0f);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch)
    backprop_example(clf.layer_sizes(), clf.params(), ex.values, ex.label, scale, analytic);

  AwarenessClassifier probe = clf;
  constexpr float h = 1e-3f;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const float saved = probe.params()[i];
    probe.params_mut()[i] = saved + h;
    const double lp = batch_loss(probe.layer_sizes(), probe.params(), batch);
    probe.params_mut()[i] = saved - h;
    const double lm = batch_loss(probe.layer_sizes(), probe.params(), batch);
    probe.params_mut()[i] = saved;
    const double numeric = (lp - lm) / (2.0 * static_cast<double>(h));
    const double a = analytic[i];
    // Scale floor: below it the comparison is absolute at 1e-4.
    const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-2);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

void save_classifier(const AwarenessClassifier& clf, const std::string& path) {
  detail::ByteWriter w;
  w.magic(kClassifierMagic);
  w.u32(static_cast<std::uint32_t>(clf.layer_sizes().size()));
  for (auto s : clf.layer_sizes()) w.u32(s);
  w.f32(clf.threshold());
  w.f32_span(clf.params());
  detail::write_file_bytes(path, w.bytes());
}

AwarenessClassifier load_classifier(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  r.expect_magic(kClassifierMagic);
  const std::uint32_t n_sizes = r.u32();
  if (n_sizes < 2 || n_sizes > 64)
    throw FormatError("classifier checkpoint: implausible layer count at offset 8");
  std::vector<std::uint32_t> sizes(n_sizes);
  for (auto& s : sizes) s = r.u32();
  if (sizes.back() != 1) throw FormatError("classifier checkpoint: output layer must have size 1");
  const float threshold = r.f32();
  std::vector<std::uint32_t> hidden(sizes.begin() + 1, sizes.end() - 1);
  AwarenessClassifier clf(sizes.front(), hidden, threshold, 0);
  r.f32_span(clf.params_mut());
  r.expect_end();
  return clf;
}

}  // namespace kamir
