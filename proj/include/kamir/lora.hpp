#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kamir/minilm.hpp"

namespace kamir {

enum class LoraTarget : int { q_proj = 0, k_proj, v_proj, o_proj, ffn_in, ffn_out };

std::string_view to_string(LoraTarget t);
LoraTarget parse_lora_target(std::string_view s);

struct LoraConfig {
  std::uint32_t rank = 4;
  float alpha = 8.0f;
  std::vector<LoraTarget> targets = {LoraTarget::q_proj, LoraTarget::v_proj};
  std::uint64_t seed = 1;
};

// Frozen copy of the base model plus trainable low-rank deltas. Per target
// matrix the adapter stores A (r x in, gaussian init) then B (out x r, zero
// init), so a fresh adapter is an exact identity delta. Effective weight:
// W + (alpha / r) * B * A.
class AdaptedModel {
 public:
  AdaptedModel() = default;

  const MiniLmModel& base() const { return base_; }
  const LoraConfig& lora() const { return cfg_; }
  std::span<const float> adapter() const { return adapter_; }
  std::span<float> adapter_mut() { return adapter_; }
  std::size_t trainable_parameter_count() const { return adapter_.size(); }
  bool merged() const { return merged_; }

  // Flat offsets of the A / B factors for (block, index into lora().targets).
  std::size_t offset_a(std::uint32_t block, std::size_t target_index) const;
  std::size_t offset_b(std::uint32_t block, std::size_t target_index) const;

 private:
  friend AdaptedModel attach_lora(const MiniLmModel&, const LoraConfig&);
  friend MiniLmModel merge_adapter(AdaptedModel&);

  MiniLmModel base_;
  LoraConfig cfg_;
  std::vector<float> adapter_;
  std::vector<std::size_t> per_block_size_{};
  bool merged_ = false;
};

// Base weights are copied and never change afterwards; rank must stay below
// min(d_in, d_out) of every target.
AdaptedModel attach_lora(const MiniLmModel& model, const LoraConfig& cfg);

// SFT example: token sequence plus the target mask. A document with a tab
// byte splits prompt/answer there (answer tokens follow the tab); without a
// tab every position after the first is an answer position.
struct SftDoc {
  std::string doc_id;
  std::vector<TokenId> tokens;
  std::vector<std::uint8_t> target_mask;
};

SftDoc make_sft_example(const std::string& doc_id, std::string_view text,
                        std::uint32_t max_seq_len);

struct DynamicsRecord {
  std::string group;
  std::size_t step = 0;
  double loss = 0.0;       // mean CE per answer token, nats
  double entropy = 0.0;    // mean predictive entropy at answer positions, nats
  double grad_norm = 0.0;  // global L2 over adapter parameters
};

struct SftOptions {
  std::size_t steps = 100;
  float lr = 1e-3f;
  std::uint64_t seed = 1;
  std::string group = "unfamiliar";
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
};

// One uniformly sampled document per step; only adapter parameters move.
// Metrics in each record are measured on the step's batch before the update.
std::vector<DynamicsRecord> sft_train(AdaptedModel& model, std::span<const SftDoc> docs,
                                      const SftOptions& opt);

// Folds the adapter into the base weights and consumes the adapter; merging
// twice is an error.
MiniLmModel merge_adapter(AdaptedModel& model);

// Logits of the adapted model (base + low-rank patches) for one sequence.
DenseMatrix adapted_logits(const AdaptedModel& model, std::span<const TokenId> tokens);

struct DocDynamics {
  std::string doc_id;
  double loss = 0.0, entropy = 0.0, grad_norm = 0.0;
};

struct GroupSummary {
  std::string group;
  double mean_loss = 0.0, mean_entropy = 0.0, mean_grad_norm = 0.0;
  std::size_t count = 0;
};

// Evaluation-only metrics: gradients are computed for the norm but no
// optimizer ever steps.
DocDynamics doc_dynamics(const AdaptedModel& model, const SftDoc& doc);
GroupSummary group_dynamics(const AdaptedModel& model, std::span<const SftDoc> docs,
                            const std::string& group, unsigned threads = 1);

// Oracle hooks for the finite-difference tests.
double sft_loss(const AdaptedModel& model, const SftDoc& doc);
std::vector<float> adapter_gradient(const AdaptedModel& model, const SftDoc& doc);

// CSV layouts: group,step,loss,entropy,grad_norm and
// group,mean_loss,mean_entropy,mean_grad_norm.
void write_dynamics_csv(std::span<const DynamicsRecord> records, const std::string& path);
void write_group_summary_csv(std::span<const GroupSummary> rows, const std::string& path);
std::vector<GroupSummary> read_group_summary_csv(const std::string& path);

}  // namespace kamir
