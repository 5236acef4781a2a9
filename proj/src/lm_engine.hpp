#pragma once

// Forward/backward engine for the decoder-only LM, private to the library.
// The same code path serves plain training and LoRA runs: selected projection
// matrices can carry a low-rank patch, and the backward pass always produces
// gradients w.r.t. the *effective* weights (base + patch). Callers map those
// to base-parameter or adapter-parameter gradients.

#include <cstdint>
#include <span>
#include <vector>

#include "kamir/minilm.hpp"

namespace kamir::detail {

enum class ProjKind : int { q = 0, k = 1, v = 2, o = 3, ffn_in = 4, ffn_out = 5 };
inline constexpr int kProjKindCount = 6;

// W_eff = W + scale * B(out x r) * A(r x in); inactive when a == nullptr.
struct LowRankPatch {
  const float* a = nullptr;
  const float* b = nullptr;
  std::uint32_t rank = 0;
  float scale = 1.0f;
  bool active() const { return a != nullptr; }
};

struct PatchSet {
  std::uint32_t n_blocks = 0;
  std::vector<LowRankPatch> entries;  // n_blocks * kProjKindCount

  const LowRankPatch& at(std::uint32_t block, ProjKind kind) const {
    return entries[block * kProjKindCount + static_cast<int>(kind)];
  }
  LowRankPatch& at(std::uint32_t block, ProjKind kind) {
    return entries[block * kProjKindCount + static_cast<int>(kind)];
  }
};

struct BlockActs {
  std::vector<float> xhat1, u;      // T x d (normalized pre-affine / post-affine)
  std::vector<float> istd1;         // T
  std::vector<float> q, k, v;       // T x d
  std::vector<float> att;           // heads x T x T, rows softmaxed (kept passes only)
  std::vector<float> attn_concat;   // T x d, head outputs before Wo
  std::vector<float> x_mid;         // T x d, residual after attention
  std::vector<float> xhat2, w;      // T x d
  std::vector<float> istd2;         // T
  std::vector<float> f1, act;       // T x ffn (pre-GELU / post-GELU)
};

struct Workspace {
  std::size_t T = 0;
  std::vector<std::vector<float>> stream;  // N+1 buffers of T x d: X[0..N]
  std::vector<BlockActs> blocks;           // N entries
  std::vector<float> xhat_f, y_f;          // T x d, final layer norm
  std::vector<float> istd_f;               // T
  std::vector<float> logits;               // T x vocab
  // Materialized effective weights per (block, kind); empty vectors where the
  // base weight is used directly.
  std::vector<std::vector<float>> weff;
  bool kept = false;
};

struct LossStats {
  double loss = 0.0;     // mean cross-entropy per target token, nats
  double entropy = 0.0;  // mean predictive entropy at target positions, nats
  std::size_t targets = 0;
};

void forward(const MiniLmModel& m, std::span<const TokenId> tokens, const PatchSet* patches,
             Workspace& ws, bool keep_activations);

// Residual-stream states H_1..H_N at the last position; the anchor picks the
// pre- or post-final-norm vector for H_N.
std::vector<std::vector<float>> read_trace(const MiniLmModel& m, const Workspace& ws,
                                           TraceAnchor anchor);

// target_mask[i] == 1 marks token i as predicted from its prefix (requires
// i >= 1). When grad_eff is non-empty (layout().total entries) the effective
// weight gradients of the mean loss are accumulated into it.
LossStats loss_and_grad(const MiniLmModel& m, std::span<const TokenId> tokens,
                        std::span<const std::uint8_t> target_mask, const PatchSet* patches,
                        std::span<float> grad_eff, bool want_entropy, Workspace& ws);

// (in, out) dimensions of one projection matrix under the model config.
void proj_dims(const LmConfig& cfg, ProjKind kind, std::size_t& in, std::size_t& out);

// Flat-parameter offset of one projection matrix.
std::size_t proj_offset(const ParamLayout& layout, std::uint32_t block, ProjKind kind);

// out := base + scale * B * A (row-major out x in). Shared by the engine and
// by adapter merging so both produce bit-identical effective weights.
void materialize_effective(std::span<const float> base, const LowRankPatch& patch,
                           std::size_t in, std::size_t out, std::span<float> dst);

}  // namespace kamir::detail
