#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kamir/tensor.hpp"

namespace kamir {

using TokenId = std::int32_t;

// Byte 0x00 doubles as padding and stop marker. encode() never emits it, so
// the full byte range 1..255 maps one-to-one.
inline constexpr TokenId kStopToken = 0;

// Byte-level tokenizer. decode(encode(s)) == s for every NUL-free byte
// string; NUL bytes are dropped on encode (0 is reserved, see kStopToken).
std::vector<TokenId> encode(std::string_view text);
std::string decode(std::span<const TokenId> tokens);

struct LmConfig {
  std::uint32_t n_layers = 4;
  std::uint32_t hidden_dim = 64;
  std::uint32_t n_heads = 4;
  std::uint32_t ffn_dim = 256;
  std::uint32_t vocab_size = 256;
  std::uint32_t max_seq_len = 512;
  std::uint64_t seed = 1;  // weight-init seed; not part of the checkpoint format

  void validate() const;  // throws DataError (needs n_layers >= 2, dim % heads == 0, ...)
  bool same_architecture(const LmConfig& other) const;
};

// Which vector stands in for the final layer when a trace is read out:
// the residual stream as-is, or after the final normalization. All earlier
// layers are always post-residual stream states.
enum class TraceAnchor { pre_final_norm, post_final_norm };

enum class TracePosition { final_generated_token, final_input_token };

struct HiddenStateTrace {
  std::string doc_id;
  // Exactly n_layers vectors of hidden_dim, captured at one token position.
  std::vector<std::vector<float>> layer_states;
  TracePosition position_kind = TracePosition::final_generated_token;
};

// Offsets into the flat parameter vector. Checkpoints serialize weights in
// exactly this order: token embedding, position embedding, then per block
// (ln1 gamma/beta, Wq, Wk, Wv, Wo, ln2 gamma/beta, W1, W2), final layer-norm
// gamma/beta, LM head. Projection matrices are row-major [out x in].
struct BlockOffsets {
  std::size_t ln1_gamma, ln1_beta;
  std::size_t wq, wk, wv, wo;
  std::size_t ln2_gamma, ln2_beta;
  std::size_t w1, w2;
};

struct ParamLayout {
  std::size_t tok_emb = 0;
  std::size_t pos_emb = 0;
  std::vector<BlockOffsets> blocks;
  std::size_t final_ln_gamma = 0;
  std::size_t final_ln_beta = 0;
  std::size_t lm_head = 0;
  std::size_t total = 0;

  static ParamLayout build(const LmConfig& cfg);
};

// Decoder-only pre-norm transformer: learned token + position embeddings,
// causal multi-head attention and GELU FFN per block (untied LM head).
class MiniLmModel {
 public:
  MiniLmModel() = default;
  explicit MiniLmModel(const LmConfig& cfg);  // gaussian init from cfg.seed

  const LmConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<const float> params() const { return params_; }
  std::span<float> params_mut() { return params_; }

 private:
  LmConfig cfg_;
  ParamLayout layout_;
  std::vector<float> params_;
};

struct ForwardTrace {
  DenseMatrix logits;                            // positions x vocab
  std::vector<std::vector<float>> layer_states;  // n_layers vectors at the last position
};

ForwardTrace forward_with_trace(const MiniLmModel& model, std::span<const TokenId> tokens,
                                TraceAnchor anchor = TraceAnchor::pre_final_norm);

struct GenerateResult {
  std::vector<TokenId> output_tokens;
  HiddenStateTrace trace;
};

// Greedy decoding (argmax, lowest token id wins ties) for up to max_output
// tokens, stopping at kStopToken or a full context window. The trace is taken
// at the position of the final generated token; if the stop token would be
// the very first output the trace falls back to the final input token.
GenerateResult generate(const MiniLmModel& model, std::span<const TokenId> input_tokens,
                        std::size_t max_output, TraceAnchor anchor = TraceAnchor::pre_final_norm,
                        std::string doc_id = {});

struct PretrainOptions {
  std::size_t steps = 2000;
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
};

// Next-token cross-entropy training; each step takes one Adam update on a
// uniformly sampled corpus sequence. Returns the per-step loss curve.
std::vector<double> pretrain(MiniLmModel& model, std::span<const std::vector<TokenId>> corpus,
                             const PretrainOptions& opt, SeededRng& rng);

// Mean over documents of the per-document mean next-token cross-entropy.
double corpus_loss(const MiniLmModel& model, std::span<const std::vector<TokenId>> corpus);

// Loss and analytic parameter gradient for one sequence (all next-token
// positions are targets). The gradient pairs with finite-difference oracles.
double sequence_loss(const MiniLmModel& model, std::span<const TokenId> tokens);
std::vector<float> sequence_gradient(const MiniLmModel& model, std::span<const TokenId> tokens);

// Checkpoint file: magic "KAMLM001", six u32 little-endian config fields
// (n_layers, hidden_dim, n_heads, ffn_dim, vocab_size, max_seq_len), then all
// weights as f32 little-endian in ParamLayout order.
void save_checkpoint(const MiniLmModel& model, const std::string& path);
MiniLmModel load_checkpoint(const std::string& path,
                            const std::optional<LmConfig>& expected = std::nullopt);

}  // namespace kamir
