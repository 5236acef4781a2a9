#include "kamir/minilm.hpp"

#include <cmath>

#include "internal_util.hpp"
#include "lm_engine.hpp"

namespace kamir {

namespace {
constexpr char kCheckpointMagic[9] = "KAMLM001";
constexpr float kInitStd = 0.02f;
}  // namespace

std::vector<TokenId> encode(std::string_view text) {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (unsigned char c : text) {
    if (c == 0) continue;  // 0x00 is reserved as stop/padding
    out.push_back(static_cast<TokenId>(c));
  }
  return out;
}

std::string decode(std::span<const TokenId> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t < 0 || t > 255) throw DataError("decode: token id out of range: " + std::to_string(t));
    if (t == kStopToken) continue;
    out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  }
  return out;
}

void LmConfig::validate() const {
  if (n_layers < 2)
    throw DataError("LmConfig: n_layers must be >= 2 (awareness needs K = N-1 >= 1)");
  if (hidden_dim == 0 || n_heads == 0 || hidden_dim % n_heads != 0)
    throw DataError("LmConfig: hidden_dim must be a positive multiple of n_heads");
  if (ffn_dim == 0) throw DataError("LmConfig: ffn_dim must be positive");
  if (vocab_size != 256) throw DataError("LmConfig: vocab_size must be 256 (byte-level)");
  if (max_seq_len == 0) throw DataError("LmConfig: max_seq_len must be positive");
}

bool LmConfig::same_architecture(const LmConfig& o) const {
  return n_layers == o.n_layers && hidden_dim == o.hidden_dim && n_heads == o.n_heads &&
         ffn_dim == o.ffn_dim && vocab_size == o.vocab_size && max_seq_len == o.max_seq_len;
}

ParamLayout ParamLayout::build(const LmConfig& cfg) {
  const std::size_t d = cfg.hidden_dim, f = cfg.ffn_dim, V = cfg.vocab_size;
  ParamLayout L;
  std::size_t off = 0;
  auto take = [&off](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  L.tok_emb = take(V * d);
  L.pos_emb = take(static_cast<std::size_t>(cfg.max_seq_len) * d);
  L.blocks.resize(cfg.n_layers);
  for (auto& b : L.blocks) {
    b.ln1_gamma = take(d);
    b.ln1_beta = take(d);
    b.wq = take(d * d);
    b.wk = take(d * d);
    b.wv = take(d * d);
    b.wo = take(d * d);
    b.ln2_gamma = take(d);
    b.ln2_beta = take(d);
    b.w1 = take(f * d);
    b.w2 = take(d * f);
  }
  L.final_ln_gamma = take(d);
  L.final_ln_beta = take(d);
  L.lm_head = take(V * d);
  L.total = off;
  return L;
}

MiniLmModel::MiniLmModel(const LmConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  layout_ = ParamLayout::build(cfg_);
  params_.assign(layout_.total, 0.0f);
  SeededRng rng(cfg_.seed);
  for (auto& p : params_) p = static_cast<float>(rng.next_gaussian() * kInitStd);
  // Layer-norm gains start at 1, shifts at 0.
  const std::size_t d = cfg_.hidden_dim;
  auto set_ln = [&](std::size_t gamma, std::size_t beta) {
    for (std::size_t i = 0; i < d; ++i) {
      params_[gamma + i] = 1.0f;
      params_[beta + i] = 0.0f;
    }
  };
  for (const auto& b : layout_.blocks) {
    set_ln(b.ln1_gamma, b.ln1_beta);
    set_ln(b.ln2_gamma, b.ln2_beta);
  }
  set_ln(layout_.final_ln_gamma, layout_.final_ln_beta);
}

ForwardTrace forward_with_trace(const MiniLmModel& model, std::span<const TokenId> tokens,
                                TraceAnchor anchor) {
  detail::Workspace ws;
  detail::forward(model, tokens, nullptr, ws, false);
  ForwardTrace out;
  const std::size_t V = model.config().vocab_size;
  out.logits = DenseMatrix(ws.T, V);
  out.logits.data = ws.logits;
  out.layer_states = detail::read_trace(model, ws, anchor);
  return out;
}

namespace {

TokenId argmax_lowest(std::span<const float> row) {
  TokenId best = 0;
  float best_v = row[0];
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > best_v) {
      best_v = row[i];
      best = static_cast<TokenId>(i);
    }
  }
  return best;
}

}  // namespace

GenerateResult generate(const MiniLmModel& model, std::span<const TokenId> input_tokens,
                        std::size_t max_output, TraceAnchor anchor, std::string doc_id) {
  if (max_output == 0)
    throw DataError("generate: max_output must be >= 1 (the trace is taken at a generated token)");
  if (input_tokens.empty()) throw DataError("generate: empty input");
  const LmConfig& cfg = model.config();
  if (input_tokens.size() > cfg.max_seq_len)
    throw DataError("generate: input exceeds max_seq_len");

  std::vector<TokenId> tokens(input_tokens.begin(), input_tokens.end());
  GenerateResult res;
  res.trace.doc_id = std::move(doc_id);
  res.trace.position_kind = TracePosition::final_input_token;

  detail::Workspace ws;
  const std::size_t V = cfg.vocab_size;
  for (;;) {
    detail::forward(model, tokens, nullptr, ws, false);
    res.trace.layer_states = detail::read_trace(model, ws, anchor);
    res.trace.position_kind = res.output_tokens.empty() ? TracePosition::final_input_token
                                                        : TracePosition::final_generated_token;
    if (res.output_tokens.size() >= max_output) break;
    if (tokens.size() >= cfg.max_seq_len) break;  // context full
    const TokenId next =
        argmax_lowest(std::span<const float>(ws.logits.data() + (ws.T - 1) * V, V));
    if (next == kStopToken) break;
    tokens.push_back(next);
    res.output_tokens.push_back(next);
  }
  return res;
}

namespace {

std::vector<std::uint8_t> all_targets_mask(std::size_t n) {
  std::vector<std::uint8_t> mask(n, 1);
  if (!mask.empty()) mask[0] = 0;
  return mask;
}

std::vector<TokenId> clip_to_context(const std::vector<TokenId>& doc, std::uint32_t max_len) {
  if (doc.size() <= max_len) return doc;
  return std::vector<TokenId>(doc.begin(), doc.begin() + max_len);
}

}  // namespace

std::vector<double> pretrain(MiniLmModel& model, std::span<const std::vector<TokenId>> corpus,
                             const PretrainOptions& opt, SeededRng& rng) {
  if (corpus.empty()) throw DataError("pretrain: empty corpus");
  std::vector<std::vector<TokenId>> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus) {
    auto clipped = clip_to_context(d, model.config().max_seq_len);
    if (clipped.size() >= 2) docs.push_back(std::move(clipped));
  }
  if (docs.empty())
    throw DataError("pretrain: no trainable sequence (every document is shorter than 2 tokens)");

  std::vector<double> curve;
  curve.reserve(opt.steps);
  detail::AdamState adam(model.layout().total, opt.beta1, opt.beta2, opt.adam_eps);
  std::vector<float> grad(model.layout().total, 0.0f);
  detail::Workspace ws;
  for (std::size_t step = 0; step < opt.steps; ++step) {
    const auto& doc = docs[rng.next_below(docs.size())];
    std::fill(grad.begin(), grad.end(), 0.0f);
    const auto mask = all_targets_mask(doc.size());
    const auto stats = detail::loss_and_grad(model, doc, mask, nullptr, grad, false, ws);
    adam.step(model.params_mut(), grad, opt.lr);
    curve.push_back(stats.loss);
  }
  return curve;
}

double corpus_loss(const MiniLmModel& model, std::span<const std::vector<TokenId>> corpus) {
  if (corpus.empty()) throw DataError("corpus_loss: empty corpus");
  detail::Workspace ws;
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& d : corpus) {
    const auto doc = clip_to_context(d, model.config().max_seq_len);
    if (doc.size() < 2) continue;
    const auto mask = all_targets_mask(doc.size());
    total += detail::loss_and_grad(model, doc, mask, nullptr, {}, false, ws).loss;
    ++counted;
  }
  if (counted == 0) throw DataError("corpus_loss: no sequence with at least 2 tokens");
  return total / static_cast<double>(counted);
}

double sequence_loss(const MiniLmModel& model, std::span<const TokenId> tokens) {
  detail::Workspace ws;
  const auto mask = all_targets_mask(tokens.size());
  return detail::loss_and_grad(model, tokens, mask, nullptr, {}, false, ws).loss;
}

std::vector<float> sequence_gradient(const MiniLmModel& model, std::span<const TokenId> tokens) {
  detail::Workspace ws;
  std::vector<float> grad(model.layout().total, 0.0f);
  const auto mask = all_targets_mask(tokens.size());
  detail::loss_and_grad(model, tokens, mask, nullptr, grad, false, ws);
  return grad;
}

void save_checkpoint(const MiniLmModel& model, const std::string& path) {
  detail::ByteWriter w;
  w.magic(kCheckpointMagic);
  const LmConfig& c = model.config();
  w.u32(c.n_layers);
  w.u32(c.hidden_dim);
  w.u32(c.n_heads);
  w.u32(c.ffn_dim);
  w.u32(c.vocab_size);
  w.u32(c.max_seq_len);
  w.f32_span(model.params());
  detail::write_file_bytes(path, w.bytes());
}

MiniLmModel load_checkpoint(const std::string& path, const std::optional<LmConfig>& expected) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  r.expect_magic(kCheckpointMagic);
  LmConfig cfg;
  cfg.n_layers = r.u32();
  cfg.hidden_dim = r.u32();
  cfg.n_heads = r.u32();
  cfg.ffn_dim = r.u32();
  cfg.vocab_size = r.u32();
  cfg.max_seq_len = r.u32();
  cfg.seed = 0;
  try {
    cfg.validate();
  } catch (const DataError& e) {
    throw FormatError("corrupt checkpoint header (offset 8): " + std::string(e.what()));
  }
  if (expected && !cfg.same_architecture(*expected))
    throw FormatError("checkpoint shape mismatch: file declares n_layers=" +
                      std::to_string(cfg.n_layers) + ", hidden_dim=" +
                      std::to_string(cfg.hidden_dim) + " but a different architecture was expected");
  MiniLmModel model(cfg);
  r.f32_span(model.params_mut());
  r.expect_end();
  return model;
}

}  // namespace kamir
