#include "kamir/lora.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "internal_util.hpp"
#include "lm_engine.hpp"

namespace kamir {

namespace {

constexpr float kAdapterInitStd = 0.02f;

detail::ProjKind to_proj_kind(LoraTarget t) { return static_cast<detail::ProjKind>(t); }

std::vector<LoraTarget> canonical_targets(std::vector<LoraTarget> ts) {
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

// A(r x in) comes first, then B(out x r), per (block, target).
std::size_t pair_size(const LmConfig& cfg, LoraTarget t, std::uint32_t rank) {
  std::size_t in = 0, out = 0;
  detail::proj_dims(cfg, to_proj_kind(t), in, out);
  return static_cast<std::size_t>(rank) * (in + out);
}

detail::PatchSet build_patch_set(const AdaptedModel& m) {
  const LmConfig& cfg = m.base().config();
  detail::PatchSet ps;
  ps.n_blocks = cfg.n_layers;
  ps.entries.assign(static_cast<std::size_t>(cfg.n_layers) * detail::kProjKindCount, {});
  const float scale = m.lora().alpha / static_cast<float>(m.lora().rank);
  for (std::uint32_t b = 0; b < cfg.n_layers; ++b) {
    for (std::size_t ti = 0; ti < m.lora().targets.size(); ++ti) {
      const LoraTarget t = m.lora().targets[ti];
      std::size_t in = 0, out = 0;
      detail::proj_dims(cfg, to_proj_kind(t), in, out);
      detail::LowRankPatch& p = ps.at(b, to_proj_kind(t));
      p.a = m.adapter().data() + m.offset_a(b, ti);
      p.b = m.adapter().data() + m.offset_b(b, ti);
      p.rank = m.lora().rank;
      p.scale = scale;
    }
  }
  return ps;
}

void require_unmerged(const AdaptedModel& m, const char* op) {
  if (m.merged()) throw DataError(std::string(op) + ": adapter was already merged (consumed)");
  if (m.adapter().empty()) throw DataError(std::string(op) + ": no adapter attached");
}

// Maps effective-weight gradients to adapter gradients:
// dA = scale * B^T * dW_eff, dB = scale * dW_eff * A^T.
void map_grad_to_adapter(const AdaptedModel& m, std::span<const float> grad_eff,
                         std::span<float> grad_adapter) {
  const LmConfig& cfg = m.base().config();
  const ParamLayout& layout = m.base().layout();
  const std::uint32_t r = m.lora().rank;
  const float scale = m.lora().alpha / static_cast<float>(r);
  for (std::uint32_t b = 0; b < cfg.n_layers; ++b) {
    for (std::size_t ti = 0; ti < m.lora().targets.size(); ++ti) {
      const LoraTarget t = m.lora().targets[ti];
      std::size_t in = 0, out = 0;
      detail::proj_dims(cfg, to_proj_kind(t), in, out);
      const float* dw = grad_eff.data() + detail::proj_offset(layout, b, to_proj_kind(t));
      const float* a = m.adapter().data() + m.offset_a(b, ti);
      const float* bb = m.adapter().data() + m.offset_b(b, ti);
      float* da = grad_adapter.data() + m.offset_a(b, ti);
      float* db = grad_adapter.data() + m.offset_b(b, ti);
      // dB[o][j] += scale * sum_i dW[o][i] * A[j][i]
      for (std::size_t o = 0; o < out; ++o) {
        for (std::uint32_t j = 0; j < r; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < in; ++i)
            acc += static_cast<double>(dw[o * in + i]) * a[j * in + i];
          db[o * r + j] += static_cast<float>(scale * acc);
        }
      }
      // dA[j][i] += scale * sum_o B[o][j] * dW[o][i]
      for (std::uint32_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < in; ++i) {
          double acc = 0.0;
          for (std::size_t o = 0; o < out; ++o)
            acc += static_cast<double>(bb[o * r + j]) * dw[o * in + i];
          da[j * in + i] += static_cast<float>(scale * acc);
        }
      }
    }
  }
}

struct DocStats {
  double loss = 0.0, entropy = 0.0;
  // adapter gradient written into grad (zeroed by callee); grad may be empty
};

DocStats adapted_doc_stats(const AdaptedModel& m, const SftDoc& doc, std::span<float> grad_adapter,
                           bool want_entropy, detail::Workspace& ws,
                           std::span<float> grad_eff_scratch) {
  const auto ps = build_patch_set(m);
  DocStats out;
  if (!grad_adapter.empty()) {
    std::fill(grad_eff_scratch.begin(), grad_eff_scratch.end(), 0.0f);
    std::fill(grad_adapter.begin(), grad_adapter.end(), 0.0f);
    const auto stats = detail::loss_and_grad(m.base(), doc.tokens, doc.target_mask, &ps,
                                             grad_eff_scratch, want_entropy, ws);
    map_grad_to_adapter(m, grad_eff_scratch, grad_adapter);
    out.loss = stats.loss;
    out.entropy = stats.entropy;
  } else {
    const auto stats =
        detail::loss_and_grad(m.base(), doc.tokens, doc.target_mask, &ps, {}, want_entropy, ws);
    out.loss = stats.loss;
    out.entropy = stats.entropy;
  }
  return out;
}

double l2_norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

}  // namespace

std::string_view to_string(LoraTarget t) {
  switch (t) {
    case LoraTarget::q_proj: return "q_proj";
    case LoraTarget::k_proj: return "k_proj";
    case LoraTarget::v_proj: return "v_proj";
    case LoraTarget::o_proj: return "o_proj";
    case LoraTarget::ffn_in: return "ffn_in";
    case LoraTarget::ffn_out: return "ffn_out";
  }
  throw InternalError("to_string(LoraTarget): bad value");
}

LoraTarget parse_lora_target(std::string_view s) {
  for (int i = 0; i < 6; ++i) {
    const auto t = static_cast<LoraTarget>(i);
    if (to_string(t) == s) return t;
  }
  throw DataError("unknown LoRA target '" + std::string(s) +
                  "' (expected q_proj|k_proj|v_proj|o_proj|ffn_in|ffn_out)");
}

std::size_t AdaptedModel::offset_a(std::uint32_t block, std::size_t target_index) const {
  std::size_t off = static_cast<std::size_t>(block) * per_block_size_.back();
  for (std::size_t i = 0; i < target_index; ++i) off += per_block_size_[i];
  return off;
}

std::size_t AdaptedModel::offset_b(std::uint32_t block, std::size_t target_index) const {
  std::size_t in = 0, out = 0;
  detail::proj_dims(base_.config(), to_proj_kind(cfg_.targets[target_index]), in, out);
  return offset_a(block, target_index) + static_cast<std::size_t>(cfg_.rank) * in;
}

AdaptedModel attach_lora(const MiniLmModel& model, const LoraConfig& cfg) {
  if (cfg.rank == 0) throw DataError("attach_lora: rank must be >= 1");
  if (cfg.targets.empty()) throw DataError("attach_lora: target set is empty");
  AdaptedModel out;
  out.base_ = model;
  out.cfg_ = cfg;
  out.cfg_.targets = canonical_targets(cfg.targets);

  // per_block_size_[i] = adapter floats for target i; back() = per-block total.
  out.per_block_size_.clear();
  std::size_t per_block = 0;
  for (LoraTarget t : out.cfg_.targets) {
    std::size_t in = 0, mo = 0;
    detail::proj_dims(model.config(), to_proj_kind(t), in, mo);
    if (cfg.rank >= std::min(in, mo))
      throw DataError("attach_lora: rank " + std::to_string(cfg.rank) +
                      " is not low-rank for target " + std::string(to_string(t)) + " (" +
                      std::to_string(mo) + "x" + std::to_string(in) + ")");
    const std::size_t sz = pair_size(model.config(), t, cfg.rank);
    out.per_block_size_.push_back(sz);
    per_block += sz;
  }
  out.per_block_size_.push_back(per_block);

  out.adapter_.assign(per_block * model.config().n_layers, 0.0f);
  SeededRng rng(cfg.seed);
  for (std::uint32_t b = 0; b < model.config().n_layers; ++b) {
    for (std::size_t ti = 0; ti < out.cfg_.targets.size(); ++ti) {
      std::size_t in = 0, mo = 0;
      detail::proj_dims(model.config(), to_proj_kind(out.cfg_.targets[ti]), in, mo);
      float* a = out.adapter_.data() + out.offset_a(b, ti);
      for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.rank) * in; ++i)
        a[i] = static_cast<float>(rng.next_gaussian() * kAdapterInitStd);
      // B stays zero: the fresh adapter is an exact no-op.
    }
  }
  return out;
}

SftDoc make_sft_example(const std::string& doc_id, std::string_view text,
                        std::uint32_t max_seq_len) {
  SftDoc doc;
  doc.doc_id = doc_id;
  doc.tokens = encode(text);
  if (doc.tokens.size() > max_seq_len) doc.tokens.resize(max_seq_len);
  if (doc.tokens.size() < 2)
    throw DataError("sft example '" + doc_id + "': needs at least 2 tokens");
  doc.target_mask.assign(doc.tokens.size(), 0);
  std::size_t answer_start = 1;  // no tab: everything after the first token
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    if (doc.tokens[i] == static_cast<TokenId>('\t')) {
      answer_start = i + 1;
      break;
    }
  }
  if (answer_start >= doc.tokens.size())
    throw DataError("sft example '" + doc_id + "': no answer tokens after the prompt separator");
  for (std::size_t i = answer_start; i < doc.tokens.size(); ++i) doc.target_mask[i] = 1;
  return doc;
}

std::vector<DynamicsRecord> sft_train(AdaptedModel& model, std::span<const SftDoc> docs,
                                      const SftOptions& opt) {
  require_unmerged(model, "sft_train");
  if (docs.empty()) throw DataError("sft_train: empty document list");

  SeededRng rng(opt.seed);
  detail::AdamState adam(model.adapter().size(), opt.beta1, opt.beta2, opt.adam_eps);
  std::vector<float> grad(model.adapter().size(), 0.0f);
  std::vector<float> grad_eff(model.base().layout().total, 0.0f);
  detail::Workspace ws;
  std::vector<DynamicsRecord> records;
  records.reserve(opt.steps);

  for (std::size_t step = 0; step < opt.steps; ++step) {
    const SftDoc& doc = docs[rng.next_below(docs.size())];
    const auto stats = adapted_doc_stats(model, doc, grad, true, ws, grad_eff);
    DynamicsRecord rec;
    rec.group = opt.group;
    rec.step = step;
    rec.loss = stats.loss;
    rec.entropy = stats.entropy;
    rec.grad_norm = l2_norm(grad);
    records.push_back(std::move(rec));
    adam.step(model.adapter_mut(), grad, opt.lr);
  }
  return records;
}

MiniLmModel merge_adapter(AdaptedModel& model) {
  require_unmerged(model, "merge_adapter");
  MiniLmModel merged = model.base_;
  const auto ps = build_patch_set(model);
  const LmConfig& cfg = merged.config();
  for (std::uint32_t b = 0; b < cfg.n_layers; ++b) {
    for (int k = 0; k < detail::kProjKindCount; ++k) {
      const auto kind = static_cast<detail::ProjKind>(k);
      const detail::LowRankPatch& p = ps.at(b, kind);
      if (!p.active()) continue;
      std::size_t in = 0, out = 0;
      detail::proj_dims(cfg, kind, in, out);
      const std::size_t off = detail::proj_offset(merged.layout(), b, kind);
      std::vector<float> eff(in * out);
      detail::materialize_effective(model.base_.params().subspan(off, in * out), p, in, out, eff);
      std::copy(eff.begin(), eff.end(), merged.params_mut().begin() + off);
    }
  }
  model.merged_ = true;
  return merged;
}

DenseMatrix adapted_logits(const AdaptedModel& model, std::span<const TokenId> tokens) {
  require_unmerged(model, "adapted_logits");
  const auto ps = build_patch_set(model);
  detail::Workspace ws;
  detail::forward(model.base(), tokens, &ps, ws, false);
  DenseMatrix logits(ws.T, model.base().config().vocab_size);
  logits.data = ws.logits;
  return logits;
}

DocDynamics doc_dynamics(const AdaptedModel& model, const SftDoc& doc) {
  require_unmerged(model, "doc_dynamics");
  std::vector<float> grad(model.adapter().size(), 0.0f);
  std::vector<float> grad_eff(model.base().layout().total, 0.0f);
  detail::Workspace ws;
  const auto stats = adapted_doc_stats(model, doc, grad, true, ws, grad_eff);
  DocDynamics out;
  out.doc_id = doc.doc_id;
  out.loss = stats.loss;
  out.entropy = stats.entropy;
  out.grad_norm = l2_norm(grad);
  return out;
}

GroupSummary group_dynamics(const AdaptedModel& model, std::span<const SftDoc> docs,
                            const std::string& group, unsigned threads) {
  require_unmerged(model, "group_dynamics");
  if (docs.empty()) throw DataError("group_dynamics: group '" + group + "' is empty");
  std::vector<DocDynamics> per_doc(docs.size());
  detail::parallel_for(docs.size(), threads,
                       [&](std::size_t i) { per_doc[i] = doc_dynamics(model, docs[i]); });
  GroupSummary out;
  out.group = group;
  out.count = docs.size();
  for (const auto& d : per_doc) {
    out.mean_loss += d.loss;
    out.mean_entropy += d.entropy;
    out.mean_grad_norm += d.grad_norm;
  }
  out.mean_loss /= static_cast<double>(docs.size());
  out.mean_entropy /= static_cast<double>(docs.size());
  out.mean_grad_norm /= static_cast<double>(docs.size());
  return out;
}

double sft_loss(const AdaptedModel& model, const SftDoc& doc) {
  require_unmerged(model, "sft_loss");
  detail::Workspace ws;
  std::vector<float> none;
  return adapted_doc_stats(model, doc, none, false, ws, none).loss;
}

std::vector<float> adapter_gradient(const AdaptedModel& model, const SftDoc& doc) {
  require_unmerged(model, "adapter_gradient");
  std::vector<float> grad(model.adapter().size(), 0.0f);
  std::vector<float> grad_eff(model.base().layout().total, 0.0f);
  detail::Workspace ws;
  adapted_doc_stats(model, doc, grad, false, ws, grad_eff);
  return grad;
}

void write_dynamics_csv(std::span<const DynamicsRecord> records, const std::string& path) {
  std::string out = "group,step,loss,entropy,grad_norm\n";
  for (const auto& r : records) {
    out += detail::csv_escape(r.group);
    out += ',' + std::to_string(r.step);
    out += ',' + detail::format_g9(r.loss);
    out += ',' + detail::format_g9(r.entropy);
    out += ',' + detail::format_g9(r.grad_norm);
    out += '\n';
  }
  detail::write_file_bytes(path, out);
}

void write_group_summary_csv(std::span<const GroupSummary> rows, const std::string& path) {
  std::string out = "group,mean_loss,mean_entropy,mean_grad_norm\n";
  for (const auto& r : rows) {
    out += detail::csv_escape(r.group);
    out += ',' + detail::format_g9(r.mean_loss);
    out += ',' + detail::format_g9(r.mean_entropy);
    out += ',' + detail::format_g9(r.mean_grad_norm);
    out += '\n';
  }
  detail::write_file_bytes(path, out);
}

std::vector<GroupSummary> read_group_summary_csv(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  std::istringstream in(bytes);
  std::string line;
  if (!std::getline(in, line) || line != "group,mean_loss,mean_entropy,mean_grad_norm")
    throw FormatError(path + ": line 1: bad group summary header");
  std::vector<GroupSummary> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t pos = 0;
    GroupSummary r;
    r.group = detail::csv_take_field(line, pos);
    try {
      r.mean_loss = std::stod(detail::csv_take_field(line, pos));
      r.mean_entropy = std::stod(detail::csv_take_field(line, pos));
      r.mean_grad_norm = std::stod(detail::csv_take_field(line, pos));
    } catch (const std::exception&) {
      throw FormatError(path + ": line " + std::to_string(line_no) + ": bad number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace kamir
