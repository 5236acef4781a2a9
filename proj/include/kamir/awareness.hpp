#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kamir/minilm.hpp"

namespace kamir {

enum class AwarenessSource { internal_model, imported_trace };

// Layer-to-final cosine profile: values[a] = cos(H_{a+1}, H_N), K = N-1
// entries, each in [-1, 1].
struct AwarenessVector {
  std::string doc_id;
  std::vector<float> values;
  AwarenessSource source = AwarenessSource::internal_model;
};

struct SubPassage {
  std::string parent_doc_id;
  std::size_t index = 0;
  std::vector<TokenId> tokens;
};

AwarenessVector awareness_from_trace(const HiddenStateTrace& trace);

// Fixed-length chunks in document order; the tail keeps whatever remains
// (>= 1 token), so the chunks always partition the document.
std::vector<SubPassage> chunk_document(std::span<const TokenId> tokens, std::size_t chunk_len,
                                       const std::string& doc_id = {});

enum class MeanMode { uniform, token_weighted };

// Elementwise mean of per-sub-passage vectors; factored out so the averaging
// rule is testable without a model. token_counts is only read in
// token_weighted mode.
std::vector<float> mean_awareness(std::span<const std::vector<float>> vectors,
                                  std::span<const std::size_t> token_counts, MeanMode mode);

// generate + awareness_from_trace per sub-passage, then the configured mean.
AwarenessVector document_awareness(const MiniLmModel& model, const std::string& doc_id,
                                   std::string_view text, std::size_t chunk_len,
                                   std::size_t max_output, MeanMode mode = MeanMode::uniform,
                                   TraceAnchor anchor = TraceAnchor::pre_final_norm);

// KHST trace file: magic "KAMIRHS1"; u32 LE trace_count, n_layers, hidden_dim;
// then trace_count records of n_layers x hidden_dim f32 LE values
// (layer-major). A sidecar "<path>.idx" maps record ordinal -> doc_id, one
// tab-separated pair per line.
void export_traces(std::span<const HiddenStateTrace> traces, const std::string& path);
std::vector<HiddenStateTrace> import_traces(const std::string& path);

enum class AwLabel { familiar, unfamiliar, unlabeled };
std::string_view to_string(AwLabel label);
AwLabel parse_label(std::string_view s);  // throws DataError on unknown text

struct LabeledAwareness {
  AwarenessVector vec;
  AwLabel label = AwLabel::unlabeled;
};

// CSV with header doc_id,label,s_1,...,s_K; values printed with 9 significant
// digits (lossless for float32).
void write_awareness_csv(std::span<const LabeledAwareness> rows, const std::string& path);
std::vector<LabeledAwareness> read_awareness_csv(const std::string& path);

}  // namespace kamir
