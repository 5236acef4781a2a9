#include "kamir/awareness.hpp"

#include <cmath>
#include <sstream>

#include "internal_util.hpp"

namespace kamir {

namespace {
constexpr char kTraceMagic[9] = "KAMIRHS1";
}

AwarenessVector awareness_from_trace(const HiddenStateTrace& trace) {
  const std::size_t n = trace.layer_states.size();
  if (n < 2)
    throw DataError("awareness_from_trace: need at least 2 layers, got " + std::to_string(n));
  const auto& anchor = trace.layer_states.back();
  AwarenessVector out;
  out.doc_id = trace.doc_id;
  out.values.reserve(n - 1);
  for (std::size_t a = 0; a + 1 < n; ++a) {
    const auto& h = trace.layer_states[a];
    if (h.size() != anchor.size())
      throw DataError("awareness_from_trace: layer " + std::to_string(a + 1) +
                      " has mismatched dimension");
    out.values.push_back(static_cast<float>(cosine_similarity(h, anchor)));
  }
  return out;
}

std::vector<SubPassage> chunk_document(std::span<const TokenId> tokens, std::size_t chunk_len,
                                       const std::string& doc_id) {
  if (chunk_len == 0) throw DataError("chunk_document: chunk_len must be >= 1");
  if (tokens.empty()) throw DataError("chunk_document: empty document");
  std::vector<SubPassage> out;
  for (std::size_t start = 0, idx = 0; start < tokens.size(); start += chunk_len, ++idx) {
    const std::size_t len = std::min(chunk_len, tokens.size() - start);
    SubPassage sp;
    sp.parent_doc_id = doc_id;
    sp.index = idx;
    sp.tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                     tokens.begin() + static_cast<std::ptrdiff_t>(start + len));
    out.push_back(std::move(sp));
  }
  return out;
}

std::vector<float> mean_awareness(std::span<const std::vector<float>> vectors,
                                  std::span<const std::size_t> token_counts, MeanMode mode) {
  if (vectors.empty()) throw DataError("mean_awareness: no vectors");
  const std::size_t k = vectors.front().size();
  std::vector<double> acc(k, 0.0);
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != k) throw DataError("mean_awareness: inconsistent vector lengths");
    double w = 1.0;
    if (mode == MeanMode::token_weighted) {
      if (token_counts.size() != vectors.size())
        throw DataError("mean_awareness: token_counts must match vectors");
      w = static_cast<double>(token_counts[i]);
    }
    for (std::size_t j = 0; j < k; ++j) acc[j] += w * vectors[i][j];
    weight_sum += w;
  }
  KAMIR_CHECK(weight_sum > 0.0, "mean_awareness: zero total weight");
  std::vector<float> out(k);
  for (std::size_t j = 0; j < k; ++j) out[j] = static_cast<float>(acc[j] / weight_sum);
  return out;
}

AwarenessVector document_awareness(const MiniLmModel& model, const std::string& doc_id,
                                   std::string_view text, std::size_t chunk_len,
                                   std::size_t max_output, MeanMode mode, TraceAnchor anchor) {
  const auto tokens = encode(text);
  if (tokens.empty()) throw DataError("document_awareness: document '" + doc_id +
                                      "' encodes to zero tokens");
  const auto chunks = chunk_document(tokens, chunk_len, doc_id);
  std::vector<std::vector<float>> vectors;
  std::vector<std::size_t> lengths;
  vectors.reserve(chunks.size());
  for (const auto& chunk : chunks) {
    try {
      const auto gen = generate(model, chunk.tokens, max_output, anchor, doc_id);
      vectors.push_back(awareness_from_trace(gen.trace).values);
      lengths.push_back(chunk.tokens.size());
    } catch (const DataError& e) {
      throw DataError("document '" + doc_id + "', sub-passage " + std::to_string(chunk.index) +
                      ": " + e.what());
    }
  }
  AwarenessVector out;
  out.doc_id = doc_id;
  out.values = mean_awareness(vectors, lengths, mode);
  out.source = AwarenessSource::internal_model;
  return out;
}

void export_traces(std::span<const HiddenStateTrace> traces, const std::string& path) {
  std::uint32_t n_layers = 0, dim = 0;
  if (!traces.empty()) {
    n_layers = static_cast<std::uint32_t>(traces.front().layer_states.size());
    dim = static_cast<std::uint32_t>(traces.front().layer_states.front().size());
  }
  detail::ByteWriter w;
  w.magic(kTraceMagic);
  w.u32(static_cast<std::uint32_t>(traces.size()));
  w.u32(n_layers);
  w.u32(dim);
  std::string index;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& tr = traces[i];
    if (tr.layer_states.size() != n_layers)
      throw DataError("export_traces: trace " + std::to_string(i) + " has inconsistent layer count");
    for (const auto& layer : tr.layer_states) {
      if (layer.size() != dim)
        throw DataError("export_traces: trace " + std::to_string(i) +
                        " has inconsistent hidden dimension");
      w.f32_span(layer);
    }
    index += std::to_string(i);
    index += '\t';
    index += tr.doc_id;
    index += '\n';
  }
  detail::write_file_bytes(path, w.bytes());
  detail::write_file_bytes(path + ".idx", index);
}

std::vector<HiddenStateTrace> import_traces(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  r.expect_magic(kTraceMagic);
  const std::uint32_t count = r.u32();
  const std::uint32_t n_layers = r.u32();
  const std::uint32_t dim = r.u32();
  if (count > 0 && n_layers < 2)
    throw FormatError("trace file declares n_layers=" + std::to_string(n_layers) +
                      " (offset 12); awareness needs at least 2 layers");
  if (count > 0 && dim == 0) throw FormatError("trace file declares hidden_dim=0 (offset 16)");

  std::vector<HiddenStateTrace> traces(count);
  for (auto& tr : traces) {
    tr.layer_states.assign(n_layers, std::vector<float>(dim, 0.0f));
    tr.position_kind = TracePosition::final_generated_token;
    for (auto& layer : tr.layer_states) r.f32_span(layer);
  }
  r.expect_end();

  // Sidecar index supplies the doc ids.
  const std::string index = detail::read_file_bytes(path + ".idx");
  std::istringstream in(index);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("trace index line " + std::to_string(rows + 1) + ": missing tab separator");
    std::size_t ordinal = 0;
    try {
      ordinal = std::stoul(line.substr(0, tab));
    } catch (const std::exception&) {
      throw FormatError("trace index line " + std::to_string(rows + 1) + ": bad ordinal");
    }
    if (ordinal >= traces.size())
      throw FormatError("trace index line " + std::to_string(rows + 1) +
                        ": ordinal out of range");
    traces[ordinal].doc_id = line.substr(tab + 1);
    ++rows;
  }
  if (rows != traces.size())
    throw FormatError("trace index lists " + std::to_string(rows) + " records, file holds " +
                      std::to_string(traces.size()));
  return traces;
}

std::string_view to_string(AwLabel label) {
  switch (label) {
    case AwLabel::familiar: return "familiar";
    case AwLabel::unfamiliar: return "unfamiliar";
    case AwLabel::unlabeled: return "unlabeled";
  }
  throw InternalError("to_string(AwLabel): bad value");
}

AwLabel parse_label(std::string_view s) {
  if (s == "familiar") return AwLabel::familiar;
  if (s == "unfamiliar") return AwLabel::unfamiliar;
  if (s == "unlabeled") return AwLabel::unlabeled;
  throw DataError("unknown label '" + std::string(s) + "' (expected familiar|unfamiliar|unlabeled)");
}

void write_awareness_csv(std::span<const LabeledAwareness> rows, const std::string& path) {
  if (rows.empty()) throw DataError("write_awareness_csv: no rows");
  const std::size_t k = rows.front().vec.values.size();
  std::string out = "doc_id,label";
  for (std::size_t i = 1; i <= k; ++i) out += ",s_" + std::to_string(i);
  out += '\n';
  for (const auto& row : rows) {
    if (row.vec.values.size() != k)
      throw DataError("write_awareness_csv: inconsistent vector lengths");
    out += detail::csv_escape(row.vec.doc_id);
    out += ',';
    out += to_string(row.label);
    for (float v : row.vec.values) {
      out += ',';
      out += detail::format_g9(v);
    }
    out += '\n';
  }
  detail::write_file_bytes(path, out);
}

std::vector<LabeledAwareness> read_awareness_csv(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  std::istringstream in(bytes);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty awareness CSV");
  if (line.rfind("doc_id,label", 0) != 0)
    throw FormatError(path + ": line 1: expected header starting with doc_id,label");
  std::vector<LabeledAwareness> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LabeledAwareness row;
    std::size_t pos = 0;
    row.vec.doc_id = detail::csv_take_field(line, pos);
    row.label = parse_label(detail::csv_take_field(line, pos));
    row.vec.source = AwarenessSource::imported_trace;
    while (pos < line.size()) {
      const std::string field = detail::csv_take_field(line, pos);
      try {
        row.vec.values.push_back(std::stof(field));
      } catch (const std::exception&) {
        throw FormatError(path + ": line " + std::to_string(line_no) + ": bad number '" + field +
                          "'");
      }
    }
    if (row.vec.values.empty())
      throw FormatError(path + ": line " + std::to_string(line_no) + ": no awareness values");
    if (!rows.empty() && rows.front().vec.values.size() != row.vec.values.size())
      throw FormatError(path + ": line " + std::to_string(line_no) +
                        ": inconsistent value count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path + ": awareness CSV has a header but no rows");
  return rows;
}

}  // namespace kamir
