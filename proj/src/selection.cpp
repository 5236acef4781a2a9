#include "kamir/selection.hpp"

#include <algorithm>
#include <filesystem>
#include <unordered_map>

#include <json.hpp>

#include "internal_util.hpp"
#include "kamir/sha256.hpp"

namespace kamir {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

Corpus ingest_corpus(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  Corpus corpus;
  corpus.source_path = path;
  corpus.digest = sha256_hex(bytes);

  std::unordered_map<std::string, std::size_t> seen;  // id -> line number
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= bytes.size()) {
    std::size_t end = bytes.find('\n', start);
    if (end == std::string::npos) end = bytes.size();
    const std::string_view line(bytes.data() + start, end - start);
    start = end + 1;
    if (end == bytes.size() && line.empty()) break;
    ++line_no;
    if (line.empty())
      throw DataError(path + ": line " + std::to_string(line_no) + ": empty line");

    ordered_json obj;
    try {
      obj = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object())
      throw DataError(path + ": line " + std::to_string(line_no) + ": expected a JSON object");
    if (!obj.contains("id") || !obj["id"].is_string())
      throw DataError(path + ": line " + std::to_string(line_no) + ": missing string field 'id'");
    if (!obj.contains("text") || !obj["text"].is_string())
      throw DataError(path + ": line " + std::to_string(line_no) +
                      ": missing string field 'text'");

    CorpusDocument doc;
    doc.id = obj["id"].get<std::string>();
    doc.text = obj["text"].get<std::string>();
    if (doc.text.empty())
      throw DataError(path + ": line " + std::to_string(line_no) + ": field 'text' is empty");
    if (obj.contains("label")) {
      if (!obj["label"].is_string())
        throw DataError(path + ": line " + std::to_string(line_no) + ": field 'label' must be a string");
      const auto label = parse_label(obj["label"].get<std::string>());
      if (label == AwLabel::unlabeled)
        throw DataError(path + ": line " + std::to_string(line_no) +
                        ": gold label must be familiar or unfamiliar");
      doc.gold_label = label;
    }

    const auto [it, inserted] = seen.emplace(doc.id, line_no);
    if (!inserted)
      throw DataError(path + ": duplicate id '" + doc.id + "' on lines " +
                      std::to_string(it->second) + " and " + std::to_string(line_no));
    corpus.docs.push_back(std::move(doc));
  }
  if (corpus.docs.empty()) throw DataError(path + ": corpus file holds no documents");
  return corpus;
}

std::vector<DocPrediction> label_corpus(const Corpus& corpus, const MiniLmModel& model,
                                        const AwarenessClassifier& clf, const LabelOptions& opt) {
  if (corpus.docs.empty()) throw DataError("label_corpus: empty corpus");
  const std::uint32_t k = model.config().n_layers - 1;
  if (clf.input_dim() != k)
    throw DataError("label_corpus: classifier expects input size " +
                    std::to_string(clf.input_dim()) + " but the model yields K = n_layers - 1 = " +
                    std::to_string(k));

  std::vector<DocPrediction> out(corpus.docs.size());
  detail::parallel_for(corpus.docs.size(), opt.threads, [&](std::size_t i) {
    const auto& doc = corpus.docs[i];
    DocPrediction& p = out[i];
    p.doc_id = doc.id;
    try {
      const auto aw = document_awareness(model, doc.id, doc.text, opt.chunk_len, opt.max_output,
                                         opt.mean_mode, opt.anchor);
      const auto pred = classify(clf, aw.values);
      p.awareness = aw.values;
      p.label = pred.label;
      p.probability = pred.probability;
    } catch (const DataError& e) {
      p.error = e.what();
      p.label = AwLabel::unlabeled;
    }
  });
  return out;
}

std::vector<LabeledAwareness> predictions_to_csv_rows(std::span<const DocPrediction> preds) {
  std::vector<LabeledAwareness> rows;
  rows.reserve(preds.size());
  for (const auto& p : preds) {
    if (p.error) continue;
    LabeledAwareness row;
    row.vec.doc_id = p.doc_id;
    row.vec.values = p.awareness;
    row.vec.source = AwarenessSource::internal_model;
    row.label = p.label;
    rows.push_back(std::move(row));
  }
  return rows;
}

SelectionManifest make_splits(std::span<const DocPrediction> predictions, std::uint64_t seed,
                              std::optional<std::size_t> random_size, const ManifestRefs& refs) {
  SelectionManifest m;
  m.corpus_path = refs.corpus_path;
  m.corpus_digest = refs.corpus_digest;
  m.classifier_path = refs.classifier_path;
  m.classifier_digest = refs.classifier_digest;
  m.seed = seed;

  std::vector<std::string> classified_ids;
  for (const auto& p : predictions) {
    if (p.error) continue;
    classified_ids.push_back(p.doc_id);
    m.probabilities.emplace_back(p.doc_id, p.probability);
    if (p.label == AwLabel::unfamiliar) m.unfamiliar_ids.push_back(p.doc_id);
    else m.familiar_ids.push_back(p.doc_id);
  }
  if (m.familiar_ids.empty() || m.unfamiliar_ids.empty())
    throw DataError("make_splits: need at least one document per predicted class (got " +
                    std::to_string(m.familiar_ids.size()) + " familiar, " +
                    std::to_string(m.unfamiliar_ids.size()) + " unfamiliar)");

  const std::size_t k =
      random_size.value_or(std::min(m.familiar_ids.size(), m.unfamiliar_ids.size()));
  if (k > classified_ids.size())
    throw DataError("make_splits: random_size " + std::to_string(k) +
                    " exceeds corpus size " + std::to_string(classified_ids.size()));

  // Partial Fisher-Yates over all classified ids: the first k slots are a
  // uniform sample without replacement.
  SeededRng rng(seed);
  std::vector<std::string> pool = classified_ids;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.next_below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  m.random_ids.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  return m;
}

void export_manifest(const SelectionManifest& m, const std::string& path) {
  ordered_json j;
  j["corpus_digest"] = m.corpus_digest;
  j["classifier_digest"] = m.classifier_digest;
  j["corpus_path"] = m.corpus_path;
  j["classifier_path"] = m.classifier_path;
  j["seed"] = m.seed;
  j["familiar_ids"] = m.familiar_ids;
  j["unfamiliar_ids"] = m.unfamiliar_ids;
  j["random_ids"] = m.random_ids;
  ordered_json probs = ordered_json::object();
  for (const auto& [id, p] : m.probabilities) probs[id] = p;
  j["probabilities"] = std::move(probs);
  detail::write_file_bytes(path, j.dump(2) + "\n");
}

namespace {

// Stored paths resolve as written first, then relative to the manifest.
std::optional<std::string> resolve_ref(const std::string& stored, const std::string& manifest_path) {
  if (stored.empty()) return std::nullopt;
  std::error_code ec;
  if (fs::exists(stored, ec)) return stored;
  const fs::path rel = fs::path(manifest_path).parent_path() / stored;
  if (fs::exists(rel, ec)) return rel.string();
  return std::nullopt;
}

}  // namespace

SelectionManifest load_manifest(const std::string& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(detail::read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  SelectionManifest m;
  try {
    m.corpus_digest = j.at("corpus_digest").get<std::string>();
    m.classifier_digest = j.at("classifier_digest").get<std::string>();
    m.corpus_path = j.at("corpus_path").get<std::string>();
    m.classifier_path = j.at("classifier_path").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.familiar_ids = j.at("familiar_ids").get<std::vector<std::string>>();
    m.unfamiliar_ids = j.at("unfamiliar_ids").get<std::vector<std::string>>();
    m.random_ids = j.at("random_ids").get<std::vector<std::string>>();
    for (const auto& [id, p] : j.at("probabilities").items())
      m.probabilities.emplace_back(id, p.get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }

  if (const auto corpus = resolve_ref(m.corpus_path, path)) {
    if (sha256_file_hex(*corpus) != m.corpus_digest)
      throw DataError("stale manifest: corpus at '" + *corpus +
                      "' no longer matches the recorded digest");
  } else {
    m.verify_warning = true;
  }
  if (const auto clf = resolve_ref(m.classifier_path, path)) {
    if (sha256_file_hex(*clf) != m.classifier_digest)
      throw DataError("stale manifest: classifier at '" + *clf +
                      "' no longer matches the recorded digest");
  } else {
    m.verify_warning = true;
  }
  return m;
}

}  // namespace kamir
