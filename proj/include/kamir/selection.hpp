#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kamir/awareness.hpp"
#include "kamir/classifier.hpp"

namespace kamir {

struct CorpusDocument {
  std::string id;
  std::string text;
  std::optional<AwLabel> gold_label;  // familiar or unfamiliar when present
};

struct Corpus {
  std::vector<CorpusDocument> docs;
  std::string source_path;
  std::string digest;  // sha256 of the file bytes
};

// JSON-lines, one object per line with fields id, text and optional label.
// Document order is file order; duplicate ids and malformed lines are errors
// naming the offending line numbers.
Corpus ingest_corpus(const std::string& path);

struct DocPrediction {
  std::string doc_id;
  AwLabel label = AwLabel::unlabeled;
  double probability = 0.0;  // P(unfamiliar)
  std::vector<float> awareness;
  std::optional<std::string> error;  // extraction failure; the run continues
};

struct LabelOptions {
  std::size_t chunk_len = 300;
  std::size_t max_output = 100;
  MeanMode mean_mode = MeanMode::uniform;
  TraceAnchor anchor = TraceAnchor::pre_final_norm;
  unsigned threads = 1;
};

// document_awareness -> classify per document. Fails fast if the classifier
// input size does not match n_layers - 1.
std::vector<DocPrediction> label_corpus(const Corpus& corpus, const MiniLmModel& model,
                                        const AwarenessClassifier& clf, const LabelOptions& opt);

std::vector<LabeledAwareness> predictions_to_csv_rows(std::span<const DocPrediction> preds);

struct ManifestRefs {
  std::string corpus_path, corpus_digest;
  std::string classifier_path, classifier_digest;
};

struct SelectionManifest {
  std::string corpus_digest, classifier_digest;
  std::string corpus_path, classifier_path;
  std::uint64_t seed = 0;
  std::vector<std::string> familiar_ids, unfamiliar_ids, random_ids;
  std::vector<std::pair<std::string, double>> probabilities;  // corpus order
  bool verify_warning = false;  // referenced file missing at load time
};

// familiar/unfamiliar partition by predicted label; random control drawn
// uniformly without replacement from all classified ids. Default size is the
// smaller predicted class.
SelectionManifest make_splits(std::span<const DocPrediction> predictions, std::uint64_t seed,
                              std::optional<std::size_t> random_size, const ManifestRefs& refs);

// Single JSON document. load re-hashes the referenced corpus/classifier when
// those files exist: a mismatch is a stale-manifest error, a missing file
// only sets verify_warning.
void export_manifest(const SelectionManifest& m, const std::string& path);
SelectionManifest load_manifest(const std::string& path);

}  // namespace kamir
