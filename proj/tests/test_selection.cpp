#include <doctest.h>

#include <algorithm>
#include <set>

#include "kamir/selection.hpp"
#include "support/test_util.hpp"

using namespace kamir;
using kamir::testing::TempDir;
using kamir::testing::slurp;
using kamir::testing::spit;

namespace {

LmConfig small_config() {
  LmConfig cfg;
  cfg.n_layers = 2;
  cfg.hidden_dim = 8;
  cfg.n_heads = 2;
  cfg.ffn_dim = 16;
  cfg.max_seq_len = 32;
  cfg.seed = 9;
  return cfg;
}

std::vector<DocPrediction> fake_predictions(std::size_t n, std::size_t unfamiliar,
                                            std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<DocPrediction> preds(n);
  for (std::size_t i = 0; i < n; ++i) {
    preds[i].doc_id = "doc-" + std::to_string(i);
    preds[i].label = i < unfamiliar ? AwLabel::unfamiliar : AwLabel::familiar;
    preds[i].probability = preds[i].label == AwLabel::unfamiliar ? 0.8 + 0.1 * rng.next_unit()
                                                                 : 0.2 * rng.next_unit();
  }
  return preds;
}

ManifestRefs no_refs() { return ManifestRefs{"", "d1", "", "d2"}; }

}  // namespace

TEST_CASE("ingest keeps file order and validates lines") {
  TempDir tmp("ingest");
  const std::string path = tmp.file("c.jsonl");
  spit(path,
       "{\"id\":\"a\",\"text\":\"first\"}\n"
       "{\"id\":\"b\",\"text\":\"second\",\"label\":\"familiar\"}\n"
       "{\"id\":\"c\",\"text\":\"third\",\"label\":\"unfamiliar\"}\n");
  const Corpus corpus = ingest_corpus(path);
  REQUIRE(corpus.docs.size() == 3);
  CHECK(corpus.docs[0].id == "a");
  CHECK(corpus.docs[1].id == "b");
  CHECK(corpus.docs[2].id == "c");
  CHECK(!corpus.docs[0].gold_label.has_value());
  CHECK(corpus.docs[1].gold_label == AwLabel::familiar);
  CHECK(corpus.digest.size() == 64);
}

TEST_CASE("ingest errors carry line numbers") {
  TempDir tmp("ingestbad");

  const std::string dup = tmp.file("dup.jsonl");
  spit(dup,
       "{\"id\":\"x\",\"text\":\"1\"}\n{\"id\":\"y\",\"text\":\"2\"}\n"
       "{\"id\":\"z\",\"text\":\"3\"}\n{\"id\":\"q\",\"text\":\"4\"}\n"
       "{\"id\":\"r\",\"text\":\"5\"}\n{\"id\":\"s\",\"text\":\"6\"}\n"
       "{\"id\":\"y\",\"text\":\"7\"}\n");
  try {
    ingest_corpus(dup);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'y'") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
    CHECK(msg.find("7") != std::string::npos);
  }

  const std::string missing = tmp.file("missing.jsonl");
  spit(missing, "{\"id\":\"a\",\"text\":\"ok\"}\n{\"id\":\"b\"}\n");
  try {
    ingest_corpus(missing);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  const std::string malformed = tmp.file("broken.jsonl");
  spit(malformed, "{\"id\":\"a\",\"text\":\"ok\"}\nnot json at all\n");
  try {
    ingest_corpus(malformed);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  const std::string empty = tmp.file("empty.jsonl");
  spit(empty, "");
  CHECK_THROWS_AS(ingest_corpus(empty), DataError);
}

TEST_CASE("label_corpus classifies every document and records failures") {
  TempDir tmp("label");
  const std::string path = tmp.file("c.jsonl");
  // The middle document is a lone NUL escape: it encodes to zero tokens and
  // must fail extraction without aborting the batch.
  spit(path,
       "{\"id\":\"good1\",\"text\":\"the fox watches the river\"}\n"
       "{\"id\":\"nul\",\"text\":\"\\u0000\"}\n"
       "{\"id\":\"good2\",\"text\":\"R1 := ADD(R2, 3);\"}\n");
  const Corpus corpus = ingest_corpus(path);
  const MiniLmModel model(small_config());
  const AwarenessClassifier clf(1, std::vector<std::uint32_t>{4}, 0.5f, 2);

  LabelOptions opt;
  opt.chunk_len = 16;
  opt.max_output = 2;
  const auto preds = label_corpus(corpus, model, clf, opt);
  REQUIRE(preds.size() == 3);
  CHECK(!preds[0].error);
  CHECK(preds[1].error);
  CHECK(preds[1].label == AwLabel::unlabeled);
  CHECK(!preds[2].error);
  CHECK(preds[0].awareness.size() == 1);

  // Stage mismatch fails before any work.
  const AwarenessClassifier wrong(5, std::vector<std::uint32_t>{4}, 0.5f, 2);
  CHECK_THROWS_AS(label_corpus(corpus, model, wrong, opt), DataError);
}

TEST_CASE("splits partition the corpus with the equal-size control") {
  const auto preds = fake_predictions(10, 4, 70);
  const auto m = make_splits(preds, 7, std::nullopt, no_refs());
  CHECK(m.unfamiliar_ids.size() == 4);
  CHECK(m.familiar_ids.size() == 6);
  CHECK(m.random_ids.size() == 4);  // min(6, 4)

  std::set<std::string> fam(m.familiar_ids.begin(), m.familiar_ids.end());
  std::set<std::string> unf(m.unfamiliar_ids.begin(), m.unfamiliar_ids.end());
  std::vector<std::string> overlap;
  std::set_intersection(fam.begin(), fam.end(), unf.begin(), unf.end(),
                        std::back_inserter(overlap));
  CHECK(overlap.empty());
  CHECK(fam.size() + unf.size() == 10);

  std::set<std::string> rnd(m.random_ids.begin(), m.random_ids.end());
  CHECK(rnd.size() == m.random_ids.size());  // without replacement

  // Determinism and seed sensitivity.
  const auto again = make_splits(preds, 7, std::nullopt, no_refs());
  CHECK(again.random_ids == m.random_ids);
  const auto other = make_splits(preds, 8, std::nullopt, no_refs());
  CHECK(other.random_ids != m.random_ids);

  // Explicit size override and its bound.
  CHECK(make_splits(preds, 7, std::size_t{9}, no_refs()).random_ids.size() == 9);
  CHECK_THROWS_AS(make_splits(preds, 7, std::size_t{11}, no_refs()), DataError);

  // Single-class predictions are rejected.
  const auto lopsided = fake_predictions(5, 0, 71);
  CHECK_THROWS_AS(make_splits(lopsided, 7, std::nullopt, no_refs()), DataError);
}

TEST_CASE("random control sampling is uniform") {
  const auto preds = fake_predictions(4, 2, 72);
  std::map<std::string, int> freq;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto m = make_splits(preds, seed, std::size_t{1}, no_refs());
    freq[m.random_ids.front()] += 1;
  }
  for (const auto& [id, count] : freq) {
    CHECK(count >= 0.2 * 2000);
    CHECK(count <= 0.3 * 2000);
  }
}

TEST_CASE("manifest invariants over randomized corpora") {
  SeededRng rng(73);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.next_below(40);
    const std::size_t unfamiliar = 1 + rng.next_below(n - 1);
    const auto preds = fake_predictions(n, unfamiliar, 1000 + trial);
    const std::uint64_t seed = rng.next_u64();
    const auto m = make_splits(preds, seed, std::nullopt, no_refs());
    const auto m2 = make_splits(preds, seed, std::nullopt, no_refs());

    CHECK(m.familiar_ids.size() + m.unfamiliar_ids.size() == n);
    CHECK(m.random_ids.size() == std::min(m.familiar_ids.size(), m.unfamiliar_ids.size()));
    CHECK(m.probabilities.size() == n);
    CHECK(m2.familiar_ids == m.familiar_ids);
    CHECK(m2.unfamiliar_ids == m.unfamiliar_ids);
    CHECK(m2.random_ids == m.random_ids);

    std::set<std::string> all;
    for (const auto& id : m.familiar_ids) all.insert(id);
    for (const auto& id : m.unfamiliar_ids) CHECK(all.insert(id).second);
    for (const auto& id : m.random_ids) CHECK(all.count(id) == 1);
  }
}

TEST_CASE("manifest export/load round-trip and digest verification") {
  TempDir tmp("manifest");

  const std::string corpus_path = tmp.file("corpus.jsonl");
  spit(corpus_path, "{\"id\":\"a\",\"text\":\"hello\"}\n{\"id\":\"b\",\"text\":\"world\"}\n");
  const Corpus corpus = ingest_corpus(corpus_path);

  const std::string clf_path = tmp.file("clf.kamclf");
  const AwarenessClassifier clf(1, std::vector<std::uint32_t>{4}, 0.5f, 3);
  save_classifier(clf, clf_path);

  std::vector<DocPrediction> preds(2);
  preds[0] = {"a", AwLabel::familiar, 0.2, {0.5f}, std::nullopt};
  preds[1] = {"b", AwLabel::unfamiliar, 0.9, {0.1f}, std::nullopt};

  ManifestRefs refs{corpus_path, corpus.digest, clf_path, sha256_file_hex(clf_path)};
  const auto m = make_splits(preds, 5, std::nullopt, refs);
  const std::string path = tmp.file("manifest.json");
  export_manifest(m, path);

  const auto loaded = load_manifest(path);
  CHECK(loaded.familiar_ids == m.familiar_ids);
  CHECK(loaded.unfamiliar_ids == m.unfamiliar_ids);
  CHECK(loaded.random_ids == m.random_ids);
  CHECK(loaded.seed == m.seed);
  CHECK(loaded.corpus_digest == m.corpus_digest);
  CHECK(loaded.probabilities == m.probabilities);
  CHECK(!loaded.verify_warning);

  // A missing classifier only sets the warning flag.
  const auto m2 = make_splits(preds, 5, std::nullopt, refs);
  const std::string path2 = tmp.file("manifest2.json");
  export_manifest(m2, path2);
  std::filesystem::remove(clf_path);
  const auto warned = load_manifest(path2);
  CHECK(warned.verify_warning);

  // Editing the corpus after manifest creation is a stale-manifest error.
  spit(corpus_path, "{\"id\":\"a\",\"text\":\"edited\"}\n");
  CHECK_THROWS_AS(load_manifest(path), DataError);
}
