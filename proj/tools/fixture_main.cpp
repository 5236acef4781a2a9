// kamir-fixture: writes the deterministic toy corpora used by the README
// walkthrough and the test suites.
//
//   pretrain_a.jsonl  short corpus-A docs for pretraining
//   probe.jsonl       held-out A (familiar) + B (unfamiliar), gold-labeled
//   target.jsonl      unlabeled A/B mix for selection and SFT

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kamir/errors.hpp"
#include "kamir/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct Doc {
  std::string id, text, label;
};

void write_jsonl(const fs::path& path, const std::vector<Doc>& docs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw kamir::DataError("cannot write " + path.string());
  for (const auto& doc : docs) {
    nlohmann::ordered_json j;
    j["id"] = doc.id;
    j["text"] = doc.text;
    if (!doc.label.empty()) j["label"] = doc.label;
    out << j.dump() << "\n";
  }
}

std::vector<Doc> with_ids(const std::vector<std::string>& texts, const std::string& prefix,
                          const std::string& label) {
  std::vector<Doc> docs;
  docs.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    char id[64];
    std::snprintf(id, sizeof(id), "%s-%04zu", prefix.c_str(), i);
    docs.push_back({id, texts[i], label});
  }
  return docs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"write the deterministic toy corpora"};
  std::string out = "data";
  std::uint64_t seed = 1;
  std::size_t pretrain_docs = 400, probe_docs = 100, target_docs = 100;
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "generator seed")->capture_default_str();
  app.add_option("--pretrain-docs", pretrain_docs, "corpus-A pretraining documents")
      ->capture_default_str();
  app.add_option("--probe-docs", probe_docs, "labeled probe documents per class")
      ->capture_default_str();
  app.add_option("--target-docs", target_docs, "unlabeled target documents per class")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(out);
    using kamir::synth_corpus_a;
    using kamir::synth_corpus_b;

    write_jsonl(fs::path(out) / "pretrain_a.jsonl",
                with_ids(synth_corpus_a(pretrain_docs, seed + 1, 1), "a-train", ""));

    auto probe = with_ids(synth_corpus_a(probe_docs, seed + 2, 2), "a-heldout", "familiar");
    const auto probe_b = with_ids(synth_corpus_b(probe_docs, seed + 3, 2), "b-probe", "unfamiliar");
    probe.insert(probe.end(), probe_b.begin(), probe_b.end());
    write_jsonl(fs::path(out) / "probe.jsonl", probe);

    auto target = with_ids(synth_corpus_a(target_docs, seed + 4, 2), "a-target", "");
    const auto target_b = with_ids(synth_corpus_b(target_docs, seed + 5, 2), "b-target", "");
    target.insert(target.end(), target_b.begin(), target_b.end());
    write_jsonl(fs::path(out) / "target.jsonl", target);

    std::cout << "wrote " << pretrain_docs << " pretraining, " << 2 * probe_docs << " probe and "
              << 2 * target_docs << " target documents under " << out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
