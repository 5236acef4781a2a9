#include "kamir/synthetic.hpp"

#include "kamir/tensor.hpp"

namespace kamir {

namespace {

const char* kSubjects[] = {"the fox",   "the owl",   "the crane", "the otter",
                           "the heron", "the badger", "the hare",  "the lynx"};
const char* kVerbs[] = {"watches", "follows", "guards", "crosses",
                        "circles", "finds",   "leaves", "studies"};
const char* kObjects[] = {"the river",     "the meadow",    "the orchard", "the old bridge",
                          "the stone wall", "the quiet pond", "the fern path", "the cedar grove"};
const char* kTimes[] = {"at dawn",        "at dusk",       "in the rain",  "under the moon",
                        "after the storm", "in early spring", "before sunrise", "in late autumn"};

template <std::size_t N>
const char* pick(const char* (&bank)[N], SeededRng& rng) {
  return bank[rng.next_below(N)];
}

const char* kOps[] = {"ADD", "MUL", "SUB", "XOR", "SHL", "CMP"};

}  // namespace

std::vector<std::string> synth_corpus_a(std::size_t count, std::uint64_t seed,
                                        std::size_t sentences_per_doc) {
  SeededRng rng(seed);
  std::vector<std::string> docs;
  docs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string doc;
    for (std::size_t s = 0; s < sentences_per_doc; ++s) {
      if (s) doc += ' ';
      doc += pick(kSubjects, rng);
      doc += ' ';
      doc += pick(kVerbs, rng);
      doc += ' ';
      doc += pick(kObjects, rng);
      doc += ' ';
      doc += pick(kTimes, rng);
      doc += '.';
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<std::string> synth_corpus_b(std::size_t count, std::uint64_t seed,
                                        std::size_t lines_per_doc) {
  SeededRng rng(seed);
  std::vector<std::string> docs;
  docs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string doc;
    for (std::size_t l = 0; l < lines_per_doc; ++l) {
      if (l) doc += ' ';
      doc += 'R' + std::to_string(rng.next_below(10));
      doc += " := ";
      doc += kOps[rng.next_below(6)];
      doc += "(R" + std::to_string(rng.next_below(10));
      doc += ", " + std::to_string(rng.next_below(100));
      doc += "); JMP L" + std::to_string(rng.next_below(20));
      doc += ';';
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace kamir
