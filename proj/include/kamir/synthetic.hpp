#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kamir {

// Deterministic toy corpora standing in for familiar/unfamiliar data.
// Corpus A: templated wildlife prose (the pretraining distribution).
// Corpus B: symbolic register-machine listings, a structurally distinct byte
// distribution. Identical (count, seed, size) arguments always reproduce the
// same documents.
std::vector<std::string> synth_corpus_a(std::size_t count, std::uint64_t seed,
                                        std::size_t sentences_per_doc = 2);
std::vector<std::string> synth_corpus_b(std::size_t count, std::uint64_t seed,
                                        std::size_t lines_per_doc = 2);

}  // namespace kamir
