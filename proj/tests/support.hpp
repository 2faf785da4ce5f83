#pragma once

// Fixtures shared by the unit tests and the acceptance binary.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "synmrc/core.hpp"
#include "synmrc/reader.hpp"
#include "synmrc/world.hpp"

namespace synmrc::testing {

/// [CLS], [SEP], w0 .. w{n-1}
std::shared_ptr<const Vocabulary> word_vocabulary(int n_words);

/// Random context of `context_length` words drawn from w0..w{n-1}, a short
/// question, and either a span of at most kMaxAnswerLength tokens or
/// NoAnswer.
Example random_example(Rng& rng, int n_words, int context_length, double no_answer_rate, const std::string& id);
std::vector<Example> random_examples(Rng& rng, int count, int n_words, double no_answer_rate);

/// init_params plus Gaussian noise on every tensor, biases included, so no
/// coordinate sits at a special point.
ReaderParams random_params(Capacity capacity, std::shared_ptr<const Vocabulary> vocabulary, std::uint64_t seed,
                           double noise = 0.3);

/// Fresh scratch directory for one test; under $SYNMRC_TEST_TMP when set.
std::filesystem::path scratch_dir(const std::string& name);

/// A small but valid world: 40 documents, 20 of them unlabeled.
WorldConfig small_world_config();

}  // namespace synmrc::testing
