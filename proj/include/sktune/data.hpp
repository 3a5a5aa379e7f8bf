#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sktune/model.hpp"

namespace sktune {

enum class TaskKind { Sequence, Token, Entailment };

std::string_view to_string(TaskKind kind);
TaskKind task_from_string(std::string_view name);
/// Label count of the synthetic task of each kind (token tags are O/B/I).
std::size_t default_num_classes(TaskKind kind);

inline constexpr int kPadId = 0;
inline constexpr int kSepId = 1;
inline constexpr int kUnkId = 2;

inline constexpr std::string_view kDefaultPrompt = "classify the positive or negative sentiment of the text:";

class Vocab {
 public:
  Vocab();

  int id(std::string_view token) const;  // UNK when absent
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;

  std::vector<int> encode(std::string_view text) const;
  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::string decode(std::span<const int> ids) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  friend Vocab build_vocab(std::span<const std::string> lines, std::size_t max_size);
  void append(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Whitespace split after ASCII lowercasing.
std::vector<std::string> tokenize(std::string_view text);

/// Keeps the max_size - 3 most frequent tokens after the reserved ids;
/// frequency ties break lexicographically.
Vocab build_vocab(std::span<const std::string> lines, std::size_t max_size);

struct Example {
  TaskKind task = TaskKind::Sequence;
  std::vector<int> tokens;      // text, token-task tokens, or premise
  std::vector<int> hypothesis;  // entailment only
  int label = 0;                // sequence / entailment
  std::vector<int> tags;        // token task, aligned with tokens

  /// Model input: premise ∥ SEP ∥ hypothesis for entailment, tokens otherwise.
  std::vector<int> input_ids() const;
  bool operator==(const Example&) const = default;
};

std::vector<Example> load_jsonl(const std::filesystem::path& path, TaskKind task, const Vocab& vocab,
                                std::size_t num_classes = 0);
std::vector<Example> parse_jsonl(std::string_view text, TaskKind task, const Vocab& vocab,
                                 std::size_t num_classes = 0);
std::string to_jsonl(std::span<const Example> examples, const Vocab& vocab);

/// Word lists behind the synthetic tasks and pretraining language.
struct Lexicon {
  std::vector<std::string> prompt_words;
  std::vector<std::string> positive_words;
  std::vector<std::string> negative_words;
  std::vector<std::string> neutral_words;
  std::vector<std::string> entity_words;
  std::vector<std::string> entity_tail_words;

  std::vector<std::string> all_words() const;
};

const Lexicon& synthetic_lexicon();
/// Vocabulary covering the whole lexicon (fits a 64-entry model vocab).
Vocab synthetic_vocab();

/// Sequence: label 1 iff a positive keyword occurs. Token: O/B/I tags of
/// entity runs (a name plus an optional tail word). Entailment: label 1 iff every hypothesis token occurs in
/// the premise; non-entailing hypotheses use an entity word, and premises
/// never do. Labels are balanced within ±1.
std::vector<Example> gen_synthetic(TaskKind task, std::size_t n, std::uint64_t seed, const Vocab& vocab);

/// Reference rule each synthetic task was generated from.
std::vector<int> synthetic_rule(const Example& example, const Vocab& vocab);

/// Seeded 4-gram language over the lexicon: each 3-token context admits a
/// small weighted set of continuations, mostly from the last token's word
/// class. Two thirds of the sequences also carry a sentiment topic whose
/// words are mixed in at random positions. A quarter start with the default
/// prompt, a short keyword text and the matching answer word.
std::vector<TokenSequence> gen_pretrain_corpus(const Vocab& vocab, std::size_t n_sequences, std::size_t length,
                                               std::uint64_t seed);

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct DataSplits {
  std::vector<Example> train, val, test;
};

/// Seeded shuffle followed by contiguous cuts.
DataSplits split(std::span<const Example> examples, SplitFractions fractions, std::uint64_t seed);

/// Fisher-Yates driven directly by mt19937_64 so orderings do not depend on
/// the standard library's distribution implementations.
void seeded_shuffle(std::vector<std::size_t>& order, std::uint64_t seed);

}  // namespace sktune
