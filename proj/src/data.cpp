#include "sktune/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sktune/checkpoint.hpp"
#include "sktune/error.hpp"

namespace sktune {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Sequence: return "seqcls";
    case TaskKind::Token: return "tokcls";
    case TaskKind::Entailment: return "nli";
  }
  return "unknown";
}

TaskKind task_from_string(std::string_view name) {
  if (name == "seqcls") return TaskKind::Sequence;
  if (name == "tokcls") return TaskKind::Token;
  if (name == "nli") return TaskKind::Entailment;
  throw Error(ErrorKind::InvalidArgument, "unknown task '" + std::string(name) + "'");
}

std::size_t default_num_classes(TaskKind kind) { return kind == TaskKind::Token ? 3 : 2; }

// ---------------------------------------------------------------------------

Vocab::Vocab() {
  append("<pad>");
  append("<sep>");
  append("<unk>");
}

void Vocab::append(std::string token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error(ErrorKind::TokenOutOfRange, "token id " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(std::string_view text) const {
  const auto words = tokenize(text);
  return encode(words);
}

std::vector<int> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Vocab build_vocab(std::span<const std::string> lines, std::size_t max_size) {
  if (max_size < 4) throw Error(ErrorKind::InvalidArgument, "vocab max_size must be at least 4");
  Vocab vocab;
  std::map<std::string, std::size_t> counts;
  for (const auto& line : lines)
    for (auto& tok : tokenize(line))
      if (!vocab.contains(tok)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [tok, count] : ranked) {
    if (vocab.size() >= max_size) break;
    vocab.append(tok);
  }
  return vocab;
}

std::vector<int> Example::input_ids() const {
  if (task != TaskKind::Entailment) return tokens;
  std::vector<int> ids = tokens;
  ids.push_back(kSepId);
  ids.insert(ids.end(), hypothesis.begin(), hypothesis.end());
  return ids;
}

// ---------------------------------------------------------------------------

namespace {

int parse_label(const nlohmann::json& value, std::size_t num_classes, std::size_t lineno) {
  if (!value.is_number_integer()) {
    throw Error(ErrorKind::UnknownLabel, "line " + std::to_string(lineno) + ": label must be an integer");
  }
  const auto label = value.get<long long>();
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
    throw Error(ErrorKind::UnknownLabel, "line " + std::to_string(lineno) + ": label " + std::to_string(label) +
                                             " outside [0," + std::to_string(num_classes) + ")");
  }
  return static_cast<int>(label);
}

}  // namespace

std::vector<Example> parse_jsonl(std::string_view text, TaskKind task, const Vocab& vocab, std::size_t num_classes) {
  if (num_classes == 0) num_classes = default_num_classes(task);
  std::vector<Example> out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::MalformedLine, "line " + std::to_string(lineno) + ": not valid JSON");
    }
    auto require = [&](const char* key) -> const nlohmann::json& {
      if (!obj.is_object() || !obj.contains(key)) {
        throw Error(ErrorKind::MalformedLine, "line " + std::to_string(lineno) + ": missing \"" + key + "\"");
      }
      return obj[key];
    };
    auto require_string = [&](const char* key) {
      const auto& v = require(key);
      if (!v.is_string()) {
        throw Error(ErrorKind::MalformedLine, "line " + std::to_string(lineno) + ": \"" + key + "\" must be a string");
      }
      return v.get<std::string>();
    };

    Example ex;
    ex.task = task;
    switch (task) {
      case TaskKind::Sequence:
        ex.tokens = vocab.encode(require_string("text"));
        ex.label = parse_label(require("label"), num_classes, lineno);
        break;
      case TaskKind::Entailment:
        ex.tokens = vocab.encode(require_string("premise"));
        ex.hypothesis = vocab.encode(require_string("hypothesis"));
        ex.label = parse_label(require("label"), num_classes, lineno);
        break;
      case TaskKind::Token: {
        const auto& toks = require("tokens");
        const auto& tags = require("tags");
        if (!toks.is_array() || !tags.is_array()) {
          throw Error(ErrorKind::MalformedLine, "line " + std::to_string(lineno) + ": tokens/tags must be arrays");
        }
        if (toks.size() != tags.size()) {
          throw Error(ErrorKind::LengthMismatch, "line " + std::to_string(lineno) + ": " +
                                                     std::to_string(toks.size()) + " tokens, " +
                                                     std::to_string(tags.size()) + " tags");
        }
        for (const auto& t : toks) {
          if (!t.is_string()) throw Error(ErrorKind::MalformedLine, "line " + std::to_string(lineno) + ": token");
          auto pieces = tokenize(t.get<std::string>());
          ex.tokens.push_back(pieces.size() == 1 ? vocab.id(pieces.front()) : kUnkId);
        }
        for (const auto& t : tags) ex.tags.push_back(parse_label(t, num_classes, lineno));
        break;
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> load_jsonl(const std::filesystem::path& path, TaskKind task, const Vocab& vocab,
                                std::size_t num_classes) {
  return parse_jsonl(read_text_file(path), task, vocab, num_classes);
}

std::string to_jsonl(std::span<const Example> examples, const Vocab& vocab) {
  std::string out;
  for (const auto& ex : examples) {
    nlohmann::ordered_json obj;
    switch (ex.task) {
      case TaskKind::Sequence:
        obj["text"] = vocab.decode(ex.tokens);
        obj["label"] = ex.label;
        break;
      case TaskKind::Entailment:
        obj["premise"] = vocab.decode(ex.tokens);
        obj["hypothesis"] = vocab.decode(ex.hypothesis);
        obj["label"] = ex.label;
        break;
      case TaskKind::Token: {
        auto toks = nlohmann::ordered_json::array();
        for (int id : ex.tokens) toks.push_back(vocab.token(id));
        obj["tokens"] = toks;
        obj["tags"] = ex.tags;
        break;
      }
    }
    out += obj.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> Lexicon::all_words() const {
  std::vector<std::string> out;
  for (const auto* group :
       {&prompt_words, &positive_words, &negative_words, &neutral_words, &entity_words, &entity_tail_words})
    for (const auto& w : *group)
      if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  return out;
}

const Lexicon& synthetic_lexicon() {
  static const Lexicon lexicon{
      {"classify", "the", "positive", "or", "negative", "sentiment", "of", "text", "text:"},
      {"love", "great", "good", "excellent", "wonderful", "enjoyed"},
      {"hate", "bad", "awful", "terrible", "boring", "dull"},
      {"i", "this", "movie", "film", "a", "is", "was", "it", "and", "plot", "story", "acting", "scene", "music",
       "ending", "actors", "very", "really", "quite", "but", "so", "with"},
      {"paris", "london", "tokyo", "berlin", "rome"},
      {"city", "street", "park"},
  };
  return lexicon;
}

Vocab synthetic_vocab() {
  const auto words = synthetic_lexicon().all_words();
  return build_vocab(words, 64);
}

void seeded_shuffle(std::vector<std::size_t>& order, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
}

namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  int pick(const std::vector<int>& ids) { return ids[below(ids.size())]; }
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 rng_;
};

std::vector<int> ids_of(const Vocab& vocab, const std::vector<std::string>& words) {
  std::vector<int> ids;
  for (const auto& w : words) {
    const int id = vocab.id(w);
    if (id == kUnkId) throw Error(ErrorKind::InvalidArgument, "vocab lacks synthetic word '" + w + "'");
    ids.push_back(id);
  }
  return ids;
}

std::vector<int> balanced_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  seeded_shuffle(order, seed);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[order[i]] = static_cast<int>(i % classes);
  return labels;
}

}  // namespace

std::vector<Example> gen_synthetic(TaskKind task, std::size_t n, std::uint64_t seed, const Vocab& vocab) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "gen_synthetic needs n >= 1");
  const Lexicon& lex = synthetic_lexicon();
  const auto positive = ids_of(vocab, lex.positive_words);
  const auto negative = ids_of(vocab, lex.negative_words);
  const auto neutral = ids_of(vocab, lex.neutral_words);
  const auto entity = ids_of(vocab, lex.entity_words);
  const auto entity_tail = ids_of(vocab, lex.entity_tail_words);

  Sampler s(seed);
  const auto labels = balanced_labels(n, 2, seed ^ 0x5bd1e995ULL);
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.task = task;
    switch (task) {
      case TaskKind::Sequence: {
        const std::size_t len = s.between(4, 8);
        for (std::size_t t = 0; t < len; ++t) ex.tokens.push_back(s.pick(neutral));
        ex.label = labels[i];
        const int keyword = s.pick(ex.label == 1 ? positive : negative);
        ex.tokens[s.below(len)] = keyword;
        break;
      }
      case TaskKind::Token: {
        const std::size_t len = s.between(4, 8);
        for (std::size_t t = 0; t < len; ++t) ex.tokens.push_back(s.pick(neutral));
        // Half the examples hold one entity: a name, sometimes followed by a
        // tail word that occurs nowhere else.
        if (labels[i] == 1) {
          const bool tail = s.below(2) == 1;
          const std::size_t start = s.below(len - tail);
          ex.tokens[start] = s.pick(entity);
          if (tail) ex.tokens[start + 1] = s.pick(entity_tail);
        }
        ex.tags = synthetic_rule(ex, vocab);
        break;
      }
      case TaskKind::Entailment: {
        // Premises draw from the neutral words; a non-entailing hypothesis
        // swaps in an entity word, which no premise ever contains.
        const std::size_t len = s.between(3, 6);
        std::vector<int> premise;
        while (premise.size() < len) {
          const int id = s.pick(neutral);
          if (std::find(premise.begin(), premise.end(), id) == premise.end()) premise.push_back(id);
        }
        ex.tokens = premise;
        const std::size_t hyp_len = s.between(1, 2);
        for (std::size_t t = 0; t < hyp_len; ++t) ex.hypothesis.push_back(s.pick(premise));
        if (labels[i] == 0) ex.hypothesis[s.below(hyp_len)] = s.pick(entity);
        ex.label = labels[i];
        break;
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<int> synthetic_rule(const Example& ex, const Vocab& vocab) {
  const Lexicon& lex = synthetic_lexicon();
  switch (ex.task) {
    case TaskKind::Sequence: {
      const auto positive = ids_of(vocab, lex.positive_words);
      const bool hit = std::any_of(ex.tokens.begin(), ex.tokens.end(), [&](int id) {
        return std::find(positive.begin(), positive.end(), id) != positive.end();
      });
      return {hit ? 1 : 0};
    }
    case TaskKind::Token: {
      auto entity = ids_of(vocab, lex.entity_words);
      const auto tail = ids_of(vocab, lex.entity_tail_words);
      entity.insert(entity.end(), tail.begin(), tail.end());
      auto is_entity = [&](int id) { return std::find(entity.begin(), entity.end(), id) != entity.end(); };
      std::vector<int> tags;
      for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
        if (!is_entity(ex.tokens[t])) {
          tags.push_back(0);
        } else {
          tags.push_back(t > 0 && is_entity(ex.tokens[t - 1]) ? 2 : 1);
        }
      }
      return tags;
    }
    case TaskKind::Entailment: {
      const bool contained = std::all_of(ex.hypothesis.begin(), ex.hypothesis.end(), [&](int id) {
        return std::find(ex.tokens.begin(), ex.tokens.end(), id) != ex.tokens.end();
      });
      return {contained ? 1 : 0};
    }
  }
  return {};
}

std::vector<TokenSequence> gen_pretrain_corpus(const Vocab& vocab, std::size_t n_sequences, std::size_t length,
                                               std::uint64_t seed) {
  const Lexicon& lex = synthetic_lexicon();
  std::vector<std::string> prompt_class, pos_class = lex.positive_words, neg_class = lex.negative_words;
  pos_class.push_back("positive");
  neg_class.push_back("negative");
  for (const auto& w : lex.prompt_words)
    if (w != "positive" && w != "negative") prompt_class.push_back(w);
  // Backbone classes; sentiment words only enter through the topic.
  std::vector<std::vector<int>> classes;
  for (const auto& group : {prompt_class, lex.neutral_words, lex.entity_words, lex.entity_tail_words})
    classes.push_back(ids_of(vocab, group));
  const std::vector<int> topic_words[2] = {ids_of(vocab, neg_class), ids_of(vocab, pos_class)};

  std::vector<int> class_of(vocab.size(), 1);
  std::vector<int> backbone;
  for (std::size_t c = 0; c < classes.size(); ++c)
    for (int id : classes[c]) {
      class_of[static_cast<std::size_t>(id)] = static_cast<int>(c);
      backbone.push_back(id);
    }

  constexpr std::size_t kCandidates = 4;
  constexpr double kTopicRate = 0.25;
  struct Continuation {
    std::array<int, kCandidates> ids;
    std::array<double, kCandidates> cumulative;
  };
  std::map<std::array<int, 3>, Continuation> table;
  auto continuation = [&](const std::array<int, 3>& ctx) -> const Continuation& {
    auto it = table.find(ctx);
    if (it != table.end()) return it->second;
    std::uint64_t h = seed;
    for (int id : ctx) h = (h ^ static_cast<std::uint64_t>(id + 1)) * 0x100000001b3ULL;
    Sampler cs(h);
    const auto& same = classes[static_cast<std::size_t>(class_of[static_cast<std::size_t>(ctx[2])])];
    Continuation c{};
    double total = 0.0;
    for (std::size_t k = 0; k < kCandidates; ++k) {
      c.ids[k] = k + 1 < kCandidates ? cs.pick(same) : cs.pick(backbone);
      total += 0.2 + cs.unit();
      c.cumulative[k] = total;
    }
    for (double& v : c.cumulative) v /= total;
    return table.emplace(ctx, c).first->second;
  };

  // Each sequence carries a topic: none, negative or positive. A topical
  // sequence emits words of its sentiment at rate kTopicRate, so predicting
  // them well requires remembering which sentiment has already appeared.
  // A quarter of the sequences are instructions: the default prompt, a
  // short text with one sentiment keyword, then the matching answer word.
  constexpr double kInstructionRate = 0.25;
  const std::vector<int> instruction = vocab.encode(std::string(kDefaultPrompt));
  const std::vector<int> keywords[2] = {ids_of(vocab, lex.negative_words), ids_of(vocab, lex.positive_words)};
  const std::vector<int> answers{vocab.id("negative"), vocab.id("positive")};
  const std::vector<int> neutral = ids_of(vocab, lex.neutral_words);

  Sampler s(seed);
  std::vector<TokenSequence> corpus;
  corpus.reserve(n_sequences);
  for (std::size_t i = 0; i < n_sequences; ++i) {
    std::size_t topic = s.below(3);
    TokenSequence seq;
    if (s.unit() < kInstructionRate && instruction.size() + 9 <= length) {
      topic = 1 + s.below(2);
      seq = instruction;
      const std::size_t text_len = s.between(4, 8), at = s.below(text_len);
      for (std::size_t t = 0; t < text_len; ++t)
        seq.push_back(t == at ? s.pick(keywords[topic - 1]) : s.pick(neutral));
      seq.push_back(answers[topic - 1]);
    }
    while (seq.size() < length) {
      if (topic > 0 && s.unit() < kTopicRate) {
        seq.push_back(s.pick(topic_words[topic - 1]));
      } else if (seq.size() < 3) {
        seq.push_back(s.pick(backbone));
      } else {
        const std::array<int, 3> ctx{seq[seq.size() - 3], seq[seq.size() - 2], seq[seq.size() - 1]};
        const Continuation& c = continuation(ctx);
        const double u = s.unit();
        std::size_t k = 0;
        while (k + 1 < kCandidates && u >= c.cumulative[k]) ++k;
        seq.push_back(c.ids[k]);
      }
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

DataSplits split(std::span<const Example> examples, SplitFractions f, std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw Error(ErrorKind::BadFractions, "split fractions must be non-negative and sum to 1");
  }
  const std::size_t n = examples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  seeded_shuffle(order, seed);
  const std::size_t n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(f.train * n)));
  const std::size_t n_val = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(f.val * n)));
  DataSplits out;
  for (std::size_t i = 0; i < n; ++i) {
    const Example& ex = examples[order[i]];
    if (i < n_train) {
      out.train.push_back(ex);
    } else if (i < n_train + n_val) {
      out.val.push_back(ex);
    } else {
      out.test.push_back(ex);
    }
  }
  return out;
}

}  // namespace sktune
