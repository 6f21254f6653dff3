#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace genderlab {

using TokenId = std::int32_t;
using Sentence = std::vector<std::string>;
using IdSentence = std::vector<TokenId>;

inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kEosToken = "<eos>";

// Bidirectional token <-> id map. Ids 0 and 1 are reserved for <unk> and
// <eos>; the remaining tokens are ordered by descending corpus frequency with
// lexicographic tie-breaking, so the last id is always the rarest token.
class Vocabulary {
 public:
  static constexpr TokenId kUnkId = 0;
  static constexpr TokenId kEosId = 1;
  static constexpr std::size_t kReservedCount = 2;

  Vocabulary();

  // Keeps the max_size - 2 most frequent non-reserved tokens.
  static Vocabulary build(const std::vector<Sentence>& sentences, std::size_t max_size);

  // Rebuilds from an id-ordered token list (as stored on disk). Frequencies
  // are unknown until attach_frequencies() is called.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId unk_id() const { return kUnkId; }
  TokenId eos_id() const { return kEosId; }

  std::optional<TokenId> find(std::string_view token) const;
  // Out-of-vocabulary tokens map to unk_id().
  TokenId id(std::string_view token) const;
  // Throws InputError naming the token when it is not in the vocabulary.
  TokenId require(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(TokenId id) const { return id >= 0 && std::size_t(id) < tokens_.size(); }
  bool is_reserved(TokenId id) const { return id == kUnkId || id == kEosId; }

  std::uint64_t frequency(TokenId id) const;
  bool has_frequencies() const { return !frequency_.empty(); }
  void attach_frequencies(std::vector<std::uint64_t> counts);

  // Least frequent non-reserved token (the last id by construction).
  TokenId least_frequent() const;

  IdSentence encode(const Sentence& sentence) const;
  Sentence decode(const IdSentence& ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && frequency_ == other.frequency_;
  }

 private:
  Vocabulary(std::vector<std::string> tokens, std::vector<std::uint64_t> frequency);

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> frequency_;
  std::unordered_map<std::string, TokenId> index_;
};

enum class SplitTag { train, valid, test, eval };

struct TokenizedCorpus {
  std::vector<IdSentence> sentences;
  SplitTag source = SplitTag::eval;

  std::size_t token_count() const;
  bool empty() const { return sentences.empty(); }
};

// One sentence per non-empty line: lowercased, split on whitespace, characters
// other than letters, digits and apostrophes removed, and elided forms ("l'",
// "j'") split off as tokens of their own. Each sentence ends with "<eos>".
std::vector<Sentence> tokenize(std::string_view raw_text);
Sentence tokenize_line(std::string_view line);

// Replaces OOV tokens by <unk> and drops sentences whose unknown fraction
// (ignoring <eos>) is strictly above max_unknown_fraction.
TokenizedCorpus apply_unknowns_and_filter(const std::vector<Sentence>& sentences,
                                          const Vocabulary& vocab,
                                          double max_unknown_fraction = 0.05);

struct CorpusSplit {
  TokenizedCorpus train;
  TokenizedCorpus valid;
  TokenizedCorpus test;
};

// Seeded shuffle, then 8:1:1 by sentence count; remainders go to train.
CorpusSplit split_corpus(const TokenizedCorpus& corpus, std::uint64_t seed);

std::vector<std::uint64_t> count_tokens(const TokenizedCorpus& corpus, std::size_t vocab_size);

// File formats: vocabulary is "#V=<count>" followed by one token per line
// (line order = id); tokenized corpora are one sentence per line of
// space-separated ids.
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_corpus(const TokenizedCorpus& corpus, const std::filesystem::path& path);
TokenizedCorpus load_corpus(const std::filesystem::path& path, std::size_t vocab_size,
                            SplitTag tag = SplitTag::eval);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace genderlab
