#include "genderlab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "genderlab/error.hpp"
#include "genderlab/random.hpp"

namespace genderlab {

namespace {

// Decodes one UTF-8 code point; malformed bytes are passed through as-is.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> char32_t {
    return static_cast<unsigned char>(s[i + k]) & 0x3Fu;
  };
  if (b0 < 0x80) {
    i += 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0 && i + 1 < s.size()) {
    char32_t cp = ((b0 & 0x1Fu) << 6) | cont(1);
    i += 2;
    return cp;
  }
  if ((b0 & 0xF0) == 0xE0 && i + 2 < s.size()) {
    char32_t cp = ((b0 & 0x0Fu) << 12) | (cont(1) << 6) | cont(2);
    i += 3;
    return cp;
  }
  if ((b0 & 0xF8) == 0xF0 && i + 3 < s.size()) {
    char32_t cp = ((b0 & 0x07u) << 18) | (cont(1) << 12) | (cont(2) << 6) | cont(3);
    i += 4;
    return cp;
  }
  i += 1;
  return b0;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(char(cp));
  } else if (cp < 0x800) {
    out.push_back(char(0xC0 | (cp >> 6)));
    out.push_back(char(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(char(0xE0 | (cp >> 12)));
    out.push_back(char(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(char(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(char(0xF0 | (cp >> 18)));
    out.push_back(char(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(char(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(char(0x80 | (cp & 0x3F)));
  }
}

// Latin-1 and Latin Extended-A case folding; everything else is unchanged.
char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
  if (cp >= 0x100 && cp <= 0x137 && cp % 2 == 0) return cp + 1;
  if (cp >= 0x139 && cp <= 0x148 && cp % 2 == 1) return cp + 1;
  if (cp >= 0x14A && cp <= 0x177 && cp % 2 == 0) return cp + 1;
  if (cp == 0x178) return 0xFF;
  if (cp >= 0x179 && cp <= 0x17E && cp % 2 == 1) return cp + 1;
  return cp;
}

bool is_apostrophe(char32_t cp) { return cp == '\'' || cp == 0x2019 || cp == 0x02BC; }

bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
  }
  if (cp < 0xC0 || cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp == 0xFEFF) return false;
  return true;
}

void tokenize_chunk(std::string_view chunk, Sentence& out) {
  std::string current;
  std::size_t i = 0;
  while (i < chunk.size()) {
    const char32_t cp = next_code_point(chunk, i);
    if (is_apostrophe(cp)) {
      if (!current.empty()) {
        current.push_back('\'');
        out.push_back(std::move(current));
        current.clear();
      }
    } else if (is_word_char(cp)) {
      append_utf8(current, to_lower(cp));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(from_tokens({})) {}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReservedCount || tokens[0] != kUnkToken || tokens[1] != kEosToken) {
    std::vector<std::string> fixed{std::string(kUnkToken), std::string(kEosToken)};
    for (auto& t : tokens) {
      if (t != kUnkToken && t != kEosToken) fixed.push_back(std::move(t));
    }
    tokens = std::move(fixed);
  }
  Vocabulary v(std::move(tokens), {});
  return v;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::uint64_t> frequency)
    : tokens_(std::move(tokens)), frequency_(std::move(frequency)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], TokenId(i)).second) {
      throw InputError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(const std::vector<Sentence>& sentences, std::size_t max_size) {
  if (max_size < kReservedCount) {
    throw ConfigError("vocabulary max_size " + std::to_string(max_size) +
                      " leaves no room for the reserved tokens");
  }
  std::map<std::string, std::uint64_t, std::less<>> counts;
  std::uint64_t unk = 0;
  std::uint64_t eos = 0;
  for (const auto& s : sentences) {
    for (const auto& t : s) {
      if (t == kEosToken) {
        ++eos;
      } else if (t == kUnkToken) {
        ++unk;
      } else {
        ++counts[t];
      }
    }
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens{std::string(kUnkToken), std::string(kEosToken)};
  std::vector<std::uint64_t> freq{unk, eos};
  const std::size_t keep = std::min(ranked.size(), max_size - kReservedCount);
  for (std::size_t i = 0; i < keep; ++i) {
    tokens.push_back(ranked[i].first);
    freq.push_back(ranked[i].second);
  }
  for (std::size_t i = keep; i < ranked.size(); ++i) freq[kUnkId] += ranked[i].second;
  return Vocabulary(std::move(tokens), std::move(freq));
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnkId); }

TokenId Vocabulary::require(std::string_view token) const {
  auto found = find(token);
  if (!found) throw InputError("token '" + std::string(token) + "' is not in the vocabulary");
  return *found;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!contains(id)) throw InputError("token id " + std::to_string(id) + " out of range");
  return tokens_[std::size_t(id)];
}

std::uint64_t Vocabulary::frequency(TokenId id) const {
  if (!contains(id)) throw InputError("token id " + std::to_string(id) + " out of range");
  return frequency_.empty() ? 0 : frequency_[std::size_t(id)];
}

void Vocabulary::attach_frequencies(std::vector<std::uint64_t> counts) {
  if (counts.size() != tokens_.size()) {
    throw InputError("frequency table has " + std::to_string(counts.size()) +
                     " entries for a vocabulary of " + std::to_string(tokens_.size()));
  }
  frequency_ = std::move(counts);
}

TokenId Vocabulary::least_frequent() const {
  if (tokens_.size() <= kReservedCount) throw InputError("vocabulary has no ordinary tokens");
  return TokenId(tokens_.size() - 1);
}

IdSentence Vocabulary::encode(const Sentence& sentence) const {
  IdSentence ids;
  ids.reserve(sentence.size());
  for (const auto& t : sentence) ids.push_back(id(t));
  return ids;
}

Sentence Vocabulary::decode(const IdSentence& ids) const {
  Sentence out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

// ---------------------------------------------------------------------------
// Tokenisation and corpus preparation

Sentence tokenize_line(std::string_view line) {
  Sentence out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) {
      std::string_view chunk = line.substr(i, j - i);
      if (chunk == kUnkToken) {
        out.emplace_back(kUnkToken);
      } else if (chunk != kEosToken) {
        tokenize_chunk(chunk, out);
      }
    }
    i = j;
  }
  if (!out.empty()) out.emplace_back(kEosToken);
  return out;
}

std::vector<Sentence> tokenize(std::string_view raw_text) {
  std::vector<Sentence> sentences;
  std::size_t start = 0;
  while (start <= raw_text.size()) {
    std::size_t end = raw_text.find('\n', start);
    if (end == std::string_view::npos) end = raw_text.size();
    Sentence s = tokenize_line(raw_text.substr(start, end - start));
    if (!s.empty()) sentences.push_back(std::move(s));
    start = end + 1;
  }
  return sentences;
}

std::size_t TokenizedCorpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

TokenizedCorpus apply_unknowns_and_filter(const std::vector<Sentence>& sentences,
                                          const Vocabulary& vocab, double max_unknown_fraction) {
  TokenizedCorpus out;
  for (const auto& s : sentences) {
    IdSentence ids;
    ids.reserve(s.size() + 1);
    std::size_t unknown = 0;
    std::size_t content = 0;
    for (const auto& t : s) {
      if (t == kEosToken) continue;
      TokenId id = vocab.id(t);
      ++content;
      if (id == vocab.unk_id()) ++unknown;
      ids.push_back(id);
    }
    if (content == 0) continue;
    if (double(unknown) > max_unknown_fraction * double(content)) continue;
    ids.push_back(vocab.eos_id());
    out.sentences.push_back(std::move(ids));
  }
  return out;
}

CorpusSplit split_corpus(const TokenizedCorpus& corpus, std::uint64_t seed) {
  const std::size_t n = corpus.sentences.size();
  if (n < 10) {
    throw ConfigError("corpus has " + std::to_string(n) +
                      " sentences; an 8:1:1 split needs at least 10");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n_valid = n / 10;
  const std::size_t n_test = n / 10;
  const std::size_t n_train = n - n_valid - n_test;
  CorpusSplit split;
  split.train.source = SplitTag::train;
  split.valid.source = SplitTag::valid;
  split.test.source = SplitTag::test;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = corpus.sentences[order[i]];
    if (i < n_train) {
      split.train.sentences.push_back(s);
    } else if (i < n_train + n_valid) {
      split.valid.sentences.push_back(s);
    } else {
      split.test.sentences.push_back(s);
    }
  }
  return split;
}

std::vector<std::uint64_t> count_tokens(const TokenizedCorpus& corpus, std::size_t vocab_size) {
  std::vector<std::uint64_t> counts(vocab_size, 0);
  for (const auto& s : corpus.sentences) {
    for (TokenId id : s) {
      if (id < 0 || std::size_t(id) >= vocab_size) {
        throw InputError("token id " + std::to_string(id) + " out of range for V=" +
                         std::to_string(vocab_size));
      }
      ++counts[std::size_t(id)];
    }
  }
  return counts;
}

// ---------------------------------------------------------------------------
// File IO

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), std::streamsize(contents.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::string text = "#V=" + std::to_string(vocab.size()) + "\n";
  for (const auto& t : vocab.tokens()) {
    text += t;
    text += '\n';
  }
  write_text_file(path, text);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("#V=", 0) != 0) {
    throw InputError("'" + path.string() + "' lacks the #V=<count> header");
  }
  std::size_t declared = 0;
  auto [ptr, ec] = std::from_chars(line.data() + 3, line.data() + line.size(), declared);
  if (ec != std::errc()) throw InputError("bad vocabulary header '" + line + "'");
  std::vector<std::string> tokens;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  while (tokens.size() > declared && !tokens.empty() && tokens.back().empty()) tokens.pop_back();
  if (tokens.size() != declared) {
    throw InputError("'" + path.string() + "' declares " + std::to_string(declared) +
                     " tokens but holds " + std::to_string(tokens.size()));
  }
  if (tokens.size() < 2 || tokens[0] != kUnkToken || tokens[1] != kEosToken) {
    throw InputError("'" + path.string() + "' must start with <unk> and <eos>");
  }
  return Vocabulary::from_tokens(std::move(tokens));
}

void save_corpus(const TokenizedCorpus& corpus, const std::filesystem::path& path) {
  std::string text;
  for (const auto& s : corpus.sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) text += ' ';
      text += std::to_string(s[i]);
    }
    text += '\n';
  }
  write_text_file(path, text);
}

TokenizedCorpus load_corpus(const std::filesystem::path& path, std::size_t vocab_size,
                            SplitTag tag) {
  const std::string text = read_text_file(path);
  TokenizedCorpus corpus;
  corpus.source = tag;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + start, end - start);
    IdSentence ids;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\r' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      TokenId id = 0;
      auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + line.size(), id);
      if (ec != std::errc() || id < 0 || std::size_t(id) >= vocab_size) {
        throw InputError("'" + path.string() + "' line " + std::to_string(line_no) +
                         ": invalid token id");
      }
      ids.push_back(id);
      i = std::size_t(ptr - line.data());
    }
    if (!ids.empty()) {
      if (ids.back() != Vocabulary::kEosId) {
        throw InputError("'" + path.string() + "' line " + std::to_string(line_no) +
                         ": sentence does not end with <eos>");
      }
      corpus.sentences.push_back(std::move(ids));
    }
    start = end + 1;
  }
  return corpus;
}

}  // namespace genderlab
