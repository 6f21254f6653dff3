#include "genderlab/grammar.hpp"

#include <cctype>
#include <charconv>
#include <sstream>

#include "genderlab/corpus.hpp"
#include "genderlab/error.hpp"
#include "genderlab/random.hpp"

namespace genderlab {

namespace {

constexpr int kMaxExpansionDepth = 64;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw ConfigError("grammar line " + std::to_string(line_no) + ": " + what);
}

RuleAlternative parse_alternative(std::string_view text, std::size_t line_no) {
  RuleAlternative alt;
  for (auto& w : split_words(text)) {
    if (w.size() > 1 && w[0] == '@') {
      double weight = 0.0;
      auto [p, ec] = std::from_chars(w.data() + 1, w.data() + w.size(), weight);
      if (ec != std::errc() || p != w.data() + w.size() || !(weight > 0.0)) {
        parse_fail(line_no, "bad weight '" + w + "'");
      }
      alt.weight = weight;
    } else {
      alt.symbols.push_back(w);
    }
  }
  return alt;
}

struct Generator {
  const GrammarSpec& spec;
  Rng rng;
  const LexiconNoun* head = nullptr;
  bool used_noun = false;
  bool used_agreement = false;
  std::vector<double> scratch;

  void expand(const std::string& symbol, std::vector<std::string>& out, int depth) {
    if (depth > kMaxExpansionDepth) {
      throw ConfigError("grammar expansion deeper than " + std::to_string(kMaxExpansionDepth) +
                        " (recursive rule through '" + symbol + "'?)");
    }
    if (GrammarSpec::is_agreement_slot(symbol)) {
      (symbol == "NOUN" ? used_noun : used_agreement) = true;
    }
    if (symbol == "NOUN") {
      out.push_back(head->token);
    } else if (symbol == "ART") {
      out.push_back(head->elided ? spec.elided_article : spec.article.form(head->gender));
    } else if (symbol == "ADJ") {
      out.push_back(spec.adjectives[rng.below(spec.adjectives.size())].form(head->gender));
    } else if (symbol == "PART") {
      out.push_back(spec.participles[rng.below(spec.participles.size())].form(head->gender));
    } else if (symbol == "REL") {
      out.push_back(spec.relative.form(head->gender));
    } else if (GrammarSpec::is_nonterminal(symbol)) {
      const auto& alts = spec.rules.at(symbol);
      scratch.resize(alts.size());
      for (std::size_t i = 0; i < alts.size(); ++i) scratch[i] = alts[i].weight;
      const auto& chosen = alts[rng.weighted(scratch)];
      for (const auto& s : chosen.symbols) expand(s, out, depth + 1);
    } else {
      out.push_back(symbol);
    }
  }
};

}  // namespace

Gender parse_gender(std::string_view text) {
  if (text == "f" || text == "F" || text == "feminine") return Gender::feminine;
  if (text == "m" || text == "M" || text == "masculine") return Gender::masculine;
  throw InputError("unknown gender '" + std::string(text) + "'");
}

bool GrammarSpec::is_nonterminal(std::string_view symbol) {
  if (symbol.empty()) return false;
  for (char c : symbol) {
    if (!(std::isupper(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) ||
          c == '_')) {
      return false;
    }
  }
  return std::isupper(static_cast<unsigned char>(symbol.front())) != 0;
}

bool GrammarSpec::is_agreement_slot(std::string_view symbol) {
  return symbol == "NOUN" || symbol == "ART" || symbol == "ADJ" || symbol == "PART" ||
         symbol == "REL";
}

std::set<std::string> GrammarSpec::gender_marked_tokens() const {
  std::set<std::string> out{article.feminine, article.masculine, relative.feminine,
                            relative.masculine};
  for (const auto& p : adjectives) {
    out.insert(p.feminine);
    out.insert(p.masculine);
  }
  for (const auto& p : participles) {
    out.insert(p.feminine);
    out.insert(p.masculine);
  }
  return out;
}

std::optional<Gender> GrammarSpec::gender_of_marked(std::string_view token) const {
  auto check = [&](const InflectedPair& p) -> std::optional<Gender> {
    if (p.feminine == token) return Gender::feminine;
    if (p.masculine == token) return Gender::masculine;
    return std::nullopt;
  };
  if (auto g = check(article)) return g;
  if (auto g = check(relative)) return g;
  for (const auto& p : adjectives) {
    if (auto g = check(p)) return g;
  }
  for (const auto& p : participles) {
    if (auto g = check(p)) return g;
  }
  return std::nullopt;
}

const LexiconNoun* GrammarSpec::find_noun(std::string_view token) const {
  for (const auto& n : nouns) {
    if (n.token == token) return &n;
  }
  return nullptr;
}

void GrammarSpec::validate() const {
  if (!(masculine_ratio >= 0.0 && masculine_ratio <= 1.0)) {
    throw ConfigError("masculine_ratio must lie in [0, 1]");
  }
  if (article.feminine.empty() || article.masculine.empty() || elided_article.empty()) {
    throw ConfigError("grammar needs feminine, masculine and elided articles");
  }
  if (relative.feminine.empty() || relative.masculine.empty()) {
    throw ConfigError("grammar needs feminine and masculine relative pronouns");
  }
  bool has_f = false;
  bool has_m = false;
  std::set<std::string> noun_tokens;
  for (const auto& n : nouns) {
    (n.gender == Gender::feminine ? has_f : has_m) = true;
    if (!noun_tokens.insert(n.token).second) throw ConfigError("duplicate noun '" + n.token + "'");
  }
  if ((masculine_ratio < 1.0 && !has_f) || (masculine_ratio > 0.0 && !has_m)) {
    throw ConfigError("grammar needs nouns of both genders");
  }
  if (adjectives.empty() || participles.empty()) {
    throw ConfigError("grammar needs at least one adjective and one participle");
  }
  const auto marked = gender_marked_tokens();
  for (const auto& p : adjectives) {
    if (p.feminine == p.masculine) throw ConfigError("adjective '" + p.feminine + "' is not inflected");
  }
  for (const auto& p : participles) {
    if (p.feminine == p.masculine) throw ConfigError("participle '" + p.feminine + "' is not inflected");
  }
  for (const auto& t : marked) {
    if (noun_tokens.count(t)) throw ConfigError("'" + t + "' is both a noun and gender-marked");
  }
  if (marked.count(elided_article)) throw ConfigError("the elided article must be gender-neutral");
  for (const auto& [f, m] : novel_pairs) {
    const auto* nf = find_noun(f);
    const auto* nm = find_noun(m);
    if (!nf || nf->gender != Gender::feminine) throw ConfigError("pair parent '" + f + "' is not a feminine noun");
    if (!nm || nm->gender != Gender::masculine) throw ConfigError("pair parent '" + m + "' is not a masculine noun");
  }
  if (!rules.count(start_symbol)) throw ConfigError("start symbol '" + start_symbol + "' has no rule");
  for (const auto& [name, alts] : rules) {
    if (!is_nonterminal(name) || is_agreement_slot(name)) {
      throw ConfigError("'" + name + "' cannot be used as a rule name");
    }
    if (alts.empty()) throw ConfigError("rule '" + name + "' has no alternatives");
    for (const auto& alt : alts) {
      for (const auto& s : alt.symbols) {
        if (is_agreement_slot(s)) continue;
        if (is_nonterminal(s)) {
          if (!rules.count(s)) throw ConfigError("rule '" + name + "' uses undefined symbol '" + s + "'");
          continue;
        }
        // Terminals written directly in rules are fillers: never gender-marked.
        if (marked.count(s)) {
          throw ConfigError("filler '" + s + "' in rule '" + name + "' carries gender marking");
        }
        if (noun_tokens.count(s)) {
          throw ConfigError("filler '" + s + "' in rule '" + name + "' is a lexicon noun");
        }
        if (s == kEosToken || s == kUnkToken) {
          throw ConfigError("rule '" + name + "' uses reserved token '" + s + "'");
        }
      }
    }
  }
}

GrammarSpec parse_grammar(std::string_view text) {
  GrammarSpec spec;
  std::string section;
  std::string current_rule;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') parse_fail(line_no, "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      current_rule.clear();
      continue;
    }
    auto words = split_words(line);
    auto key_value = [&]() -> std::pair<std::string, std::string> {
      auto eq = line.find('=');
      if (eq == std::string_view::npos) parse_fail(line_no, "expected key = value");
      return {std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1)))};
    };
    if (section == "settings") {
      auto [k, v] = key_value();
      if (k == "masculine_ratio") {
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), spec.masculine_ratio);
        if (ec != std::errc() || p != v.data() + v.size()) parse_fail(line_no, "bad masculine_ratio");
      } else if (k == "start") {
        spec.start_symbol = v;
      } else {
        parse_fail(line_no, "unknown setting '" + k + "'");
      }
    } else if (section == "articles" || section == "relatives") {
      auto [k, v] = key_value();
      InflectedPair& pair = section == "articles" ? spec.article : spec.relative;
      if (k == "feminine") {
        pair.feminine = v;
      } else if (k == "masculine") {
        pair.masculine = v;
      } else if (k == "elided" && section == "articles") {
        spec.elided_article = v;
      } else {
        parse_fail(line_no, "unknown key '" + k + "' in [" + section + "]");
      }
    } else if (section == "nouns") {
      if (words.size() < 2 || words.size() > 3) parse_fail(line_no, "expected: <f|m> <noun> [elided]");
      LexiconNoun n;
      try {
        n.gender = parse_gender(words[0]);
      } catch (const InputError& e) {
        parse_fail(line_no, e.what());
      }
      n.token = words[1];
      if (words.size() == 3) {
        if (words[2] != "elided") parse_fail(line_no, "unknown noun flag '" + words[2] + "'");
        n.elided = true;
      }
      spec.nouns.push_back(std::move(n));
    } else if (section == "adjectives" || section == "participles" || section == "pairs") {
      if (words.size() != 2) parse_fail(line_no, "expected two words (feminine masculine)");
      if (section == "pairs") {
        spec.novel_pairs.emplace_back(words[0], words[1]);
      } else {
        auto& list = section == "adjectives" ? spec.adjectives : spec.participles;
        list.push_back({words[0], words[1]});
      }
    } else if (section == "rules") {
      std::string_view body;
      if (line.front() == '|') {
        if (current_rule.empty()) parse_fail(line_no, "continuation without a rule");
        body = line.substr(1);
      } else {
        auto eq = line.find('=');
        if (eq == std::string_view::npos) parse_fail(line_no, "expected NAME = alternatives");
        current_rule = std::string(trim(line.substr(0, eq)));
        if (spec.rules.count(current_rule)) parse_fail(line_no, "rule '" + current_rule + "' redefined");
        spec.rules[current_rule];
        body = line.substr(eq + 1);
      }
      std::size_t start = 0;
      while (true) {
        auto bar = body.find('|', start);
        auto piece = body.substr(start, bar == std::string_view::npos ? std::string_view::npos : bar - start);
        // A trailing '|' continues on the next line rather than adding epsilon.
        if (!(bar == std::string_view::npos && trim(piece).empty() && start > 0)) {
          spec.rules[current_rule].push_back(parse_alternative(piece, line_no));
        }
        if (bar == std::string_view::npos) break;
        start = bar + 1;
      }
    } else {
      parse_fail(line_no, section.empty() ? "content before the first section"
                                          : "unknown section [" + section + "]");
    }
  }
  spec.validate();
  return spec;
}

GrammarSpec load_grammar(const std::filesystem::path& path) {
  return parse_grammar(read_text_file(path));
}

std::string format_grammar(const GrammarSpec& spec) {
  std::ostringstream out;
  out.precision(17);
  out << "[settings]\nmasculine_ratio = " << spec.masculine_ratio << "\nstart = " << spec.start_symbol
      << "\n\n[articles]\nfeminine = " << spec.article.feminine << "\nmasculine = "
      << spec.article.masculine << "\nelided = " << spec.elided_article
      << "\n\n[relatives]\nfeminine = " << spec.relative.feminine
      << "\nmasculine = " << spec.relative.masculine << "\n\n[nouns]\n";
  for (const auto& n : spec.nouns) {
    out << (n.gender == Gender::feminine ? 'f' : 'm') << ' ' << n.token << (n.elided ? " elided" : "")
        << '\n';
  }
  out << "\n[adjectives]\n";
  for (const auto& p : spec.adjectives) out << p.feminine << ' ' << p.masculine << '\n';
  out << "\n[participles]\n";
  for (const auto& p : spec.participles) out << p.feminine << ' ' << p.masculine << '\n';
  out << "\n[pairs]\n";
  for (const auto& [f, m] : spec.novel_pairs) out << f << ' ' << m << '\n';
  out << "\n[rules]\n";
  for (const auto& [name, alts] : spec.rules) {
    out << name << " =";
    for (std::size_t i = 0; i < alts.size(); ++i) {
      if (i) out << "\n  |";
      for (const auto& s : alts[i].symbols) out << ' ' << s;
      out << " @" << alts[i].weight;
    }
    out << '\n';
  }
  return out.str();
}

std::string generate_synthetic_corpus(const GrammarSpec& spec, std::size_t n_sentences,
                                      std::uint64_t seed) {
  spec.validate();
  std::vector<const LexiconNoun*> feminine;
  std::vector<const LexiconNoun*> masculine;
  for (const auto& n : spec.nouns) {
    (n.gender == Gender::feminine ? feminine : masculine).push_back(&n);
  }
  Generator gen{spec, Rng(seed), nullptr, false, false, {}};
  std::string text;
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < n_sentences; ++i) {
    // The head noun is drawn before expansion so that articles preceding it
    // in the template can already agree.
    const bool masc = gen.rng.bernoulli(spec.masculine_ratio);
    const auto& pool = masc ? masculine : feminine;
    gen.head = pool[gen.rng.below(pool.size())];
    tokens.clear();
    gen.used_noun = gen.used_agreement = false;
    gen.expand(spec.start_symbol, tokens, 0);
    if (gen.used_agreement && !gen.used_noun) {
      throw ConfigError("grammar produced an agreement slot without a head noun");
    }
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      if (k) text += ' ';
      text += tokens[k];
    }
    text += '\n';
  }
  return text;
}

}  // namespace genderlab
