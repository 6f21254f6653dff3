#include "genderlab/agreement.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "genderlab/error.hpp"

namespace genderlab {
namespace {

constexpr std::size_t kScoreChunk = 256;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

Sentence words(std::string_view text) {
  Sentence s = tokenize_line(text);
  if (!s.empty()) s.pop_back();
  return s;
}

TokenId require_stimulus(const Vocabulary& vocab, const std::string& token) {
  const auto id = vocab.find(token);
  if (!id || vocab.is_reserved(*id)) {
    throw StimulusError("stimulus token '" + token + "' is not in the vocabulary");
  }
  return *id;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

char condition_code(Condition c) { return char('A' + int(c)); }

Condition parse_condition(std::string_view text) {
  if (text.size() == 1 && text[0] >= 'A' && text[0] <= 'D') return Condition(text[0] - 'A');
  if (text.size() == 1 && text[0] >= 'a' && text[0] <= 'd') return Condition(text[0] - 'a');
  throw ConfigError("condition: expected one of A, B, C, D, got '" + std::string(text) + "'");
}

std::string_view construction_name(Construction c) {
  switch (c) {
    case Construction::article_noun: return "article-noun";
    case Construction::noun_adjective: return "noun-adjective";
    case Construction::noun_participle: return "noun-participle";
    case Construction::noun_relative: return "noun-relative-pronoun";
  }
  return "?";
}

ConditionInfo condition_info(Condition c) {
  switch (c) {
    case Condition::A: return {c, Construction::article_noun, Construction::noun_adjective};
    case Condition::B: return {c, Construction::article_noun, Construction::noun_participle};
    case Condition::C: return {c, Construction::noun_adjective, Construction::noun_relative};
    case Condition::D: return {c, Construction::noun_participle, Construction::noun_relative};
  }
  throw InternalError("unknown condition");
}

TestTemplates parse_test_templates(std::string_view text) {
  TestTemplates t;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto fail = [&](const std::string& msg) {
      throw StimulusError(fmt::format("test templates line {}: {}", line_no, msg));
    };
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      if (section != "beginnings" && section != "intervening" && section != "targets") {
        fail("unknown section [" + section + "]");
      }
      continue;
    }
    if (section == "beginnings") {
      t.beginnings.push_back(words(line));
    } else if (section == "intervening") {
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("expected '<distance> = words'");
      const std::string key = trim(line.substr(0, eq));
      int distance = -1;
      auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), distance);
      if (ec != std::errc() || p != key.data() + key.size() || distance < 0) {
        fail("bad distance '" + key + "'");
      }
      Sentence phrase = words(line.substr(eq + 1));
      if (int(phrase.size()) != distance) {
        fail(fmt::format("phrase has {} words but is labelled distance {}", phrase.size(), distance));
      }
      t.intervening.push_back(std::move(phrase));
    } else if (section == "targets") {
      const Sentence pair = words(line);
      if (pair.size() != 2 || pair[0] == pair[1]) fail("expected two distinct target forms");
      t.targets.push_back({pair[0], pair[1]});
    } else {
      fail("content outside a section");
    }
  }
  if (t.beginnings.empty() || t.intervening.empty() || t.targets.empty()) {
    throw StimulusError("test templates need beginnings, intervening phrases and targets");
  }
  return t;
}

TestTemplates load_test_templates(const std::filesystem::path& path) {
  try {
    return parse_test_templates(read_text_file(path));
  } catch (const StimulusError& e) {
    throw StimulusError(path.string() + ": " + e.what());
  }
}

std::vector<TestItem> build_test_suite(Condition condition, std::span<const ProbeNoun> nouns,
                                       const TestTemplates& templates, const Vocabulary& vocab,
                                       const SuiteOptions& options) {
  auto encode = [&](const Sentence& s) {
    IdSentence ids;
    for (const auto& tok : s) ids.push_back(require_stimulus(vocab, tok));
    return ids;
  };
  std::vector<IdSentence> beginnings;
  for (const auto& b : templates.beginnings) {
    if (options.max_beginnings && beginnings.size() == options.max_beginnings) break;
    beginnings.push_back(encode(b));
  }
  std::vector<IdSentence> intervening;
  for (const auto& phrase : templates.intervening) {
    const int d = int(phrase.size());
    if (options.distances.empty() ||
        std::find(options.distances.begin(), options.distances.end(), d) != options.distances.end()) {
      intervening.push_back(encode(phrase));
    }
  }
  if (intervening.empty()) throw StimulusError("no intervening phrase matches the requested distances");
  std::vector<std::pair<TokenId, TokenId>> targets;
  for (const auto& t : templates.targets) {
    targets.emplace_back(require_stimulus(vocab, t.feminine), require_stimulus(vocab, t.masculine));
  }

  std::vector<TestItem> items;
  for (const auto& noun : nouns) {
    const TokenId noun_id = require_stimulus(vocab, noun.token);
    for (const auto& b : beginnings) {
      for (const auto& mid : intervening) {
        IdSentence prefix{Vocabulary::kEosId};
        prefix.insert(prefix.end(), b.begin(), b.end());
        prefix.push_back(noun_id);
        prefix.insert(prefix.end(), mid.begin(), mid.end());
        if (std::count(prefix.begin(), prefix.end(), noun_id) != 1) {
          throw StimulusError("noun '" + noun.token + "' occurs more than once in a test prefix");
        }
        for (const auto& [f, m] : targets) {
          if (std::find(prefix.begin(), prefix.end(), f) != prefix.end() ||
              std::find(prefix.begin(), prefix.end(), m) != prefix.end()) {
            throw StimulusError("target '" + vocab.token(f) + "/" + vocab.token(m) +
                                "' occurs inside its own prefix");
          }
          TestItem item;
          item.id = items.size();
          item.prefix = prefix;
          item.target_f = f;
          item.target_m = m;
          item.condition = condition;
          item.distance = int(mid.size());
          item.noun = noun_id;
          item.gender = noun.gender;
          items.push_back(std::move(item));
        }
      }
    }
  }
  return items;
}

Choice choose(double p_f, double p_m) {
  if (p_f > p_m) return Choice::feminine;
  if (p_f < p_m) return Choice::masculine;
  return Choice::tie;
}

bool is_correct(Choice choice, Gender expected) {
  if (choice == Choice::tie) return false;
  return (choice == Choice::feminine) == (expected == Gender::feminine);
}

template <typename S>
std::vector<ItemScore> score_items(const ModelState<S>& model, std::span<const TestItem> items) {
  std::vector<ItemScore> out;
  out.reserve(items.size());
  std::vector<IdSentence> prefixes;
  for (std::size_t start = 0; start < items.size(); start += kScoreChunk) {
    const std::size_t n = std::min(kScoreChunk, items.size() - start);
    prefixes.clear();
    for (std::size_t i = 0; i < n; ++i) prefixes.push_back(items[start + i].prefix);
    const Matrix<S> z = last_position_logits(model, std::span<const IdSentence>(prefixes));
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = z.row(Eigen::Index(i)).template cast<double>();
      const double mx = row.maxCoeff();
      const double lse = mx + std::log((row.array() - mx).exp().sum());
      const TestItem& item = items[start + i];
      ItemScore s;
      s.p_f = std::exp(row(item.target_f) - lse);
      s.p_m = std::exp(row(item.target_m) - lse);
      s.choice = choose(s.p_f, s.p_m);
      out.push_back(s);
    }
  }
  return out;
}

template <typename S>
ItemScore score_item(const ModelState<S>& model, const TestItem& item) {
  return score_items(model, std::span<const TestItem>(&item, 1)).front();
}

const AccuracyCell* AccuracyReport::find(Condition c, Gender g, int distance) const {
  for (const auto& cell : cells) {
    if (cell.condition == c && cell.gender == g && cell.distance == distance) return &cell;
  }
  return nullptr;
}

std::string AccuracyReport::to_csv() const {
  std::string out = "condition,gender,distance,n,accuracy,ci_lo,ci_hi,ties\n";
  for (const auto& c : cells) {
    out += fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{}\n", condition_code(c.condition),
                       gender_code(c.gender), c.distance < 0 ? std::string("all") : std::to_string(c.distance),
                       c.n, c.accuracy, c.ci.lo, c.ci.hi, c.ties);
  }
  return out;
}

AccuracyReport summarize_scores(std::span<const TestItem> items, std::span<const ItemScore> scores,
                                const BootstrapConfig& bootstrap) {
  if (items.size() != scores.size()) throw InternalError("items and scores differ in length");
  if (items.empty()) throw InputError("empty test suite");
  struct Acc {
    std::vector<std::pair<std::size_t, double>> values;  // (item id, correct)
    std::size_t ties = 0;
  };
  std::map<std::tuple<int, int, int>, Acc> groups;
  AccuracyReport report;
  double total = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const TestItem& it = items[i];
    const double ok = is_correct(scores[i].choice, it.gender) ? 1.0 : 0.0;
    const bool tie = scores[i].choice == Choice::tie;
    total += ok;
    report.ties += tie;
    for (int d : {it.distance, -1}) {
      Acc& a = groups[{int(it.condition), int(it.gender), d}];
      a.values.emplace_back(it.id, ok);
      a.ties += tie;
    }
  }
  for (auto& [key, acc] : groups) {
    std::sort(acc.values.begin(), acc.values.end());
    std::vector<double> v;
    for (const auto& [id, ok] : acc.values) v.push_back(ok);
    const auto [cond, gender, distance] = key;
    AccuracyCell cell;
    cell.condition = Condition(cond);
    cell.gender = Gender(gender);
    cell.distance = distance;
    cell.n = v.size();
    cell.accuracy = mean(v);
    BootstrapConfig b = bootstrap;
    b.seed = mix_seed(bootstrap.seed, {std::uint64_t(cond), std::uint64_t(gender),
                                       std::uint64_t(distance + 1)});
    cell.ci = bootstrap_mean_ci(v, b);
    cell.ties = acc.ties;
    report.cells.push_back(cell);
  }
  // Pooled cells (distance -1) sort after the per-distance ones.
  std::stable_sort(report.cells.begin(), report.cells.end(), [](const auto& a, const auto& b) {
    auto key = [](const AccuracyCell& c) {
      return std::tuple(int(c.condition), int(c.gender), c.distance < 0 ? 1 << 30 : c.distance);
    };
    return key(a) < key(b);
  });
  report.n_items = items.size();
  report.mean_accuracy = total / double(items.size());
  return report;
}

template <typename S>
AccuracyReport evaluate_suite(const ModelState<S>& model, std::span<const TestItem> items,
                              const BootstrapConfig& bootstrap) {
  if (items.empty()) throw InputError("empty test suite");
  const auto scores = score_items(model, items);
  return summarize_scores(items, scores, bootstrap);
}

void save_suite(std::span<const TestItem> items, const Vocabulary& vocab,
                const std::filesystem::path& path) {
  std::string out;
  for (const auto& it : items) {
    for (std::size_t i = 0; i < it.prefix.size(); ++i) {
      if (i) out += ' ';
      out += vocab.token(it.prefix[i]);
    }
    out += fmt::format("\t{}\t{}\t{}\t{}\t{}\t{}\n", vocab.token(it.target_f), vocab.token(it.target_m),
                       condition_code(it.condition), it.distance, vocab.token(it.noun),
                       gender_code(it.gender));
  }
  write_text_file(path, out);
}

std::vector<TestItem> load_suite(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<TestItem> items;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    auto fail = [&](const std::string& msg) {
      throw StimulusError(fmt::format("{}:{}: {}", path.string(), line_no, msg));
    };
    if (fields.size() != 7) fail("expected 7 tab-separated fields");
    TestItem it;
    it.id = items.size();
    for (const auto& tok : split(fields[0], ' ')) {
      if (tok.empty()) continue;
      const auto id = vocab.find(tok);
      if (!id) fail("token '" + tok + "' is not in the vocabulary");
      it.prefix.push_back(*id);
    }
    it.target_f = require_stimulus(vocab, fields[1]);
    it.target_m = require_stimulus(vocab, fields[2]);
    it.condition = parse_condition(fields[3]);
    try {
      it.distance = std::stoi(fields[4]);
      it.gender = parse_gender(fields[6]);
    } catch (const std::exception&) {
      fail("bad distance or gender field");
    }
    it.noun = require_stimulus(vocab, fields[5]);
    if (it.prefix.empty() || it.target_f == it.target_m) fail("malformed item");
    items.push_back(std::move(it));
  }
  return items;
}

NounSets build_known_noun_baseline(const Vocabulary& vocab, std::span<const std::uint64_t> counts,
                                   const GrammarSpec& lexicon, std::size_t n_per_gender,
                                   std::uint64_t min_count, NounFilter filter) {
  struct Candidate {
    std::string token;
    double log_count;
  };
  std::vector<Candidate> fem, masc;
  for (const auto& n : lexicon.nouns) {
    if ((filter == NounFilter::elided && !n.elided) || (filter == NounFilter::plain && n.elided)) continue;
    const auto id = vocab.find(n.token);
    if (!id || std::size_t(*id) >= counts.size() || counts[*id] < min_count) continue;
    (n.gender == Gender::feminine ? fem : masc).push_back({n.token, std::log(double(counts[*id]))});
  }
  auto by_token = [](const Candidate& a, const Candidate& b) { return a.token < b.token; };
  std::sort(fem.begin(), fem.end(), by_token);
  std::sort(masc.begin(), masc.end(), by_token);
  if (fem.size() < n_per_gender || masc.size() < n_per_gender) {
    throw ConfigError(fmt::format(
        "only {} feminine and {} masculine nouns reach min_count {} ({} per gender requested)",
        fem.size(), masc.size(), min_count, n_per_gender));
  }
  NounSets sets;
  for (std::size_t k = 0; k < n_per_gender; ++k) {
    std::size_t best_f = 0, best_m = 0;
    double best = INFINITY;
    for (std::size_t i = 0; i < fem.size(); ++i) {
      for (std::size_t j = 0; j < masc.size(); ++j) {
        const double gap = std::abs(fem[i].log_count - masc[j].log_count);
        if (gap < best) {
          best = gap;
          best_f = i;
          best_m = j;
        }
      }
    }
    sets.feminine.push_back({fem[best_f].token, Gender::feminine});
    sets.masculine.push_back({masc[best_m].token, Gender::masculine});
    fem.erase(fem.begin() + std::ptrdiff_t(best_f));
    masc.erase(masc.begin() + std::ptrdiff_t(best_m));
  }
  return sets;
}

template ItemScore score_item(const ModelState<float>&, const TestItem&);
template ItemScore score_item(const ModelState<double>&, const TestItem&);
template std::vector<ItemScore> score_items(const ModelState<float>&, std::span<const TestItem>);
template std::vector<ItemScore> score_items(const ModelState<double>&, std::span<const TestItem>);
template AccuracyReport evaluate_suite(const ModelState<float>&, std::span<const TestItem>,
                                       const BootstrapConfig&);
template AccuracyReport evaluate_suite(const ModelState<double>&, std::span<const TestItem>,
                                       const BootstrapConfig&);

}  // namespace genderlab
