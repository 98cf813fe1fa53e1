#include "hpprop/shorten.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "hpprop/unicode.hpp"

namespace hpprop {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::A1: return "a1";
    case Strategy::A2: return "a2";
    case Strategy::A3: return "a3";
    case Strategy::A4: return "a4";
    case Strategy::A5: return "a5";
    case Strategy::B1: return "b1";
    case Strategy::B2: return "b2";
    case Strategy::C1: return "c1";
  }
  return "?";
}

std::string display_name(Strategy s) {
  std::string name = to_string(s);
  return {static_cast<char>(name[0] - 'a' + 'A'), '.', name[1]};
}

Strategy parse_strategy(std::string_view name) {
  std::string lowered;
  for (const char c : name) {
    if (c == '.') continue;
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (const auto s : kAllStrategies) {
    if (to_string(s) == lowered) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected a1..a5, b1, b2, c1)");
}

bool uses_stopwords(Strategy s) {
  return s == Strategy::A2 || s == Strategy::A4 || s == Strategy::A5 || s == Strategy::B2;
}

bool is_head_tail(Strategy s) { return s == Strategy::B1 || s == Strategy::B2; }

StopwordList::StopwordList(const std::vector<std::string>& words) {
  for (const auto& word : words) {
    std::size_t pos = 0;
    while (pos < word.size()) {
      if (unicode::is_whitespace(unicode::next_code_point(word, pos))) {
        throw ConfigError("stopword '" + word + "' contains whitespace");
      }
    }
    if (!word.empty()) entries_.insert(unicode::to_lower(word));
  }
}

StopwordList StopwordList::parse(std::string_view content) {
  std::vector<std::string> words;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.remove_suffix(1);
    }
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty() || line.front() == '#') continue;
    words.emplace_back(line);
  }
  return StopwordList(words);
}

StopwordList StopwordList::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open stopword list " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool StopwordList::contains(std::string_view word) const {
  return entries_.find(unicode::to_lower(word)) != entries_.end();
}

namespace {

std::vector<std::string> drop_stopwords(const std::vector<std::string>& words,
                                        const StopwordList& stopwords) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    if (!stopwords.contains(w)) out.push_back(w);
  }
  return out;
}

std::vector<std::string> drop_punctuation(const std::vector<std::string>& words) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    if (!unicode::is_punctuation_token(w)) out.push_back(w);
  }
  return out;
}

}  // namespace

std::vector<std::string> apply_strategy(const std::vector<std::string>& words, Strategy strategy,
                                        const StopwordList& stopwords) {
  if (uses_stopwords(strategy) && stopwords.empty()) {
    throw ConfigError("strategy " + to_string(strategy) + " requires a non-empty stopword list");
  }
  switch (strategy) {
    case Strategy::A1:
    case Strategy::B1:
      return words;
    case Strategy::A2:
    case Strategy::B2:
      return drop_stopwords(words, stopwords);
    case Strategy::A3:
      return drop_punctuation(words);
    case Strategy::A4:
      return drop_punctuation(drop_stopwords(words, stopwords));
    case Strategy::A5: {
      std::unordered_map<std::string, std::size_t> freq;
      for (const auto& w : words) ++freq[unicode::to_lower(w)];
      std::vector<std::string> out;
      for (const auto& w : drop_stopwords(words, stopwords)) {
        if (unicode::is_punctuation_token(w) || freq[unicode::to_lower(w)] > 1) out.push_back(w);
      }
      return out;
    }
    case Strategy::C1: {
      std::unordered_set<std::string> seen;
      std::vector<std::string> out;
      for (const auto& w : words) {
        if (unicode::is_punctuation_token(w)) continue;
        if (seen.insert(unicode::to_lower(w)).second) out.push_back(w);
      }
      return out;
    }
  }
  return words;
}

std::vector<std::string> truncate_subwords(std::vector<std::string> subwords, Strategy strategy,
                                           TokenBudget budget, double head_share) {
  const std::size_t max = budget.max_tokens;
  if (subwords.size() <= max) return subwords;
  if (!is_head_tail(strategy)) {
    subwords.resize(max);
    return subwords;
  }
  const auto head = std::min(
      max, static_cast<std::size_t>(std::ceil(static_cast<double>(max) * head_share)));
  const std::size_t tail = max - head;
  std::vector<std::string> out;
  out.reserve(max);
  out.insert(out.end(), std::make_move_iterator(subwords.begin()),
             std::make_move_iterator(subwords.begin() + static_cast<long>(head)));
  out.insert(out.end(), std::make_move_iterator(subwords.end() - static_cast<long>(tail)),
             std::make_move_iterator(subwords.end()));
  return out;
}

std::vector<std::string> truncate(const std::vector<std::string>& words, Strategy strategy,
                                  TokenBudget budget, const SubwordVocab& vocab,
                                  double head_share) {
  return truncate_subwords(subword_tokenize(words, vocab), strategy, budget, head_share);
}

}  // namespace hpprop
