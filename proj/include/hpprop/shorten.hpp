#pragma once

#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hpprop/tokenizer.hpp"

namespace hpprop {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A1 normal, A2 no stopwords, A3 no punctuation, A4 no stopwords and no
// punctuation, A5 no stopwords and no once-only words, B1/B2 head+tail of
// A1/A2, C1 unique words only.
enum class Strategy { A1, A2, A3, A4, A5, B1, B2, C1 };

inline constexpr Strategy kAllStrategies[] = {Strategy::A1, Strategy::A2, Strategy::A3,
                                              Strategy::A4, Strategy::A5, Strategy::B1,
                                              Strategy::B2, Strategy::C1};

std::string to_string(Strategy s);  // "a1" .. "c1"
std::string display_name(Strategy s);  // "A.1" .. "C.1"
Strategy parse_strategy(std::string_view name);  // throws ConfigError

bool uses_stopwords(Strategy s);
bool is_head_tail(Strategy s);

class StopwordList {
 public:
  StopwordList() = default;
  explicit StopwordList(const std::vector<std::string>& words);

  // One word per line, '#' starts a comment line.
  static StopwordList load(const std::filesystem::path& path);
  static StopwordList parse(std::string_view content);

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  // Case-insensitive membership.
  bool contains(std::string_view word) const;

 private:
  std::set<std::string, std::less<>> entries_;
};

struct TokenBudget {
  std::size_t max_tokens = 128;
};

std::vector<std::string> apply_strategy(const std::vector<std::string>& words, Strategy strategy,
                                        const StopwordList& stopwords);

// Subword-tokenizes `words` and cuts to the budget: a prefix for head-only
// variants, head then tail for B1/B2. `head_share` sets the head part of the
// budget (rounded up).
std::vector<std::string> truncate(const std::vector<std::string>& words, Strategy strategy,
                                  TokenBudget budget, const SubwordVocab& vocab,
                                  double head_share = 0.5);

// Same cut applied to an already subword-tokenized sequence.
std::vector<std::string> truncate_subwords(std::vector<std::string> subwords, Strategy strategy,
                                           TokenBudget budget, double head_share = 0.5);

}  // namespace hpprop
