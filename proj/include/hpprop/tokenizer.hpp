#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "hpprop/corpus.hpp"

namespace hpprop {

class VocabError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vocabulary for greedy longest-match-first subword segmentation. Pieces that
// continue a word are stored with `continuation_prefix` prepended ("##an").
class SubwordVocab {
 public:
  SubwordVocab(std::vector<std::string> entries, std::string continuation_prefix = "##",
               std::string unknown_token = "[UNK]");

  // One token per line, blank lines ignored.
  static SubwordVocab load(const std::filesystem::path& path);
  static SubwordVocab parse(std::string_view content);

  bool contains(std::string_view token) const { return lookup_.contains(std::string(token)); }
  const std::vector<std::string>& entries() const { return entries_; }
  const std::string& continuation_prefix() const { return continuation_prefix_; }
  const std::string& unknown_token() const { return unknown_token_; }

  // Words longer than this many code points map to the unknown token.
  std::size_t max_word_chars = 100;

 private:
  std::vector<std::string> entries_;
  std::unordered_set<std::string> lookup_;
  std::string continuation_prefix_;
  std::string unknown_token_;
};

// Whitespace split, then each chunk is cut into maximal runs of punctuation
// and non-punctuation characters.
std::vector<std::string> word_tokenize(std::string_view text);

std::vector<std::string> subword_tokenize_word(std::string_view word, const SubwordVocab& vocab);
std::vector<std::string> subword_tokenize(const std::vector<std::string>& words,
                                          const SubwordVocab& vocab);

struct AuditReport {
  std::vector<double> ratios_pct;  // one per document with at least one word
  std::vector<std::string> doc_ids;
  double max_pct = 0.0;
  double min_pct = 0.0;
  double avg_pct = 0.0;
  bool recommended = false;

  std::string to_json() const;
  std::string per_document_csv() const;
};

struct AuditThresholds {
  double max_min_pct = 0.0;
  double max_avg_pct = 15.0;
};

// Per document: 100 * (subword count - word count) / word count. Documents
// without words are skipped; a corpus without any word is an AuditError.
AuditReport audit(const std::vector<Document>& docs, const SubwordVocab& vocab,
                  AuditThresholds thresholds = {});

}  // namespace hpprop
