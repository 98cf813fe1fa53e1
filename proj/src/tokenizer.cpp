#include "hpprop/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "hpprop/unicode.hpp"
#include "json.hpp"

namespace hpprop {

SubwordVocab::SubwordVocab(std::vector<std::string> entries, std::string continuation_prefix,
                           std::string unknown_token)
    : entries_(std::move(entries)),
      continuation_prefix_(std::move(continuation_prefix)),
      unknown_token_(std::move(unknown_token)) {
  if (entries_.empty()) throw VocabError("vocabulary is empty");
  for (const auto& entry : entries_) {
    if (!lookup_.insert(entry).second) throw VocabError("duplicate vocabulary entry '" + entry + "'");
  }
  if (!lookup_.contains(unknown_token_)) {
    throw VocabError("vocabulary lacks the unknown token '" + unknown_token_ + "'");
  }
}

SubwordVocab SubwordVocab::parse(std::string_view content) {
  std::vector<std::string> entries;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) entries.emplace_back(line);
    pos = end + 1;
  }
  return SubwordVocab(std::move(entries));
}

SubwordVocab SubwordVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VocabError("cannot open vocabulary " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const VocabError& e) {
    throw VocabError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> word_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  std::size_t run_start = 0;
  enum class Run { None, Punct, Word } run = Run::None;
  auto flush = [&](std::size_t end) {
    if (run != Run::None && end > run_start) tokens.emplace_back(text.substr(run_start, end - run_start));
    run = Run::None;
  };
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char32_t c = unicode::next_code_point(text, pos);
    if (unicode::is_whitespace(c)) {
      flush(start);
      continue;
    }
    const Run kind = unicode::is_punctuation(c) ? Run::Punct : Run::Word;
    if (kind != run) {
      flush(start);
      run = kind;
      run_start = start;
    }
  }
  flush(text.size());
  return tokens;
}

std::vector<std::string> subword_tokenize_word(std::string_view word, const SubwordVocab& vocab) {
  // Code point boundaries; pieces may only start and end on these.
  std::vector<std::size_t> bounds{0};
  for (std::size_t pos = 0; pos < word.size();) {
    unicode::next_code_point(word, pos);
    bounds.push_back(pos);
  }
  const std::size_t n_chars = bounds.size() - 1;
  if (n_chars == 0) return {};
  if (n_chars > vocab.max_word_chars) return {vocab.unknown_token()};

  std::vector<std::string> pieces;
  std::size_t start = 0;
  std::string candidate;
  while (start < n_chars) {
    std::size_t end = n_chars;
    bool found = false;
    for (; end > start; --end) {
      candidate.clear();
      if (start > 0) candidate = vocab.continuation_prefix();
      candidate.append(word.substr(bounds[start], bounds[end] - bounds[start]));
      if (vocab.contains(candidate)) {
        found = true;
        break;
      }
    }
    if (!found) return {vocab.unknown_token()};
    pieces.push_back(candidate);
    start = end;
  }
  return pieces;
}

std::vector<std::string> subword_tokenize(const std::vector<std::string>& words,
                                          const SubwordVocab& vocab) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& word : words) {
    auto pieces = subword_tokenize_word(word, vocab);
    out.insert(out.end(), std::make_move_iterator(pieces.begin()),
               std::make_move_iterator(pieces.end()));
  }
  return out;
}

AuditReport audit(const std::vector<Document>& docs, const SubwordVocab& vocab,
                  AuditThresholds thresholds) {
  AuditReport report;
  double sum = 0.0;
  report.min_pct = std::numeric_limits<double>::infinity();
  report.max_pct = -std::numeric_limits<double>::infinity();
  for (const auto& doc : docs) {
    const auto words = word_tokenize(doc.text);
    if (words.empty()) continue;
    const auto subwords = subword_tokenize(words, vocab);
    const double n_words = static_cast<double>(words.size());
    const double ratio = 100.0 * (static_cast<double>(subwords.size()) - n_words) / n_words;
    report.ratios_pct.push_back(ratio);
    report.doc_ids.push_back(doc.id);
    sum += ratio;
    report.min_pct = std::min(report.min_pct, ratio);
    report.max_pct = std::max(report.max_pct, ratio);
  }
  if (report.ratios_pct.empty()) throw AuditError("degenerate corpus: no document contains a word");
  report.avg_pct = sum / static_cast<double>(report.ratios_pct.size());
  report.recommended =
      report.min_pct <= thresholds.max_min_pct && report.avg_pct <= thresholds.max_avg_pct;
  return report;
}

std::string AuditReport::to_json() const {
  const nlohmann::json j = {{"max_pct", max_pct},
                            {"min_pct", min_pct},
                            {"avg_pct", avg_pct},
                            {"recommended", recommended},
                            {"n_docs", ratios_pct.size()}};
  return j.dump();
}

std::string AuditReport::per_document_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "id,additional_length_pct\n";
  for (std::size_t i = 0; i < ratios_pct.size(); ++i) {
    const auto& id = doc_ids[i];
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (const char c : id) {
        if (c == '"') quoted.push_back('"');
        quoted.push_back(c);
      }
      out << quoted << '"';
    } else {
      out << id;
    }
    out << ',' << ratios_pct[i] << '\n';
  }
  return out.str();
}

}  // namespace hpprop
