#include "hpprop/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "hpprop/rng.hpp"
#include "json.hpp"

namespace hpprop {

using nlohmann::json;

std::size_t FoldedCorpus::size() const {
  std::size_t n = 0;
  for (const auto& fold : folds) n += fold.size();
  return n;
}

void ConfusionCounts::record(const std::string& truth, const std::string& predicted) {
  if (truth == predicted) {
    ++classes[truth].tp;
    return;
  }
  ++classes[truth].fn;
  ++classes[predicted].fp;
}

std::string clean_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    bool is_space = c == ' ' || c == '\n' || c == '\r' || c == '\t';
    std::size_t width = 1;
    if (!is_space && static_cast<unsigned char>(c) == 0xC2 && i + 1 < text.size() &&
        static_cast<unsigned char>(text[i + 1]) == 0xA0) {
      is_space = true;
      width = 2;
    }
    if (is_space) {
      pending_space = !out.empty();
      i += width - 1;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c);
  }
  return out;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

template <typename Fn>
void for_each_line(std::string_view content, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    fn(line, line_no);
    pos = end + 1;
  }
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t'; });
}

Document parse_document(const json& j, std::size_t line_no) {
  auto field = [&](const char* name) -> std::string {
    if (!j.contains(name) || !j[name].is_string()) {
      throw CorpusError("line " + std::to_string(line_no) + ": missing string field '" + name +
                        "'");
    }
    return j[name].get<std::string>();
  };
  Document doc{field("id"), field("label"), field("text")};
  if (doc.id.empty()) throw CorpusError("line " + std::to_string(line_no) + ": empty id");
  return doc;
}

}  // namespace

FoldedCorpus parse_corpus_jsonl(std::string_view content, int fold_count) {
  if (fold_count < 2) throw CorpusError("fold count must be at least 2");
  FoldedCorpus corpus;
  corpus.folds.resize(static_cast<std::size_t>(fold_count));
  std::unordered_set<std::string> ids;
  for_each_line(content, [&](std::string_view line, std::size_t line_no) {
    if (is_blank(line)) return;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw CorpusError("line " + std::to_string(line_no) + ": not an object");
    Document doc = parse_document(j, line_no);
    if (!j.contains("fold") || !j["fold"].is_number_integer()) {
      throw CorpusError("line " + std::to_string(line_no) + ": missing integer field 'fold'");
    }
    const auto fold = j["fold"].get<long long>();
    if (fold < 0 || fold >= fold_count) {
      throw CorpusError("line " + std::to_string(line_no) + ": fold " + std::to_string(fold) +
                        " out of range");
    }
    if (!ids.insert(doc.id).second) {
      throw CorpusError("line " + std::to_string(line_no) + ": duplicate id '" + doc.id + "'");
    }
    corpus.labels.insert(doc.label);
    corpus.folds[static_cast<std::size_t>(fold)].push_back(std::move(doc));
  });
  return corpus;
}

FoldedCorpus load_corpus_jsonl(const std::filesystem::path& path, int fold_count) {
  try {
    return parse_corpus_jsonl(read_file(path), fold_count);
  } catch (const CorpusError& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
}

std::string to_jsonl_line(const Document& doc, int fold) {
  json j = {{"id", doc.id}, {"label", doc.label}, {"text", doc.text}};
  if (fold >= 0) j["fold"] = fold;
  return j.dump();
}

void write_documents_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs,
                           int fold) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& doc : docs) out << to_jsonl_line(doc, fold) << '\n';
  if (!out) throw CorpusError("write failed: " + path.string());
}

std::vector<Document> load_documents_jsonl(const std::filesystem::path& path) {
  std::vector<Document> docs;
  const std::string content = read_file(path);
  for_each_line(content, [&](std::string_view line, std::size_t line_no) {
    if (is_blank(line)) return;
    try {
      docs.push_back(parse_document(json::parse(line), line_no));
    } catch (const json::exception& e) {
      throw CorpusError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  });
  return docs;
}

SplitView make_split(const FoldedCorpus& corpus, int test_fold_index, std::uint64_t seed,
                     SplitOptions options) {
  if (test_fold_index < 0 || static_cast<std::size_t>(test_fold_index) >= corpus.folds.size()) {
    throw CorpusError("fold index " + std::to_string(test_fold_index) + " out of range [0, " +
                      std::to_string(corpus.folds.size()) + ")");
  }
  SplitView view;
  view.test_fold_index = test_fold_index;
  view.seed = seed;
  view.test = corpus.folds[static_cast<std::size_t>(test_fold_index)];

  std::vector<const Document*> rest;
  for (std::size_t f = 0; f < corpus.folds.size(); ++f) {
    if (static_cast<int>(f) == test_fold_index) continue;
    for (const auto& doc : corpus.folds[f]) rest.push_back(&doc);
  }
  const auto n_valid = static_cast<std::size_t>(
      std::llround(corpus.valid_fraction * static_cast<double>(rest.size())));

  std::vector<char> in_valid(rest.size(), 0);
  Rng rng(seed);
  if (!options.stratified) {
    std::vector<std::size_t> order(rest.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
    for (std::size_t i = 0; i < n_valid; ++i) in_valid[order[i]] = 1;
  } else {
    // Largest-remainder allocation keeps the total equal to n_valid.
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < rest.size(); ++i) by_label[rest[i]->label].push_back(i);
    struct Share {
      std::string label;
      std::size_t take;
      double remainder;
    };
    std::vector<Share> shares;
    std::size_t allocated = 0;
    for (const auto& [label, idx] : by_label) {
      const double exact = static_cast<double>(n_valid) * static_cast<double>(idx.size()) /
                           static_cast<double>(rest.size());
      const auto take = static_cast<std::size_t>(std::floor(exact));
      shares.push_back({label, take, exact - static_cast<double>(take)});
      allocated += take;
    }
    std::stable_sort(shares.begin(), shares.end(),
                     [](const Share& a, const Share& b) { return a.remainder > b.remainder; });
    for (std::size_t i = 0; allocated < n_valid && i < shares.size(); ++i, ++allocated) {
      ++shares[i].take;
    }
    for (const auto& share : shares) {
      auto idx = by_label[share.label];
      rng.shuffle(std::span(idx));
      for (std::size_t i = 0; i < share.take && i < idx.size(); ++i) in_valid[idx[i]] = 1;
    }
  }
  for (std::size_t i = 0; i < rest.size(); ++i) {
    (in_valid[i] ? view.valid : view.train).push_back(*rest[i]);
  }
  return view;
}

std::map<std::string, std::size_t> class_counts(const std::vector<Document>& docs) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : docs) ++counts[doc.label];
  return counts;
}

std::vector<Document> upsample_balance(const std::vector<Document>& train, std::uint64_t seed) {
  if (train.empty()) throw CorpusError("cannot upsample an empty corpus");
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < train.size(); ++i) by_label[train[i].label].push_back(i);
  std::size_t target = 0;
  for (const auto& [label, idx] : by_label) target = std::max(target, idx.size());

  Rng rng(seed);
  std::vector<std::size_t> picks;
  picks.reserve(target * by_label.size());
  for (const auto& [label, idx] : by_label) {
    const std::size_t passes = target / idx.size();
    const std::size_t remainder = target % idx.size();
    for (std::size_t p = 0; p < passes; ++p) picks.insert(picks.end(), idx.begin(), idx.end());
    if (remainder > 0) {
      auto order = idx;
      rng.shuffle(std::span(order));
      picks.insert(picks.end(), order.begin(), order.begin() + static_cast<long>(remainder));
    }
  }
  rng.shuffle(std::span(picks));
  std::vector<Document> out;
  out.reserve(picks.size());
  for (const auto i : picks) out.push_back(train[i]);
  return out;
}

double macro_f1(const ConfusionCounts& counts) {
  if (counts.classes.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [label, c] : counts.classes) {
    const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp + c.fn);
    if (denom > 0) sum += 2.0 * static_cast<double>(c.tp) / denom;
  }
  return sum / static_cast<double>(counts.classes.size());
}

double micro_f1(const ConfusionCounts& counts) {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (const auto& [label, c] : counts.classes) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
  return denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
}

}  // namespace hpprop
