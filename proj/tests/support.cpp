#include "support.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "hpprop/rng.hpp"

namespace testing_support {

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("hpprop-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path recorded_fixture_path() { return fs::path(HPPROP_DATA_DIR) / "recorded_trials.jsonl"; }

hpprop::FixtureTable recorded_fixture() { return hpprop::FixtureTable::load(recorded_fixture_path()); }

namespace {

const std::vector<std::pair<std::string, std::vector<std::string>>> kClasses = {
    {"ekonomi", {"saham", "rupiah", "inflasi", "investor", "bursa", "ekspor"}},
    {"olahraga", {"gol", "pemain", "pelatih", "liga", "stadion", "juara"}},
    {"teknologi", {"aplikasi", "ponsel", "internet", "perangkat", "digital", "server"}},
    {"hiburan", {"film", "aktris", "konser", "penyanyi", "album", "sinetron"}},
    {"politik", {"partai", "menteri", "pemilu", "parlemen", "koalisi", "kampanye"}},
    {"kesehatan", {"dokter", "pasien", "vaksin", "klinik", "virus", "obat"}},
};
const double kClassWeights[] = {0.30, 0.20, 0.15, 0.15, 0.12, 0.08};
const std::vector<std::string> kFillers = {"hari",  "tahun",  "kota",   "orang", "baru",
                                           "besar", "menurut", "kata",  "jakarta", "pekan",
                                           "lalu",  "masyarakat", "pihak", "bisa", "sejumlah"};
const std::vector<std::string> kStopwords = {"yang", "di",  "dan",  "ke",  "dari", "untuk",
                                             "dengan", "itu", "ini", "pada", "akan", "juga"};

template <typename T>
const T& pick(hpprop::Rng& rng, const std::vector<T>& items) {
  return items[rng.below(items.size())];
}

}  // namespace

KeywordCorpus make_keyword_corpus(std::size_t n_docs, int folds, std::uint64_t seed) {
  hpprop::Rng rng(seed);
  KeywordCorpus out;
  out.corpus.folds.resize(static_cast<std::size_t>(folds));
  out.stopwords = kStopwords;
  std::set<std::string> vocab{"[UNK]", "##nya", ",", ".", "-"};
  for (const auto& [label, words] : kClasses) {
    out.corpus.labels.insert(label);
    vocab.insert(words.begin(), words.end());
  }
  vocab.insert(kFillers.begin(), kFillers.end());
  vocab.insert(kStopwords.begin(), kStopwords.end());
  out.vocab_entries.assign(vocab.begin(), vocab.end());

  for (std::size_t i = 0; i < n_docs; ++i) {
    double u = rng.uniform();
    std::size_t c = 0;
    while (c + 1 < kClasses.size() && u >= kClassWeights[c]) u -= kClassWeights[c++];
    const auto& [label, keywords] = kClasses[c];
    std::vector<std::string> words;
    const std::size_t length = 20 + rng.below(21);
    for (std::size_t w = 0; w < length; ++w) {
      const auto r = rng.below(10);
      if (r < 3) {
        std::string k = pick(rng, keywords);
        if (rng.below(5) == 0) k += "nya";
        words.push_back(k);
      } else if (r < 6) {
        words.push_back(pick(rng, kStopwords));
      } else {
        words.push_back(pick(rng, kFillers));
      }
      if (rng.below(8) == 0) words.back() += ",";
    }
    if (rng.below(4) == 0) words.push_back(pick(rng, kClasses[rng.below(kClasses.size())].second));
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : (rng.below(6) == 0 ? "\n" : " ")) + w;
    text += ".";
    hpprop::Document doc{"doc-" + std::to_string(i), label, text};
    const int fold = static_cast<int>(i % static_cast<std::size_t>(folds));
    out.jsonl += hpprop::to_jsonl_line(doc, fold) + "\n";
    out.corpus.folds[static_cast<std::size_t>(fold)].push_back(std::move(doc));
  }
  return out;
}

SyntheticSurface::SyntheticSurface(std::uint64_t seed, long first_index, int points, int epochs,
                                   int folds)
    : first_(first_index), points_(points), epochs_(epochs), folds_(folds) {
  hpprop::Rng rng(seed);
  peak_.resize(static_cast<std::size_t>(epochs));
  height_.resize(static_cast<std::size_t>(epochs));
  slope_.resize(static_cast<std::size_t>(epochs));
  // Fewer epochs tend to want a higher learning rate: the peak of epoch e
  // sits at or above the peak of epoch e + 1.
  long p = static_cast<long>(rng.below(static_cast<std::uint64_t>(points)));
  for (int e = epochs - 1; e >= 0; --e) {
    peak_[static_cast<std::size_t>(e)] = p;
    height_[static_cast<std::size_t>(e)] = 0.78 + 0.06 * rng.uniform();
    slope_[static_cast<std::size_t>(e)] = 0.003 + 0.007 * rng.uniform();
    p = std::min<long>(points - 1, p + static_cast<long>(rng.below(4)));
  }
  offsets_.assign(static_cast<std::size_t>(folds), 0.0);
  for (int f = 0; f + 1 < folds; f += 2) {
    const double o = 0.004 * (rng.uniform() - 0.5);
    offsets_[static_cast<std::size_t>(f)] = o;
    offsets_[static_cast<std::size_t>(f + 1)] = -o;
  }
}

double SyntheticSurface::average(long lr_index, int epoch) const {
  const auto e = static_cast<std::size_t>(epoch - 1);
  const double d = std::abs(static_cast<double>(lr_index - first_ - peak_[e]));
  return height_[e] - slope_[e] * d - 0.0002 * d * d;
}

double SyntheticSurface::fold_value(long lr_index, int epoch, int fold) const {
  return average(lr_index, epoch) + offsets_[static_cast<std::size_t>(fold)];
}

long SyntheticSurface::argmax(int epoch) const {
  return first_ + peak_[static_cast<std::size_t>(epoch - 1)];
}

std::vector<hpprop::EpochResult> SurfaceBackend::run(const hpprop::Hyperparams& hp, int fold) {
  const long x = hpprop::LrGridPoint::snap(hp.lr).index();
  if (x < surface_.first_index() || x >= surface_.first_index() + surface_.points()) {
    throw hpprop::TrainerError(hpprop::TrainerError::Kind::Data, "learning rate outside the surface");
  }
  ++runs_;
  epochs_ += static_cast<std::size_t>(hp.epochs);
  std::vector<hpprop::EpochResult> out;
  for (int e = 1; e <= hp.epochs; ++e) out.push_back({e, surface_.fold_value(x, e, fold), 1.0 / e});
  return out;
}

std::vector<hpprop::EpochResult> CrashingBackend::run(const hpprop::Hyperparams& hp, int fold) {
  if (completed_ >= allowed_) throw InjectedCrash();
  auto out = inner_.run(hp, fold);
  ++completed_;
  return out;
}

hpprop::SearchConfig synthetic_search_config(const SyntheticSurface& surface) {
  hpprop::SearchConfig cfg;
  cfg.min_lr = hpprop::LrGridPoint::from_index(surface.first_index()).value();
  cfg.max_lr = hpprop::LrGridPoint::from_index(surface.first_index() + surface.points() - 1).value();
  cfg.stop_batch_size = cfg.initial_batch_size / 2;  // a single batch size
  return cfg;
}

CliResult run_cli(const std::string& args) {
  const std::string command = std::string("'") + HPPROP_CLI + "' " + args + " 2>/dev/null";
  FILE* pipe = ::popen(command.c_str(), "r");
  if (pipe == nullptr) throw std::runtime_error("popen failed");
  CliResult result;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) result.out.append(buf, n);
  const int status = ::pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::size_t duplicate_done_keys(const std::vector<hpprop::TrialRecord>& records) {
  std::map<std::tuple<long, int, int, int, std::string>, int> seen;
  std::size_t duplicates = 0;
  for (const auto& r : records) {
    if (r.status != hpprop::TrialStatus::Done) continue;
    const auto key = std::make_tuple(r.lr_point().index(), r.hp.batch_size, r.hp.epochs, r.fold,
                                     r.backend_id);
    if (++seen[key] == 2) ++duplicates;
  }
  return duplicates;
}

}  // namespace testing_support
