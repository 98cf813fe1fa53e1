#include <gtest/gtest.h>

#include <atomic>
#include <mutex>
#include <set>

#include "hpprop/fixture.hpp"
#include "hpprop/search.hpp"
#include "support.hpp"

using namespace hpprop;
namespace ts = testing_support;

namespace {

LrGridPoint lr(const char* s) { return LrGridPoint::parse(s); }

std::multiset<std::string> done_rows(const Ledger& ledger) {
  std::multiset<std::string> out;
  for (auto r : ledger.snapshot()) {
    if (r.status != TrialStatus::Done) continue;
    r.seq = 0;
    r.wall_seconds = 0;
    out.insert(r.to_json_line());
  }
  return out;
}

// Fails the first attempt of every trial key with a retryable error.
class FlakyBackend : public TrainerBackend {
 public:
  explicit FlakyBackend(TrainerBackend& inner) : inner_(inner) {}
  std::string id() const override { return inner_.id(); }
  bool deterministic() const override { return true; }
  std::vector<EpochResult> run(const Hyperparams& hp, int fold) override {
    {
      std::lock_guard lock(mutex_);
      const auto key = LrGridPoint::snap(hp.lr).to_string() + "/" + std::to_string(hp.batch_size) + "/" +
                       std::to_string(hp.epochs) + "/" + std::to_string(fold);
      if (seen_.insert(key).second) throw TrainerError(TrainerError::Kind::Remote, "flaky");
    }
    return inner_.run(hp, fold);
  }
  bool ping(int bs) override { return inner_.ping(bs); }

 private:
  TrainerBackend& inner_;
  std::mutex mutex_;
  std::set<std::string> seen_;
};

class PingOnly : public TrainerBackend {
 public:
  explicit PingOnly(int max_bs) : max_bs_(max_bs) {}
  std::string id() const override { return "ping"; }
  bool deterministic() const override { return true; }
  std::vector<EpochResult> run(const Hyperparams&, int) override { return {}; }
  bool ping(int bs) override {
    asked.push_back(bs);
    return bs <= max_bs_;
  }
  std::vector<int> asked;

 private:
  int max_bs_;
};

struct SurfaceCase {
  ts::SyntheticSurface surface{7, -60, 27, 3, 5};
  SearchConfig cfg = ts::synthetic_search_config(surface);
};

}  // namespace

TEST(Direction, Classification) {
  const SearchConfig cfg;
  const std::vector<double> falling{0.80, 0.76, 0.78};
  const std::vector<double> rising{0.70, 0.75, 0.78};
  const std::vector<double> flat{0.80, 0.81, 0.812};
  const std::vector<double> small_drop{0.80, 0.797, 0.80};
  EXPECT_EQ(classify_direction(falling, cfg), LrDirection::TooHigh);
  EXPECT_EQ(classify_direction(rising, cfg), LrDirection::TooLow);
  EXPECT_EQ(classify_direction(flat, cfg), LrDirection::InRange);
  EXPECT_EQ(classify_direction(small_drop, cfg), LrDirection::InRange);
  const std::vector<double> one{0.5};
  EXPECT_THROW(classify_direction(one, cfg), SearchError);
}

TEST(Candidates, MarginCapAndTooLowExclusion) {
  SearchConfig cfg;
  std::vector<ProbeOutcome> probes{
      {lr("5e-5"), {0.80, 0.75, 0.77}, true},
      {lr("1e-5"), {0.820, 0.818, 0.817}},
      {lr("5e-6"), {0.805, 0.816, 0.8195}},
      {lr("1e-6"), {0.70, 0.75, 0.80}},
  };
  auto pick = pick_candidates(probes, cfg);
  EXPECT_EQ(pick.candidates, (std::vector<LrGridPoint>{lr("1e-5"), lr("5e-6")}));
  EXPECT_FALSE(pick.widen);

  cfg.max_candidates = 1;
  EXPECT_EQ(pick_candidates(probes, cfg).candidates, (std::vector<LrGridPoint>{lr("1e-5")}));
}

TEST(SelectBest, FailedOnlyLedgerHasNoConclusions) {
  TrialRecord r;
  r.hp.lr = 1e-5;
  r.hp.epochs = 3;
  r.fold = kAllFolds;
  r.status = TrialStatus::Failed;
  r.reason = "timeout: x";
  const std::vector<TrialRecord> records{r};
  EXPECT_TRUE(select_best(records, 128).empty());
}

TEST(SelectBest, TiesGoToTheLowerRate) {
  std::vector<TrialRecord> records;
  for (const char* s : {"2e-5", "1e-5"}) {
    TrialRecord r;
    r.hp.lr = lr(s).value();
    r.hp.epochs = 2;
    r.fold = kAllFolds;
    r.f1 = {0.5, 0.7};
    r.valid_loss = {1, 1};
    records.push_back(r);
  }
  const auto best = select_best(records, 128);
  EXPECT_EQ(best.at(2).lr, lr("1e-5"));
  EXPECT_EQ(best.at(1).lr, lr("1e-5"));
}

TEST(ProbeBatchSize, DescendsToTheFirstAccepted) {
  PingOnly all(1 << 20);
  EXPECT_EQ(probe_batch_size(all), 512);
  PingOnly some(100);
  EXPECT_EQ(probe_batch_size(some), 64);
  EXPECT_TRUE(std::is_sorted(some.asked.rbegin(), some.asked.rend()));
  PingOnly none(0);
  EXPECT_THROW(probe_batch_size(none), TrainerError);
}

TEST(Engine, WithoutBackendOnlyReportsWhatIsNeeded) {
  Ledger ledger;
  SearchEngine engine(SearchConfig{}, ledger, nullptr, "none");
  const auto report = engine.run_session();
  EXPECT_TRUE(report.paused);
  EXPECT_EQ(report.trials_run, 0u);
  EXPECT_EQ(report.state.phase, Phase::Seed);
  ASSERT_EQ(report.state.frontier.size(), 1u);
  EXPECT_EQ(report.state.frontier[0].lr, lr("5e-5"));
  EXPECT_EQ(ledger.size(), 0u);
}

TEST(Engine, ZeroTrialBudgetRunsNothing) {
  SurfaceCase c;
  ts::SurfaceBackend backend(c.surface);
  Ledger ledger;
  SessionBudget budget;
  budget.max_trials = 0;
  SearchEngine engine(c.cfg, ledger, &backend, "s", budget);
  const auto report = engine.run_session();
  EXPECT_TRUE(report.paused);
  EXPECT_EQ(backend.runs(), 0u);
  EXPECT_EQ(ledger.size(), 0u);
}

TEST(Engine, CompletedLedgerIsMemoized) {
  SurfaceCase c;
  ts::SurfaceBackend backend(c.surface);
  Ledger ledger;
  const auto first = SearchEngine(c.cfg, ledger, &backend, "s").run_session();
  ASSERT_EQ(first.state.phase, Phase::Done);
  const auto runs = backend.runs();
  const auto size = ledger.size();
  const auto again = SearchEngine(c.cfg, ledger, &backend, "s").run_session();
  EXPECT_EQ(backend.runs(), runs);
  EXPECT_EQ(ledger.size(), size);
  EXPECT_EQ(again.trials_run, 0u);
  EXPECT_EQ(again.state.conclusions.size(), first.state.conclusions.size());
  EXPECT_EQ(ts::duplicate_done_keys(ledger.snapshot()), 0u);
  // A ledger written under another backend id is not reused.
  Ledger other;
  for (const auto& r : ledger.snapshot()) other.append(r);
  SessionBudget none;
  none.max_trials = 0;
  const auto foreign = SearchEngine(c.cfg, other, &backend, "different", none).run_session();
  EXPECT_EQ(foreign.state.phase, Phase::Seed);
}

TEST(Engine, SmallSessionsEqualOneSession) {
  SurfaceCase c;
  ts::SurfaceBackend backend(c.surface);
  Ledger straight;
  const auto whole = SearchEngine(c.cfg, straight, &backend, "s").run_session();

  Ledger pieces;
  SessionBudget budget;
  budget.max_trials = 7;
  SessionReport last;
  int sessions = 0;
  do {
    last = SearchEngine(c.cfg, pieces, &backend, "s", budget).run_session();
    ASSERT_LT(++sessions, 500);
  } while (last.paused);
  EXPECT_GT(sessions, 3);
  EXPECT_EQ(last.state.phase, Phase::Done);
  EXPECT_EQ(done_rows(pieces), done_rows(straight));
  ASSERT_EQ(last.state.conclusions.size(), whole.state.conclusions.size());
  for (const auto& [bs, by_epoch] : whole.state.conclusions) {
    for (const auto& [epoch, best] : by_epoch) {
      EXPECT_EQ(last.state.conclusions.at(bs).at(epoch).lr, best.lr);
    }
  }
  const auto rebuilt = reconstruct_state(pieces, c.cfg, "s");
  EXPECT_EQ(rebuilt.phase, Phase::Done);
}

TEST(Engine, WorkersDoNotChangeTheOutcome) {
  SurfaceCase c;
  ts::SurfaceBackend backend(c.surface);
  Ledger one, four;
  SearchEngine(c.cfg, one, &backend, "s").run_session();
  const auto report = SearchEngine(c.cfg, four, &backend, "s", {}, 4).run_session();
  EXPECT_EQ(report.state.phase, Phase::Done);
  EXPECT_EQ(done_rows(one), done_rows(four));
}

TEST(Engine, RetryableFailuresAreRetriedOnce) {
  SurfaceCase c;
  ts::SurfaceBackend inner(c.surface);
  FlakyBackend flaky(inner);
  Ledger clean, retried;
  SearchEngine(c.cfg, clean, &inner, "s").run_session();
  const auto report = SearchEngine(c.cfg, retried, &flaky, "s").run_session();
  EXPECT_EQ(report.state.phase, Phase::Done);
  EXPECT_EQ(done_rows(clean), done_rows(retried));
  std::size_t failed = 0;
  for (const auto& r : retried.snapshot()) failed += r.status == TrialStatus::Failed;
  EXPECT_GT(failed, 0u);
}

TEST(Engine, RecordedFixtureSeedIsTooHigh) {
  FixtureBackend backend(ts::recorded_fixture(), "recorded");
  Ledger ledger;
  SearchEngine engine(SearchConfig{}, ledger, &backend, backend.id());
  const auto seed = engine.seed_trial();
  ASSERT_TRUE(seed);
  EXPECT_EQ(classify_direction(*seed, SearchConfig{}), LrDirection::TooHigh);
  const auto probes = engine.decade_probe(LrDirection::TooHigh, 0);
  std::vector<LrGridPoint> points;
  for (const auto& p : probes) {
    if (!p.is_seed) points.push_back(p.lr);
  }
  EXPECT_EQ(points, (std::vector<LrGridPoint>{lr("1e-5"), lr("5e-6"), lr("1e-6")}));
}
