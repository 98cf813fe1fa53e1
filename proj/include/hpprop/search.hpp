#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "hpprop/ledger.hpp"
#include "hpprop/lr_grid.hpp"
#include "hpprop/trainer.hpp"

namespace hpprop {

class SearchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SearchConfig {
  double lr0 = 5e-5;
  int max_epochs = 3;
  // Step-2 probes sit at lr0 * m (downward) or lr0 / m (upward).
  std::vector<double> probe_multipliers{0.2, 0.1, 0.02};
  double drop_threshold = 0.005;    // any epoch-to-epoch F1 drop above this: too high
  double rise_threshold = 0.010;    // final-epoch gain above this: too low
  double candidate_margin = 0.005;  // probe peaks this close to the best are kept
  int max_candidates = 2;
  int max_widen_steps = 2;

  int initial_batch_size = 128;
  int stop_batch_size = 16;  // batch-size descent ends when halving reaches this
  int fold_count = 5;
  int seed_fold = 0;
  int max_attempts = 2;       // per trial key, counting retryable failures
  int max_failure_skips = 2;  // consecutive unusable grid points a walk steps over
  double min_lr = 1e-9;
  double max_lr = 1.0;

  // Fixed trial context; part of every trial key.
  std::uint64_t seed = 0;
  TokenBudget budget{128};
  Strategy strategy = Strategy::A1;

  void validate() const;
  bool in_window(LrGridPoint lr) const;
  Hyperparams hyperparams(LrGridPoint lr, int batch_size, int epochs) const;
};

struct SessionBudget {
  std::optional<std::size_t> max_trials;
  std::optional<std::chrono::duration<double>> max_wall;
};

enum class LrDirection { TooHigh, TooLow, InRange };
std::string to_string(LrDirection d);

// TooHigh when any epoch-to-epoch drop exceeds drop_threshold; else TooLow
// when F1 rises strictly and the last epoch gains more than rise_threshold;
// otherwise InRange. Needs at least two epochs.
LrDirection classify_direction(std::span<const double> f1, const SearchConfig& cfg);
LrDirection classify_direction(const TrialRecord& trial, const SearchConfig& cfg);

struct ProbeOutcome {
  LrGridPoint lr;
  std::vector<double> f1;  // single-fold per-epoch scores
  bool is_seed = false;
};

struct CandidatePick {
  std::vector<LrGridPoint> candidates;  // by descending peak, lower LR first on ties
  bool widen = false;                   // every probe still sits on the seed's side
};

// Probes whose peak lies within candidate_margin of the best peak, TooLow
// probes excluded, at most max_candidates.
CandidatePick pick_candidates(std::span<const ProbeOutcome> outcomes, const SearchConfig& cfg);

struct Conclusion {
  LrGridPoint lr;
  double f1 = 0.0;
};
using EpochConclusions = std::map<int, Conclusion>;

// Records a search session owns: same strategy, budget, seed and backend.
struct TrialContext {
  Strategy strategy = Strategy::A1;
  std::size_t max_tokens = 128;
  std::uint64_t seed = 0;
  std::string backend_id;

  bool matches(const TrialRecord& r) const;
};

// Per epoch count, the grid point with the highest all-fold average at that
// epoch among DONE average rows for `batch_size`. Ties go to the lower LR.
EpochConclusions select_best(std::span<const TrialRecord> records, int batch_size,
                             const TrialContext* context = nullptr);

enum class Phase { Seed, Direction, Range, Propagate, BsDescent, Done };
std::string to_string(Phase p);

struct FrontierEntry {
  LrGridPoint lr;
  int batch_size = 0;
  int epochs = 0;
  int fold = 0;
  std::string tag;  // seed, probe, range, lower, higher
};

struct SearchState {
  Phase phase = Phase::Seed;
  int epoch_target = 0;  // Propagate / BsDescent
  int current_bs = 0;
  std::optional<LrDirection> seed_direction;
  std::vector<LrGridPoint> candidates;
  std::vector<FrontierEntry> frontier;  // trials the search waits for
  std::map<int, EpochConclusions> conclusions;  // batch size -> epoch -> best
  std::string blocked;  // why the search cannot continue, if it cannot

  std::string phase_label() const;
};

struct PropagationResult {
  std::optional<Conclusion> best;
  std::vector<Conclusion> visited;           // in visiting order
  std::vector<LrGridPoint> newly_evaluated;  // averages that did not exist before
};

struct SessionReport {
  SearchState state;
  std::size_t trials_run = 0;
  bool paused = false;
};

// Thrown by engine steps when a needed trial cannot run in this session
// (no backend, or the session budget is spent).
class SessionPaused : public std::exception {
 public:
  const char* what() const noexcept override { return "session paused"; }
};

// Largest batch size the backend accepts, probing in descending order.
int probe_batch_size(TrainerBackend& backend,
                     std::span<const int> candidates = std::span<const int>());

// The propagation search as a deterministic procedure over the ledger. Every
// trial result is looked up in the ledger first and only run when missing,
// so rerunning the procedure against a ledger replays earlier sessions and
// resumes at the first missing trial. Without a backend nothing is trained
// and the engine only reconstructs the state.
class SearchEngine {
 public:
  SearchEngine(SearchConfig cfg, Ledger& ledger, TrainerBackend* backend, std::string backend_id,
               SessionBudget budget = {}, int workers = 1);

  // Runs until DONE, blocked, or the session budget is spent.
  SessionReport run_session();

  // Individual steps; each may throw SessionPaused.
  std::optional<std::vector<double>> seed_trial();
  std::vector<ProbeOutcome> decade_probe(LrDirection seed_direction, int widen_steps);
  std::optional<std::vector<double>> evaluate_all_folds(LrGridPoint lr, int batch_size, int epochs);
  PropagationResult propagate(int epoch, LrGridPoint start, int batch_size, bool open_lower = true,
                              bool open_higher = true);
  EpochConclusions bs_descent(int from_batch_size);

  const SearchState& state() const { return state_; }
  std::size_t trials_run() const { return trials_run_; }
  const TrialContext& context() const { return context_; }

 private:
  enum class Resolution { Ready, Exhausted, NeedsRun };
  struct Lookup {
    Resolution resolution = Resolution::NeedsRun;
    std::vector<double> f1;
    std::vector<double> valid_loss;
    double wall_seconds = 0.0;
    std::string reason;
    std::uint64_t seq = 0;
  };
  struct TrialSpec {
    LrGridPoint lr;
    int batch_size;
    int epochs;
    int fold;
    std::string tag;
  };

  void drive();
  Lookup resolve(LrGridPoint lr, int batch_size, int fold, int epochs) const;
  std::optional<std::vector<double>> known_average(LrGridPoint lr, int batch_size, int epochs);
  // An average this run of the procedure has already looked at.
  std::optional<double> seen_average(LrGridPoint lr, int batch_size, int epoch) const;
  void consume(const Lookup& found);
  void ensure(const std::vector<TrialSpec>& specs);
  void run_trials(const std::vector<TrialSpec>& specs);
  void run_one(const TrialSpec& spec);
  void record(TrialRecord r);
  // Records the procedure has consumed so far. Decisions read only these, so
  // a replay over a longer ledger takes the same path as the original run.
  std::vector<TrialRecord> records() const;
  std::optional<std::vector<double>> single_fold(LrGridPoint lr, int batch_size, int epochs,
                                                 int fold, const std::string& tag);
  std::vector<LrGridPoint> probe_points(LrDirection seed_direction, int widen_steps) const;
  std::optional<double> average_at(LrGridPoint lr, int batch_size, int epoch,
                                   const std::string& tag, bool& fresh);

  SearchConfig cfg_;
  Ledger& ledger_;
  TrainerBackend* backend_;
  TrialContext context_;
  SessionBudget budget_;
  int workers_;
  std::chrono::steady_clock::time_point started_;

  mutable std::mutex index_mutex_;
  std::map<std::tuple<long, int, int>, std::vector<TrialRecord>> index_;
  std::set<std::uint64_t> consumed_;

  SearchState state_;
  std::size_t trials_run_ = 0;
};

// SearchState implied by a ledger, without running anything.
SearchState reconstruct_state(Ledger& ledger, const SearchConfig& cfg, const std::string& backend_id);

}  // namespace hpprop
