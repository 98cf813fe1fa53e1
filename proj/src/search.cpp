#include "hpprop/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

namespace hpprop {

namespace {

constexpr double kTieTolerance = 1e-12;

double peak(const std::vector<double>& f1) { return *std::max_element(f1.begin(), f1.end()); }

}  // namespace

void SearchConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (max_epochs < 2) throw ConfigError("max_epochs must be at least 2 to read an LR direction");
  if (probe_multipliers.empty()) throw ConfigError("at least one probe multiplier is required");
  for (const double m : probe_multipliers) {
    if (!(m > 0.0 && m < 1.0)) throw ConfigError("probe multipliers must lie in (0, 1)");
  }
  if (drop_threshold < 0 || rise_threshold < 0 || candidate_margin < 0) {
    throw ConfigError("search thresholds must be non-negative");
  }
  if (max_candidates < 1) throw ConfigError("max_candidates must be at least 1");
  if (initial_batch_size < 1) throw ConfigError("initial batch size must be positive");
  if (fold_count < 1) throw ConfigError("fold count must be positive");
  if (seed_fold < 0 || seed_fold >= fold_count) throw ConfigError("seed fold out of range");
  if (max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
  if (!(min_lr > 0.0 && min_lr < max_lr)) throw ConfigError("invalid learning-rate window");
  if (!in_window(LrGridPoint::snap(lr0))) throw ConfigError("lr0 lies outside the learning-rate window");
}

bool SearchConfig::in_window(LrGridPoint lr) const {
  const double v = lr.value();
  return v >= min_lr * (1 - 1e-12) && v <= max_lr * (1 + 1e-12);
}

Hyperparams SearchConfig::hyperparams(LrGridPoint lr, int batch_size, int epochs) const {
  Hyperparams hp;
  hp.lr = lr.value();
  hp.batch_size = batch_size;
  hp.epochs = epochs;
  hp.seed = seed;
  hp.budget = budget;
  hp.strategy = strategy;
  return hp;
}

std::string to_string(LrDirection d) {
  switch (d) {
    case LrDirection::TooHigh: return "TOO_HIGH";
    case LrDirection::TooLow: return "TOO_LOW";
    case LrDirection::InRange: return "IN_RANGE";
  }
  return "?";
}

LrDirection classify_direction(std::span<const double> f1, const SearchConfig& cfg) {
  if (f1.size() < 2) throw SearchError("classifying an LR direction needs at least two epochs");
  bool increasing = true;
  for (std::size_t i = 1; i < f1.size(); ++i) {
    const double delta = f1[i] - f1[i - 1];
    if (-delta > cfg.drop_threshold) return LrDirection::TooHigh;
    if (!(delta > 0.0)) increasing = false;
  }
  const double final_gain = f1[f1.size() - 1] - f1[f1.size() - 2];
  if (increasing && final_gain > cfg.rise_threshold) return LrDirection::TooLow;
  return LrDirection::InRange;
}

LrDirection classify_direction(const TrialRecord& trial, const SearchConfig& cfg) {
  if (trial.status != TrialStatus::Done) throw SearchError("trial is not DONE");
  return classify_direction(trial.f1, cfg);
}

CandidatePick pick_candidates(std::span<const ProbeOutcome> outcomes, const SearchConfig& cfg) {
  CandidatePick pick;
  if (outcomes.empty()) return pick;
  struct Scored {
    LrGridPoint lr;
    double peak;
    LrDirection direction;
    bool is_seed;
  };
  std::vector<Scored> scored;
  for (const auto& o : outcomes) {
    scored.push_back({o.lr, peak(o.f1), classify_direction(o.f1, cfg), o.is_seed});
  }

  std::optional<LrDirection> seed_direction;
  bool any_probe = false;
  bool probes_on_seed_side = true;
  for (const auto& s : scored) {
    if (s.is_seed) seed_direction = s.direction;
  }
  for (const auto& s : scored) {
    if (s.is_seed) continue;
    any_probe = true;
    if (!seed_direction || s.direction != *seed_direction) probes_on_seed_side = false;
  }
  pick.widen = seed_direction && *seed_direction != LrDirection::InRange && any_probe &&
               probes_on_seed_side;

  std::vector<Scored> eligible;
  for (const auto& s : scored) {
    if (s.direction != LrDirection::TooLow) eligible.push_back(s);
  }
  if (eligible.empty()) eligible = scored;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& s : eligible) best = std::max(best, s.peak);
  std::vector<Scored> kept;
  for (const auto& s : eligible) {
    if (s.peak >= best - cfg.candidate_margin - kTieTolerance) kept.push_back(s);
  }
  std::sort(kept.begin(), kept.end(), [](const Scored& a, const Scored& b) {
    if (std::abs(a.peak - b.peak) > kTieTolerance) return a.peak > b.peak;
    return a.lr < b.lr;
  });
  for (const auto& s : kept) {
    if (static_cast<int>(pick.candidates.size()) == cfg.max_candidates) break;
    if (std::find(pick.candidates.begin(), pick.candidates.end(), s.lr) == pick.candidates.end()) {
      pick.candidates.push_back(s.lr);
    }
  }
  return pick;
}

bool TrialContext::matches(const TrialRecord& r) const {
  return r.hp.strategy == strategy && r.hp.budget.max_tokens == max_tokens && r.hp.seed == seed &&
         r.backend_id == backend_id;
}

EpochConclusions select_best(std::span<const TrialRecord> records, int batch_size,
                             const TrialContext* context) {
  // First DONE average row covering each (lr, epoch), in ledger order.
  std::map<std::pair<long, int>, double> values;
  for (const auto& r : records) {
    if (r.status != TrialStatus::Done || r.fold != kAllFolds || r.hp.batch_size != batch_size) continue;
    if (context != nullptr && !context->matches(r)) continue;
    const long lr = r.lr_point().index();
    for (std::size_t e = 0; e < r.f1.size(); ++e) {
      values.try_emplace({lr, static_cast<int>(e + 1)}, r.f1[e]);
    }
  }
  EpochConclusions best;
  for (const auto& [key, value] : values) {  // ascending LR within each epoch
    const auto [lr, epoch] = key;
    auto it = best.find(epoch);
    if (it == best.end() || value > it->second.f1 + kTieTolerance) {
      best[epoch] = {LrGridPoint::from_index(lr), value};
    }
  }
  return best;
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::Seed: return "SEED";
    case Phase::Direction: return "DIRECTION";
    case Phase::Range: return "RANGE";
    case Phase::Propagate: return "PROPAGATE";
    case Phase::BsDescent: return "BS_DESCENT";
    case Phase::Done: return "DONE";
  }
  return "?";
}

std::string SearchState::phase_label() const {
  if (phase == Phase::Propagate || (phase == Phase::BsDescent && epoch_target > 0)) {
    return to_string(phase) + "(epoch " + std::to_string(epoch_target) + ")";
  }
  return to_string(phase);
}

int probe_batch_size(TrainerBackend& backend, std::span<const int> candidates) {
  static constexpr int kDefault[] = {512, 256, 128, 64, 32, 16};
  std::vector<int> sizes(candidates.begin(), candidates.end());
  if (sizes.empty()) sizes.assign(std::begin(kDefault), std::end(kDefault));
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  for (const int bs : sizes) {
    if (backend.ping(bs)) return bs;
  }
  throw TrainerError(TrainerError::Kind::Resource, "no candidate batch size fits the backend");
}

SearchEngine::SearchEngine(SearchConfig cfg, Ledger& ledger, TrainerBackend* backend,
                           std::string backend_id, SessionBudget budget, int workers)
    : cfg_(std::move(cfg)),
      ledger_(ledger),
      backend_(backend),
      budget_(budget),
      workers_(std::max(1, workers)),
      started_(std::chrono::steady_clock::now()) {
  cfg_.validate();
  context_ = {cfg_.strategy, cfg_.budget.max_tokens, cfg_.seed, std::move(backend_id)};
  for (auto& r : ledger_.snapshot()) {
    if (!context_.matches(r)) continue;
    index_[{r.lr_point().index(), r.hp.batch_size, r.fold}].push_back(std::move(r));
  }
  state_.current_bs = cfg_.initial_batch_size;
}

void SearchEngine::record(TrialRecord r) {
  r = ledger_.append(std::move(r));
  std::lock_guard lock(index_mutex_);
  if (r.fold == kAllFolds) consumed_.insert(r.seq);
  index_[{r.lr_point().index(), r.hp.batch_size, r.fold}].push_back(std::move(r));
}

std::vector<TrialRecord> SearchEngine::records() const {
  std::vector<TrialRecord> out;
  std::lock_guard lock(index_mutex_);
  for (const auto& [key, rs] : index_) {
    for (const auto& r : rs) {
      if (consumed_.contains(r.seq)) out.push_back(r);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const TrialRecord& a, const TrialRecord& b) { return a.seq < b.seq; });
  return out;
}

SearchEngine::Lookup SearchEngine::resolve(LrGridPoint lr, int batch_size, int fold,
                                           int epochs) const {
  std::lock_guard lock(index_mutex_);
  Lookup out;
  const auto it = index_.find({lr.index(), batch_size, fold});
  if (it == index_.end()) return out;
  int failures = 0;
  for (const auto& r : it->second) {
    if (r.status == TrialStatus::Done && r.hp.epochs >= epochs) {
      const auto n = static_cast<std::size_t>(epochs);
      out.resolution = Resolution::Ready;
      out.f1.assign(r.f1.begin(), r.f1.begin() + static_cast<long>(n));
      if (r.valid_loss.size() >= n) {
        out.valid_loss.assign(r.valid_loss.begin(), r.valid_loss.begin() + static_cast<long>(n));
      } else {
        out.valid_loss.assign(n, 0.0);
      }
      out.wall_seconds = r.wall_seconds;
      out.seq = r.seq;
      return out;
    }
  }
  for (const auto& r : it->second) {
    if (r.status != TrialStatus::Failed || r.hp.epochs != epochs) continue;
    ++failures;
    out.reason = r.reason;
    if (!reason_is_retryable(r.reason) || failures >= cfg_.max_attempts) {
      out.resolution = Resolution::Exhausted;
    }
  }
  return out;
}

void SearchEngine::consume(const Lookup& found) {
  if (found.resolution != Resolution::Ready) return;
  std::lock_guard lock(index_mutex_);
  consumed_.insert(found.seq);
}

std::optional<std::vector<double>> SearchEngine::known_average(LrGridPoint lr, int batch_size,
                                                               int epochs) {
  auto found = resolve(lr, batch_size, kAllFolds, epochs);
  if (found.resolution != Resolution::Ready) return std::nullopt;
  consume(found);
  return found.f1;
}

std::optional<double> SearchEngine::seen_average(LrGridPoint lr, int batch_size, int epoch) const {
  std::lock_guard lock(index_mutex_);
  const auto it = index_.find({lr.index(), batch_size, kAllFolds});
  if (it == index_.end()) return std::nullopt;
  for (const auto& r : it->second) {
    if (r.status == TrialStatus::Done && r.hp.epochs >= epoch && consumed_.contains(r.seq)) {
      return r.f1[static_cast<std::size_t>(epoch - 1)];
    }
  }
  return std::nullopt;
}

void SearchEngine::run_one(const TrialSpec& spec) {
  TrialRecord r;
  r.hp = cfg_.hyperparams(spec.lr, spec.batch_size, spec.epochs);
  r.fold = spec.fold;
  r.backend_id = context_.backend_id;
  r.variant = backend_->corpus_variant();
  r.status = TrialStatus::Running;
  record(r);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto results = backend_->run(r.hp, spec.fold);
    if (static_cast<int>(results.size()) != spec.epochs) {
      throw TrainerError(TrainerError::Kind::Protocol,
                         "backend returned " + std::to_string(results.size()) + " epochs, expected " +
                             std::to_string(spec.epochs));
    }
    for (const auto& e : results) {
      r.f1.push_back(e.f1_test);
      r.valid_loss.push_back(e.valid_loss);
    }
    r.status = TrialStatus::Done;
  } catch (const TrainerError& e) {
    r.f1.clear();
    r.valid_loss.clear();
    r.status = TrialStatus::Failed;
    r.reason = e.reason();
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  record(std::move(r));
}

void SearchEngine::run_trials(const std::vector<TrialSpec>& specs) {
  trials_run_ += specs.size();
  if (workers_ == 1 || specs.size() == 1) {
    for (const auto& spec : specs) run_one(spec);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  {
    std::vector<std::jthread> pool;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(workers_), specs.size());
    for (std::size_t w = 0; w < n; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) {
          try {
            run_one(specs[i]);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = specs.size();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

void SearchEngine::ensure(const std::vector<TrialSpec>& specs) {
  while (true) {
    std::vector<TrialSpec> missing;
    for (const auto& spec : specs) {
      if (resolve(spec.lr, spec.batch_size, spec.fold, spec.epochs).resolution == Resolution::NeedsRun) {
        missing.push_back(spec);
      }
    }
    if (missing.empty()) return;
    state_.frontier.clear();
    for (const auto& m : missing) {
      state_.frontier.push_back({m.lr, m.batch_size, m.epochs, m.fold, m.tag});
    }
    if (backend_ == nullptr) throw SessionPaused();
    std::size_t allowed = missing.size();
    if (budget_.max_trials) {
      allowed = std::min(allowed, *budget_.max_trials - std::min(*budget_.max_trials, trials_run_));
    }
    if (budget_.max_wall && std::chrono::steady_clock::now() - started_ >= *budget_.max_wall) {
      allowed = 0;
    }
    if (allowed == 0) throw SessionPaused();
    missing.resize(allowed);
    run_trials(missing);
  }
}

std::optional<std::vector<double>> SearchEngine::single_fold(LrGridPoint lr, int batch_size,
                                                             int epochs, int fold,
                                                             const std::string& tag) {
  ensure({{lr, batch_size, epochs, fold, tag}});
  auto found = resolve(lr, batch_size, fold, epochs);
  if (found.resolution != Resolution::Ready) return std::nullopt;
  consume(found);
  return found.f1;
}

std::optional<std::vector<double>> SearchEngine::seed_trial() {
  return single_fold(LrGridPoint::snap(cfg_.lr0), state_.current_bs, cfg_.max_epochs,
                     cfg_.seed_fold, "seed");
}

std::vector<LrGridPoint> SearchEngine::probe_points(LrDirection seed_direction,
                                                    int widen_steps) const {
  std::vector<double> multipliers = cfg_.probe_multipliers;
  for (int i = 0; i < widen_steps; ++i) multipliers.push_back(multipliers.back() * 0.1);
  const LrGridPoint seed = LrGridPoint::snap(cfg_.lr0);
  std::vector<LrGridPoint> points;
  for (const double m : multipliers) {
    const double lr = seed_direction == LrDirection::TooLow ? cfg_.lr0 / m : cfg_.lr0 * m;
    const auto p = LrGridPoint::snap(lr);
    if (p == seed || !cfg_.in_window(p)) continue;
    if (std::find(points.begin(), points.end(), p) == points.end()) points.push_back(p);
  }
  return points;
}

std::vector<ProbeOutcome> SearchEngine::decade_probe(LrDirection seed_direction, int widen_steps) {
  const auto points = probe_points(seed_direction, widen_steps);
  std::vector<TrialSpec> specs;
  for (const auto& p : points) {
    specs.push_back({p, state_.current_bs, cfg_.max_epochs, cfg_.seed_fold, "probe"});
  }
  ensure(specs);
  std::vector<ProbeOutcome> out;
  for (const auto& p : points) {
    auto found = resolve(p, state_.current_bs, cfg_.seed_fold, cfg_.max_epochs);
    if (found.resolution != Resolution::Ready) continue;
    consume(found);
    out.push_back({p, std::move(found.f1), false});
  }
  return out;
}

std::optional<std::vector<double>> SearchEngine::evaluate_all_folds(LrGridPoint lr, int batch_size,
                                                                    int epochs) {
  if (auto known = known_average(lr, batch_size, epochs)) return known;
  std::vector<TrialSpec> specs;
  const std::string tag = state_.phase == Phase::Range ? "range" : "average";
  for (int f = 0; f < cfg_.fold_count; ++f) specs.push_back({lr, batch_size, epochs, f, tag});
  ensure(specs);

  std::vector<double> f1(static_cast<std::size_t>(epochs), 0.0);
  std::vector<double> loss(static_cast<std::size_t>(epochs), 0.0);
  double wall = 0.0;
  for (int f = 0; f < cfg_.fold_count; ++f) {
    const auto found = resolve(lr, batch_size, f, epochs);
    if (found.resolution != Resolution::Ready) return std::nullopt;
    consume(found);
    for (std::size_t e = 0; e < f1.size(); ++e) {
      f1[e] += found.f1[e];
      loss[e] += found.valid_loss[e];
    }
    wall += found.wall_seconds;
  }
  const double n = static_cast<double>(cfg_.fold_count);
  for (std::size_t e = 0; e < f1.size(); ++e) {
    f1[e] /= n;
    loss[e] /= n;
  }
  TrialRecord avg;
  avg.hp = cfg_.hyperparams(lr, batch_size, epochs);
  avg.fold = kAllFolds;
  avg.f1 = f1;
  avg.valid_loss = loss;
  avg.status = TrialStatus::Done;
  avg.backend_id = context_.backend_id;
  avg.variant = backend_ != nullptr ? backend_->corpus_variant() : "";
  avg.wall_seconds = wall;
  record(std::move(avg));
  return f1;
}

std::optional<double> SearchEngine::average_at(LrGridPoint lr, int batch_size, int epoch,
                                               const std::string& tag, bool& fresh) {
  fresh = !seen_average(lr, batch_size, epoch).has_value();
  state_.frontier = {{lr, batch_size, epoch, kAllFolds, tag}};
  const auto avg = evaluate_all_folds(lr, batch_size, epoch);
  if (!avg) return std::nullopt;
  return (*avg)[static_cast<std::size_t>(epoch - 1)];
}

PropagationResult SearchEngine::propagate(int epoch, LrGridPoint start, int batch_size,
                                          bool open_lower, bool open_higher) {
  PropagationResult result;
  bool fresh = false;
  const auto start_value = average_at(start, batch_size, epoch, "start", fresh);
  if (fresh && start_value) result.newly_evaluated.push_back(start);
  if (start_value) result.visited.push_back({start, *start_value});

  for (const bool lower : {true, false}) {
    if (lower ? !open_lower : !open_higher) continue;
    std::optional<double> reference = start_value;
    LrGridPoint point = start;
    int skips = 0;
    while (true) {
      point = lower ? point.prev() : point.next();
      if (!cfg_.in_window(point)) break;
      const auto value = average_at(point, batch_size, epoch, lower ? "lower" : "higher", fresh);
      if (!value) {
        if (++skips > cfg_.max_failure_skips) break;
        continue;
      }
      skips = 0;
      if (fresh) result.newly_evaluated.push_back(point);
      result.visited.push_back({point, *value});
      if (reference && !(*value > *reference)) break;
      reference = value;
    }
  }
  for (const auto& v : result.visited) {
    if (!result.best || v.f1 > result.best->f1 + kTieTolerance ||
        (std::abs(v.f1 - result.best->f1) <= kTieTolerance && v.lr < result.best->lr)) {
      result.best = v;
    }
  }
  state_.frontier.clear();
  return result;
}

EpochConclusions SearchEngine::bs_descent(int from_batch_size) {
  const int batch_size = from_batch_size / 2;
  const auto previous = select_best(records(), from_batch_size, &context_);
  state_.phase = Phase::BsDescent;
  state_.current_bs = batch_size;
  for (int epoch = cfg_.max_epochs; epoch >= 1; --epoch) {
    const auto it = previous.find(epoch);
    if (it == previous.end()) continue;
    state_.epoch_target = epoch;
    const LrGridPoint seed = it->second.lr;
    bool fresh = false;
    const auto seed_value = average_at(seed, batch_size, epoch, "start", fresh);
    // Smaller batches take more steps per epoch, so the walk only goes
    // upward when the higher neighbour is already known to be better.
    bool open_higher = false;
    if (seed_value) {
      const auto higher = seen_average(seed.next(), batch_size, epoch);
      open_higher = higher && *higher > *seed_value;
    }
    propagate(epoch, seed, batch_size, true, open_higher);
    state_.conclusions[batch_size] = select_best(records(), batch_size, &context_);
  }
  state_.epoch_target = 0;
  return select_best(records(), batch_size, &context_);
}

void SearchEngine::drive() {
  state_ = SearchState{};
  {
    std::lock_guard lock(index_mutex_);
    consumed_.clear();
  }
  state_.current_bs = cfg_.initial_batch_size;
  int bs = cfg_.initial_batch_size;

  const auto seed = seed_trial();
  if (!seed) {
    state_.blocked = "seed trial failed: " +
                     resolve(LrGridPoint::snap(cfg_.lr0), bs, cfg_.seed_fold, cfg_.max_epochs).reason;
    return;
  }

  state_.phase = Phase::Direction;
  const LrDirection direction = classify_direction(*seed, cfg_);
  state_.seed_direction = direction;
  std::vector<ProbeOutcome> outcomes{{LrGridPoint::snap(cfg_.lr0), *seed, true}};
  CandidatePick pick;
  if (direction == LrDirection::InRange) {
    pick.candidates = {outcomes.front().lr};
  } else {
    for (int widen = 0;; ++widen) {
      for (auto& probe : decade_probe(direction, widen)) {
        const bool seen = std::any_of(outcomes.begin(), outcomes.end(),
                                      [&](const ProbeOutcome& o) { return o.lr == probe.lr; });
        if (!seen) outcomes.push_back(std::move(probe));
      }
      pick = pick_candidates(outcomes, cfg_);
      if (!pick.widen || widen >= cfg_.max_widen_steps) break;
    }
  }
  state_.candidates = pick.candidates;
  state_.frontier.clear();

  state_.phase = Phase::Range;
  bool any_average = false;
  for (const auto& candidate : pick.candidates) {
    if (evaluate_all_folds(candidate, bs, cfg_.max_epochs)) any_average = true;
  }
  if (!any_average) {
    state_.blocked = "no candidate learning rate produced an all-fold average";
    return;
  }

  state_.phase = Phase::Propagate;
  for (int epoch = cfg_.max_epochs; epoch >= 1; --epoch) {
    state_.epoch_target = epoch;
    const auto best = select_best(records(), bs, &context_);
    const auto it = best.find(epoch);
    if (it == best.end()) continue;
    propagate(epoch, it->second.lr, bs);
    state_.conclusions[bs] = select_best(records(), bs, &context_);
  }
  state_.epoch_target = 0;
  state_.conclusions[bs] = select_best(records(), bs, &context_);

  while (bs / 2 > cfg_.stop_batch_size) {
    state_.conclusions[bs / 2] = bs_descent(bs);
    bs /= 2;
  }
  state_.phase = Phase::Done;
  state_.frontier.clear();
}

SessionReport SearchEngine::run_session() {
  SessionReport report;
  try {
    drive();
  } catch (const SessionPaused&) {
    report.paused = true;
  }
  report.state = state_;
  report.trials_run = trials_run_;
  return report;
}

SearchState reconstruct_state(Ledger& ledger, const SearchConfig& cfg, const std::string& backend_id) {
  SearchEngine engine(cfg, ledger, nullptr, backend_id);
  return engine.run_session().state;
}

}  // namespace hpprop
