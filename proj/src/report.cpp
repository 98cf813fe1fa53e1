#include "hpprop/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace hpprop {

namespace {

std::string percent(double f1) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", f1 * 100.0);
  return buf;
}

std::string fraction(double f1) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", f1);
  return buf;
}

}  // namespace

std::string averages_table_markdown(std::span<const TrialRecord> records,
                                    const TrialContext* context) {
  // bs -> epoch -> lr index -> value, first DONE row wins as in select_best
  std::map<int, std::map<int, std::map<long, double>>, std::greater<>> cells;
  for (const auto& r : records) {
    if (r.status != TrialStatus::Done || r.fold != kAllFolds) continue;
    if (context != nullptr && !context->matches(r)) continue;
    for (std::size_t e = 0; e < r.f1.size(); ++e) {
      cells[r.hp.batch_size][static_cast<int>(e + 1)].try_emplace(r.lr_point().index(), r.f1[e]);
    }
  }
  std::ostringstream out;
  bool first = true;
  for (const auto& [bs, epochs] : cells) {
    std::set<long> columns;
    for (const auto& [epoch, row] : epochs) {
      for (const auto& [lr, value] : row) columns.insert(lr);
    }
    if (!first) out << '\n';
    first = false;
    out << "BS=" << bs << "\n\n| Epoch |";
    for (const long lr : columns) out << ' ' << LrGridPoint::from_index(lr).to_string() << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& [epoch, row] : epochs) {
      const auto best = select_best(records, bs, context);
      const auto it = best.find(epoch);
      out << "| " << epoch << " |";
      for (const long lr : columns) {
        const auto cell = row.find(lr);
        if (cell == row.end()) {
          out << " - |";
        } else if (it != best.end() && it->second.lr.index() == lr) {
          out << " **" << percent(cell->second) << "** |";
        } else {
          out << ' ' << percent(cell->second) << " |";
        }
      }
      out << '\n';
    }
  }
  return out.str();
}

std::string summary_markdown(const SearchState& state, Strategy strategy, std::size_t max_tokens) {
  std::ostringstream out;
  out << "| Strategy | Tokens | BS | LR | Epochs | F1 |\n|---|---|---|---|---|---|\n";
  double best = -1.0;
  for (const auto& [bs, conclusions] : state.conclusions) {
    for (const auto& [epoch, c] : conclusions) best = std::max(best, c.f1);
  }
  for (auto it = state.conclusions.rbegin(); it != state.conclusions.rend(); ++it) {
    for (const auto& [epoch, c] : it->second) {
      const bool bold = c.f1 == best;
      const std::string f1 = bold ? "**" + percent(c.f1) + "**" : percent(c.f1);
      out << "| " << display_name(strategy) << " | " << max_tokens << " | " << it->first << " | "
          << c.lr.to_string() << " | " << epoch << " | " << f1 << " |\n";
    }
  }
  return out.str();
}

std::size_t finished_trials(std::span<const TrialRecord> records, const TrialContext* context) {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const TrialRecord& r) {
    return r.fold != kAllFolds && r.status != TrialStatus::Running &&
           (context == nullptr || context->matches(r));
  }));
}

std::string status_report(const SearchState& state, std::span<const TrialRecord> records,
                          const TrialContext* context) {
  std::ostringstream out;
  out << "phase " << state.phase_label() << ", " << finished_trials(records, context) << " trials\n";
  if (state.phase != Phase::Seed || !state.frontier.empty()) {
    out << "batch size " << state.current_bs << '\n';
  }
  if (state.seed_direction) out << "seed direction " << to_string(*state.seed_direction) << '\n';
  if (!state.candidates.empty()) {
    out << "candidates";
    for (const auto& c : state.candidates) out << ' ' << c.to_string();
    out << '\n';
  }
  if (!state.blocked.empty()) out << "blocked: " << state.blocked << '\n';
  for (const auto& f : state.frontier) {
    out << "pending " << f.tag << " lr=" << f.lr.to_string() << " bs=" << f.batch_size
        << " epochs=" << f.epochs << " fold=" << (f.fold == kAllFolds ? std::string("all") : std::to_string(f.fold))
        << '\n';
  }
  for (auto it = state.conclusions.rbegin(); it != state.conclusions.rend(); ++it) {
    out << "BS=" << it->first << ':';
    for (const auto& [epoch, c] : it->second) {
      out << " e" << epoch << "=" << c.lr.to_string() << " (" << fraction(c.f1) << ')';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace hpprop
