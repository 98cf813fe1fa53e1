#pragma once

#include <span>
#include <string>

#include "hpprop/ledger.hpp"
#include "hpprop/search.hpp"

namespace hpprop {

// One markdown table per batch size (largest first): LR columns in ascending
// order, one row per epoch count, all-fold averages x100 with two decimals.
// The best cell of each row is bold; "-" marks a missing average.
std::string averages_table_markdown(std::span<const TrialRecord> records,
                                    const TrialContext* context = nullptr);

// Strategy | Tokens | BS | LR | Epochs | F1 rows, one per concluded
// (batch size, epoch count); the overall best row is bold.
std::string summary_markdown(const SearchState& state, Strategy strategy, std::size_t max_tokens);

// Count of finished single-fold trials (DONE or FAILED) in the records.
std::size_t finished_trials(std::span<const TrialRecord> records,
                            const TrialContext* context = nullptr);

// First line is "phase <PHASE>, <N> trials"; the frontier, blockers and
// conclusions follow.
std::string status_report(const SearchState& state, std::span<const TrialRecord> records,
                          const TrialContext* context = nullptr);

}  // namespace hpprop
