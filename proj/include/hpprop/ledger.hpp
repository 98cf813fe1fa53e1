#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hpprop/lr_grid.hpp"
#include "hpprop/trainer.hpp"

namespace hpprop {

class LedgerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrialStatus { Running, Done, Failed };

std::string to_string(TrialStatus status);

struct TrialRecord {
  std::uint64_t seq = 0;
  Hyperparams hp;
  int fold = 0;  // kAllFolds marks a derived all-fold average row
  std::vector<double> f1;
  std::vector<double> valid_loss;
  TrialStatus status = TrialStatus::Done;
  std::string reason;  // set for Failed
  std::string backend_id;
  std::string variant;
  double wall_seconds = 0.0;

  LrGridPoint lr_point() const { return LrGridPoint::snap(hp.lr); }

  std::string to_json_line() const;
  // Throws LedgerError for missing or ill-typed fields.
  static TrialRecord from_json_line(std::string_view line);
};

// Append-only trial store. With a path, every append is written as one JSONL
// line and fsync'ed before returning. Appends from several threads are
// serialized; sequence numbers increase by one per record.
class Ledger {
 public:
  Ledger() = default;  // in memory

  // Loads an existing file (or starts an empty one). A malformed line or a
  // non-increasing sequence number aborts the load with the line number.
  static Ledger open(const std::filesystem::path& path);

  Ledger(Ledger&& other) noexcept;
  Ledger& operator=(Ledger&&) = delete;
  Ledger(const Ledger&) = delete;
  ~Ledger();

  TrialRecord append(TrialRecord record);
  std::vector<TrialRecord> snapshot() const;
  std::size_t size() const;
  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  mutable std::mutex mutex_;
  std::vector<TrialRecord> records_;
  std::optional<std::filesystem::path> path_;
  int fd_ = -1;
};

}  // namespace hpprop
