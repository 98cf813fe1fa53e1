#include "hpprop/ledger.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hpprop {

using nlohmann::json;

std::string to_string(TrialStatus status) {
  switch (status) {
    case TrialStatus::Running: return "RUNNING";
    case TrialStatus::Done: return "DONE";
    case TrialStatus::Failed: return "FAILED";
  }
  return "?";
}

std::string TrialRecord::to_json_line() const {
  json j = {{"seq", seq},
            {"status", to_string(status)},
            {"lr", hp.lr},
            {"batch_size", hp.batch_size},
            {"epochs", hp.epochs},
            {"fold", fold == kAllFolds ? json("all") : json(fold)},
            {"seed", hp.seed},
            {"max_tokens", hp.budget.max_tokens},
            {"strategy", to_string(hp.strategy)},
            {"backend", backend_id},
            {"variant", variant},
            {"f1", f1},
            {"valid_loss", valid_loss},
            {"wall_seconds", wall_seconds}};
  if (!reason.empty()) j["reason"] = reason;
  return j.dump();
}

TrialRecord TrialRecord::from_json_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    TrialRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    const auto status = j.at("status").get<std::string>();
    if (status == "DONE") {
      r.status = TrialStatus::Done;
    } else if (status == "FAILED") {
      r.status = TrialStatus::Failed;
    } else if (status == "RUNNING") {
      r.status = TrialStatus::Running;
    } else {
      throw LedgerError("unknown status '" + status + "'");
    }
    r.hp.lr = j.at("lr").get<double>();
    r.hp.batch_size = j.at("batch_size").get<int>();
    r.hp.epochs = j.at("epochs").get<int>();
    const auto& fold = j.at("fold");
    if (fold.is_string()) {
      if (fold.get<std::string>() != "all") throw LedgerError("fold must be an integer or \"all\"");
      r.fold = kAllFolds;
    } else {
      r.fold = fold.get<int>();
    }
    r.hp.seed = j.at("seed").get<std::uint64_t>();
    r.hp.budget.max_tokens = j.at("max_tokens").get<std::size_t>();
    r.hp.strategy = parse_strategy(j.at("strategy").get<std::string>());
    r.backend_id = j.at("backend").get<std::string>();
    r.variant = j.value("variant", std::string());
    r.f1 = j.at("f1").get<std::vector<double>>();
    r.valid_loss = j.value("valid_loss", std::vector<double>{});
    r.wall_seconds = j.value("wall_seconds", 0.0);
    r.reason = j.value("reason", std::string());
    if (!(r.hp.lr > 0.0)) throw LedgerError("non-positive lr");
    if (r.status == TrialStatus::Done && static_cast<int>(r.f1.size()) != r.hp.epochs) {
      throw LedgerError("DONE record with " + std::to_string(r.f1.size()) + " F1 values for " +
                        std::to_string(r.hp.epochs) + " epochs");
    }
    return r;
  } catch (const LedgerError&) {
    throw;
  } catch (const std::exception& e) {
    throw LedgerError(e.what());
  }
}

Ledger Ledger::open(const std::filesystem::path& path) {
  Ledger ledger;
  ledger.path_ = path;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LedgerError("cannot read ledger " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      TrialRecord record;
      try {
        record = TrialRecord::from_json_line(line);
      } catch (const std::exception& e) {
        throw LedgerError(path.string() + ":" + std::to_string(line_no) + ": corrupted ledger line: " +
                          e.what());
      }
      if (!ledger.records_.empty() && record.seq <= ledger.records_.back().seq) {
        throw LedgerError(path.string() + ":" + std::to_string(line_no) +
                          ": sequence number does not increase");
      }
      ledger.records_.push_back(std::move(record));
    }
  }
  ledger.fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (ledger.fd_ < 0) {
    throw LedgerError("cannot open ledger " + path.string() + ": " + std::strerror(errno));
  }
  return ledger;
}

Ledger::Ledger(Ledger&& other) noexcept
    : records_(std::move(other.records_)), path_(std::move(other.path_)), fd_(other.fd_) {
  other.fd_ = -1;
}

Ledger::~Ledger() {
  if (fd_ >= 0) ::close(fd_);
}

TrialRecord Ledger::append(TrialRecord record) {
  std::lock_guard lock(mutex_);
  record.seq = records_.empty() ? 1 : records_.back().seq + 1;
  if (fd_ >= 0) {
    const std::string line = record.to_json_line() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw LedgerError("ledger write failed: " + std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw LedgerError("ledger fsync failed: " + std::string(std::strerror(errno)));
  }
  records_.push_back(record);
  return record;
}

std::vector<TrialRecord> Ledger::snapshot() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t Ledger::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

}  // namespace hpprop
