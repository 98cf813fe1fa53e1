#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hpprop/trainer.hpp"

namespace hpprop {

// Wire protocol with an external trainer process, one JSON object per line.
//
// Request (engine -> child stdin, then stdin is closed):
//   {"cmd":"train","train":path,"valid":path,"test":path,"lr":real,
//    "batch_size":int,"epochs":int,"seed":int,"max_tokens":int,"strategy":"a2"}
// Replies (child stdout):
//   {"epoch":1,"f1_test":0.81,"valid_loss":0.52}   one per epoch, in order
//   {"done":true}                                  terminal
//   {"error":"..."}                                terminal, aborts the trial
//
// Batch-size probing uses {"cmd":"ping","batch_size":int}, answered by
// {"ok":true} or {"ok":false}.

struct SplitPaths {
  std::filesystem::path train;
  std::filesystem::path valid;
  std::filesystem::path test;
};

// Layout written by `hpprop prepare`: <dir>/fold<k>/{train,valid,test}.jsonl
SplitPaths split_paths_for_fold(const std::filesystem::path& data_dir, int fold);

std::string encode_train_request(const Hyperparams& hp, const SplitPaths& paths);
std::string encode_ping_request(int batch_size);

// Incremental validator for the reply stream of one train request.
class ReplyStream {
 public:
  explicit ReplyStream(int expected_epochs) : expected_epochs_(expected_epochs) {}

  // Consumes one line; throws TrainerError on protocol violations and on
  // error replies. Returns true once the terminal {"done":true} arrived.
  bool feed(std::string_view line);

  bool done() const { return done_; }
  const std::vector<EpochResult>& results() const { return results_; }

 private:
  int expected_epochs_;
  bool done_ = false;
  std::vector<EpochResult> results_;
};

struct ExternalEndpoint {
  std::string command;  // run through /bin/sh -c
  std::chrono::milliseconds timeout = std::chrono::hours(6);
};

std::vector<EpochResult> run_external(const ExternalEndpoint& endpoint, const Hyperparams& hp,
                                      const SplitPaths& paths);
bool ping_external(const ExternalEndpoint& endpoint, int batch_size);

class ExternalBackend final : public TrainerBackend {
 public:
  ExternalBackend(ExternalEndpoint endpoint, std::filesystem::path data_dir,
                  std::string variant = "upsampled");

  std::string id() const override { return "exec:" + endpoint_.command; }
  bool deterministic() const override { return false; }
  std::string corpus_variant() const override { return variant_; }
  std::vector<EpochResult> run(const Hyperparams& hp, int fold) override;
  bool ping(int batch_size) override;

 private:
  ExternalEndpoint endpoint_;
  std::filesystem::path data_dir_;
  std::string variant_;
};

}  // namespace hpprop
