#include "hpprop/fixture.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hpprop {

using nlohmann::json;

namespace {

std::string describe(LrGridPoint lr, int batch_size, int epochs, int fold) {
  return "lr=" + lr.to_string() + " batch_size=" + std::to_string(batch_size) +
         " epochs=" + std::to_string(epochs) +
         " fold=" + (fold == kAllFolds ? std::string("all") : std::to_string(fold));
}

std::vector<double> number_array(const json& j, const char* name, std::size_t line_no) {
  if (!j.is_array()) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": '" + name + "' must be an array");
  }
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": '" + name +
                               "' must hold numbers");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

FixtureTable FixtureTable::parse(std::string_view content, int fold_count) {
  FixtureTable table(fold_count);
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line.front() == '#') continue;
    try {
      const json j = json::parse(line);
      FixtureRow row;
      row.lr = LrGridPoint::snap(j.at("lr").get<double>());
      row.batch_size = j.at("batch_size").get<int>();
      const auto& fold = j.at("fold");
      if (fold.is_string() && fold.get<std::string>() == "all") {
        row.fold = kAllFolds;
      } else {
        row.fold = fold.get<int>();
        if (row.fold < 0 || row.fold >= fold_count) throw std::runtime_error("fold out of range");
      }
      row.f1 = number_array(j.at("f1"), "f1", line_no);
      if (j.contains("valid_loss")) row.valid_loss = number_array(j["valid_loss"], "valid_loss", line_no);
      table.add(std::move(row));
    } catch (const std::exception& e) {
      throw TrainerError(TrainerError::Kind::Data,
                         "fixture line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

FixtureTable FixtureTable::load(const std::filesystem::path& path, int fold_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrainerError(TrainerError::Kind::Data, "cannot open fixture " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), fold_count);
}

void FixtureTable::add(FixtureRow row) {
  if (row.f1.empty()) throw std::runtime_error("fixture row without F1 values");
  if (!row.valid_loss.empty() && row.valid_loss.size() != row.f1.size()) {
    throw std::runtime_error("valid_loss length differs from f1 length");
  }
  if (find(row.lr, row.batch_size, row.fold) != nullptr) {
    throw std::runtime_error("duplicate fixture row for " +
                             describe(row.lr, row.batch_size, static_cast<int>(row.f1.size()), row.fold));
  }
  rows_.push_back(std::move(row));
}

bool FixtureTable::has_batch_size(int batch_size) const {
  for (const auto& row : rows_) {
    if (row.batch_size == batch_size) return true;
  }
  return false;
}

const FixtureRow* FixtureTable::find(LrGridPoint lr, int batch_size, int fold) const {
  for (const auto& row : rows_) {
    if (row.lr == lr && row.batch_size == batch_size && row.fold == fold) return &row;
  }
  return nullptr;
}

std::vector<EpochResult> FixtureTable::lookup(LrGridPoint lr, int batch_size, int epochs,
                                              int fold) const {
  auto miss = [&] {
    return TrainerError(TrainerError::Kind::FixtureMiss,
                        "no recorded trial for " + describe(lr, batch_size, epochs, fold));
  };
  if (epochs < 1) throw miss();
  const auto n = static_cast<std::size_t>(epochs);
  auto loss_at = [](const FixtureRow& row, std::size_t e) {
    return row.valid_loss.empty() ? 0.0 : row.valid_loss[e];
  };

  std::vector<EpochResult> out;
  if (const FixtureRow* row = find(lr, batch_size, fold)) {
    if (row->f1.size() < n) throw miss();
    for (std::size_t e = 0; e < n; ++e) {
      out.push_back({static_cast<int>(e + 1), row->f1[e], loss_at(*row, e)});
    }
    return out;
  }
  const FixtureRow* avg = fold == kAllFolds ? nullptr : find(lr, batch_size, kAllFolds);
  if (avg == nullptr || avg->f1.size() < n) throw miss();
  for (std::size_t e = 0; e < n; ++e) {
    double explicit_sum = 0.0;
    int explicit_count = 0;
    for (int f = 0; f < fold_count_; ++f) {
      const FixtureRow* other = find(lr, batch_size, f);
      if (other != nullptr && other->f1.size() > e) {
        explicit_sum += other->f1[e];
        ++explicit_count;
      }
    }
    const double remaining = static_cast<double>(fold_count_ - explicit_count);
    const double value =
        (static_cast<double>(fold_count_) * avg->f1[e] - explicit_sum) / remaining;
    out.push_back({static_cast<int>(e + 1), value, loss_at(*avg, e)});
  }
  return out;
}

std::vector<EpochResult> run_fixture(const FixtureTable& table, const Hyperparams& hp, int fold) {
  return table.lookup(LrGridPoint::snap(hp.lr), hp.batch_size, hp.epochs, fold);
}

}  // namespace hpprop
