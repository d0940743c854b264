#pragma once

// Desk-scale ground truth: exhaustive stand-alone training of every genotype
// in a small space, single-edge sweeps and rank correlation.

#include "ostr/criteria.hpp"
#include "ostr/datasets.hpp"
#include "ostr/optim.hpp"
#include "ostr/space.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ostr {

// Throws when P^E exceeds `budget`, suggesting a smaller space.
std::vector<Genotype> enumerate_genotypes(const SearchSpaceConfig& space, std::size_t budget = 1024);

struct TrainConfig {
  std::size_t epochs = 15;
  std::vector<std::uint64_t> seeds{0, 1};
  std::size_t batch_size = 64;
  SgdConfig optimizer{0.05, 0.0, 0.9, 3e-4, 5.0};

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

struct StandaloneResult {
  std::vector<double> val_acc;  // per successful seed
  std::vector<double> test_acc;
  std::size_t failed_seeds = 0;
  std::string failure; // first failure message
  double train_seconds = 0.0;

  bool failed() const { return val_acc.empty(); }
  double val_mean() const;
  double val_std() const;
  double test_mean() const;
  double test_std() const;
};

// Re-initialises, trains on the train split and evaluates on val/test for
// every seed. Evaluation statistics come from each full split in one batch.
StandaloneResult train_standalone(const SearchSpaceConfig& space, const Genotype& g, const Dataset& data,
                                  const TrainConfig& cfg);

struct OracleEntry {
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::size_t seeds = 0;
  double val_std = 0.0;
  double test_std = 0.0;
  double train_seconds = 0.0;
  bool failed = false;
  bool operator==(const OracleEntry&) const = default;
};

enum class Provenance { exhaustive, ingested };

struct OracleTable {
  SearchSpaceConfig space;
  Provenance provenance = Provenance::exhaustive;
  bool complete = false;
  Json budget = Json::object(); // training config that produced the entries
  std::map<std::string, OracleEntry> entries; // canonical genotype string -> result

  std::string fingerprint() const { return ostr::fingerprint(space); }
  // Absent genotypes give std::nullopt.
  std::optional<OracleEntry> lookup(const Genotype& g) const;
  // 1 + number of non-failed entries with strictly higher test accuracy.
  std::size_t rank(const Genotype& g) const;
  std::size_t ranked_count() const;
  // Highest test accuracy; ties broken by genotype order.
  Genotype best() const;
};

Json to_json(const OracleTable& t);
// Validates the schema; accuracies must lie in [0, 1]; keys are canonicalised.
OracleTable table_from_json(const Json& j);
void save_table(const OracleTable& t, const std::string& path); // atomic replace
OracleTable ingest_table(const std::string& path);

struct OracleOptions {
  std::size_t jobs = 1;
  std::size_t budget = 1024;
  std::string path;   // persisted after every entry when set
  bool resume = false; // continue from an existing table at `path`
  std::function<void(const std::string& genotype, const OracleEntry&)> on_entry;
};

OracleTable exhaustive_oracle(const SearchSpaceConfig& space, const Dataset& data, const TrainConfig& cfg,
                              const OracleOptions& opts = {});

struct SweepPoint {
  std::size_t op = 0;
  Genotype genotype;
  OracleEntry result;
};

// One stand-alone result per op substituted at `edge`. Entries present in
// `cache` (trained under the same budget and space) are reused.
std::vector<SweepPoint> edge_sweep(const SearchSpaceConfig& space, const Genotype& base, std::size_t edge,
                                   const Dataset& data, const TrainConfig& cfg, const OracleTable* cache = nullptr);

// Pearson correlation of average ranks. Throws for fewer than 3 pairs,
// unequal lengths, or "constant input" (zero rank variance).
double spearman(std::span<const double> xs, std::span<const double> ys);
std::vector<double> average_ranks(std::span<const double> xs);

struct CorrelationPair {
  std::size_t op = 0;
  double indicator = 0.0;
  double standalone_acc = 0.0;
};

struct CorrelationReport {
  std::size_t edge = 0;
  Criterion criterion = Criterion::ostr;
  std::vector<CorrelationPair> pairs;
  double rho = 0.0;
  std::size_t excluded = 0; // failed stand-alone runs left out
};

// Indicator for op o at `edge` is scores(o, edge); accuracies are test accuracies.
CorrelationReport correlate_edge(std::size_t edge, const ScoreMatrix& scores, std::span<const SweepPoint> sweep);

void write_correlation_csv(std::ostream& os, std::span<const CorrelationReport> reports,
                           const SearchSpaceConfig& space);

} // namespace ostr
