#pragma once

// First-order bilevel supernet optimisation and the selection loop with
// stability-based early stopping.

#include "ostr/criteria.hpp"
#include "ostr/datasets.hpp"
#include "ostr/optim.hpp"
#include "ostr/space.hpp"
#include "ostr/supernet.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ostr {

enum class ScoreSource { val, train };

struct SearchConfig {
  std::size_t epochs = 50;   // T
  std::size_t patience = 10; // C
  bool eval_every_epoch = true; // Er
  // true: loop while (cnt < C or t <= T); false: stop at t > T or once cnt >= C > 0.
  bool strict_alg1 = true;
  // Hard bound on executed epochs; keeps an oscillating selection from looping forever.
  std::size_t max_epochs = 200;
  Criterion criterion = Criterion::ostr;
  // Further criteria selected side by side on the same supernet trajectory.
  std::vector<Criterion> track;
  SgdConfig w_optimizer;
  AdamConfig alpha_optimizer;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  // Share of the dataset's train split used for w; the rest feeds alpha.
  double train_fraction = 0.5;
  ScoreSource score_source = ScoreSource::val;

  void validate() const;
  std::vector<Criterion> criteria() const; // primary first, no duplicates
  bool operator==(const SearchConfig&) const = default;
};

Json to_json(const SearchConfig& cfg);
// Rejects unknown fields and reports missing ones by name.
SearchConfig search_config_from_json(const Json& j);

struct OptimizerState {
  std::vector<double> w_momentum; // flattened over NetworkBody::parameters()
  std::vector<double> alpha_m;
  std::vector<double> alpha_v;
  std::uint64_t alpha_step = 0;

  static OptimizerState zeros(const Supernet& net);
  bool operator==(const OptimizerState&) const = default;
};

struct StepResult {
  double train_loss = 0.0;
  double val_loss = 0.0;
  Matrix alpha_grad; // dL_val/dalpha before the alpha update
};

// Hooks observe the passes that produced the step's gradients.
struct StepObservers {
  std::function<void(const SupernetPass&)> on_val_pass;
  std::function<void(const SupernetPass&)> on_train_pass; // train pass carries alpha grads when requested
  bool train_alpha_grad = false;
};

// alpha <- Adam on the validation batch (weights frozen), then
// w <- SGD on the training batch (alpha frozen).
StepResult bilevel_step(Supernet& net, const Batch& train, const Batch& val, const SearchConfig& cfg,
                        OptimizerState& state, double w_lr, const StepObservers& obs = {});

/// Control flow of the selection loop, independent of any training.
class SelectionLoop {
public:
  SelectionLoop(std::size_t T, std::size_t C, bool every_epoch, bool strict, std::size_t max_epochs, Genotype a0);

  // Loop condition checked before running epoch `epoch()`.
  bool running() const;
  std::size_t epoch() const noexcept { return t_; }
  bool selects_now() const noexcept { return every_epoch_ || t_ == T_; }
  // Selection step for the current epoch; updates the stability counter.
  void select(const Genotype& a);
  void advance() noexcept { ++t_; }

  const Genotype& current() const noexcept { return current_; }
  std::size_t cnt() const noexcept { return cnt_; }
  std::size_t selections() const noexcept { return selections_; }
  bool capped() const noexcept { return t_ > max_epochs_ && condition(); }

private:
  bool condition() const;

  std::size_t T_, C_;
  bool every_epoch_, strict_;
  std::size_t max_epochs_;
  std::size_t t_ = 1;
  std::size_t cnt_ = 0;
  std::size_t selections_ = 0;
  Genotype current_;
};

struct CriterionEpoch {
  Criterion criterion = Criterion::ostr;
  bool active = true;   // its loop had not exited before this epoch
  bool selected = false;
  Genotype genotype;    // valid when selected
  std::size_t cnt = 0;
  std::optional<ScoreMatrix> scores; // valid when selected
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double w_lr = 0.0;
  Matrix beta;
  std::vector<CriterionEpoch> criteria;
};

struct Trajectory {
  std::vector<EpochRecord> epochs;
};

Json to_json(const EpochRecord& r, const SearchSpaceConfig& space);
void write_trajectory_jsonl(std::ostream& os, const Trajectory& t, const SearchSpaceConfig& space);
// Score CSV rows for every criterion selected at that epoch.
void write_epoch_scores_csv(std::ostream& os, const EpochRecord& r, const SearchSpaceConfig& space);

struct CriterionOutcome {
  Criterion criterion = Criterion::ostr;
  Genotype final;
  std::size_t stop_epoch = 0; // last epoch executed for this criterion
  std::size_t selections = 0;
  bool capped = false;
};

struct SearchResult {
  Genotype final; // outcome of cfg.criterion
  std::vector<CriterionOutcome> outcomes;
  Trajectory trace;
  Supernet net;
  OptimizerState optimizer;
};

struct SearchHooks {
  // Called on each accumulated score matrix before selection (test hook).
  std::function<void(std::size_t epoch, ScoreMatrix&)> adjust_scores;
  // Called after each epoch's record is complete.
  std::function<void(const EpochRecord&, const Supernet&, const OptimizerState&)> on_epoch;
};

// Splits of the search data: w batches come from the first train_fraction of
// the train split, alpha batches from the rest.
struct SearchData {
  Split w_split;
  Split alpha_split;
};
SearchData split_for_search(const Dataset& d, const SearchConfig& cfg);

SearchResult run_search(const SearchConfig& cfg, const SearchSpaceConfig& space, const Dataset& data,
                        const SearchHooks& hooks = {});

// Independent searches over seeds (cfg.seed replaced); results in seed order.
std::vector<SearchResult> run_search_suite(const SearchConfig& cfg, const SearchSpaceConfig& space,
                                           const Dataset& data, const std::vector<std::uint64_t>& seeds,
                                           std::size_t jobs);

// Read-only scores of a frozen supernet, averaged over `batches`.
ScoreMatrix score_supernet(const Supernet& net, Criterion c, const std::vector<Batch>& batches);

struct ProbeCheckpoint {
  std::size_t epoch = 0;
  Matrix beta;
  std::vector<EdgeDiagnostic> diagnostics; // on the fixed probe batch
  ScoreMatrix ostr;                        // averaged over the alpha batches
  Genotype magnitude_pick;
  Genotype ostr_pick;
  std::vector<std::size_t> flagged_edges; // magnitude picks skip, ostr picks a parametric op
  std::size_t skip_edges_magnitude = 0;
  std::size_t skip_edges_ostr = 0;
};

struct DegenerationReport {
  std::vector<ProbeCheckpoint> checkpoints;
  // Fraction of consecutive checkpoints where the magnitude skip count does not decrease.
  double magnitude_skip_nondecreasing = 0.0;
  bool magnitude_drifts_to_skip = false; // some edge ends on skip under magnitude but not under ostr
};

// Trains for max(epochs_list) epochs without early stopping and probes at
// every listed epoch (0 = before training).
DegenerationReport degeneration_probe(const SearchConfig& cfg, const SearchSpaceConfig& space, const Dataset& data,
                                      std::vector<std::size_t> epochs_list);

void write_degeneration_csv(std::ostream& os, const DegenerationReport& r, const SearchSpaceConfig& space);
void write_degeneration_summary_csv(std::ostream& os, const DegenerationReport& r);
// Throws std::runtime_error naming the first schema violation.
void validate_degeneration_csv(std::istream& is, const SearchSpaceConfig& space);

// Checkpoint: one JSON header line, then float64 payload (alpha, weights in
// NetworkBody::parameters() order, optimizer state), FNV-1a checksummed.
void save_checkpoint(const std::string& path, const Supernet& net, const OptimizerState& opt, const Json& meta);
struct Checkpoint {
  Supernet net;
  OptimizerState optimizer;
  Json meta;
};
Checkpoint load_checkpoint(const std::string& path);

} // namespace ostr
