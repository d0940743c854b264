#include "ostr/search.hpp"

#include "ostr/json_util.hpp"
#include "ostr/parallel.hpp"
#include "ostr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace ostr {

namespace {

constexpr std::uint64_t kShuffleStream = 7001;

Json criteria_json(const std::vector<Criterion>& cs) {
  Json a = Json::array();
  for (auto c : cs) a.push_back(std::string(criterion_name(c)));
  return a;
}

std::string_view source_name(ScoreSource s) { return s == ScoreSource::val ? "val" : "train"; }

ScoreSource parse_source(const std::string& s) {
  if (s == "val") return ScoreSource::val;
  if (s == "train") return ScoreSource::train;
  throw std::invalid_argument("search.score_source: expected 'val' or 'train', got '" + s + "'");
}

} // namespace

void SearchConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("search: " + m); };
  if (epochs < 1) fail("epochs (T) must be >= 1");
  if (max_epochs < epochs) fail("max_epochs must be >= epochs");
  if (batch_size < 2) fail("batch_size must be >= 2 (batch statistics)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
  ostr::validate(w_optimizer, "search.w_optimizer");
  ostr::validate(alpha_optimizer, "search.alpha_optimizer");
}

std::vector<Criterion> SearchConfig::criteria() const {
  std::vector<Criterion> out{criterion};
  for (auto c : track) {
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

Json to_json(const SearchConfig& c) {
  return Json{{"epochs", c.epochs},
              {"patience", c.patience},
              {"eval_every_epoch", c.eval_every_epoch},
              {"strict_alg1", c.strict_alg1},
              {"max_epochs", c.max_epochs},
              {"criterion", std::string(criterion_name(c.criterion))},
              {"track", criteria_json(c.track)},
              {"w_optimizer", to_json(c.w_optimizer)},
              {"alpha_optimizer", to_json(c.alpha_optimizer)},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"train_fraction", c.train_fraction},
              {"score_source", std::string(source_name(c.score_source))}};
}

SearchConfig search_config_from_json(const Json& j) {
  check_fields(j, "search",
               {"epochs", "patience", "eval_every_epoch", "strict_alg1", "max_epochs", "criterion", "track",
                "w_optimizer", "alpha_optimizer", "batch_size", "seed", "train_fraction", "score_source"});
  SearchConfig c;
  try {
    c.epochs = j.at("epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.eval_every_epoch = j.at("eval_every_epoch").get<bool>();
    c.strict_alg1 = j.at("strict_alg1").get<bool>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.criterion = parse_criterion(j.at("criterion").get<std::string>());
    c.track.clear();
    for (const auto& t : j.at("track")) c.track.push_back(parse_criterion(t.get<std::string>()));
    c.w_optimizer = sgd_config_from_json(j.at("w_optimizer"), "search.w_optimizer");
    c.alpha_optimizer = adam_config_from_json(j.at("alpha_optimizer"), "search.alpha_optimizer");
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.train_fraction = j.at("train_fraction").get<double>();
    c.score_source = parse_source(j.at("score_source").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("search: ") + e.what());
  }
  c.validate();
  return c;
}

OptimizerState OptimizerState::zeros(const Supernet& net) {
  std::size_t n = 0;
  for (const auto* p : net.body().parameters()) n += p->size();
  OptimizerState s;
  s.w_momentum.assign(n, 0.0);
  s.alpha_m.assign(net.arch().alpha.size(), 0.0);
  s.alpha_v.assign(net.arch().alpha.size(), 0.0);
  return s;
}

StepResult bilevel_step(Supernet& net, const Batch& train, const Batch& val, const SearchConfig& cfg,
                        OptimizerState& state, double w_lr, const StepObservers& obs) {
  StepResult r;
  {
    PassOptions o;
    o.alpha_grad = true;
    SupernetPass vp = net.run(val.images, val.labels, o);
    r.val_loss = vp.loss();
    r.alpha_grad = vp.alpha_grad();
    if (obs.on_val_pass) obs.on_val_pass(vp);
  }
  adam_step(net.arch().alpha, r.alpha_grad, cfg.alpha_optimizer, state.alpha_m, state.alpha_v, state.alpha_step);
  {
    PassOptions o;
    o.alpha_grad = obs.train_alpha_grad;
    SupernetPass tp = net.run_trainable(train.images, train.labels, o);
    r.train_loss = tp.loss();
    if (obs.on_train_pass) obs.on_train_pass(tp);
  }
  sgd_step(net.body(), cfg.w_optimizer, w_lr, state.w_momentum);
  return r;
}

// ---------------------------------------------------------------------------

SelectionLoop::SelectionLoop(std::size_t T, std::size_t C, bool every_epoch, bool strict, std::size_t max_epochs,
                             Genotype a0)
    : T_(T), C_(C), every_epoch_(every_epoch), strict_(strict), max_epochs_(max_epochs), current_(std::move(a0)) {
  if (T_ < 1) throw std::invalid_argument("selection loop: T must be >= 1");
}

bool SelectionLoop::condition() const {
  if (!strict_) return t_ <= T_ && !(C_ > 0 && cnt_ >= C_);
  // Past T without per-epoch selection nothing can change cnt any more.
  if (!every_epoch_) return t_ <= T_;
  return cnt_ < C_ || t_ <= T_;
}

bool SelectionLoop::running() const { return t_ <= max_epochs_ && condition(); }

void SelectionLoop::select(const Genotype& a) {
  cnt_ = (a == current_) ? cnt_ + 1 : 0;
  current_ = a;
  ++selections_;
}

// ---------------------------------------------------------------------------

Json to_json(const EpochRecord& r, const SearchSpaceConfig& space) {
  Json crit = Json::object();
  for (const auto& c : r.criteria) {
    Json e{{"active", c.active}, {"selected", c.selected}, {"cnt", c.cnt}};
    if (c.selected) {
      e["genotype"] = c.genotype.str();
      e["batches"] = c.scores ? c.scores->batches : 0;
    }
    crit[std::string(criterion_name(c.criterion))] = e;
  }
  Json beta = Json::array();
  for (std::size_t o = 0; o < r.beta.rows(); ++o) {
    Json row = Json::array();
    for (std::size_t e = 0; e < r.beta.cols(); ++e) row.push_back(r.beta(o, e));
    beta.push_back(row);
  }
  Json ops = Json::array();
  for (auto k : space.ops) ops.push_back(std::string(op_name(k)));
  return Json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"w_lr", r.w_lr},
              {"ops", ops},       {"beta", beta},               {"criteria", crit}};
}

void write_trajectory_jsonl(std::ostream& os, const Trajectory& t, const SearchSpaceConfig& space) {
  for (const auto& r : t.epochs) os << to_json(r, space).dump() << '\n';
}

void write_epoch_scores_csv(std::ostream& os, const EpochRecord& r, const SearchSpaceConfig& space) {
  bool header = true;
  for (const auto& c : r.criteria) {
    if (!c.selected || !c.scores) continue;
    write_scores_csv(os, *c.scores, r.beta, space, header);
    header = false;
  }
  if (header) os << "edge,op_kind,beta,score,criterion,batches\n";
}

// ---------------------------------------------------------------------------

namespace {

Split subset(const Split& s, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  Batch b = gather(s, idx);
  return Split{std::move(b.images), std::move(b.labels)};
}

Genotype initial_genotype(const SearchSpaceConfig& space) {
  return genotype_from_scores(Matrix(space.op_count(), space.edge_count(), 1.0), space);
}

} // namespace

SearchData split_for_search(const Dataset& d, const SearchConfig& cfg) {
  const std::size_t n = d.train.size();
  const auto nw = static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(n)));
  if (nw < cfg.batch_size || n - nw < cfg.batch_size) {
    throw std::invalid_argument("search: train split of " + std::to_string(n) + " samples is too small for fraction " +
                                std::to_string(cfg.train_fraction) + " with batch size " +
                                std::to_string(cfg.batch_size));
  }
  return {subset(d.train, 0, nw), subset(d.train, nw, n)};
}

SearchResult run_search(const SearchConfig& cfg, const SearchSpaceConfig& space, const Dataset& data,
                        const SearchHooks& hooks) {
  cfg.validate();
  space.validate();
  const SearchData sd = split_for_search(data, cfg);

  Supernet net = Supernet::build(space, cfg.seed);
  OptimizerState opt = OptimizerState::zeros(net);
  const auto crits = cfg.criteria();
  std::vector<SelectionLoop> loops;
  std::vector<std::size_t> stop_epoch(crits.size(), 0);
  for (std::size_t k = 0; k < crits.size(); ++k) {
    loops.emplace_back(cfg.epochs, cfg.patience, cfg.eval_every_epoch, cfg.strict_alg1, cfg.max_epochs,
                       initial_genotype(space));
  }
  Rng rng = make_rng(cfg.seed, kShuffleStream);
  Trajectory trace;

  for (std::size_t t = 1;; ++t) {
    std::vector<bool> active(crits.size());
    for (std::size_t k = 0; k < crits.size(); ++k) active[k] = loops[k].running();
    if (std::none_of(active.begin(), active.end(), [](bool a) { return a; })) break;

    const double lr = cosine_lr(cfg.w_optimizer, t - 1, cfg.epochs);
    const auto w_batches = make_batches(sd.w_split, cfg.batch_size, &rng);
    const auto a_batches = make_batches(sd.alpha_split, cfg.batch_size, &rng);

    std::vector<ScoreAccumulator> acc(crits.size());
    auto collect = [&](const SupernetPass& pass) {
      for (std::size_t k = 0; k < crits.size(); ++k) {
        if (active[k] && crits[k] != Criterion::magnitude) acc[k].add(batch_scores(crits[k], pass));
      }
    };
    StepObservers obs;
    if (cfg.score_source == ScoreSource::val) {
      obs.on_val_pass = collect;
    } else {
      obs.on_train_pass = collect;
      obs.train_alpha_grad = true;
    }

    EpochRecord rec;
    rec.epoch = t;
    rec.w_lr = lr;
    for (std::size_t i = 0; i < w_batches.size(); ++i) {
      StepResult r = bilevel_step(net, w_batches[i], a_batches[i % a_batches.size()], cfg, opt, lr, obs);
      rec.train_loss += r.train_loss;
      rec.val_loss += r.val_loss;
    }
    rec.train_loss /= static_cast<double>(w_batches.size());
    rec.val_loss /= static_cast<double>(w_batches.size());
    rec.beta = beta(net.arch());

    for (std::size_t k = 0; k < crits.size(); ++k) {
      CriterionEpoch ce;
      ce.criterion = crits[k];
      ce.active = active[k];
      if (active[k]) {
        stop_epoch[k] = t;
        if (loops[k].selects_now()) {
          ScoreMatrix s = crits[k] == Criterion::magnitude ? magnitude_scores(net.arch()) : acc[k].finalize();
          if (hooks.adjust_scores) hooks.adjust_scores(t, s);
          ce.genotype = select_genotype(s, space);
          loops[k].select(ce.genotype);
          ce.selected = true;
          ce.scores = std::move(s);
        }
        loops[k].advance();
      }
      ce.cnt = loops[k].cnt();
      rec.criteria.push_back(std::move(ce));
    }
    trace.epochs.push_back(std::move(rec));
    if (hooks.on_epoch) hooks.on_epoch(trace.epochs.back(), net, opt);
  }

  std::vector<CriterionOutcome> outcomes;
  for (std::size_t k = 0; k < crits.size(); ++k) {
    outcomes.push_back({crits[k], loops[k].current(), stop_epoch[k], loops[k].selections(), loops[k].capped()});
  }
  Genotype final = outcomes.front().final;
  return SearchResult{std::move(final), std::move(outcomes), std::move(trace), std::move(net), std::move(opt)};
}

std::vector<SearchResult> run_search_suite(const SearchConfig& cfg, const SearchSpaceConfig& space,
                                           const Dataset& data, const std::vector<std::uint64_t>& seeds,
                                           std::size_t jobs) {
  std::vector<std::optional<SearchResult>> slots(seeds.size());
  parallel_for(seeds.size(), jobs, [&](std::size_t i) {
    SearchConfig c = cfg;
    c.seed = seeds[i];
    slots[i] = run_search(c, space, data);
  });
  std::vector<SearchResult> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

ScoreMatrix score_supernet(const Supernet& net, Criterion c, const std::vector<Batch>& batches) {
  if (c == Criterion::magnitude) return magnitude_scores(net.arch());
  ScoreAccumulator acc;
  for (const auto& b : batches) {
    PassOptions o;
    o.alpha_grad = true;
    acc.add(batch_scores(c, net.run(b.images, b.labels, o)));
  }
  return acc.finalize();
}

} // namespace ostr
