#include "ostr/oracle.hpp"

#include "ostr/json_util.hpp"
#include "ostr/parallel.hpp"
#include "ostr/rng.hpp"
#include "ostr/supernet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace ostr {

namespace {

constexpr std::uint64_t kStandaloneShuffleStream = 9001;

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Population standard deviation (seed spread, not an estimator).
double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace

std::vector<Genotype> enumerate_genotypes(const SearchSpaceConfig& space, std::size_t budget) {
  const std::size_t P = space.op_count(), E = space.edge_count();
  std::size_t count = 1;
  for (std::size_t e = 0; e < E; ++e) {
    if (count > budget / P) {
      throw std::invalid_argument("enumerate_genotypes: " + std::to_string(P) + "^" + std::to_string(E) +
                                  " genotypes exceed the budget of " + std::to_string(budget) +
                                  "; use the mini space or raise the budget");
    }
    count *= P;
  }
  std::vector<Genotype> out;
  out.reserve(count);
  Genotype g{std::vector<std::size_t>(E, 0)};
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(g);
    // Odometer with the last edge varying fastest.
    for (std::size_t e = E; e-- > 0;) {
      if (++g.choice[e] < P) break;
      g.choice[e] = 0;
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("train: at least one seed required");
  if (batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
  ostr::validate(optimizer, "train.optimizer");
}

Json to_json(const TrainConfig& c) {
  return Json{{"epochs", c.epochs}, {"seeds", c.seeds}, {"batch_size", c.batch_size}, {"optimizer", to_json(c.optimizer)}};
}

TrainConfig train_config_from_json(const Json& j) {
  check_fields(j, "train", {"epochs", "seeds", "batch_size", "optimizer"});
  TrainConfig c;
  try {
    c.epochs = j.at("epochs").get<std::size_t>();
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("train: ") + e.what());
  }
  c.optimizer = sgd_config_from_json(j.at("optimizer"), "train.optimizer");
  c.validate();
  return c;
}

double StandaloneResult::val_mean() const { return mean(val_acc); }
double StandaloneResult::val_std() const { return stddev(val_acc); }
double StandaloneResult::test_mean() const { return mean(test_acc); }
double StandaloneResult::test_std() const { return stddev(test_acc); }

StandaloneResult train_standalone(const SearchSpaceConfig& space, const Genotype& g, const Dataset& data,
                                  const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  StandaloneResult res;
  for (std::uint64_t seed : cfg.seeds) {
    try {
      StandaloneNet net = StandaloneNet::create(space, g, seed);
      std::size_t n = 0;
      for (const auto* p : net.body().parameters()) n += p->size();
      std::vector<double> momentum(n, 0.0);
      Rng rng = make_rng(seed, kStandaloneShuffleStream);
      for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
        const double lr = cosine_lr(cfg.optimizer, ep, cfg.epochs);
        for (const auto& b : make_batches(data.train, cfg.batch_size, &rng)) {
          ad::Tape tape;
          ad::Var loss = ad::cross_entropy(net.logits(tape, b.images, true), b.labels);
          tape.backward(loss);
          sgd_step(net.body(), cfg.optimizer, lr, momentum);
        }
      }
      const StandaloneNet& frozen = net;
      auto eval = [&](const Split& s) {
        ad::Tape tape;
        return accuracy(frozen.logits(tape, s.images).value(), space.classes, s.labels);
      };
      res.val_acc.push_back(eval(data.val));
      res.test_acc.push_back(eval(data.test));
    } catch (const ad::NumericError& e) {
      if (res.failed_seeds++ == 0) res.failure = e.what();
    }
  }
  res.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

// ---------------------------------------------------------------------------

std::optional<OracleEntry> OracleTable::lookup(const Genotype& g) const {
  auto it = entries.find(g.str());
  if (it == entries.end()) return std::nullopt;
  return it->second;
}

std::size_t OracleTable::rank(const Genotype& g) const {
  auto e = lookup(g);
  if (!e || e->failed) throw std::invalid_argument("oracle rank: no usable entry for " + g.str());
  std::size_t better = 0;
  for (const auto& [k, v] : entries) better += !v.failed && v.test_acc > e->test_acc;
  return better + 1;
}

std::size_t OracleTable::ranked_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& kv) { return !kv.second.failed; }));
}

Genotype OracleTable::best() const {
  std::optional<Genotype> best;
  double acc = -1.0;
  for (const auto& [k, v] : entries) {
    if (v.failed) continue;
    Genotype g = Genotype::parse(k);
    if (v.test_acc > acc || (v.test_acc == acc && g < *best)) {
      acc = v.test_acc;
      best = g;
    }
  }
  if (!best) throw std::invalid_argument("oracle: table has no usable entries");
  return *best;
}

Json to_json(const OracleTable& t) {
  Json entries = Json::object();
  for (const auto& [k, e] : t.entries) {
    entries[k] = Json{{"val_acc", e.val_acc},   {"test_acc", e.test_acc},           {"seeds", e.seeds},
                      {"val_std", e.val_std},   {"test_std", e.test_std},           {"train_seconds", e.train_seconds},
                      {"failed", e.failed}};
  }
  return Json{{"space", {{"fingerprint", t.fingerprint()}, {"config", to_json(t.space)}}},
              {"provenance", t.provenance == Provenance::exhaustive ? "exhaustive" : "ingested"},
              {"complete", t.complete},
              {"budget", t.budget},
              {"entries", entries}};
}

OracleTable table_from_json(const Json& j) {
  check_fields(j, "oracle table", {"space", "entries"}, {"provenance", "complete", "budget"});
  check_fields(j.at("space"), "oracle table.space", {"fingerprint", "config"});
  OracleTable t;
  t.space = space_from_json(j.at("space").at("config"));
  const auto& fp = j.at("space").at("fingerprint");
  if (!fp.is_string() || fp.get<std::string>() != t.fingerprint()) {
    throw std::invalid_argument("oracle table.space.fingerprint: does not match the embedded space config");
  }
  t.provenance = Provenance::ingested;
  if (j.contains("provenance")) {
    const auto p = j.at("provenance");
    if (p == "exhaustive") {
      t.provenance = Provenance::exhaustive;
    } else if (p != "ingested") {
      throw std::invalid_argument("oracle table.provenance: expected 'exhaustive' or 'ingested'");
    }
  }
  if (!j.at("entries").is_object()) throw std::invalid_argument("oracle table.entries: expected an object");
  for (const auto& [key, v] : j.at("entries").items()) {
    const std::string where = "oracle table.entries['" + key + "']";
    check_fields(v, where, {"val_acc", "test_acc", "seeds"}, {"val_std", "test_std", "train_seconds", "failed"});
    Genotype g;
    try {
      g = Genotype::parse(key);
      validate(g, t.space);
    } catch (const std::exception& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
    OracleEntry e;
    try {
      e.val_acc = v.at("val_acc").get<double>();
      e.test_acc = v.at("test_acc").get<double>();
      e.seeds = v.at("seeds").get<std::size_t>();
      if (v.contains("val_std")) e.val_std = v.at("val_std").get<double>();
      if (v.contains("test_std")) e.test_std = v.at("test_std").get<double>();
      if (v.contains("train_seconds")) e.train_seconds = v.at("train_seconds").get<double>();
      if (v.contains("failed")) e.failed = v.at("failed").get<bool>();
    } catch (const nlohmann::json::exception& ex) {
      throw std::invalid_argument(where + ": " + ex.what());
    }
    for (auto [name, x] : {std::pair{"val_acc", e.val_acc}, std::pair{"test_acc", e.test_acc}}) {
      if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument(where + "." + name + ": accuracy outside [0, 1]");
    }
    if (!t.entries.emplace(g.str(), e).second) throw std::invalid_argument(where + ": duplicate genotype");
  }
  if (j.contains("budget")) t.budget = j.at("budget");
  const double total = std::pow(static_cast<double>(t.space.op_count()), static_cast<double>(t.space.edge_count()));
  t.complete = j.contains("complete") ? j.at("complete").get<bool>()
                                      : static_cast<double>(t.entries.size()) == total;
  if (t.complete && static_cast<double>(t.entries.size()) != total && t.provenance == Provenance::exhaustive) {
    throw std::invalid_argument("oracle table: marked complete but holds " + std::to_string(t.entries.size()) +
                                " of " + std::to_string(static_cast<std::size_t>(total)) + " genotypes");
  }
  return t;
}

void save_table(const OracleTable& t, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw std::runtime_error("save_table: cannot open " + tmp);
    os << to_json(t).dump(2) << '\n';
    if (!os) throw std::runtime_error("save_table: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

OracleTable ingest_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("ingest_table: cannot open " + path);
  Json j;
  try {
    j = Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("ingest_table: " + path + ": " + e.what());
  }
  return table_from_json(j);
}

namespace {

OracleEntry to_entry(const StandaloneResult& r) {
  OracleEntry e;
  e.failed = r.failed();
  e.seeds = r.val_acc.size();
  e.val_acc = r.val_mean();
  e.test_acc = r.test_mean();
  e.val_std = r.val_std();
  e.test_std = r.test_std();
  e.train_seconds = r.train_seconds;
  return e;
}

} // namespace

OracleTable exhaustive_oracle(const SearchSpaceConfig& space, const Dataset& data, const TrainConfig& cfg,
                              const OracleOptions& opts) {
  cfg.validate();
  const auto genotypes = enumerate_genotypes(space, opts.budget);
  OracleTable table;
  table.space = space;
  table.budget = to_json(cfg);
  if (opts.resume && !opts.path.empty() && std::filesystem::exists(opts.path)) {
    OracleTable prior = ingest_table(opts.path);
    if (prior.fingerprint() != table.fingerprint()) {
      throw std::invalid_argument("oracle resume: " + opts.path + " belongs to a different search space");
    }
    if (prior.budget != table.budget) {
      throw std::invalid_argument("oracle resume: " + opts.path + " was trained under a different budget");
    }
    table.entries = std::move(prior.entries);
    if (prior.complete && table.entries.size() == genotypes.size()) {
      table.complete = true;
      return table;
    }
  }

  std::vector<Genotype> todo;
  for (const auto& g : genotypes) {
    if (!table.entries.count(g.str())) todo.push_back(g);
  }
  std::mutex sink;
  try {
    parallel_for(todo.size(), opts.jobs, [&](std::size_t i) {
      const OracleEntry e = to_entry(train_standalone(space, todo[i], data, cfg));
      std::lock_guard lock(sink);
      table.entries[todo[i].str()] = e;
      if (!opts.path.empty()) save_table(table, opts.path);
      if (opts.on_entry) opts.on_entry(todo[i].str(), e);
    });
  } catch (...) {
    table.complete = false;
    if (!opts.path.empty()) save_table(table, opts.path);
    throw;
  }
  table.complete = table.entries.size() == genotypes.size();
  if (!opts.path.empty()) save_table(table, opts.path);
  return table;
}

std::vector<SweepPoint> edge_sweep(const SearchSpaceConfig& space, const Genotype& base, std::size_t edge,
                                   const Dataset& data, const TrainConfig& cfg, const OracleTable* cache) {
  validate(base, space);
  if (edge >= space.edge_count()) throw std::out_of_range("edge_sweep: edge " + std::to_string(edge) + " out of range");
  const bool usable = cache && cache->fingerprint() == fingerprint(space) && cache->budget == to_json(cfg);
  std::vector<SweepPoint> out;
  for (std::size_t o = 0; o < space.op_count(); ++o) {
    SweepPoint p;
    p.op = o;
    p.genotype = base;
    p.genotype.choice[edge] = o;
    std::optional<OracleEntry> hit = usable ? cache->lookup(p.genotype) : std::nullopt;
    p.result = hit ? *hit : to_entry(train_standalone(space, p.genotype, data, cfg));
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("spearman: inputs differ in length");
  if (xs.size() < 3) throw std::invalid_argument("spearman: insufficient pairs (need at least 3)");
  for (double v : xs) if (std::isnan(v)) throw std::invalid_argument("spearman: NaN input");
  for (double v : ys) if (std::isnan(v)) throw std::invalid_argument("spearman: NaN input");
  const auto rx = average_ranks(xs), ry = average_ranks(ys);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("spearman: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationReport correlate_edge(std::size_t edge, const ScoreMatrix& scores, std::span<const SweepPoint> sweep) {
  CorrelationReport r;
  r.edge = edge;
  r.criterion = scores.tag;
  std::vector<double> xs, ys;
  for (const auto& p : sweep) {
    if (p.result.failed) {
      ++r.excluded;
      continue;
    }
    r.pairs.push_back({p.op, scores.values(p.op, edge), p.result.test_acc});
    xs.push_back(r.pairs.back().indicator);
    ys.push_back(r.pairs.back().standalone_acc);
  }
  r.rho = spearman(xs, ys);
  return r;
}

void write_correlation_csv(std::ostream& os, std::span<const CorrelationReport> reports,
                           const SearchSpaceConfig& space) {
  os << "edge,op_kind,indicator,criterion,standalone_acc\n";
  for (const auto& r : reports) {
    for (const auto& p : r.pairs) {
      os << r.edge << ',' << op_name(space.ops.at(p.op)) << ',' << std::setprecision(17) << p.indicator << ','
         << criterion_name(r.criterion) << ',' << p.standalone_acc << '\n';
    }
  }
}

} // namespace ostr
