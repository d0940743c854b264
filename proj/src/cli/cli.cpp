#include "ostr/cli.hpp"

#include "ostr/criteria.hpp"
#include "ostr/datasets.hpp"
#include "ostr/json_util.hpp"
#include "ostr/oracle.hpp"
#include "ostr/parallel.hpp"
#include "ostr/search.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>

#ifndef OSTR_VERSION
#define OSTR_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;

namespace ostr::cli {

std::string version() { return OSTR_VERSION; }

namespace {

constexpr std::array<double, 4> kTaylorSteps{0.2, 0.1, 0.05, 0.025};

struct Flags {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  // search
  std::string criterion;
  std::vector<std::string> track;
  std::vector<std::uint64_t> seeds;
  // oracle
  bool resume = false;
  std::string ingest;
  // correlate / diagnose
  std::string checkpoint;
  std::string oracle;
  std::string base;
  std::vector<std::size_t> edges;
  std::optional<std::size_t> op;
  // report
  std::vector<std::size_t> epochs;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

Json read_json_file(const std::string& path, std::string_view what) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument(std::string(what) + ": cannot open " + path);
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string(what) + ": " + path + " is not valid JSON: " + e.what());
  }
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string());
    os << content;
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// A manifest passed as --config contributes its resolved config.
Json load_config(const std::string& path, std::string_view command) {
  if (path.empty()) return Json::object();
  Json j = read_json_file(path, "config");
  if (j.is_object() && j.contains("manifest_version")) {
    if (j.value("command", "") != command) {
      throw std::invalid_argument("config: manifest " + path + " records command '" + j.value("command", "") +
                                  "', not '" + std::string(command) + "'");
    }
    return j.at("config");
  }
  return j;
}

const Json& require(const Json& cfg, const char* key) {
  if (!cfg.contains(key)) throw std::invalid_argument(std::string("config: missing field '") + key + "'");
  return cfg.at(key);
}

// Either a preset name or a full space object.
SearchSpaceConfig resolve_space(const Json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "mini") return SearchSpaceConfig::mini();
    if (name == "nas_bench_201") return SearchSpaceConfig::nas_bench_201();
    throw std::invalid_argument("space: unknown preset '" + name + "' (expected 'mini' or 'nas_bench_201')");
  }
  return space_from_json(j);
}

void check_compatible(const SearchSpaceConfig& space, const DatasetConfig& d) {
  if (space.classes != d.classes) {
    throw std::invalid_argument("dataset.classes (" + std::to_string(d.classes) + ") does not match space.classes (" +
                                std::to_string(space.classes) + ")");
  }
  if (space.input_shape != std::array<std::size_t, 3>{1, d.height, d.width}) {
    throw std::invalid_argument("dataset image shape does not match space.input_shape");
  }
}

/// Bookkeeping for one invocation; written to <out>/manifest.json at the end.
struct Run {
  std::string command;
  fs::path out;
  Json config;
  Json seed;
  std::string started = utc_now();
  std::vector<std::string> outputs;
  std::mutex m;

  fs::path output(const std::string& rel) {
    std::lock_guard lock(m);
    outputs.push_back(rel);
    return out / rel;
  }

  void write_manifest(const std::string& status, const std::string& error = {}) {
    Json j{{"manifest_version", 1}, {"command", command},    {"config", config},   {"seed", seed},
           {"version", version()},  {"started", started},    {"finished", utc_now()}, {"status", status},
           {"outputs", outputs}};
    if (!error.empty()) j["error"] = error;
    write_file_atomic(out / "manifest.json", j.dump(2) + "\n");
  }
};

// Runs `body`, then records the manifest with the outcome either way.
template <class F>
int finish(Run& run, F&& body) {
  fs::create_directories(run.out);
  try {
    body();
  } catch (const ad::NumericError& e) {
    run.write_manifest("numeric_abort", e.what());
    throw;
  } catch (const std::exception& e) {
    run.write_manifest("failed", e.what());
    throw;
  }
  run.write_manifest("ok");
  return kExitOk;
}

void expect_header(const fs::path& p, std::string_view header) {
  std::ifstream is(p);
  std::string line;
  if (!std::getline(is, line) || line != header) throw std::runtime_error("output validation failed for " + p.string());
}

// ---------------------------------------------------------------------------
// search

Json outcome_json(const CriterionOutcome& o, const SearchSpaceConfig& space) {
  return Json{{"criterion", std::string(criterion_name(o.criterion))},
              {"genotype", o.final.str()},
              {"edges", genotype_to_json(o.final, space)},
              {"stop_epoch", o.stop_epoch},
              {"selections", o.selections},
              {"capped", o.capped}};
}

// Trajectory lines are flushed per epoch so an aborted run keeps its trace.
SearchResult search_into(Run& run, const std::string& prefix, const SearchConfig& sc, const SearchSpaceConfig& space,
                         const DatasetConfig& dc, const Dataset& data) {
  fs::create_directories(run.out / prefix / "scores");
  std::ofstream traj(run.output(prefix + "trajectory.jsonl"), std::ios::trunc);
  if (!traj) throw std::runtime_error("cannot open trajectory output");
  std::size_t lines = 0;

  SearchHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r, const Supernet&, const OptimizerState&) {
    traj << to_json(r, space).dump() << '\n' << std::flush;
    ++lines;
    if (std::none_of(r.criteria.begin(), r.criteria.end(), [](const CriterionEpoch& c) { return c.selected; })) return;
    char name[32];
    std::snprintf(name, sizeof name, "scores/epoch_%04zu.csv", r.epoch);
    std::ofstream os(run.output(prefix + name), std::ios::trunc);
    write_epoch_scores_csv(os, r, space);
  };
  SearchResult res = run_search(sc, space, data, hooks);
  traj.close();

  Json outcomes = Json::array();
  for (const auto& o : res.outcomes) outcomes.push_back(outcome_json(o, space));
  Json final{{"criterion", std::string(criterion_name(sc.criterion))},
             {"genotype", res.final.str()},
             {"epochs_run", res.trace.epochs.size()},
             {"outcomes", outcomes}};
  write_file_atomic(run.output(prefix + "final.json"), final.dump(2) + "\n");
  write_file_atomic(run.output(prefix + "genotype.txt"), res.final.str() + "\n");

  Json meta{{"space", to_json(space)}, {"dataset", to_json(dc)}, {"search", to_json(sc)}, {"final", final}};
  const fs::path ckpt = run.output(prefix + "checkpoint.bin");
  save_checkpoint(ckpt.string(), res.net, res.optimizer, meta);

  // Validate what was written.
  std::ifstream is(run.out / (prefix + "trajectory.jsonl"));
  std::size_t n = 0;
  for (std::string line; std::getline(is, line); ++n) {
    if (Json::parse(line).is_discarded()) throw std::runtime_error("trajectory validation failed");
  }
  if (n != lines || n != res.trace.epochs.size()) throw std::runtime_error("trajectory validation failed");
  (void)load_checkpoint(ckpt.string());
  return res;
}

int cmd_search(const Flags& f, std::ostream& out, std::ostream& err) {
  Json cfg = load_config(f.config, "search");
  check_fields(cfg, "config", {"space", "dataset", "search"}, {"seeds"});
  const SearchSpaceConfig space = resolve_space(cfg["space"]);
  const DatasetConfig dc = dataset_config_from_json(cfg["dataset"]);
  check_compatible(space, dc);
  Json sj = cfg["search"];
  if (sj.is_object()) {
    if (!f.criterion.empty()) sj["criterion"] = f.criterion;
    if (!f.track.empty()) sj["track"] = f.track;
    if (f.seed) sj["seed"] = *f.seed;
  }
  const SearchConfig sc = search_config_from_json(sj);
  std::vector<std::uint64_t> seeds = f.seeds;
  if (seeds.empty() && cfg.contains("seeds")) {
    try {
      seeds = cfg["seeds"].get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("config.seeds: expected an array of non-negative integers");
    }
  }

  Run run;
  run.command = "search";
  run.out = f.out;
  run.config = Json{{"space", to_json(space)}, {"dataset", to_json(dc)}, {"search", to_json(sc)}};
  if (!seeds.empty()) run.config["seeds"] = seeds;
  run.seed = seeds.empty() ? Json(sc.seed) : Json(seeds);

  return finish(run, [&] {
    const Dataset data = make_dataset(dc);
    if (seeds.empty()) {
      const SearchResult r = search_into(run, "", sc, space, dc, data);
      for (const auto& o : r.outcomes) {
        if (o.capped) err << "warning: " << criterion_name(o.criterion) << " hit max_epochs without a stable selection\n";
      }
      out << r.final.str() << '\n';
      return;
    }
    std::vector<Genotype> finals(seeds.size());
    parallel_for(seeds.size(), f.jobs, [&](std::size_t i) {
      SearchConfig c = sc;
      c.seed = seeds[i];
      finals[i] = search_into(run, "seed_" + std::to_string(seeds[i]) + "/", c, space, dc, data).final;
    });
    for (std::size_t i = 0; i < seeds.size(); ++i) out << "seed=" << seeds[i] << ' ' << finals[i].str() << '\n';
  });
}

// ---------------------------------------------------------------------------
// oracle

int cmd_oracle(const Flags& f, std::ostream& out, std::ostream& err) {
  Json cfg = load_config(f.config, "oracle");
  check_fields(cfg, "config", {"space", "dataset", "train"}, {"budget"});
  const SearchSpaceConfig space = resolve_space(cfg["space"]);
  const DatasetConfig dc = dataset_config_from_json(cfg["dataset"]);
  check_compatible(space, dc);
  Json tj = cfg["train"];
  if (f.seed && tj.is_object()) tj["seeds"] = std::vector<std::uint64_t>{*f.seed};
  const TrainConfig tc = train_config_from_json(tj);
  std::size_t budget = 1024;
  if (cfg.contains("budget")) {
    if (!cfg["budget"].is_number_unsigned()) throw std::invalid_argument("config.budget: expected a positive integer");
    budget = cfg["budget"].get<std::size_t>();
  }

  Run run;
  run.command = "oracle";
  run.out = f.out;
  run.config = Json{{"space", to_json(space)}, {"dataset", to_json(dc)}, {"train", to_json(tc)}, {"budget", budget}};
  run.seed = tc.seeds;

  return finish(run, [&] {
    const fs::path path = run.output("oracle.json");
    OracleTable table;
    if (!f.ingest.empty()) {
      table = ingest_table(f.ingest);
      if (table.fingerprint() != fingerprint(space)) {
        throw std::runtime_error("oracle: " + f.ingest + " was built for a different search space");
      }
      save_table(table, path.string());
    } else {
      const Dataset data = make_dataset(dc);
      OracleOptions opts;
      opts.jobs = f.jobs;
      opts.budget = budget;
      opts.path = path.string();
      opts.resume = f.resume;
      std::mutex log;
      opts.on_entry = [&](const std::string& g, const OracleEntry& e) {
        std::lock_guard lock(log);
        err << g << " val=" << e.val_acc << " test=" << e.test_acc << (e.failed ? " failed" : "") << '\n';
      };
      table = exhaustive_oracle(space, data, tc, opts);
    }
    const OracleTable check = ingest_table(path.string());
    if (check.entries.size() != table.entries.size()) throw std::runtime_error("oracle table validation failed");
    out << "entries=" << table.entries.size() << " complete=" << (table.complete ? "true" : "false");
    if (table.ranked_count() > 0) {
      const Genotype best = table.best();
      out << " best=" << best.str() << " test_acc=" << table.lookup(best)->test_acc;
    }
    out << '\n';
  });
}

// ---------------------------------------------------------------------------
// correlate / diagnose share a checkpoint plus the data it was searched on

struct Snapshot {
  Checkpoint ckpt;
  DatasetConfig dataset;
  SearchConfig search;
};

Snapshot load_snapshot(const Json& cfg) {
  const std::string path = require(cfg, "checkpoint").get<std::string>();
  Checkpoint ck = load_checkpoint(path);
  if (cfg.contains("space") && fingerprint(resolve_space(cfg["space"])) != fingerprint(ck.net.config())) {
    throw std::runtime_error("checkpoint " + path + " belongs to a different search space than the config");
  }
  const Json& meta = ck.meta;
  auto pick = [&](const char* key) -> const Json& {
    if (cfg.contains(key)) return cfg.at(key);
    if (meta.is_object() && meta.contains(key)) return meta.at(key);
    throw std::invalid_argument(std::string("config: missing field '") + key + "' (the checkpoint does not record it)");
  };
  DatasetConfig dc = dataset_config_from_json(pick("dataset"));
  SearchConfig sc = search_config_from_json(pick("search"));
  check_compatible(ck.net.config(), dc);
  return Snapshot{std::move(ck), dc, sc};
}

// Unshuffled alpha-side batches of the search data.
std::vector<Batch> probe_batches(const Snapshot& s, const Dataset& data) {
  return make_batches(split_for_search(data, s.search).alpha_split, s.search.batch_size, nullptr);
}

std::vector<std::size_t> edge_list(const Json& cfg, const SearchSpaceConfig& space) {
  std::vector<std::size_t> edges;
  if (cfg.contains("edges")) {
    try {
      edges = cfg["edges"].get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("config.edges: expected an array of edge indices");
    }
  } else {
    for (std::size_t e = 0; e < space.edge_count(); ++e) edges.push_back(e);
  }
  for (auto e : edges) {
    if (e >= space.edge_count()) throw std::invalid_argument("config.edges: edge " + std::to_string(e) + " out of range");
  }
  return edges;
}

int cmd_correlate(const Flags& f, std::ostream& out, std::ostream&) {
  Json cfg = load_config(f.config, "correlate");
  check_fields(cfg, "config", {}, {"checkpoint", "oracle", "edges", "base", "space", "dataset", "search", "train"});
  if (!f.checkpoint.empty()) cfg["checkpoint"] = f.checkpoint;
  if (!f.oracle.empty()) cfg["oracle"] = f.oracle;
  if (!f.edges.empty()) cfg["edges"] = f.edges;
  if (!f.base.empty()) cfg["base"] = f.base;
  const std::string oracle_path = require(cfg, "oracle").get<std::string>();

  Snapshot snap = load_snapshot(cfg);
  const SearchSpaceConfig& space = snap.ckpt.net.config();
  const OracleTable table = ingest_table(oracle_path);
  if (table.fingerprint() != fingerprint(space)) {
    throw std::runtime_error("correlate: space fingerprint mismatch between checkpoint (" + fingerprint(space) +
                             ") and oracle table (" + table.fingerprint() + ")");
  }
  const TrainConfig tc = train_config_from_json(cfg.contains("train") ? cfg["train"] : table.budget);
  const auto edges = edge_list(cfg, space);
  Genotype base;
  if (cfg.contains("base")) {
    base = Genotype::parse(cfg["base"].get<std::string>());
    validate(base, space);
  } else {
    if (table.ranked_count() == 0) throw std::runtime_error("correlate: oracle table has no usable entries");
    base = table.best();
  }

  Run run;
  run.command = "correlate";
  run.out = f.out;
  run.config = Json{{"checkpoint", cfg["checkpoint"]}, {"oracle", oracle_path}, {"edges", edges},
                    {"base", base.str()},             {"space", to_json(space)}, {"dataset", to_json(snap.dataset)},
                    {"search", to_json(snap.search)}, {"train", to_json(tc)}};
  run.seed = snap.search.seed;

  return finish(run, [&] {
    const Dataset data = make_dataset(snap.dataset);
    const auto batches = probe_batches(snap, data);
    const std::array crits{Criterion::ostr, Criterion::magnitude, Criterion::ostr_star, Criterion::naive_pruning};
    std::vector<ScoreMatrix> scores;
    for (auto c : crits) scores.push_back(score_supernet(snap.ckpt.net, c, batches));

    std::vector<CorrelationReport> reports;
    std::ostringstream lines;
    for (auto e : edges) {
      const auto sweep = edge_sweep(space, base, e, data, tc, &table);
      for (std::size_t k = 0; k < crits.size(); ++k) {
        reports.push_back(correlate_edge(e, scores[k], sweep));
        lines << "edge=" << e << " criterion=" << criterion_name(crits[k]) << " rho=" << reports.back().rho << '\n';
      }
    }
    const fs::path csv = run.output("correlation.csv");
    {
      std::ofstream os(csv, std::ios::trunc);
      write_correlation_csv(os, reports, space);
    }
    expect_header(csv, "edge,op_kind,indicator,criterion,standalone_acc");
    Json summary = Json::array();
    for (const auto& r : reports) {
      summary.push_back({{"edge", r.edge}, {"criterion", std::string(criterion_name(r.criterion))}, {"rho", r.rho},
                         {"excluded", r.excluded}});
    }
    write_file_atomic(run.output("correlation_summary.json"), summary.dump(2) + "\n");
    out << lines.str();
  });
}

int cmd_diagnose(const Flags& f, std::ostream& out, std::ostream&) {
  Json cfg = load_config(f.config, "diagnose");
  check_fields(cfg, "config", {}, {"checkpoint", "edges", "op", "space", "dataset", "search"});
  if (!f.checkpoint.empty()) cfg["checkpoint"] = f.checkpoint;
  if (!f.edges.empty()) cfg["edges"] = f.edges;
  if (f.op) cfg["op"] = *f.op;

  Snapshot snap = load_snapshot(cfg);
  const SearchSpaceConfig& space = snap.ckpt.net.config();
  const auto edges = edge_list(cfg, space);
  std::vector<std::size_t> ops;
  if (cfg.contains("op")) {
    const auto o = cfg["op"].get<std::size_t>();
    if (o >= space.op_count()) throw std::invalid_argument("config.op: op " + std::to_string(o) + " out of range");
    ops.push_back(o);
  } else {
    for (std::size_t o = 0; o < space.op_count(); ++o) ops.push_back(o);
  }

  Run run;
  run.command = "diagnose";
  run.out = f.out;
  run.config = Json{{"checkpoint", cfg["checkpoint"]}, {"edges", edges}, {"space", to_json(space)},
                    {"dataset", to_json(snap.dataset)}, {"search", to_json(snap.search)}};
  if (cfg.contains("op")) run.config["op"] = ops.front();
  run.seed = snap.search.seed;

  return finish(run, [&] {
    const Dataset data = make_dataset(snap.dataset);
    const Batch probe = probe_batches(snap, data).front();
    const Supernet& net = snap.ckpt.net;
    PassOptions po;
    po.alpha_grad = true;
    const SupernetPass pass = net.run(probe.images, probe.labels, po);

    std::vector<EdgeDiagnostic> diag;
    std::vector<RfBound> rf;
    const auto all_diag = edge_diagnostics(pass);
    const auto all_rf = rf_inequality_check(pass);
    std::size_t violations = 0;
    for (std::size_t i = 0; i < all_diag.size(); ++i) {
      const bool keep_edge = std::find(edges.begin(), edges.end(), all_diag[i].edge) != edges.end();
      const bool keep_op = std::find(ops.begin(), ops.end(), all_diag[i].op) != ops.end();
      if (!keep_edge || !keep_op) continue;
      diag.push_back(all_diag[i]);
      rf.push_back(all_rf[i]);
      if (all_rf[i].lhs > all_rf[i].rhs + 1e-9) ++violations;
    }
    const fs::path dpath = run.output("diagnostics.csv");
    {
      std::ofstream os(dpath, std::ios::trunc);
      write_diagnostics_csv(os, diag, rf, space);
    }
    expect_header(dpath, "edge,op_kind,beta,rf_norm,strength,grad_dot,rf_rhs");

    const fs::path tpath = run.output("taylor.csv");
    const fs::path ipath = run.output("taylor_interpolation.csv");
    {
      std::ofstream ts(tpath, std::ios::trunc), is(ipath, std::ios::trunc);
      ts << std::setprecision(17) << "cell,edge,op_kind,actual,est_ostr,est_star\n";
      is << std::setprecision(17) << "cell,edge,op_kind,t,actual_change,first_order,error\n";
      for (std::size_t c = 0; c < space.cells; ++c) {
        for (auto e : edges) {
          for (auto o : ops) {
            const auto name = op_name(space.ops[o]);
            const TaylorDiagnostic t = taylor_error_diagnostic(net, probe.images, probe.labels, c, e, o);
            ts << c << ',' << e << ',' << name << ',' << t.actual << ',' << t.est_ostr << ',' << t.est_star << '\n';
            for (const auto& p : taylor_interpolation(net, probe.images, probe.labels, c, e, o, kTaylorSteps)) {
              is << c << ',' << e << ',' << name << ',' << p.t << ',' << p.actual_change << ',' << p.first_order << ','
                 << p.error << '\n';
            }
          }
        }
      }
    }
    out << "rows=" << diag.size() << " rf_violations=" << violations << '\n';
  });
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const Flags& f, std::ostream& out, std::ostream&) {
  Json cfg = load_config(f.config, "report");
  check_fields(cfg, "config", {"space", "dataset", "search"}, {"epochs"});
  const SearchSpaceConfig space = resolve_space(cfg["space"]);
  const DatasetConfig dc = dataset_config_from_json(cfg["dataset"]);
  check_compatible(space, dc);
  Json sj = cfg["search"];
  if (f.seed && sj.is_object()) sj["seed"] = *f.seed;
  const SearchConfig sc = search_config_from_json(sj);
  std::vector<std::size_t> epochs = f.epochs;
  if (epochs.empty() && cfg.contains("epochs")) {
    try {
      epochs = cfg["epochs"].get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("config.epochs: expected an array of epoch numbers");
    }
  }
  if (epochs.empty()) {
    for (std::size_t e = 0; e <= 100; e += 10) epochs.push_back(e);
  }

  Run run;
  run.command = "report";
  run.out = f.out;
  run.config = Json{{"space", to_json(space)}, {"dataset", to_json(dc)}, {"search", to_json(sc)}, {"epochs", epochs}};
  run.seed = sc.seed;

  return finish(run, [&] {
    const Dataset data = make_dataset(dc);
    const DegenerationReport rep = degeneration_probe(sc, space, data, epochs);
    const fs::path dpath = run.output("degeneration.csv");
    const fs::path spath = run.output("degeneration_summary.csv");
    {
      std::ofstream os(dpath, std::ios::trunc);
      write_degeneration_csv(os, rep, space);
    }
    {
      std::ofstream os(spath, std::ios::trunc);
      write_degeneration_summary_csv(os, rep);
    }
    std::ifstream check(dpath);
    validate_degeneration_csv(check, space);
    expect_header(spath, "epoch,skip_edges_magnitude,skip_edges_ostr,flagged_edges,magnitude_genotype,ostr_genotype");
    const Json summary{{"checkpoints", rep.checkpoints.size()},
                       {"magnitude_skip_nondecreasing", rep.magnitude_skip_nondecreasing},
                       {"magnitude_drifts_to_skip", rep.magnitude_drifts_to_skip}};
    write_file_atomic(run.output("report.json"), summary.dump(2) + "\n");
    out << "checkpoints=" << rep.checkpoints.size() << " magnitude_drifts_to_skip="
        << (rep.magnitude_drifts_to_skip ? "true" : "false") << '\n';
  });
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file or a manifest from an earlier run");
  sub->add_option("--out", f.out, "Output directory")->capture_default_str();
  sub->add_option("--seed", f.seed, "Seed override");
  sub->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Operation-strength differentiable architecture search", "ostr_darts"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  auto* search = app.add_subcommand("search", "Run the bilevel search and select a genotype");
  add_common(search, f);
  search->add_option("--criterion", f.criterion, "Selection criterion: ostr, ostr_star, magnitude, naive_pruning");
  search->add_option("--track", f.track, "Further criteria selected on the same trajectory");
  search->add_option("--seeds", f.seeds, "Run one search per seed (parallel over --jobs)");

  auto* oracle = app.add_subcommand("oracle", "Train every genotype of a small space stand-alone");
  add_common(oracle, f);
  oracle->add_flag("--resume", f.resume, "Continue an existing table in --out");
  oracle->add_option("--ingest", f.ingest, "Validate and adopt an existing oracle table instead of training");

  auto* correlate = app.add_subcommand("correlate", "Rank-correlate criteria with stand-alone accuracy per edge");
  add_common(correlate, f);
  correlate->add_option("--checkpoint", f.checkpoint, "Supernet checkpoint written by search");
  correlate->add_option("--oracle", f.oracle, "Oracle table JSON");
  correlate->add_option("--edge", f.edges, "Edge(s) to sweep; default all");
  correlate->add_option("--base", f.base, "Genotype the sweep varies; default the oracle's best");

  auto* diagnose = app.add_subcommand("diagnose", "Per-edge strength, residual-feature and Taylor diagnostics");
  add_common(diagnose, f);
  diagnose->add_option("--checkpoint", f.checkpoint, "Supernet checkpoint written by search");
  diagnose->add_option("--edge", f.edges, "Edge(s) to diagnose; default all");
  diagnose->add_option("--op", f.op, "Op index to diagnose; default all");

  auto* report = app.add_subcommand("report", "Degeneration probe: magnitude vs strength over a long run");
  add_common(report, f);
  report->add_option("--epochs", f.epochs, "Probe epochs (0 = before training)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (search->parsed()) return cmd_search(f, out, err);
    if (oracle->parsed()) return cmd_oracle(f, out, err);
    if (correlate->parsed()) return cmd_correlate(f, out, err);
    if (diagnose->parsed()) return cmd_diagnose(f, out, err);
    return cmd_report(f, out, err);
  } catch (const ad::NumericError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return kExitNumericAbort;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

} // namespace ostr::cli
