// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include "ostr/cli.hpp"
#include "ostr/criteria.hpp"
#include "ostr/oracle.hpp"
#include "ostr/parallel.hpp"
#include "ostr/search.hpp"

#include "../support/test_support.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

using namespace ostr;
namespace fs = std::filesystem;
using testing::random_batch;
using testing::random_supernet;
using testing::rel_diff;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::size_t jobs = 4;
  fs::path workdir = "acceptance_work";
  std::size_t seeds = 10; // searches per criterion; gates use the first five
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SupernetPass full_pass(const Supernet& net, const Batch& b) {
  PassOptions o;
  o.alpha_grad = true;
  return net.run(b.images, b.labels, o);
}

// Random supernets over mini and full-cell spaces, one or two cells.
std::vector<std::pair<Supernet, Batch>> identity_suite() {
  std::vector<std::pair<Supernet, Batch>> v;
  const std::vector<SearchSpaceConfig> spaces{testing::mini_cells(1), testing::mini_cells(2), testing::small_nb201(1),
                                              testing::small_nb201(2)};
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    const auto& space = spaces[seed % spaces.size()];
    v.emplace_back(random_supernet(space, 1000 + seed, 1.5), random_batch(space, 6, 2000 + seed));
  }
  return v;
}

// --------------------------------------------------------------------------

Verdict gradient_identity() {
  double worst = 0.0;
  std::size_t entries = 0, nets = 0;
  for (const auto& [net, b] : identity_suite()) {
    const SupernetPass p = full_pass(net, b);
    const ScoreMatrix direct = ostr_scores_direct(p), grad = ostr_scores_from_grad(p.alpha_grad());
    for (std::size_t i = 0; i < direct.values.data().size(); ++i, ++entries) {
      worst = std::max(worst, rel_diff(direct.values.data()[i], grad.values.data()[i]));
    }
    ++nets;
  }
  return {nets >= 20 && worst <= 1e-8, fmt("%zu nets, %zu entries, max rel err %.2e", nets, entries, worst)};
}

// Scored per net: a ReLU kink within eps of alpha spoils central differences
// on that net regardless of the analytic gradient.
Verdict finite_differences() {
  std::size_t nets = 0, agree = 0;
  std::string worst_nets;
  const std::vector<SearchSpaceConfig> spaces{testing::mini_cells(1), testing::mini_cells(2), testing::small_nb201(1)};
  for (std::uint64_t seed = 0; seed < 6; ++seed, ++nets) {
    const auto& space = spaces[seed % spaces.size()];
    Supernet net = random_supernet(space, 3000 + seed);
    const Batch b = random_batch(space, 6, 4000 + seed);
    const Matrix g = full_pass(net, b).alpha_grad();
    double worst = 0.0;
    for (std::size_t i = 0; i < g.data().size(); ++i) {
      const double a0 = net.arch().alpha[i], eps = 1e-5;
      net.arch().alpha[i] = a0 + eps;
      const double up = net.loss(b.images, b.labels);
      net.arch().alpha[i] = a0 - eps;
      const double fd = (up - net.loss(b.images, b.labels)) / (2 * eps);
      net.arch().alpha[i] = a0;
      // Relative error; the 1e-9 floor only matters for exactly-zero gradients.
      worst = std::max(worst, std::abs(fd - g.data()[i]) / std::max({std::abs(fd), std::abs(g.data()[i]), 1e-9}));
    }
    agree += worst <= 1e-4;
    worst_nets += fmt(" %.1e", worst);
  }
  return {agree >= 5, fmt("%zu/%zu nets within 1e-4 at eps 1e-5; per-net max rel err:", agree, nets) + worst_nets};
}

Verdict star_relation() {
  double worst_ratio = 0.0, worst_direct = 0.0;
  std::size_t checked = 0;
  for (const auto& [net, b] : identity_suite()) {
    const SupernetPass p = full_pass(net, b);
    const ScoreMatrix s = ostr_scores_direct(p);
    const ScoreMatrix direct = ostr_star_scores_direct(p);
    const Matrix& beta = p.beta();
    std::optional<ScoreMatrix> ratio;
    if (*std::min_element(beta.data().begin(), beta.data().end()) >= 1e-300) ratio = ostr_star_scores(s, beta);
    for (std::size_t i = 0; i < beta.data().size(); ++i) {
      if (beta.data()[i] <= 1e-6) continue;
      ++checked;
      const double expected = s.values.data()[i] / beta.data()[i];
      if (ratio) worst_ratio = std::max(worst_ratio, rel_diff(ratio->values.data()[i], expected));
      worst_direct = std::max(worst_direct, rel_diff(direct.values.data()[i], expected));
    }
  }
  return {worst_ratio <= 1e-10 && worst_direct <= 1e-8,
          fmt("%zu entries, s/beta err %.2e, direct err %.2e", checked, worst_ratio, worst_direct)};
}

// Criteria 4 and 5 share the sampled passes.
std::pair<Verdict, Verdict> rf_and_mixture() {
  std::size_t passes = 0, violations = 0, bad_sum = 0, bad_mix = 0;
  double worst_sum = 0.0, worst_mix = 0.0, worst_gap = 0.0;
  const std::vector<SearchSpaceConfig> spaces{testing::mini_cells(1), testing::mini_cells(2), testing::small_nb201(1)};
  for (std::uint64_t i = 0; i < 1000; ++i, ++passes) {
    const auto& space = spaces[i % spaces.size()];
    const Supernet net = random_supernet(space, 5000 + i, 1.0 + static_cast<double>(i % 4));
    const SupernetPass p = full_pass(net, random_batch(space, 4, 6000 + i));
    for (const auto& r : rf_inequality_check(p)) violations += r.lhs > r.rhs + 1e-9;
    const Matrix& beta = p.beta();
    for (std::size_t e = 0; e < beta.cols(); ++e) {
      double sum = 0.0;
      for (std::size_t o = 0; o < beta.rows(); ++o) sum += beta(o, e);
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      bad_sum += std::abs(sum - 1.0) > 1e-12;
    }
    for (std::size_t c = 0; c < p.cells(); ++c)
      for (std::size_t e = 0; e < p.edges(); ++e) {
        const auto m = p.mixed(c, e);
        std::vector<double> ref(m.size(), 0.0);
        for (std::size_t o = 0; o < p.ops(); ++o) {
          const auto f = p.op_feature(c, e, o);
          for (std::size_t k = 0; k < m.size(); ++k) ref[k] += beta(o, e) * f[k];
        }
        double d = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k) d = std::max(d, std::abs(m[k] - ref[k]));
        worst_mix = std::max(worst_mix, d);
        bad_mix += d > 1e-10;
      }
  }
  // Two candidates: the bound is an equality.
  auto two = SearchSpaceConfig::mini();
  two.ops = {OpKind::skip_connect, OpKind::conv_3x3};
  two.cells = 2;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const SupernetPass p = full_pass(random_supernet(two, 7000 + i, 2.0), random_batch(two, 4, 8000 + i));
    for (const auto& r : rf_inequality_check(p)) worst_gap = std::max(worst_gap, std::abs(r.lhs - r.rhs) / std::max(1.0, r.rhs));
  }
  Verdict rf{violations == 0 && worst_gap <= 1e-10,
             fmt("%zu passes, %zu violations, P=2 max gap %.2e", passes, violations, worst_gap)};
  Verdict mix{bad_sum == 0 && bad_mix == 0,
              fmt("%zu passes, max |sum beta - 1| %.2e, max mixture err %.2e", passes, worst_sum, worst_mix)};
  return {rf, mix};
}

Verdict taylor_order(const Supernet& trained, const Batch& probe) {
  const std::vector<double> ts{0.2, 0.1, 0.05, 0.025};
  const auto& space = trained.config();
  std::size_t pairs = 0, good = 0;
  std::ostringstream worst;
  for (std::size_t c = 0; c < space.cells; ++c)
    for (std::size_t e = 0; e < space.edge_count(); ++e)
      for (std::size_t o = 0; o < space.op_count(); ++o) {
        const auto r = taylor_interpolation(trained, probe.images, probe.labels, c, e, o, ts);
        bool ok = true;
        for (std::size_t k = 1; k + 1 < r.size(); ++k) ok = ok && r[k + 1].error <= r[k].error / 3.0;
        ++pairs;
        good += ok;
        if (!ok) worst << " e" << e << "/" << op_name(space.ops[o]);
      }
  const double frac = static_cast<double>(good) / static_cast<double>(pairs);
  std::string d = fmt("%zu/%zu pairs shrink >= 3x per halving", good, pairs);
  if (!worst.str().empty()) d += "; slower:" + worst.str();
  return {frac >= 0.9, d};
}

Verdict algorithm_semantics() {
  const auto t0 = std::chrono::steady_clock::now();
  const Genotype a0 = Genotype::parse("ops[0|0|0]"), g = Genotype::parse("ops[2|2|2]"), h = Genotype::parse("ops[1|2|2]");
  auto drive = [](SelectionLoop& loop, const std::vector<Genotype>& picks) {
    std::size_t n = 0;
    for (; loop.running(); ++n) {
      if (loop.selects_now()) loop.select(picks[(loop.epoch() - 1) % picks.size()]);
      loop.advance();
    }
    return n;
  };
  bool ok = true;
  std::vector<std::string> fails;
  auto expect = [&](bool c, const char* what) {
    if (!c) fails.emplace_back(what);
    ok = ok && c;
  };
  {
    SelectionLoop l(10, 3, true, true, 200, a0);
    l.select(a0);
    l.select(a0);
    l.select(g);
    expect(l.cnt() == 0, "counter reset");
    l.select(g);
    expect(l.cnt() == 1, "counter increment");
  }
  {
    SelectionLoop early(3, 5, true, true, 200, a0), late(8, 2, true, true, 200, a0);
    expect(drive(early, {g}) == 6, "exit needs cnt >= C");
    expect(drive(late, {g}) == 8, "exit needs t > T");
    SelectionLoop osc(3, 2, true, true, 200, a0);
    expect(drive(osc, {g, h, g, g, g, g}) == 5, "reset then exit");
  }
  {
    SelectionLoop once(5, 3, false, true, 200, a0);
    expect(drive(once, {g}) == 5 && once.selections() == 1, "Er=false selects once");
  }
  {
    // Same semantics through run_search with frozen scores.
    SearchConfig cfg = testing::fast_search(2, 5);
    SearchHooks hooks;
    hooks.adjust_scores = [&](std::size_t, ScoreMatrix& s) {
      s.values = Matrix(3, 3, 0.0);
      for (std::size_t e = 0; e < 3; ++e) s.values(2, e) = 1.0;
    };
    const Dataset d = make_dataset(testing::small_data(0, 128, 32, 32));
    const SearchResult r = run_search(cfg, SearchSpaceConfig::mini(), d, hooks);
    expect(r.trace.epochs.size() == 6 && r.final == g, "frozen scores exit after C repeats");
    cfg.eval_every_epoch = false;
    const SearchResult once = run_search(cfg, SearchSpaceConfig::mini(), d);
    expect(once.outcomes.front().selections == 1, "search with Er=false selects once");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  expect(secs < 1.0, "under one second");
  std::string d = fmt("%.2f s", secs);
  for (const auto& f : fails) d += "; failed: " + f;
  return {ok, d};
}

// --------------------------------------------------------------------------
// Mini-space end-to-end

struct SeedRun {
  std::uint64_t seed = 0;
  std::map<Criterion, Genotype> finals;
  std::optional<Supernet> at50; // supernet after epoch 50
  std::optional<Supernet> final_net;
};

struct EndToEnd {
  Dataset data;
  OracleTable table;
  std::vector<SeedRun> runs;
  Verdict verdict;
};

double mean_rank(const OracleTable& t, const std::vector<SeedRun>& runs, std::size_t n, Criterion c) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(t.rank(runs[i].finals.at(c)));
  return s / static_cast<double>(n);
}

EndToEnd end_to_end(const Options& opt) {
  EndToEnd r;
  const auto space = SearchSpaceConfig::mini();
  r.data = make_dataset(DatasetConfig{});
  const TrainConfig tc; // 2 seeds x 15 epochs

  const auto t0 = std::chrono::steady_clock::now();
  OracleOptions oo;
  oo.jobs = opt.jobs;
  oo.path = (opt.workdir / "oracle.json").string();
  fs::remove(oo.path);
  r.table = exhaustive_oracle(space, r.data, tc, oo);
  const double oracle_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  SearchConfig sc; // T = 50, C = 10, literal loop condition
  sc.track = {Criterion::naive_pruning, Criterion::magnitude, Criterion::ostr_star};
  r.runs.resize(opt.seeds);
  parallel_for(opt.seeds, opt.jobs, [&](std::size_t i) {
    SeedRun& run = r.runs[i];
    run.seed = i;
    SearchConfig c = sc;
    c.seed = i;
    SearchHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& rec, const Supernet& net, const OptimizerState&) {
      if (rec.epoch == 50) run.at50 = net;
    };
    SearchResult res = run_search(c, space, r.data, hooks);
    for (const auto& o : res.outcomes) run.finals[o.criterion] = o.final;
    run.final_net = std::move(res.net);
  });
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::size_t gate_n = std::min<std::size_t>(5, opt.seeds);
  const double rank_ostr = mean_rank(r.table, r.runs, gate_n, Criterion::ostr);
  const double rank_naive = mean_rank(r.table, r.runs, gate_n, Criterion::naive_pruning);
  const std::size_t top = std::max<std::size_t>(1, r.table.ranked_count() / 5);
  std::size_t in_top = 0;
  std::map<std::string, std::size_t> votes;
  for (std::size_t i = 0; i < gate_n; ++i) {
    const Genotype& g = r.runs[i].finals.at(Criterion::ostr);
    in_top += r.table.rank(g) <= top;
    ++votes[g.str()];
  }
  std::size_t mode = 0;
  for (const auto& [k, n] : votes) mode = std::max(mode, n);
  const bool a = rank_ostr < rank_naive, b = in_top >= 4, c = mode >= 4;

  const Genotype best = r.table.best();
  std::string d = fmt("oracle best %s test %.3f (%.0f s); mean rank ostr %.2f vs naive %.2f [%s]; top-%zu %zu/5 [%s]; "
                      "identical %zu/5 [%s]; %.0f s total",
                      best.str().c_str(), r.table.lookup(best)->test_acc, oracle_secs, rank_ostr, rank_naive,
                      a ? "ok" : "FAIL", top, in_top, b ? "ok" : "FAIL", mode, c ? "ok" : "FAIL", total);
  r.verdict = {a && b && c, d};
  return r;
}

void end_to_end_notes(const EndToEnd& r) {
  std::size_t differs = 0;
  for (const auto& run : r.runs) differs += !(run.finals.at(Criterion::ostr) == run.finals.at(Criterion::naive_pruning));
  std::cout << "NOTE criterion 8: per-seed finals (oracle rank)\n";
  for (const auto& run : r.runs) {
    std::cout << "NOTE   seed " << run.seed;
    for (const auto& [c, g] : run.finals) std::cout << "  " << criterion_name(c) << ' ' << g.str() << " (" << r.table.rank(g) << ')';
    std::cout << '\n';
  }
  const std::size_t n = r.runs.size();
  std::cout << fmt("NOTE criterion 8: over %zu seeds mean rank ostr %.2f naive %.2f magnitude %.2f ostr_star %.2f; "
                   "naive differs from ostr on %zu/%zu seeds\n",
                   n, mean_rank(r.table, r.runs, n, Criterion::ostr), mean_rank(r.table, r.runs, n, Criterion::naive_pruning),
                   mean_rank(r.table, r.runs, n, Criterion::magnitude), mean_rank(r.table, r.runs, n, Criterion::ostr_star),
                   differs, n);
}

Verdict correlation_study(const EndToEnd& r) {
  const auto& run = r.runs.front();
  if (!run.at50) return {false, "seed 0 search ended before epoch 50"};
  const Supernet& net = *run.at50;
  const auto& space = net.config();
  SearchConfig sc;
  const auto batches = make_batches(split_for_search(r.data, sc).alpha_split, sc.batch_size, nullptr);
  const ScoreMatrix ostr = score_supernet(net, Criterion::ostr, batches);
  const ScoreMatrix beta = score_supernet(net, Criterion::magnitude, batches);
  const Genotype base = r.table.best();
  const TrainConfig tc;
  bool both = true, one = false;
  std::string d = "base " + base.str() + ";";
  for (std::size_t e : {std::size_t{0}, std::size_t{1}}) {
    const auto sweep = edge_sweep(space, base, e, r.data, tc, &r.table);
    try {
      const double ro = correlate_edge(e, ostr, sweep).rho, rb = correlate_edge(e, beta, sweep).rho;
      both = both && ro >= rb;
      one = one || ro >= 0.5;
      d += fmt(" edge %zu rho(ostr) %.2f rho(beta) %.2f;", e, ro, rb);
    } catch (const std::invalid_argument& ex) {
      both = false;
      d += fmt(" edge %zu: %s;", e, ex.what());
    }
  }
  return {both && one, d};
}

Verdict degeneration(const Options& opt, const Dataset& data) {
  std::vector<std::size_t> epochs;
  for (std::size_t e = 0; e <= 100; e += 10) epochs.push_back(e);
  SearchConfig sc;
  const DegenerationReport rep = degeneration_probe(sc, SearchSpaceConfig::mini(), data, epochs);
  const fs::path csv = opt.workdir / "degeneration.csv";
  {
    std::ofstream os(csv, std::ios::trunc);
    write_degeneration_csv(os, rep, SearchSpaceConfig::mini());
    std::ofstream ss(opt.workdir / "degeneration_summary.csv", std::ios::trunc);
    write_degeneration_summary_csv(ss, rep);
  }
  try {
    std::ifstream is(csv);
    validate_degeneration_csv(is, SearchSpaceConfig::mini());
  } catch (const std::exception& e) {
    return {false, std::string("schema: ") + e.what()};
  }
  const auto& last = rep.checkpoints.back();
  return {rep.checkpoints.size() == epochs.size(),
          fmt("non-gating; schema-valid, %zu checkpoints; magnitude skip edges %zu vs ostr %zu at epoch 100; "
              "nondecreasing %.0f%% (expected >= 70%%); drift signature %s",
              rep.checkpoints.size(), last.skip_edges_magnitude, last.skip_edges_ostr,
              100 * rep.magnitude_skip_nondecreasing, rep.magnitude_drifts_to_skip ? "observed" : "not observed")};
}

// --------------------------------------------------------------------------
// Re-running every command from its manifest

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Every CSV below `dir`, keyed by relative path.
std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().extension() == ".csv") m[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return m;
}

std::vector<std::string> genotype_sequence(const fs::path& jsonl) {
  std::vector<std::string> seq;
  std::istringstream is(slurp(jsonl));
  for (std::string line; std::getline(is, line);) {
    const Json rec = Json::parse(line);
    for (const auto& [c, v] : rec.at("criteria").items()) {
      if (v.value("selected", false)) seq.push_back(c + ":" + v.at("genotype").get<std::string>());
    }
  }
  return seq;
}

Verdict reproducibility(const Options& opt) {
  const fs::path root = opt.workdir / "rerun";
  fs::remove_all(root);
  fs::create_directories(root);
  SearchConfig sc = testing::fast_search(8, 2);
  sc.track = {Criterion::magnitude, Criterion::naive_pruning, Criterion::ostr_star};
  const Json data = to_json(testing::small_data(2, 512, 128, 128));
  TrainConfig tc;
  tc.epochs = 1;
  tc.seeds = {0};
  tc.batch_size = 32;
  std::ofstream(root / "search.json") << Json{{"space", "mini"}, {"dataset", data}, {"search", to_json(sc)}}.dump(2);
  std::ofstream(root / "oracle.json") << Json{{"space", "mini"}, {"dataset", data}, {"train", to_json(tc)}}.dump(2);

  std::ostringstream sink;
  std::vector<std::string> fails;
  auto cli = [&](std::vector<std::string> args) {
    if (cli::run(args, sink, sink) != 0) fails.push_back("exit code of " + args[0]);
  };
  const std::string jobs = std::to_string(opt.jobs);
  for (const char* tag : {"a", "b"}) {
    const fs::path dir = root / tag;
    const bool first = std::string(tag) == "a";
    auto config = [&](const char* cmd, const fs::path& cfg) { return first ? cfg.string() : (root / "a" / cmd / "manifest.json").string(); };
    std::vector<std::string> search{"search", "--config", config("search", root / "search.json"), "--out", (dir / "search").string()};
    if (first) search.insert(search.end(), {"--seed", "7"});
    cli(search);
    cli({"oracle", "--config", config("oracle", root / "oracle.json"), "--out", (dir / "oracle").string(), "--jobs", jobs});
    const std::string ckpt = (root / "a" / "search" / "checkpoint.bin").string();
    if (first) {
      cli({"correlate", "--checkpoint", ckpt, "--oracle", (root / "a" / "oracle" / "oracle.json").string(), "--out",
           (dir / "correlate").string()});
      cli({"diagnose", "--checkpoint", ckpt, "--out", (dir / "diagnose").string()});
      cli({"report", "--config", (root / "search.json").string(), "--epochs", "0", "4", "8", "--seed", "7", "--out",
           (dir / "report").string()});
    } else {
      cli({"correlate", "--config", config("correlate", {}), "--out", (dir / "correlate").string()});
      cli({"diagnose", "--config", config("diagnose", {}), "--out", (dir / "diagnose").string()});
      cli({"report", "--config", config("report", {}), "--out", (dir / "report").string()});
    }
  }
  if (!fails.empty()) return {false, fails.front() + ": " + sink.str()};

  std::size_t files = 0;
  std::vector<std::string> diffs;
  for (const char* cmd : {"search", "correlate", "diagnose", "report"}) {
    const auto a = csv_files(root / "a" / cmd), b = csv_files(root / "b" / cmd);
    files += a.size();
    if (a != b || a.empty()) diffs.push_back(std::string(cmd) + " CSVs");
  }
  const auto seq = genotype_sequence(root / "a" / "search" / "trajectory.jsonl");
  if (seq != genotype_sequence(root / "b" / "search" / "trajectory.jsonl") || seq.empty()) diffs.push_back("genotype sequence");
  if (slurp(root / "a" / "search" / "final.json") != slurp(root / "b" / "search" / "final.json")) diffs.push_back("final.json");
  const OracleTable ta = ingest_table((root / "a" / "oracle" / "oracle.json").string());
  const OracleTable tb = ingest_table((root / "b" / "oracle" / "oracle.json").string());
  bool same_acc = ta.entries.size() == tb.entries.size();
  for (const auto& [k, e] : ta.entries) {
    same_acc = same_acc && tb.entries.count(k) && tb.entries.at(k).val_acc == e.val_acc && tb.entries.at(k).test_acc == e.test_acc;
  }
  if (!same_acc) diffs.push_back("oracle accuracies");
  std::string d = fmt("5 commands re-run from manifests; %zu CSVs, %zu selections, 27 oracle entries compared", files, seq.size());
  for (const auto& x : diffs) d += "; differs: " + x;
  return {diffs.empty(), d};
}

} // namespace

int main(int argc, char** argv) {
  Options opt;
  CLI::App app{"Acceptance criteria"};
  app.add_option("--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--workdir", opt.workdir, "Scratch directory for artefacts");
  app.add_option("--seeds", opt.seeds, "Searches per criterion for criterion 8 (gates use 5)")->check(CLI::Range(5, 100));
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(opt.workdir);

  bool all = true;
  auto report = [&](int id, const char* name, const Verdict& v, double secs, bool gating = true) {
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << name << " (" << v.detail << ") ["
              << fmt("%.1f s", secs) << "]" << std::endl;
    if (gating) all = all && v.pass;
  };
  auto timed = [](auto&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto v = f();
    return std::make_pair(std::move(v), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };
  auto guarded = [](auto&& f) -> Verdict {
    try {
      return f();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  {
    auto [v, s] = timed([&] { return guarded(gradient_identity); });
    report(1, "strength equals |dL/dalpha|", v, s);
  }
  {
    auto [v, s] = timed([&] { return guarded(finite_differences); });
    report(2, "alpha gradient vs central differences", v, s);
  }
  {
    auto [v, s] = timed([&] { return guarded(star_relation); });
    report(3, "strength* relation", v, s);
  }
  {
    std::pair<Verdict, Verdict> both{{false, ""}, {false, ""}};
    auto [ok, s] = timed([&] {
      try {
        both = rf_and_mixture();
      } catch (const std::exception& e) {
        both = {{false, e.what()}, {false, e.what()}};
      }
      return true;
    });
    report(4, "residual-feature inequality", both.first, s);
    report(5, "softmax and mixture invariants", both.second, s);
  }

  // Criterion 8 trains the supernets that 6 and 9 inspect.
  std::optional<EndToEnd> e2e;
  auto [v8, s8] = timed([&] {
    return guarded([&] {
      e2e = end_to_end(opt);
      return e2e->verdict;
    });
  });

  {
    auto [v, s] = timed([&] {
      return guarded([&]() -> Verdict {
        if (!e2e || !e2e->runs.front().final_net) return {false, "no trained supernet"};
        SearchConfig sc;
        const Batch probe = make_batches(split_for_search(e2e->data, sc).alpha_split, sc.batch_size, nullptr).front();
        return taylor_order(*e2e->runs.front().final_net, probe);
      });
    });
    report(6, "Taylor error order on a trained supernet", v, s);
  }
  {
    auto [v, s] = timed([&] { return guarded(algorithm_semantics); });
    report(7, "selection loop semantics", v, s);
  }
  report(8, "mini-space end-to-end", v8, s8);
  if (e2e) end_to_end_notes(*e2e);
  {
    auto [v, s] = timed([&] {
      return guarded([&]() -> Verdict {
        if (!e2e) return {false, "criterion 8 did not produce an oracle"};
        return correlation_study(*e2e);
      });
    });
    report(9, "correlation with stand-alone accuracy", v, s);
  }
  {
    auto [v, s] = timed([&] {
      return guarded([&] { return degeneration(opt, e2e ? e2e->data : make_dataset(DatasetConfig{})); });
    });
    report(10, "degeneration probe", v, s, /*gating=*/false);
  }
  {
    auto [v, s] = timed([&] { return guarded([&] { return reproducibility(opt); }); });
    report(11, "re-run from manifests", v, s);
  }
  std::cout << (all ? "ACCEPTANCE: PASS" : "ACCEPTANCE: FAIL") << std::endl;
  return all ? 0 : 1;
}
