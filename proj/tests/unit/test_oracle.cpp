#include "doctest.h"

#include "ostr/oracle.hpp"

#include "../support/test_support.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>

using namespace ostr;
using ostr::testing::TempDir;

namespace {

TrainConfig quick_train(std::size_t epochs = 2) {
  TrainConfig t;
  t.epochs = epochs;
  t.seeds = {0};
  t.batch_size = 32;
  return t;
}

// Accuracies without the wall-clock field, for determinism comparisons.
std::map<std::string, std::pair<double, double>> accuracies(const OracleTable& t) {
  std::map<std::string, std::pair<double, double>> m;
  for (const auto& [k, e] : t.entries) m[k] = {e.val_acc, e.test_acc};
  return m;
}

OracleTable hand_table(std::initializer_list<std::pair<const char*, double>> rows) {
  OracleTable t;
  t.space = SearchSpaceConfig::mini();
  for (const auto& [g, acc] : rows) t.entries[g] = OracleEntry{acc, acc, 1};
  return t;
}

const Dataset& small() {
  static const Dataset d = make_dataset(testing::small_data(0, 256, 64, 64));
  return d;
}

} // namespace

TEST_CASE("enumeration") {
  const auto all = enumerate_genotypes(SearchSpaceConfig::mini());
  REQUIRE(all.size() == 27);
  CHECK(all.front().str() == "ops[0|0|0]");
  CHECK(all[1].str() == "ops[0|0|1]");
  CHECK(all.back().str() == "ops[2|2|2]");
  CHECK(std::is_sorted(all.begin(), all.end()));
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  const auto nb = SearchSpaceConfig::nas_bench_201();
  CHECK(enumerate_genotypes(nb, 15625).size() == 15625);
  CHECK_THROWS_WITH_AS(enumerate_genotypes(nb), doctest::Contains("mini"), std::invalid_argument);
}

TEST_CASE("spearman") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(spearman(x, x) == doctest::Approx(1.0));
  CHECK(spearman(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman(x, std::vector<double>{1, 2, 3, 5, 4}) == doctest::Approx(0.9));
  SUBCASE("average ranks for ties") {
    CHECK(average_ranks(std::vector<double>{3.0, 1.0, 3.0, 2.0}) == std::vector<double>{3.5, 1.0, 3.5, 2.0});
    // Pearson on average ranks, computed by hand: ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4).
    CHECK(spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4}) ==
          doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)));
  }
  SUBCASE("invariant under strictly increasing transforms") {
    Rng rng = make_rng(3);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> a(8), b(8), ea, cb;
      for (auto& v : a) v = n(rng);
      for (auto& v : b) v = n(rng);
      for (double v : a) ea.push_back(std::exp(v));
      for (double v : b) cb.push_back(v * v * v + 2 * v);
      CHECK(spearman(ea, cb) == doctest::Approx(spearman(a, b)).epsilon(1e-12));
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_WITH_AS(spearman(x, std::vector<double>{2, 2, 2, 2, 2}), doctest::Contains("constant input"),
                         std::invalid_argument);
    CHECK_THROWS_AS(spearman(std::vector<double>{1, 2}, std::vector<double>{2, 1}), std::invalid_argument);
    CHECK_THROWS_AS(spearman(x, std::vector<double>{1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(spearman(x, std::vector<double>{1, 2, std::nan(""), 4, 5}), std::invalid_argument);
  }
}

TEST_CASE("stand-alone training") {
  const auto space = SearchSpaceConfig::mini();
  SUBCASE("all-none predicts one class: accuracy is the class rate") {
    const auto r = train_standalone(space, Genotype::parse("ops[0|0|0]"), small(), quick_train());
    REQUIRE_FALSE(r.failed());
    CHECK(r.val_acc[0] == doctest::Approx(0.25));
    CHECK(r.test_acc[0] == doctest::Approx(0.25));
  }
  SUBCASE("same seed gives identical accuracy") {
    TrainConfig t = quick_train();
    t.seeds = {4, 4};
    const auto r = train_standalone(space, Genotype::parse("ops[2|1|2]"), small(), t);
    REQUIRE(r.val_acc.size() == 2);
    CHECK(r.val_acc[0] == r.val_acc[1]);
    CHECK(r.test_acc[0] == r.test_acc[1]);
    CHECK(r.val_std() == 0.0);
  }
  SUBCASE("convolution beats the skip-only chain") {
    DatasetConfig c;
    c.sizes = {1000, 500, 500};
    const Dataset d = make_dataset(c);
    TrainConfig t;
    t.seeds = {0};
    const auto conv = train_standalone(space, Genotype::parse("ops[2|2|2]"), d, t);
    const auto skip = train_standalone(space, Genotype::parse("ops[1|1|1]"), d, t);
    MESSAGE("conv " << conv.test_mean() << " skip " << skip.test_mean());
    CHECK(conv.test_mean() >= skip.test_mean());
  }
  SUBCASE("divergence is recorded as a failed seed") {
    TrainConfig t = quick_train(1);
    t.optimizer.lr = 1e300;
    t.optimizer.grad_clip = 0.0;
    const auto r = train_standalone(space, Genotype::parse("ops[2|2|2]"), small(), t);
    CHECK(r.failed());
    CHECK(r.failed_seeds == 1);
    CHECK_FALSE(r.failure.empty());
  }
  SUBCASE("config validation and JSON") {
    TrainConfig t = quick_train();
    CHECK(train_config_from_json(to_json(t)) == t);
    t.epochs = 0;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t = quick_train();
    t.seeds.clear();
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    auto j = to_json(quick_train());
    j["lr"] = 0.1;
    CHECK_THROWS_WITH_AS(train_config_from_json(j), doctest::Contains("lr"), std::invalid_argument);
  }
}

TEST_CASE("exhaustive oracle") {
  const auto space = SearchSpaceConfig::mini();
  TempDir dir("oracle");
  const std::string path = dir.str("oracle.json");
  OracleOptions opts;
  opts.jobs = 4;
  opts.path = path;
  const OracleTable t = exhaustive_oracle(space, small(), quick_train(), opts);

  SUBCASE("every genotype appears exactly once") {
    CHECK(t.complete);
    CHECK(t.provenance == Provenance::exhaustive);
    REQUIRE(t.entries.size() == 27);
    for (const auto& g : enumerate_genotypes(space)) CHECK(t.lookup(g).has_value());
    for (const auto& [k, e] : t.entries) {
      CHECK(e.seeds == 1);
      CHECK((e.val_acc >= 0.0 && e.val_acc <= 1.0 && e.test_acc >= 0.0 && e.test_acc <= 1.0));
    }
    CHECK(t.budget == to_json(quick_train()));
  }
  SUBCASE("deterministic across runs and worker counts") {
    OracleOptions serial;
    serial.jobs = 1;
    CHECK(accuracies(exhaustive_oracle(space, small(), quick_train(), serial)) == accuracies(t));
  }
  SUBCASE("persisted file re-ingests to the same table") {
    const OracleTable back = ingest_table(path);
    CHECK(back.entries == t.entries);
    CHECK(back.complete);
    CHECK(back.provenance == Provenance::exhaustive);
    CHECK(back.fingerprint() == fingerprint(space));
  }
  SUBCASE("resuming a complete table trains nothing") {
    OracleOptions r = opts;
    r.resume = true;
    std::atomic<int> trained = 0;
    r.on_entry = [&](const std::string&, const OracleEntry&) { ++trained; };
    CHECK(exhaustive_oracle(space, small(), quick_train(), r).entries == t.entries);
    CHECK(trained == 0);
  }
  SUBCASE("a partial table continues where it stopped") {
    OracleTable partial = t;
    partial.complete = false;
    for (auto it = partial.entries.begin(); it != partial.entries.end();) {
      it = Genotype::parse(it->first).choice[0] == 0 ? std::next(it) : partial.entries.erase(it);
    }
    REQUIRE(partial.entries.size() == 9);
    partial.entries["ops[0|0|0]"].val_acc = 0.123; // marker: must survive the resume
    save_table(partial, path);
    OracleOptions r = opts;
    r.resume = true;
    std::atomic<int> trained = 0;
    r.on_entry = [&](const std::string&, const OracleEntry&) { ++trained; };
    const OracleTable done = exhaustive_oracle(space, small(), quick_train(), r);
    CHECK(trained == 18);
    CHECK(done.complete);
    CHECK(done.entries.size() == 27);
    CHECK(done.entries.at("ops[0|0|0]").val_acc == 0.123);
    CHECK(done.entries.at("ops[2|2|2]").test_acc == t.entries.at("ops[2|2|2]").test_acc);
  }
  SUBCASE("resume refuses a different budget or a corrupt file") {
    OracleOptions r = opts;
    r.resume = true;
    CHECK_THROWS_WITH_AS(exhaustive_oracle(space, small(), quick_train(3), r), doctest::Contains("budget"),
                         std::invalid_argument);
    std::ofstream(path, std::ios::trunc) << "{\"space\": ";
    CHECK_THROWS_AS(exhaustive_oracle(space, small(), quick_train(), r), std::invalid_argument);
  }
  SUBCASE("an interrupted run leaves a partial table") {
    TempDir other("oracle_int");
    OracleOptions r;
    r.path = other.str("oracle.json");
    int seen = 0;
    r.on_entry = [&](const std::string&, const OracleEntry&) {
      if (++seen == 5) throw std::runtime_error("interrupted");
    };
    CHECK_THROWS_AS(exhaustive_oracle(space, small(), quick_train(1), r), std::runtime_error);
    const OracleTable partial = ingest_table(r.path);
    CHECK_FALSE(partial.complete);
    CHECK(partial.entries.size() == 5);
  }
}

TEST_CASE("ranking and lookup") {
  const OracleTable t =
      hand_table({{"ops[0|0|0]", 0.25}, {"ops[2|2|2]", 0.9}, {"ops[1|2|2]", 0.9}, {"ops[1|1|1]", 0.5}});
  CHECK(t.rank(Genotype::parse("ops[2|2|2]")) == 1);
  CHECK(t.rank(Genotype::parse("ops[1|2|2]")) == 1);
  CHECK(t.rank(Genotype::parse("ops[1|1|1]")) == 3);
  CHECK(t.rank(Genotype::parse("ops[0|0|0]")) == 4);
  CHECK(t.best().str() == "ops[1|2|2]"); // tie broken by genotype order
  CHECK(t.ranked_count() == 4);
  CHECK_FALSE(t.lookup(Genotype::parse("ops[0|1|2]")).has_value());
  CHECK_THROWS_AS(t.rank(Genotype::parse("ops[0|1|2]")), std::invalid_argument);
  OracleTable f = t;
  f.entries["ops[2|2|2]"].failed = true;
  CHECK(f.ranked_count() == 3);
  CHECK(f.best().str() == "ops[1|2|2]");
  CHECK(f.rank(Genotype::parse("ops[1|1|1]")) == 2);
}

TEST_CASE("ingestion") {
  TempDir dir("ingest");
  const auto space = SearchSpaceConfig::mini();
  const std::string space_json = "{\"fingerprint\": \"" + fingerprint(space) + "\", \"config\": " +
                                 to_json(space).dump() + "}";
  auto write = [&](const std::string& name, const std::string& entries) {
    const std::string p = dir.str(name);
    std::ofstream(p) << "{\"space\": " << space_json << ", \"entries\": {" << entries << "}}";
    return p;
  };
  SUBCASE("a three-entry handwritten file") {
    const OracleTable t = ingest_table(write("three.json", R"("ops[0|0|0]": {"val_acc": 0.25, "test_acc": 0.26, "seeds": 2},
      "ops[2|2|2]": {"val_acc": 0.97, "test_acc": 0.96, "seeds": 2},
      "ops[1|0|2]": {"val_acc": 0.5, "test_acc": 0.4, "seeds": 1})"));
    CHECK(t.entries.size() == 3);
    CHECK(t.provenance == Provenance::ingested);
    CHECK_FALSE(t.complete);
    CHECK(t.lookup(Genotype::parse("ops[2|2|2]"))->test_acc == 0.96);
    CHECK(t.best().str() == "ops[2|2|2]");
    CHECK_FALSE(t.lookup(Genotype::parse("ops[1|1|1]")).has_value());
  }
  SUBCASE("accuracy outside [0, 1]") {
    const auto p = write("bad.json", R"("ops[0|0|0]": {"val_acc": 1.5, "test_acc": 0.2, "seeds": 1})");
    CHECK_THROWS_WITH_AS(ingest_table(p), doctest::Contains("val_acc"), std::invalid_argument);
  }
  SUBCASE("missing field is named") {
    const auto p = write("missing.json", R"("ops[0|0|0]": {"val_acc": 0.5, "seeds": 1})");
    CHECK_THROWS_WITH_AS(ingest_table(p), doctest::Contains("test_acc"), std::invalid_argument);
  }
  SUBCASE("genotype outside the space") {
    const auto p = write("edges.json", R"("ops[0|0]": {"val_acc": 0.5, "test_acc": 0.5, "seeds": 1})");
    CHECK_THROWS_WITH_AS(ingest_table(p), doctest::Contains("ops[0|0]"), std::invalid_argument);
  }
  SUBCASE("fingerprint must match the embedded config") {
    const std::string p = dir.str("fp.json");
    std::ofstream(p) << "{\"space\": {\"fingerprint\": \"deadbeef\", \"config\": " << to_json(space).dump()
                     << "}, \"entries\": {}}";
    CHECK_THROWS_WITH_AS(ingest_table(p), doctest::Contains("fingerprint"), std::invalid_argument);
  }
  SUBCASE("malformed JSON") {
    const std::string p = dir.str("broken.json");
    std::ofstream(p) << "{\"space\": [";
    CHECK_THROWS_AS(ingest_table(p), std::invalid_argument);
    CHECK_THROWS_AS(ingest_table(dir.str("absent.json")), std::runtime_error);
  }
  SUBCASE("export then ingest is the identity") {
    OracleTable t = hand_table({{"ops[0|1|2]", 0.75}, {"ops[2|0|1]", 0.5}});
    t.budget = to_json(quick_train());
    const OracleTable back = table_from_json(to_json(t));
    CHECK(back.entries == t.entries);
    CHECK(back.budget == t.budget);
    CHECK(back.space == t.space);
    CHECK(back.complete == t.complete);
  }
}

TEST_CASE("edge sweep and correlation") {
  const auto space = SearchSpaceConfig::mini();
  const TrainConfig tc = quick_train();
  const Genotype base = Genotype::parse("ops[2|1|2]");
  const auto sweep = edge_sweep(space, base, 1, small(), tc);
  REQUIRE(sweep.size() == 3);
  for (std::size_t o = 0; o < 3; ++o) {
    CHECK(sweep[o].op == o);
    CHECK(sweep[o].genotype.choice == std::vector<std::size_t>{2, o, 2});
  }

  SUBCASE("substituting the base op reproduces the base accuracy") {
    const auto r = train_standalone(space, base, small(), tc);
    CHECK(sweep[1].result.test_acc == r.test_mean());
    CHECK(sweep[1].result.val_acc == r.val_mean());
  }
  SUBCASE("cached entries are reused only under the same budget") {
    OracleTable cache = hand_table({{"ops[2|0|2]", 0.11}, {"ops[2|1|2]", 0.22}, {"ops[2|2|2]", 0.33}});
    cache.budget = to_json(tc);
    const auto hit = edge_sweep(space, base, 1, small(), tc, &cache);
    CHECK(hit[0].result.test_acc == 0.11);
    CHECK(hit[2].result.test_acc == 0.33);
    cache.budget = to_json(quick_train(3));
    const auto miss = edge_sweep(space, base, 1, small(), tc, &cache);
    CHECK(miss[0].result.test_acc == sweep[0].result.test_acc);
  }
  SUBCASE("correlation against a frozen score snapshot is reproducible") {
    ScoreMatrix s{Matrix(3, 3), Criterion::ostr, 4};
    s.values(0, 1) = 0.1;
    s.values(1, 1) = 0.5;
    s.values(2, 1) = 0.3;
    std::vector<SweepPoint> fixed = sweep;
    fixed[0].result.test_acc = 0.2;
    fixed[1].result.test_acc = 0.9;
    fixed[2].result.test_acc = 0.6;
    const CorrelationReport r = correlate_edge(1, s, fixed);
    CHECK(r.rho == doctest::Approx(1.0));
    CHECK(r.pairs.size() == 3);
    CHECK(r.excluded == 0);
    CHECK(correlate_edge(1, s, fixed).rho == r.rho);
    std::ostringstream os;
    write_correlation_csv(os, std::vector<CorrelationReport>{r}, space);
    CHECK(os.str().rfind("edge,op_kind,indicator,criterion,standalone_acc\n1,none,0.10000000000000001,ostr,0.2", 0) ==
          0);
    fixed[2].result.failed = true;
    CHECK_THROWS_WITH_AS(correlate_edge(1, s, fixed), doctest::Contains("insufficient"), std::invalid_argument);
  }
  SUBCASE("edge out of range") {
    CHECK_THROWS_AS(edge_sweep(space, base, 3, small(), tc), std::out_of_range);
  }
}
