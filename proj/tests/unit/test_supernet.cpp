#include "doctest.h"

#include "ostr/supernet.hpp"

#include "../support/test_support.hpp"

#include <cmath>

using namespace ostr;
using namespace ostr::ad;
using ostr::testing::mini_cells;
using ostr::testing::random_batch;
using ostr::testing::random_supernet;
using ostr::testing::random_tensor;
using ostr::testing::small_nb201;

namespace {

// Logits of head(relu -> global average pool -> linear) applied to feature x.
std::vector<double> head_logits(const NetworkBody& body, Tape& t, Var x) {
  Var pooled = global_avg_pool(relu(x));
  Var logits = add(matmul(pooled, t.constant(body.head_w)), t.constant(body.head_b));
  auto v = logits.value();
  return {v.begin(), v.end()};
}

Var stem(const NetworkBody& body, Tape& t, const Tensor& images) {
  return batch_standardize(conv2d(t.constant(images), t.constant(body.stem)));
}

// alpha column e concentrated on op o: beta_o = 1 / (1 + (P-1) e^-gap).
void concentrate(Supernet& net, std::size_t e, std::size_t o, double gap = 25.0) {
  for (std::size_t p = 0; p < net.config().op_count(); ++p) net.arch().at(p, e) = p == o ? gap : 0.0;
}

} // namespace

TEST_CASE("space presets and validation") {
  const auto nb = SearchSpaceConfig::nas_bench_201();
  CHECK(nb.edge_count() == 6);
  CHECK(nb.op_count() == 5);
  CHECK(nb.nodes == 4);
  // Every ordered node pair of the 4-node cell carries one edge.
  for (std::size_t j = 1; j < 4; ++j)
    for (std::size_t i = 0; i < j; ++i)
      CHECK(std::count(nb.edges.begin(), nb.edges.end(), Edge{i, j}) == 1);
  const auto mini = SearchSpaceConfig::mini();
  CHECK(mini.edge_count() == 3);
  CHECK(mini.op_count() == 3);

  auto bad = mini;
  bad.edges[0] = {1, 1};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = mini;
  bad.ops = {OpKind::skip_connect};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = mini;
  bad.cells = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = mini;
  bad.edges.clear();
  CHECK_THROWS_AS(Supernet::build(bad, 0), std::invalid_argument);
}

TEST_CASE("space JSON and fingerprint") {
  const auto s = small_nb201(2);
  CHECK(space_from_json(to_json(s)) == s);
  CHECK(fingerprint(s) == fingerprint(space_from_json(to_json(s))));
  CHECK(fingerprint(s) != fingerprint(SearchSpaceConfig::mini()));
  CHECK(fingerprint(s).size() == 16);
  auto j = to_json(s);
  j["extra"] = 1;
  CHECK_THROWS_AS(space_from_json(j), std::invalid_argument);
  j = to_json(s);
  j.erase("cells");
  try {
    (void)space_from_json(j);
    FAIL("expected missing field error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("cells") != std::string::npos);
  }
}

TEST_CASE("beta") {
  SUBCASE("uniform at build") {
    const Supernet net = Supernet::build(small_nb201(), 0);
    const Matrix b = beta(net.arch());
    for (double v : b.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("closed form and shift invariance") {
    ArchParams a = ArchParams::zeros(2, 2);
    a.at(0, 0) = std::log(2.0);
    Matrix b = beta(a);
    CHECK(b(0, 0) == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(b(1, 0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    ArchParams shifted = a;
    shifted.at(0, 0) += 7.5;
    shifted.at(1, 0) += 7.5;
    const Matrix bs = beta(shifted);
    CHECK(bs(0, 0) == doctest::Approx(b(0, 0)).epsilon(1e-14));
    CHECK(bs(1, 1) == doctest::Approx(b(1, 1)).epsilon(1e-14));
  }
  SUBCASE("columns sum to one") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Supernet net = random_supernet(small_nb201(), seed, 4.0);
      const Matrix b = beta(net.arch());
      for (std::size_t e = 0; e < b.cols(); ++e) {
        double s = 0.0;
        for (std::size_t o = 0; o < b.rows(); ++o) s += b(o, e);
        CHECK(std::abs(s - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("forward") {
  const auto space = mini_cells(2);
  const Batch batch = random_batch(space, 16, 1);
  SUBCASE("untrained loss is close to ln K") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CHECK(std::abs(Supernet::build(space, seed).loss(batch.images, batch.labels) - std::log(4.0)) < 0.5);
    }
  }
  SUBCASE("same seed, same loss") {
    CHECK(Supernet::build(space, 3).loss(batch.images, batch.labels) ==
          Supernet::build(space, 3).loss(batch.images, batch.labels));
  }
  SUBCASE("duplicating the batch leaves the loss unchanged") {
    const Supernet net = random_supernet(space, 2);
    Tensor doubled({32, 1, 8, 8});
    std::vector<int> labels = batch.labels;
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
    for (std::size_t i = 0; i < batch.images.size(); ++i) {
      doubled[i] = batch.images[i];
      doubled[i + batch.images.size()] = batch.images[i];
    }
    CHECK(net.loss(doubled, labels) == doctest::Approx(net.loss(batch.images, batch.labels)).epsilon(1e-12));
  }
  SUBCASE("wrong input shape") {
    CHECK_THROWS_AS((void)Supernet::build(space, 0).loss(Tensor({2, 1, 7, 8}), std::vector<int>{0, 1}), ShapeError);
  }
  SUBCASE("read-only pass leaves the supernet unchanged") {
    const Supernet net = random_supernet(space, 4);
    const Supernet copy = net;
    (void)net.run(batch.images, batch.labels);
    CHECK(net == copy);
  }
}

TEST_CASE("mixture identity and one-hot limit") {
  for (const auto& space : {mini_cells(2), small_nb201(1)}) {
    const Batch batch = random_batch(space, 8, 5);
    const Supernet net = random_supernet(space, 6);
    const SupernetPass pass = net.run(batch.images, batch.labels);
    for (std::size_t l = 0; l < pass.cells(); ++l)
      for (std::size_t e = 0; e < pass.edges(); ++e) {
        auto m = pass.mixed(l, e);
        double worst = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
          double s = 0.0;
          for (std::size_t o = 0; o < pass.ops(); ++o) s += pass.beta()(o, e) * pass.op_feature(l, e, o)[i];
          worst = std::max(worst, std::abs(m[i] - s));
        }
        CHECK(worst <= 1e-10);
      }
  }
  SUBCASE("concentrated beta reproduces the op feature") {
    const auto space = small_nb201(1);
    const Batch batch = random_batch(space, 8, 7);
    Supernet net = random_supernet(space, 8);
    for (std::size_t o = 0; o < space.op_count(); ++o) {
      concentrate(net, 2, o, 25.0);
      const SupernetPass pass = net.run(batch.images, batch.labels);
      CHECK(pass.beta()(o, 2) > 1.0 - 1e-9);
      auto m = pass.mixed(0, 2);
      auto f = pass.op_feature(0, 2, o);
      for (std::size_t i = 0; i < m.size(); ++i) CHECK(std::abs(m[i] - f[i]) <= 1e-6);
    }
  }
}

TEST_CASE("pure skip path reproduces the head on the stem output") {
  // Mini cell with every edge on skip: node 1 = x, node 2 = x + node 1 = 2x.
  const auto space = SearchSpaceConfig::mini();
  const Batch batch = random_batch(space, 12, 9);
  Supernet net = random_supernet(space, 10);
  for (std::size_t e = 0; e < 3; ++e) concentrate(net, e, 1);
  const SupernetPass pass = net.run(batch.images, batch.labels);
  Tape t;
  const auto expected = head_logits(net.body(), t, scale(stem(net.body(), t, batch.images), 2.0));
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(std::abs(pass.logits()[i] - expected[i]) <= 1e-6);
}

TEST_CASE("discretize") {
  const auto space = mini_cells(2);
  const Batch batch = random_batch(space, 12, 11);
  SUBCASE("all-skip chain computes the head of the doubled stem output") {
    const StandaloneNet sn = StandaloneNet::create(SearchSpaceConfig::mini(), Genotype{{1, 1, 1}}, 3);
    Tape t, u;
    auto logits = sn.logits(t, batch.images).value();
    const auto expected = head_logits(sn.body(), u, scale(stem(sn.body(), u, batch.images), 2.0));
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(logits[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
  SUBCASE("all-none input paths give loss ln K exactly") {
    const StandaloneNet sn = StandaloneNet::create(space, Genotype{{0, 0, 0}}, 3);
    CHECK(sn.loss(batch.images, batch.labels) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  }
  SUBCASE("warm-started genotype matches the one-hot supernet") {
    Supernet net = random_supernet(space, 12);
    const Genotype g{{2, 1, 2}};
    for (std::size_t e = 0; e < 3; ++e) concentrate(net, e, g.choice[e], 30.0);
    const StandaloneNet sn = discretize(net, g, {.reinit = false});
    CHECK(std::abs(sn.loss(batch.images, batch.labels) - net.loss(batch.images, batch.labels)) <= 1e-6);
  }
  SUBCASE("re-initialised by default and deterministic under the seed") {
    const Supernet net = random_supernet(space, 13);
    const StandaloneNet a = discretize(net, Genotype{{2, 2, 2}}, {.reinit = true, .seed = 5});
    const StandaloneNet b = discretize(net, Genotype{{2, 2, 2}}, {.reinit = true, .seed = 5});
    CHECK(a.loss(batch.images, batch.labels) == b.loss(batch.images, batch.labels));
    CHECK_FALSE(a.body().stem.same_values(net.body().stem));
  }
  SUBCASE("out-of-range genotype") {
    CHECK_THROWS(discretize(Supernet::build(space, 0), Genotype{{0, 3, 0}}));
    CHECK_THROWS(discretize(Supernet::build(space, 0), Genotype{{0, 0}}));
  }
}

TEST_CASE("genotype selection from scores") {
  SUBCASE("argmax and tie rule") {
    CHECK(genotype_from_scores(Matrix(5, 1, {0.1, 0.9, 0.3, 0.2, 0.1})).choice == std::vector<std::size_t>{1});
    CHECK(genotype_from_scores(Matrix(5, 1, {0.5, 0.5, 0, 0, 0})).choice == std::vector<std::size_t>{0});
  }
  SUBCASE("NaN is rejected") {
    CHECK_THROWS(genotype_from_scores(Matrix(2, 1, {0.1, std::nan("")})));
  }
  SUBCASE("none can be excluded by the space") {
    auto s = SearchSpaceConfig::mini();
    s.none_selectable = false;
    const Matrix m(3, 3, {0.9, 0.9, 0.0, 0.2, 0.1, 0.0, 0.1, 0.3, 0.0});
    CHECK(genotype_from_scores(m, s).choice == std::vector<std::size_t>{1, 2, 1});
    CHECK(genotype_from_scores(m).choice == std::vector<std::size_t>{0, 0, 0});
  }
  SUBCASE("beta reproduces magnitude selection") {
    ArchParams a = ArchParams::zeros(3, 2);
    a.at(2, 0) = 1.0;
    a.at(1, 1) = 0.5;
    CHECK(genotype_from_scores(beta(a)).choice == std::vector<std::size_t>{2, 1});
  }
  SUBCASE("invariant to increasing transforms per column") {
    Rng rng = make_rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      Matrix s(5, 6);
      for (double& v : s.data()) v = std::round(u(rng) * 8) / 8; // coarse grid makes ties common
      Matrix t = s;
      for (std::size_t e = 0; e < 6; ++e) {
        const double shift = u(rng) * 3;
        for (std::size_t o = 0; o < 5; ++o) t(o, e) = std::exp(3 * s(o, e)) + shift;
      }
      CHECK(genotype_from_scores(s) == genotype_from_scores(t));
    }
  }
}

TEST_CASE("genotype serialisation") {
  const auto space = small_nb201();
  const Genotype g{{0, 4, 2, 1, 3, 0}};
  CHECK(g.str() == "ops[0|4|2|1|3|0]");
  CHECK(Genotype::parse(g.str()) == g);
  CHECK(genotype_from_json(genotype_to_json(g, space), space) == g);
  const auto j = genotype_to_json(g, space);
  CHECK(j[1]["from"] == 0);
  CHECK(j[1]["to"] == 2);
  CHECK(j[1]["op"] == "avg_pool_3x3");
  for (const char* bad : {"ops[]", "ops[1|]", "ops[01|2]", "op[1|2]", "ops[1|a]", "ops[1|2"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(Genotype::parse(bad), std::invalid_argument);
  }
  CHECK_THROWS(validate(Genotype{{0, 5, 0, 0, 0, 0}}, space));
}
