#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <vector>

#include "pimm/checkpoint.hpp"
#include "pimm/data.hpp"
#include "pimm/error.hpp"
#include "pimm/graph.hpp"
#include "pimm/layers.hpp"
#include "pimm/rng.hpp"

using namespace pimm;

namespace {

bool bitwise_equal(const Array& a, const Array& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data().data(), b.data().data(),
                     a.size() * sizeof(double)) == 0;
}

DatasetSchema two_field_schema(std::size_t vocab = 4) {
  DatasetSchema schema;
  schema.field_names = {"a", "b"};
  schema.vocab_sizes = {vocab, vocab};
  schema.task_names = {"t0", "t1"};
  return schema;
}

Batch batch_of(const std::vector<std::vector<std::uint32_t>>& rows) {
  Batch batch;
  batch.size = rows.size();
  batch.num_fields = rows[0].size();
  for (const auto& row : rows) {
    batch.features.insert(batch.features.end(), row.begin(), row.end());
  }
  return batch;
}

void set_param(ParameterStore& store, const std::string& name,
               const Array& value) {
  store.value(store.find(name)) = value;
}

/// Finite differences through the parameter store: nudges one coordinate,
/// reruns the forward closure, and compares with the binding gradient.
template <typename Forward>
double store_gradient_error(ParameterStore& store,
                            const std::vector<std::string>& param_names,
                            Forward forward) {
  Graph graph;
  ParamBinding binding(graph, store);
  const NodeId loss = forward(graph, binding);
  graph.backward(loss);

  const double step = 1e-5;
  double worst = 0.0;
  for (const auto& name : param_names) {
    const ParamId id = store.find(name);
    const Array analytic = binding.grad(id);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      auto loss_at = [&](double delta) {
        const double saved = store.value(id)[i];
        store.value(id)[i] = saved + delta;
        Graph g2;
        ParamBinding b2(g2, store);
        const double v = g2.value(forward(g2, b2))[0];
        store.value(id)[i] = saved;
        return v;
      };
      const double numeric = (loss_at(step) - loss_at(-step)) / (2.0 * step);
      worst = std::max(worst, std::fabs(analytic[i] - numeric) /
                                  std::max({1.0, std::fabs(analytic[i]),
                                            std::fabs(numeric)}));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("embedding lookup concatenates per-field rows in schema order") {
  Rng rng(3);
  ParameterStore store;
  EmbeddingLayer emb(store, two_field_schema(), 3, rng);
  // Distinguishable rows per table.
  set_param(store, "emb.a",
            Array(4, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}));
  set_param(store, "emb.b",
            Array(4, 3, {100, 101, 102, 103, 104, 105, 106, 107, 108, 109,
                         110, 111}));

  Graph g;
  ParamBinding binding(g, store);
  const NodeId out = emb.lookup(g, binding, batch_of({{0, 1}}));
  const Array& v = g.value(out);
  REQUIRE(v.rows() == 1);
  REQUIRE(v.cols() == 6);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 1.0);
  CHECK(v[2] == 2.0);
  CHECK(v[3] == 103.0);
  CHECK(v[4] == 104.0);
  CHECK(v[5] == 105.0);
}

TEST_CASE("embedding lookup: zero table and out-of-vocabulary fallback") {
  Rng rng(3);
  ParameterStore store;
  EmbeddingLayer emb(store, two_field_schema(), 2, rng);
  set_param(store, "emb.a", Array(4, 2));
  set_param(store, "emb.b", Array(4, 2));

  Graph g;
  ParamBinding binding(g, store);
  const NodeId out = emb.lookup(g, binding, batch_of({{2, 3}}));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(g.value(out)[i] == 0.0);
  }
  CHECK(emb.oov_count() == 0);

  // id == vocab_size maps to row 0 and counts.
  set_param(store, "emb.a", Array(4, 2, {7, 7, 1, 1, 2, 2, 3, 3}));
  Graph g2;
  ParamBinding binding2(g2, store);
  const NodeId out2 = emb.lookup(g2, binding2, batch_of({{4, 0}}));
  CHECK(g2.value(out2)[0] == 7.0);
  CHECK(g2.value(out2)[1] == 7.0);
  CHECK(emb.oov_count() == 1);
}

TEST_CASE("embedding tables receive gradients through lookup") {
  Rng rng(5);
  ParameterStore store;
  EmbeddingLayer emb(store, two_field_schema(), 2, rng);
  const double err = store_gradient_error(
      store, {"emb.a", "emb.b"}, [&](Graph& g, ParamBinding& b) {
        return g.mean(
            g.sigmoid(emb.lookup(g, b, batch_of({{0, 1}, {2, 1}, {0, 3}}))));
      });
  CHECK(err < 1e-4);
}

TEST_CASE("tower forward") {
  Rng rng(11);
  SUBCASE("zero weights and biases give zero output") {
    ParameterStore store;
    Tower tower(store, "tw", 3, {4, 2}, rng);
    set_param(store, "tw.l0.w", Array(3, 4));
    set_param(store, "tw.l1.w", Array(4, 2));
    Graph g;
    ParamBinding binding(g, store);
    const NodeId out =
        tower.forward(g, binding, g.input(Array(2, 3, {1, 2, 3, 4, 5, 6})));
    for (std::size_t i = 0; i < g.value(out).size(); ++i) {
      CHECK(g.value(out)[i] == 0.0);
    }
  }
  SUBCASE("identity single layer passes input through") {
    ParameterStore store;
    Tower tower(store, "tw", 2, {2}, rng);
    set_param(store, "tw.l0.w", Array(2, 2, {1, 0, 0, 1}));
    Graph g;
    ParamBinding binding(g, store);
    const Array input(2, 2, {0.5, -1.5, 2.0, 0.25});
    const NodeId out = tower.forward(g, binding, g.input(input));
    CHECK(bitwise_equal(g.value(out), input));
  }
  SUBCASE("two-layer tower matches an independent matrix oracle") {
    ParameterStore store;
    Tower tower(store, "tw", 3, {4, 2}, rng);
    Graph g;
    ParamBinding binding(g, store);
    const Array x(2, 3, {0.3, -0.7, 1.1, -0.2, 0.9, 0.4});
    const NodeId out = tower.forward(g, binding, g.input(x));

    // Plain-double evaluation, no Graph involved.
    const Array& w0 = store.value(store.find("tw.l0.w"));
    const Array& b0 = store.value(store.find("tw.l0.b"));
    const Array& w1 = store.value(store.find("tw.l1.w"));
    const Array& b1 = store.value(store.find("tw.l1.b"));
    for (std::size_t r = 0; r < 2; ++r) {
      double hidden[4];
      for (std::size_t j = 0; j < 4; ++j) {
        double s = b0[j];
        for (std::size_t k = 0; k < 3; ++k) s += x.at(r, k) * w0.at(k, j);
        hidden[j] = s > 0.0 ? s : 0.0;
      }
      for (std::size_t j = 0; j < 2; ++j) {
        double s = b1[j];
        for (std::size_t k = 0; k < 4; ++k) s += hidden[k] * w1.at(k, j);
        CHECK(g.value(out).at(r, j) == doctest::Approx(s).epsilon(1e-12));
      }
    }
  }
  SUBCASE("width mismatch is a shape error") {
    ParameterStore store;
    Tower tower(store, "tw", 3, {4}, rng);
    Graph g;
    ParamBinding binding(g, store);
    CHECK_THROWS_AS(tower.forward(g, binding, g.input(Array(2, 5))),
                    ShapeError);
  }
}

TEST_CASE("attention fuse") {
  Rng rng(21);
  const std::size_t d = 2;

  SUBCASE("equal candidates split the weights and keep the residual") {
    ParameterStore store;
    AttentionUnit unit(store, "at", d, rng);
    Graph g;
    ParamBinding binding(g, store);
    const Array v(1, 2, {0.4, -0.6});
    const NodeId fused = unit.fuse(g, binding, g.input(v), g.input(v));
    // U = v + V(v) when both candidates coincide.
    const Array& vp = store.value(store.find("at.v"));
    for (std::size_t j = 0; j < d; ++j) {
      double proj = 0.0;
      for (std::size_t k = 0; k < d; ++k) proj += v[k] * vp.at(k, j);
      CHECK(g.value(fused)[j] == doctest::Approx(v[j] + proj).epsilon(1e-12));
    }
  }

  SUBCASE("zero value projection leaves the residual bitwise") {
    ParameterStore store;
    AttentionUnit unit(store, "at", d, rng);
    set_param(store, "at.v", Array(2, 2));
    Graph g;
    ParamBinding binding(g, store);
    const Array v(3, 2, {0.4, -0.6, 1.25, 0.125, -2.5, 0.75});
    const NodeId fused = unit.fuse(g, binding, g.input(v),
                                   g.input(Array(3, 2, {1, 2, 3, 4, 5, 6})));
    CHECK(bitwise_equal(g.value(fused), v));
  }

  SUBCASE("identity projections, hand-computed two-candidate case") {
    ParameterStore store;
    AttentionUnit unit(store, "at", d, rng);
    const Array eye(2, 2, {1, 0, 0, 1});
    set_param(store, "at.q", eye);
    set_param(store, "at.k", eye);
    set_param(store, "at.v", eye);
    Graph g;
    ParamBinding binding(g, store);
    const NodeId fused = unit.fuse(g, binding, g.input(Array(1, 2, {1, 0})),
                                   g.input(Array(1, 2, {0, 2})));

    // Independent scalar evaluation: logits are |v|^2/sqrt(2), |z|^2/sqrt(2).
    const double lv = 1.0 / std::sqrt(2.0);
    const double lz = 4.0 / std::sqrt(2.0);
    const double wz = std::exp(lz) / (std::exp(lv) + std::exp(lz));
    const double wv = 1.0 - wz;
    const double expected0 = 1.0 + wv * 1.0;
    const double expected1 = 0.0 + wz * 2.0;
    CHECK(g.value(fused)[0] == doctest::Approx(expected0).epsilon(1e-12));
    CHECK(g.value(fused)[1] == doctest::Approx(expected1).epsilon(1e-12));
  }

  SUBCASE("weights are positive and sum to one per sample") {
    ParameterStore store;
    AttentionUnit unit(store, "at", 4, rng);
    Graph g;
    ParamBinding binding(g, store);
    Array v(5, 4), z(5, 4);
    Rng vals(9);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = vals.uniform(-2, 2);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = vals.uniform(-2, 2);
    unit.fuse(g, binding, g.input(v), g.input(z));
    // The attention softmax is the only kSoftmax node in this graph.
    bool found = false;
    for (NodeId id = 0; id < g.size(); ++id) {
      if (g.op(id) == Op::kSoftmax) {
        found = true;
        const Array& w = g.value(id);
        REQUIRE(w.cols() == 2);
        for (std::size_t r = 0; r < w.rows(); ++r) {
          CHECK(w.at(r, 0) > 0.0);
          CHECK(w.at(r, 1) > 0.0);
          CHECK(std::fabs(w.at(r, 0) + w.at(r, 1) - 1.0) < 1e-12);
        }
      }
    }
    CHECK(found);
  }

  SUBCASE("a common additive shift of both logits leaves weights unchanged") {
    Graph g;
    const Array logits(3, 2, {0.3, -1.2, 4.0, 4.5, -2.0, -2.0});
    const NodeId w1 = g.softmax(g.input(logits));
    Array shifted = logits;
    for (std::size_t r = 0; r < 3; ++r) {
      shifted.at(r, 0) += 17.25;
      shifted.at(r, 1) += 17.25;
    }
    const NodeId w2 = g.softmax(g.input(shifted));
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(g.value(w1)[i] == doctest::Approx(g.value(w2)[i]).epsilon(1e-12));
    }
  }

  SUBCASE("differentiable end to end through Q, K, V") {
    ParameterStore store;
    AttentionUnit unit(store, "at", 3, rng);
    Array v(2, 3), z(2, 3);
    Rng vals(13);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = vals.uniform(-1, 1);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = vals.uniform(-1, 1);
    const double err = store_gradient_error(
        store, {"at.q", "at.k", "at.v"}, [&](Graph& g, ParamBinding& b) {
          return g.mean(unit.fuse(g, b, g.input(v), g.input(z)));
        });
    CHECK(err < 1e-4);
  }

  SUBCASE("dimension mismatch is a shape error") {
    ParameterStore store;
    AttentionUnit unit(store, "at", 3, rng);
    Graph g;
    ParamBinding binding(g, store);
    CHECK_THROWS_AS(
        unit.fuse(g, binding, g.input(Array(2, 3)), g.input(Array(2, 4))),
        ShapeError);
  }
}

TEST_CASE("initialization is seed-deterministic and bounded") {
  Rng a(99), b(99);
  CHECK(bitwise_equal(glorot_uniform(7, 5, a), glorot_uniform(7, 5, b)));
  CHECK(bitwise_equal(embedding_init(10, 3, a), embedding_init(10, 3, b)));
  const Array g = glorot_uniform(8, 8, a);
  const double limit = std::sqrt(6.0 / 16.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(std::fabs(g[i]) <= limit);
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(31);
  ParameterStore store;
  store.add("alpha", glorot_uniform(3, 4, rng));
  store.add("beta", Array(1, 5, {1, 2, 3, 4, 5}));

  const std::string path =
      (std::filesystem::temp_directory_path() / "pimm_ckpt_test.bin").string();
  save_checkpoint(store, path);

  const auto entries = load_checkpoint(path);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].first == "alpha");
  CHECK(entries[1].first == "beta");
  CHECK(bitwise_equal(entries[0].second, store.value(0)));
  CHECK(bitwise_equal(entries[1].second, store.value(1)));

  ParameterStore other;
  other.add("alpha", Array(3, 4));
  other.add("beta", Array(1, 5));
  restore_checkpoint(other, path);
  CHECK(bitwise_equal(other.value(0), store.value(0)));
  CHECK(bitwise_equal(other.value(1), store.value(1)));

  ParameterStore wrong;
  wrong.add("alpha", Array(3, 3));
  wrong.add("beta", Array(1, 5));
  CHECK_THROWS_AS(restore_checkpoint(wrong, path), IoError);

  std::filesystem::remove(path);
}

TEST_CASE("parameter binding reuses one leaf per parameter") {
  Rng rng(41);
  ParameterStore store;
  const ParamId w = store.add("w", glorot_uniform(2, 2, rng));
  Graph g;
  ParamBinding binding(g, store);
  const NodeId first = binding.node(w);
  const NodeId second = binding.node(w);
  CHECK(first == second);
  CHECK(binding.bound(w));
  // Unused parameters report zero gradients of the right shape.
  const ParamId unused = store.add("u", Array(3, 1));
  ParamBinding fresh(g, store);
  const Array zero = fresh.grad(unused);
  CHECK(zero.rows() == 3);
  for (std::size_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);
}
