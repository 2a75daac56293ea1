// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "atgat/attention.hpp"
#include "atgat/grad_check.hpp"
#include "support.hpp"

using namespace atgat;
using ad::Var;

namespace {

AttentionConfig small_config() {
  AttentionConfig c;
  c.d_in = 5;
  c.d_out = 6;
  c.d_t = 4;
  c.heads = 2;
  c.head_dim = 3;
  c.fusion_hidden = 4;
  c.dropout = 0.0;
  return c;
}

AttentionLayerParams random_layer(const AttentionConfig& c, Rng& rng, double scale = 0.8) {
  AttentionLayerParams w = make_attention_weights(c);
  w.visit([&](const char*, Matrix& m) {
    for (double& x : m.data) x = rng.uniform(-scale, scale);
  });
  return w;
}

AttentionLayerWeights<Var> bind(ad::ValueGraph& g, const AttentionLayerParams& w) {
  return w.map([&](const Matrix& m) { return g.constant(m); });
}

struct Instance {
  EdgeIndex edges;
  Matrix h;
  Matrix e;
};

Instance random_instance(Rng& rng, const AttentionConfig& c, std::size_t max_nodes = 50) {
  const std::size_t n = 1 + rng.below(max_nodes);
  const TransactionGraph g = fixtures::random_graph(rng, n, 3 * n, 1);
  Instance in;
  in.edges = with_self_loops(g);
  in.h = fixtures::random_matrix(rng, n, c.d_in, -1.5, 1.5);
  in.e = fixtures::random_matrix(rng, in.edges.size(), c.d_t, 0.0, 2.0);
  return in;
}

Matrix run_layer(const Instance& in, const AttentionLayerParams& w, const AttentionConfig& c,
                 const AttentionOptions& opt, const Matrix* e_override = nullptr) {
  ad::ValueGraph g;
  Rng rng(0);
  const Var e = g.constant(e_override ? *e_override : in.e);
  return attention_layer_forward(g.constant(in.h), in.edges, e, bind(g, w), c, opt, ad::Mode::eval, rng).value();
}

// Scalar oracle of the per-destination scores with an optional key injection.
Matrix oracle_scores(const Instance& in, const AttentionLayerParams& w, const AttentionConfig& c, bool temporal) {
  const std::size_t E = in.edges.size(), H = c.heads, D = c.head_dim;
  Matrix raw(E, H);
  for (std::size_t e = 0; e < E; ++e) {
    const std::size_t i = in.edges.dst[e], j = in.edges.src[e];
    for (std::size_t hd = 0; hd < H; ++hd) {
      double s = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        const std::size_t col = hd * D + k;
        double q = 0.0, key = 0.0;
        for (std::size_t a = 0; a < c.d_in; ++a) {
          q += in.h(i, a) * w.w_q(a, col);
          key += in.h(j, a) * w.w_k(a, col);
        }
        if (temporal)
          for (std::size_t a = 0; a < c.d_t; ++a) key += in.e(e, a) * w.w_kt(a, col);
        s += q * key;
      }
      raw(e, hd) = s / std::sqrt(static_cast<double>(D));
    }
  }
  Matrix out(E, H);
  for (std::size_t hd = 0; hd < H; ++hd)
    for (std::size_t v = 0; v < in.edges.num_nodes; ++v) {
      double total = 0.0;
      for (std::size_t e = 0; e < E; ++e)
        if (in.edges.dst[e] == v) total += std::exp(raw(e, hd));
      for (std::size_t e = 0; e < E; ++e)
        if (in.edges.dst[e] == v) out(e, hd) = std::exp(raw(e, hd)) / total;
    }
  return out;
}

void expect_near(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_TRUE(a.same_shape(b));
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.data[k], b.data[k], tol) << "entry " << k;
}

}  // namespace

TEST(SelfLoops, AppendedAfterRawEdges) {
  const EdgeIndex idx = with_self_loops(3, std::vector<Edge>{{0, 1}, {2, 1}});
  EXPECT_EQ(idx.num_raw, 2u);
  EXPECT_EQ(idx.src, (Index{0, 2, 0, 1, 2}));
  EXPECT_EQ(idx.dst, (Index{1, 1, 0, 1, 2}));
  EXPECT_THROW(with_self_loops(2, std::vector<Edge>{{0, 2}}), std::invalid_argument);
}

TEST(StructuralScores, Examples) {
  AttentionConfig c = small_config();
  c.d_in = 1;
  c.heads = 1;
  c.head_dim = 1;
  AttentionLayerParams w = make_attention_weights(c);
  w.w_q(0, 0) = 1.0;
  w.w_k(0, 0) = 1.0;
  ad::ValueGraph g;
  const EdgeIndex edges = with_self_loops(2, std::vector<Edge>{{0, 1}});
  const Matrix h = Matrix::from_rows({{0.0}, {std::sqrt(std::log(2.0))}});
  const Matrix a = structural_scores(g.constant(h), edges, bind(g, w), c).value();
  EXPECT_NEAR(a(0, 0), 1.0 / 3.0, 1e-15);  // 0 -> 1, raw score 0
  EXPECT_EQ(a(1, 0), 1.0);                 // node 0 has only its self-loop
  EXPECT_NEAR(a(2, 0), 2.0 / 3.0, 1e-15);  // 1 -> 1, raw score ln 2

  const Matrix same = structural_scores(g.constant(Matrix(3, 1, 0.7)), with_self_loops(3, std::vector<Edge>{{0, 2}}),
                                        bind(g, w), c)
                          .value();
  EXPECT_EQ(same(0, 0), 0.5);
  EXPECT_EQ(same(3, 0), 0.5);
}

TEST(StructuralScores, MatchScalarOracle) {
  const AttentionConfig c = small_config();
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = random_instance(rng, c, 12);
    const AttentionLayerParams w = random_layer(c, rng);
    ad::ValueGraph g;
    const auto wv = bind(g, w);
    expect_near(structural_scores(g.constant(in.h), in.edges, wv, c).value(), oracle_scores(in, w, c, false), 1e-12);
    expect_near(temporal_scores(g.constant(in.h), in.edges, g.constant(in.e), wv, c).value(),
                oracle_scores(in, w, c, true), 1e-12);
  }
}

TEST(TemporalScores, ZeroInjectionCollapses) {
  const AttentionConfig c = small_config();
  Rng rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance in = random_instance(rng, c);
    AttentionLayerParams w = random_layer(c, rng);
    ad::ValueGraph g;
    const Var h = g.constant(in.h);
    const Matrix s = structural_scores(h, in.edges, bind(g, w), c).value();
    const Matrix zero_e(in.edges.size(), c.d_t);
    EXPECT_EQ(temporal_scores(h, in.edges, g.constant(zero_e), bind(g, w), c).value(), s);
    std::fill(w.w_kt.data.begin(), w.w_kt.data.end(), 0.0);
    EXPECT_EQ(temporal_scores(h, in.edges, g.constant(in.e), bind(g, w), c).value(), s);
  }
}

TEST(TemporalScores, TwoInEdgesIdenticalFeatures) {
  AttentionConfig c = small_config();
  c.d_in = 1;
  c.d_t = 1;
  c.heads = 1;
  c.head_dim = 1;
  AttentionLayerParams w = make_attention_weights(c);
  w.w_q(0, 0) = 2.0;
  w.w_k(0, 0) = 0.5;
  w.w_kt(0, 0) = 1.5;
  const EdgeIndex edges = with_self_loops(3, std::vector<Edge>{{0, 2}, {1, 2}});
  const Matrix h(3, 1, 1.0);
  const Matrix e = Matrix::from_rows({{0.2}, {1.0}, {0.0}, {0.0}, {0.4}});
  ad::ValueGraph g;
  const Matrix a = temporal_scores(g.constant(h), edges, g.constant(e), bind(g, w), c).value();
  // node 2: edges 0, 1 and its self-loop (row 4)
  const double s0 = 2.0 * (0.5 + 1.5 * 0.2), s1 = 2.0 * (0.5 + 1.5 * 1.0), s2 = 2.0 * (0.5 + 1.5 * 0.4);
  const double z = std::exp(s0) + std::exp(s1) + std::exp(s2);
  EXPECT_NEAR(a(0, 0), std::exp(s0) / z, 1e-15);
  EXPECT_NEAR(a(1, 0), std::exp(s1) / z, 1e-15);
  EXPECT_NEAR(a(4, 0), std::exp(s2) / z, 1e-15);
}

TEST(GlobalScores, Examples) {
  AttentionConfig c = small_config();
  c.d_in = 1;
  c.d_t = 1;
  c.heads = 1;
  AttentionLayerParams w = make_attention_weights(c);
  w.w_g(2, 0) = 1.0;  // raw score = leaky_relu(e)
  EdgeIndex three;
  three.num_nodes = 3;
  three.src = {0, 1, 2};
  three.dst = {1, 2, 0};
  ad::ValueGraph g;
  const Matrix a = global_scores(g.constant(Matrix(3, 1)), three, g.constant(Matrix::from_rows({{0}, {0}, {std::log(2.0)}})),
                                 bind(g, w), c)
                       .value();
  EXPECT_NEAR(a(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(a(1, 0), 0.25, 1e-15);
  EXPECT_NEAR(a(2, 0), 0.5, 1e-15);

  EdgeIndex one;
  one.num_nodes = 2;
  one.src = {0};
  one.dst = {1};
  EXPECT_EQ(global_scores(g.constant(Matrix(2, 1, 3.0)), one, g.constant(Matrix(1, 1, 9.0)), bind(g, w), c).value()(0, 0),
            1.0);

  const Matrix same = global_scores(g.constant(Matrix(3, 1, 1.0)), three, g.constant(Matrix(3, 1, 0.3)), bind(g, w), c).value();
  for (double v : same.data) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

  EdgeIndex none;
  none.num_nodes = 2;
  EXPECT_THROW(global_scores(g.constant(Matrix(2, 1)), none, g.constant(Matrix(0, 1)), bind(g, w), c),
               std::invalid_argument);
}

TEST(FuseAttention, ForcedAndEqualWeights) {
  const AttentionConfig c = small_config();
  Rng rng(33);
  const Instance in = random_instance(rng, c);
  const AttentionLayerParams w = random_layer(c, rng);
  ad::ValueGraph g;
  const auto wv = bind(g, w);
  const Var h = g.constant(in.h), e = g.constant(in.e);
  const Var as = structural_scores(h, in.edges, wv, c);
  const Var at = temporal_scores(h, in.edges, e, wv, c);
  const Var ag = global_scores(h, in.edges, e, wv, c);
  const std::size_t E = in.edges.size();

  Matrix onehot(E, 3);
  for (std::size_t r = 0; r < E; ++r) onehot(r, 0) = 1.0;
  const Matrix forced = fuse_attention(as, at, ag, g.constant(onehot), in.edges).value();
  expect_near(forced, as.value(), 1e-15);

  const Matrix equal = fuse_attention(as, at, ag, g.constant(Matrix(E, 3, 1.0 / 3.0)), in.edges).value();
  Matrix mean(E, c.heads);
  for (std::size_t k = 0; k < mean.size(); ++k)
    mean.data[k] = (as.value().data[k] + at.value().data[k] + ag.value().data[k]) / 3.0;
  ad::ValueGraph g2;
  expect_near(equal, ad::segment_normalize(g2.constant(mean), in.edges.dst, in.edges.num_nodes).value(), 1e-14);

  // huge logit gap behaves like the one-hot
  AttentionLayerParams big = w;
  std::fill(big.w_f2.data.begin(), big.w_f2.data.end(), 0.0);
  big.b_f2 = Matrix::from_rows({{800.0, -800.0, -800.0}});
  const Var fw = fusion_weights(as, at, ag, e, bind(g, big));
  for (std::size_t r = 0; r < E; ++r) EXPECT_EQ(fw.value()(r, 0), 1.0);
  expect_near(fuse_attention(as, at, ag, fw, in.edges).value(), as.value(), 1e-15);

  EXPECT_THROW(fuse_attention(as, at, ag, g.constant(Matrix(E, 2)), in.edges), std::invalid_argument);
}

TEST(AttentionInvariants, RandomGraphs) {
  const AttentionConfig c = small_config();
  Rng rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(rng, c);
    const AttentionLayerParams w = random_layer(c, rng, 1.5);
    ad::ValueGraph g;
    const auto wv = bind(g, w);
    const Var h = g.constant(in.h), e = g.constant(in.e);
    const Var as = structural_scores(h, in.edges, wv, c);
    const Var at = temporal_scores(h, in.edges, e, wv, c);
    const Var ag = global_scores(h, in.edges, e, wv, c);
    const Var fw = fusion_weights(as, at, ag, e, wv);
    const Var fused = fuse_attention(as, at, ag, fw, in.edges);
    const auto n = in.edges.num_nodes;
    EXPECT_LE(fixtures::max_segment_sum_error(as.value(), in.edges.dst, n), 1e-12);
    EXPECT_LE(fixtures::max_segment_sum_error(at.value(), in.edges.dst, n), 1e-12);
    EXPECT_LE(fixtures::max_segment_sum_error(ag.value(), Index(in.edges.size(), 0), 1), 1e-12);
    EXPECT_LE(fixtures::max_row_sum_error(fw.value()), 1e-12);
    EXPECT_LE(fixtures::max_segment_sum_error(fused.value(), in.edges.dst, n), 1e-12);
    for (const Var& a : {as, at, ag, fw, fused}) EXPECT_GE(fixtures::min_entry(a.value()), 0.0);
  }
}

TEST(AttentionInvariants, ShiftWithinNeighborhood) {
  // Adding u to every key shifts each raw score by q_i . u / sqrt(d_h), a constant
  // per destination. The offset enters through a temporal column fixed at 1.
  const AttentionConfig c = small_config();
  Rng rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    Instance in = random_instance(rng, c);
    for (std::size_t r = 0; r < in.e.rows; ++r) in.e(r, 0) = 1.0;
    AttentionLayerParams w = random_layer(c, rng);
    for (std::size_t col = 0; col < c.width(); ++col) w.w_kt(0, col) = 0.0;
    AttentionLayerParams shifted = w;
    for (std::size_t col = 0; col < c.width(); ++col) shifted.w_kt(0, col) = rng.uniform(-3, 3);
    ad::ValueGraph g;
    const Var h = g.constant(in.h), e = g.constant(in.e);
    const Matrix moved = temporal_scores(h, in.edges, e, bind(g, shifted), c).value();
    expect_near(moved, temporal_scores(h, in.edges, e, bind(g, w), c).value(), 1e-12);
  }
}

TEST(AttentionLayer, AblationIdentitiesBitExact) {
  const AttentionConfig c = small_config();
  Rng rng(36);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = random_instance(rng, c);
    AttentionLayerParams w = random_layer(c, rng);
    AttentionOptions structural{AttentionPath::structural, std::nullopt};
    AttentionOptions temporal{AttentionPath::temporal, std::nullopt};
    const Matrix s = run_layer(in, w, c, structural);

    const Matrix zero_e(in.edges.size(), c.d_t);
    EXPECT_EQ(run_layer(in, w, c, temporal, &zero_e), s);

    AttentionOptions forced{AttentionPath::triple, std::array<double, 3>{1.0, 0.0, 0.0}};
    AttentionLayerParams zeroed = w;
    std::fill(zeroed.w_kt.data.begin(), zeroed.w_kt.data.end(), 0.0);
    std::fill(zeroed.w_vt.data.begin(), zeroed.w_vt.data.end(), 0.0);
    EXPECT_EQ(run_layer(in, zeroed, c, forced), s);

    AttentionOptions forced_t{AttentionPath::triple, std::array<double, 3>{0.0, 1.0, 0.0}};
    EXPECT_EQ(run_layer(in, w, c, forced_t), run_layer(in, w, c, temporal));
  }
}

TEST(AttentionLayer, SelfOnlyNode) {
  const AttentionConfig c = small_config();
  Rng rng(37);
  const AttentionLayerParams w = random_layer(c, rng);
  Instance in;
  in.edges = with_self_loops(1, std::vector<Edge>{});
  in.h = fixtures::random_matrix(rng, 1, c.d_in);
  in.e = fixtures::random_matrix(rng, 1, c.d_t, 0, 1);
  const Matrix out = run_layer(in, w, c, {});
  // alpha = 1 for every family: output = (V h + V_t e) W_o + b_o
  std::vector<double> msg(c.width());
  for (std::size_t col = 0; col < c.width(); ++col) {
    for (std::size_t a = 0; a < c.d_in; ++a) msg[col] += in.h(0, a) * w.w_v(a, col);
    for (std::size_t a = 0; a < c.d_t; ++a) msg[col] += in.e(0, a) * w.w_vt(a, col);
  }
  for (std::size_t o = 0; o < c.d_out; ++o) {
    double want = w.b_o(0, o);
    for (std::size_t col = 0; col < c.width(); ++col) want += msg[col] * w.w_o(col, o);
    EXPECT_NEAR(out(0, o), want, 1e-12);
  }
}

TEST(AttentionLayer, PermutationEquivariant) {
  const AttentionConfig c = small_config();
  Rng rng(38);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    const TransactionGraph graph = fixtures::random_graph(rng, n, 3 * n, 1);
    const AttentionLayerParams w = random_layer(c, rng);
    Index perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));

    Instance a;
    a.edges = with_self_loops(graph);
    a.h = fixtures::random_matrix(rng, n, c.d_in);
    const Matrix raw_e = fixtures::random_matrix(rng, graph.num_edges(), c.d_t, 0, 1);
    const Matrix loop_e = fixtures::random_matrix(rng, n, c.d_t, 0, 1);
    a.e = Matrix(a.edges.size(), c.d_t);
    for (std::size_t r = 0; r < graph.num_edges(); ++r)
      for (std::size_t k = 0; k < c.d_t; ++k) a.e(r, k) = raw_e(r, k);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < c.d_t; ++k) a.e(graph.num_edges() + v, k) = loop_e(v, k);

    std::vector<Edge> moved;
    for (const Edge& e : graph.edges()) moved.push_back({perm[e.src], perm[e.dst]});
    Instance b;
    b.edges = with_self_loops(n, moved);
    b.h = Matrix(n, c.d_in);
    b.e = Matrix(b.edges.size(), c.d_t);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < c.d_in; ++k) b.h(perm[v], k) = a.h(v, k);
    for (std::size_t r = 0; r < graph.num_edges(); ++r)
      for (std::size_t k = 0; k < c.d_t; ++k) b.e(r, k) = raw_e(r, k);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < c.d_t; ++k) b.e(graph.num_edges() + perm[v], k) = loop_e(v, k);

    for (AttentionPath path : {AttentionPath::structural, AttentionPath::temporal, AttentionPath::triple}) {
      const Matrix oa = run_layer(a, w, c, {path, std::nullopt});
      const Matrix ob = run_layer(b, w, c, {path, std::nullopt});
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t k = 0; k < c.d_out; ++k) EXPECT_NEAR(oa(v, k), ob(perm[v], k), 1e-12);
    }
  }
}

TEST(AttentionLayer, GradientsPassCheck) {
  AttentionConfig c = small_config();
  c.dropout = 0.1;
  Rng rng(39);
  Instance in;
  in.edges = with_self_loops(5, std::vector<Edge>{{0, 1}, {2, 1}, {3, 1}, {1, 4}, {4, 0}, {2, 3}});
  in.h = fixtures::random_matrix(rng, 5, c.d_in);
  in.e = fixtures::random_matrix(rng, in.edges.size(), c.d_t, 0, 1);
  const AttentionLayerParams w = random_layer(c, rng);
  const Matrix readout = fixtures::random_matrix(rng, 5, c.d_out);
  std::vector<Matrix> params;
  w.visit([&](const char*, const Matrix& m) { params.push_back(m); });
  const auto f = [&](ad::ValueGraph& g, std::span<const Var> p) {
    AttentionLayerWeights<Var> v{p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9], p[10], p[11]};
    Rng drop(3, "dropout");
    const Var out = attention_layer_forward(g.constant(in.h), in.edges, g.constant(in.e), v, c, {}, ad::Mode::train, drop);
    return ad::sum(ad::mul(out, g.constant(readout)));
  };
  const auto r = ad::grad_check(f, params);
  EXPECT_TRUE(r.passed(1e-4)) << r.max_rel_error << " param " << r.param << " entry " << r.entry;
}

TEST(AdditiveLayer, ShapesAndDeterminism) {
  const AttentionConfig c = small_config();
  Rng rng(40);
  const Instance in = random_instance(rng, c);
  AdditiveLayerParams w = make_additive_weights(c);
  w.visit([&](const char*, Matrix& m) {
    for (double& x : m.data) x = rng.uniform(-1, 1);
  });
  auto run = [&] {
    ad::ValueGraph g;
    Rng unused(0);
    return additive_layer_forward(g.constant(in.h), in.edges, w.map([&](const Matrix& m) { return g.constant(m); }), c,
                                  ad::Mode::eval, unused)
        .value();
  };
  const Matrix out = run();
  EXPECT_EQ(out.rows, in.edges.num_nodes);
  EXPECT_EQ(out.cols, c.d_out);
  EXPECT_EQ(run(), out);
}
