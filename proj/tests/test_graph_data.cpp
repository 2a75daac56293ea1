// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "atgat/graph_data.hpp"
#include "atgat/synth.hpp"
#include "support.hpp"

using namespace atgat;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("atgat_graph_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const char* name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

TransactionGraph labeled_line(std::size_t n) {
  std::vector<std::string> ids;
  std::vector<std::int64_t> ts(n, 1);
  std::vector<Label> labels;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(std::to_string(i));
    labels.push_back(i % 10 == 0 ? Label::illicit : Label::licit);
  }
  return TransactionGraph(std::move(ids), Matrix(n, 1), std::move(ts), std::move(labels), {});
}

}  // namespace

TEST(LoadGraph, ThreeNodeFixture) {
  TempDir dir;
  write_file(dir / "f.csv", "txId,time,f0,f1\n10,1,0.5,1\n20,2,-1,2\n30,5,3,0.25\n");
  write_file(dir / "c.csv", "txId,class\n10,1\n20,2\n30,unknown\n");
  write_file(dir / "e.csv", "src,dst\n10,20\n20,30\n");
  const TransactionGraph g = load_graph(dir / "f.csv", dir / "c.csv", dir / "e.csv");
  EXPECT_EQ(g.num_nodes(), 3u);
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_EQ(g.feature_dim(), 2u);
  EXPECT_EQ(g.labeled_nodes().size(), 2u);
  EXPECT_EQ(g.labels()[0], Label::illicit);
  EXPECT_EQ(g.labels()[1], Label::licit);
  EXPECT_EQ(g.labels()[2], Label::unknown);
  EXPECT_EQ(g.timestamps()[2], 5);
  EXPECT_EQ(g.features()(2, 1), 0.25);
  EXPECT_EQ(g.edges()[1], (Edge{1, 2}));
  EXPECT_TRUE(g.adjacency_round_trips());
  EXPECT_EQ(edge_time_delta(g, 0), 1);

  const TransactionGraph sub = induced_labeled_subgraph(g);
  EXPECT_EQ(sub.num_nodes(), 2u);
  EXPECT_EQ(sub.num_edges(), 1u);
}

TEST(LoadGraph, SubgraphDropsEdgesToUnknown) {
  TempDir dir;
  write_file(dir / "f.csv", "a,1,0\nb,1,0\nc,1,0\n");
  write_file(dir / "c.csv", "a,1\nb,unknown\nc,2\n");
  write_file(dir / "e.csv", "a,b\n");
  const TransactionGraph sub = induced_labeled_subgraph(load_graph(dir / "f.csv", dir / "c.csv", dir / "e.csv"));
  EXPECT_EQ(sub.num_nodes(), 2u);
  EXPECT_EQ(sub.num_edges(), 0u);
  EXPECT_EQ(sub.node_ids(), (std::vector<std::string>{"a", "c"}));
}

TEST(LoadGraph, AllLabeledSubgraphIsIdentity) {
  Rng rng(2);
  const TransactionGraph g = fixtures::random_graph(rng, 30, 60);
  EXPECT_EQ(induced_labeled_subgraph(g), g);
}

TEST(LoadGraph, DanglingEdgeNamesIdAndLine) {
  TempDir dir;
  write_file(dir / "f.csv", "a,1,0\nb,1,0\n");
  write_file(dir / "c.csv", "a,1\nb,2\n");
  write_file(dir / "e.csv", "a,b\nb,zz9\n");
  try {
    load_graph(dir / "f.csv", dir / "c.csv", dir / "e.csv");
    FAIL();
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("zz9"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
  }
}

TEST(LoadGraph, RejectsBadInput) {
  TempDir dir;
  write_file(dir / "c.csv", "a,1\n");
  write_file(dir / "e.csv", "");
  write_file(dir / "ragged.csv", "a,1,0,1\nb,1,0\n");
  EXPECT_THROW(load_graph(dir / "ragged.csv", dir / "c.csv", dir / "e.csv"), LoadError);
  write_file(dir / "dup.csv", "a,1,0\na,2,0\n");
  EXPECT_THROW(load_graph(dir / "dup.csv", dir / "c.csv", dir / "e.csv"), LoadError);
  EXPECT_THROW(load_graph(dir / "missing.csv", dir / "c.csv", dir / "e.csv"), LoadError);
  write_file(dir / "f.csv", "a,1,0\n");
  write_file(dir / "loop.csv", "a,a\n");
  EXPECT_ANY_THROW(load_graph(dir / "f.csv", dir / "c.csv", dir / "loop.csv"));
}

TEST(LoadGraph, DelimiterTokensAndColumns) {
  TempDir dir;
  write_file(dir / "f.tsv", "x\t3\t1\t2\t3\ny\t4\t4\t5\t6\n");
  write_file(dir / "c.tsv", "x\tbad\ny\tgood\n");
  write_file(dir / "e.tsv", "x\ty\n");
  LoadOptions opt;
  opt.delimiter = '\t';
  opt.illicit_token = "bad";
  opt.licit_token = "good";
  opt.feature_columns = {2, 0};
  const TransactionGraph g = load_graph(dir / "f.tsv", dir / "c.tsv", dir / "e.tsv", opt);
  EXPECT_EQ(g.features(), Matrix::from_rows({{3, 1}, {6, 4}}));
  EXPECT_EQ(g.labels()[0], Label::illicit);
  EXPECT_EQ(g.labels()[1], Label::licit);
}

TEST(LoadGraph, SaveLoadRoundTripIsBitExact) {
  TempDir dir;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    TransactionGraph g = fixtures::random_graph(rng, 40, 120, 5, 49);
    Matrix f = g.features();
    f(0, 0) = 0.1 + 0.2;  // needs 17 significant digits
    f(1, 1) = -1e-300;
    g = g.with_features(f);
    save_graph(g, dir / "f.csv", dir / "c.csv", dir / "e.csv");
    EXPECT_EQ(load_graph(dir / "f.csv", dir / "c.csv", dir / "e.csv"), g);
  }
  SynthConfig sc;
  sc.n_nodes = 300;
  const TransactionGraph s = generate_synthetic(sc).graph;
  save_graph(s, dir / "f.csv", dir / "c.csv", dir / "e.csv");
  EXPECT_EQ(load_graph(dir / "f.csv", dir / "c.csv", dir / "e.csv"), s);
}

TEST(Graph, InvariantsEnforced) {
  EXPECT_THROW(TransactionGraph({"a", "b"}, Matrix(2, 1), {1, 0}, {Label::licit, Label::licit}, {}),
               std::invalid_argument);
  EXPECT_THROW(TransactionGraph({"a", "b"}, Matrix(2, 1), {1, 1}, {Label::licit, Label::licit}, {{0, 2}}),
               std::invalid_argument);
  EXPECT_THROW(TransactionGraph({"a", "b"}, Matrix(2, 1), {1, 1}, {Label::licit, Label::licit}, {{1, 1}}),
               std::invalid_argument);
  EXPECT_THROW(TransactionGraph({"a", "b"}, Matrix(3, 1), {1, 1}, {Label::licit, Label::licit}, {}),
               std::invalid_argument);
}

TEST(Graph, AdjacencyReconstructsEdges) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const TransactionGraph g = fixtures::random_graph(rng, 1 + rng.below(40), 100);
    EXPECT_TRUE(g.adjacency_round_trips());
    std::multiset<std::pair<std::size_t, std::size_t>> from_in, from_out, want;
    for (const Edge& e : g.edges()) want.insert({e.src, e.dst});
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      for (std::size_t id : g.in_adjacency().edges_of(v)) {
        EXPECT_EQ(g.edges()[id].dst, v);
        from_in.insert({g.edges()[id].src, v});
      }
      for (std::size_t id : g.out_adjacency().edges_of(v)) {
        EXPECT_EQ(g.edges()[id].src, v);
        from_out.insert({v, g.edges()[id].dst});
      }
    }
    EXPECT_EQ(from_in, want);
    EXPECT_EQ(from_out, want);
  }
}

TEST(EdgeTimeDelta, Examples) {
  const TransactionGraph g({"a", "b", "c", "d"}, Matrix(4, 1), {5, 5, 1, 49},
                           {Label::licit, Label::licit, Label::licit, Label::licit}, {{0, 1}, {2, 3}, {3, 2}});
  EXPECT_EQ(edge_time_delta(g, 0), 0);
  EXPECT_EQ(edge_time_delta(g, 1), 48);
  EXPECT_EQ(edge_time_delta(g, 2), 48);
  EXPECT_THROW(edge_time_delta(g, 3), std::out_of_range);
}

TEST(Split, PaperSizes) {
  const SplitAssignment s = split_nodes(labeled_line(46564), {}, 0);
  EXPECT_EQ(s.train.size(), 37251u);
  EXPECT_EQ(s.val.size(), 4656u);
  EXPECT_EQ(s.held.size(), 4657u);
  const SplitAssignment t = split_nodes(labeled_line(10), {}, 0);
  EXPECT_EQ(t.train.size(), 8u);
  EXPECT_EQ(t.val.size(), 1u);
  EXPECT_EQ(t.held.size(), 1u);
}

TEST(Split, DisjointExhaustiveReproducible) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    TransactionGraph g = fixtures::random_graph(rng, 20 + rng.below(200), 10);
    for (bool stratified : {false, true}) {
      const std::uint64_t seed = rng.below(1000);
      const SplitAssignment a = split_nodes(g, {}, seed, stratified);
      const SplitAssignment b = split_nodes(g, {}, seed, stratified);
      EXPECT_EQ(a.train, b.train);
      EXPECT_EQ(a.val, b.val);
      EXPECT_EQ(a.held, b.held);
      std::vector<std::size_t> all = a.train;
      all.insert(all.end(), a.val.begin(), a.val.end());
      all.insert(all.end(), a.held.begin(), a.held.end());
      std::sort(all.begin(), all.end());
      EXPECT_EQ(all, g.labeled_nodes());
    }
  }
}

TEST(Split, SkipsUnlabeledAndValidatesRatios) {
  const TransactionGraph g({"a", "b", "c", "d"}, Matrix(4, 1), {1, 1, 1, 1},
                           {Label::licit, Label::unknown, Label::illicit, Label::licit}, {});
  const SplitAssignment s = split_nodes(g, {}, 3);
  EXPECT_EQ(s.train.size() + s.val.size() + s.held.size(), 3u);
  EXPECT_THROW(split_nodes(g, {0.5, 0.1, 0.1}, 0), std::invalid_argument);
  const TransactionGraph tiny({"a", "b"}, Matrix(2, 1), {1, 1}, {Label::licit, Label::illicit}, {});
  EXPECT_THROW(split_nodes(tiny, {}, 0), std::invalid_argument);
}

TEST(Standardize, FitsOnGivenRowsOnly) {
  const Matrix f = Matrix::from_rows({{1, 5}, {3, 5}, {100, 7}});
  const Matrix z = standardize_features(f, {0, 1});
  EXPECT_DOUBLE_EQ(z(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(z(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(z(2, 0), 98.0);
  EXPECT_EQ(z(0, 1), 0.0);  // zero variance: centered only
  EXPECT_EQ(z(2, 1), 2.0);
}
