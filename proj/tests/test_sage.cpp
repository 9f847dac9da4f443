#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "botgraph/errors.hpp"
#include "botgraph/sage.hpp"
#include "gradcheck.hpp"

using namespace botgraph;

namespace {

using Edge = std::pair<std::uint32_t, std::uint32_t>;

SimilarityGraph graph_of(std::size_t n, std::vector<Edge> e) { return SimilarityGraph(n, 0.5, e); }

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

MlpParams small_mlp(std::size_t in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NetworkShape shape;
  shape.input_dim = in;
  shape.use_sage = false;
  shape.mlp_hidden = {5, 3};
  return init_network(shape, rng).mlp;
}

}  // namespace

TEST(AggregateNeighbors, MeanOfNeighbors) {
  Matrix f(3, 2);
  f << 0, 0, 1, 1, 3, 3;
  const auto agg = aggregate_neighbors(graph_of(3, {{0, 1}, {0, 2}}), f);
  EXPECT_EQ(agg.row(0), Eigen::RowVector2d(2, 2));
  EXPECT_EQ(agg.row(1), Eigen::RowVector2d(0, 0));
}

TEST(AggregateNeighbors, IsolatedPolicies) {
  Matrix f(2, 2);
  f << 4, 5, 6, 7;
  const auto g = graph_of(2, {});
  EXPECT_EQ(aggregate_neighbors(g, f), Matrix::Zero(2, 2));
  EXPECT_EQ(aggregate_neighbors(g, f, IsolatedPolicy::kSelf), f);
}

TEST(AggregateNeighbors, IdenticalNeighbors) {
  Matrix f(4, 3);
  f << 9, 9, 9, 1, 2, 3, 1, 2, 3, 1, 2, 3;
  const auto agg = aggregate_neighbors(graph_of(4, {{0, 1}, {0, 2}, {0, 3}}), f);
  EXPECT_TRUE(agg.row(0).isApprox(f.row(1), 1e-15));
}

TEST(AggregateNeighbors, Linear) {
  std::mt19937_64 rng(1);
  const Matrix fm = random_matrix(30, 4, rng);
  const RowMatrix rm = fm;
  const auto g = build_graph(rm, 0.1, 1);
  const Matrix a = random_matrix(30, 4, rng), b = random_matrix(30, 4, rng);
  const double alpha = 1.7, beta = -0.3;
  const Matrix lhs = aggregate_neighbors(g, alpha * a + beta * b);
  const Matrix rhs = alpha * aggregate_neighbors(g, a) + beta * aggregate_neighbors(g, b);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(AggregateNeighbors, SizeMismatch) {
  EXPECT_THROW(aggregate_neighbors(graph_of(3, {}), Matrix::Zero(2, 2)), DimensionError);
}

TEST(SageForward, ZeroWeightsGiveZero) {
  std::mt19937_64 rng(2);
  const Matrix f = random_matrix(5, 3, rng);
  SageLayerParams p{Matrix::Zero(4, 6), Vector::Zero(4)};
  EXPECT_EQ(sage_forward(graph_of(5, {{0, 1}}), f, p), Matrix::Zero(5, 4));
}

TEST(SageForward, SelfIdentity) {
  std::mt19937_64 rng(3);
  const Matrix f = random_matrix(5, 3, rng).cwiseAbs();
  SageLayerParams p{Matrix::Zero(3, 6), Vector::Zero(3)};
  p.weight.leftCols(3).setIdentity();
  EXPECT_EQ(sage_forward(graph_of(5, {{0, 1}, {2, 4}}), f, p), f);
}

TEST(SageForward, MatchesDenseOracle) {
  std::mt19937_64 rng(4);
  const Matrix f = random_matrix(6, 3, rng);
  const auto g = graph_of(6, {{0, 1}, {0, 2}, {1, 2}, {3, 4}});
  SageLayerParams p{random_matrix(4, 6, rng), random_matrix(4, 1, rng)};

  Matrix adj = Matrix::Zero(6, 6);
  for (auto [i, j] : g.edge_list()) adj(i, j) = adj(j, i) = 1.0;
  Matrix expected(6, 4);
  for (int i = 0; i < 6; ++i) {
    const double deg = adj.row(i).sum();
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(3);
    if (deg > 0) mean = adj.row(i) * f / deg;
    for (int o = 0; o < 4; ++o) {
      double z = p.bias(o);
      for (int c = 0; c < 3; ++c) z += p.weight(o, c) * f(i, c) + p.weight(o, 3 + c) * mean(c);
      expected(i, o) = std::max(0.0, z);
    }
  }
  EXPECT_LE((sage_forward(g, f, p) - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SageForward, ShapeMismatch) {
  SageLayerParams p{Matrix::Zero(4, 5), Vector::Zero(4)};
  EXPECT_THROW(sage_forward(graph_of(2, {}), Matrix::Zero(2, 3), p), DimensionError);
}

TEST(MlpForward, InferWithIdentityNormIsPlainMlp) {
  std::mt19937_64 rng(5);
  const Matrix h = random_matrix(7, 4, rng);
  const MlpParams p = small_mlp(4, 6);
  MlpOptions opts;
  opts.bn_eps = 0.0;
  opts.dropout = 0.5;
  Matrix x = h;
  for (const auto& l : p.hidden) {
    x = ((x * l.weight.transpose()).rowwise() + l.bias.transpose()).cwiseMax(0.0);
  }
  const Matrix expected = (x * p.out_weight.transpose()).rowwise() + p.out_bias.transpose();
  EXPECT_LE((mlp_forward(h, p, Mode::kInfer, opts, 123) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MlpForward, ZeroDropoutIsIdentity) {
  std::mt19937_64 rng(7);
  const Matrix h = random_matrix(9, 4, rng);
  const MlpParams p = small_mlp(4, 8);
  MlpOptions opts;
  opts.dropout = 0.0;
  MlpCache cache;
  const Matrix a = mlp_forward(h, p, Mode::kTrain, opts, 1, &cache);
  EXPECT_EQ(a, mlp_forward(h, p, Mode::kTrain, opts, 999));
  for (const auto& l : cache.layers) {
    EXPECT_EQ(l.output, l.activated.cwiseMax(0.0));
  }
}

TEST(MlpForward, SeededDropoutIsReproducible) {
  std::mt19937_64 rng(9);
  const Matrix h = random_matrix(9, 4, rng);
  const MlpParams p = small_mlp(4, 10);
  MlpOptions opts;
  opts.dropout = 0.5;
  const Matrix a = mlp_forward(h, p, Mode::kTrain, opts, 77);
  EXPECT_EQ(a, mlp_forward(h, p, Mode::kTrain, opts, 77));
  EXPECT_NE(a, mlp_forward(h, p, Mode::kTrain, opts, 78));
}

TEST(MlpForward, DropoutMaskUsesInvertedScaling) {
  std::mt19937_64 rng(11);
  const Matrix h = random_matrix(50, 4, rng);
  const MlpParams p = small_mlp(4, 12);
  MlpOptions opts;
  opts.dropout = 0.25;
  MlpCache cache;
  mlp_forward(h, p, Mode::kTrain, opts, 5, &cache);
  for (const auto& l : cache.layers) {
    for (Eigen::Index i = 0; i < l.mask.size(); ++i) {
      const double m = l.mask.data()[i];
      EXPECT_TRUE(m == 0.0 || m == 1.0 / 0.75);
    }
  }
}

TEST(MlpForward, InferenceIgnoresBatchComposition) {
  std::mt19937_64 rng(13);
  const Matrix h = random_matrix(8, 4, rng);
  MlpParams p = small_mlp(4, 14);
  for (auto& l : p.hidden) {
    l.running_mean.setRandom();
    l.running_var = Vector::Constant(l.running_var.size(), 2.0);
  }
  const Matrix all = mlp_forward(h, p, Mode::kInfer, {}, 0);
  const Matrix one = mlp_forward(h.topRows(1), p, Mode::kInfer, {}, 1);
  EXPECT_EQ(all.row(0), one.row(0));
}

TEST(MlpForward, SingleRowTrainBatchRejected) {
  const MlpParams p = small_mlp(4, 1);
  EXPECT_THROW(mlp_forward(Matrix::Zero(1, 4), p, Mode::kTrain, {}, 0), BatchTooSmall);
  EXPECT_NO_THROW(mlp_forward(Matrix::Zero(1, 4), p, Mode::kInfer, {}, 0));
}

TEST(Softmax, Examples) {
  Matrix z(3, 2);
  z << 0, 0, 1000, 0, std::log(3.0), 0;
  const Matrix p = softmax_rows(z);
  EXPECT_EQ(p(0, 0), 0.5);
  EXPECT_EQ(p(1, 0), 1.0);
  EXPECT_GE(p(1, 1), 0.0);
  EXPECT_NEAR(p(2, 0), 0.75, 1e-9);
  EXPECT_NEAR(p(2, 1), 0.25, 1e-9);
}

TEST(Softmax, RowsArePositiveAndSumToOne) {
  std::mt19937_64 rng(15);
  const Matrix z = random_matrix(100, 3, rng) * 10.0;
  const Matrix p = softmax_rows(z);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-6);
    EXPECT_GT(p.row(r).minCoeff(), 0.0);
  }
  Matrix shifted = z;
  shifted.col(0).array() += 5.0;
  shifted.col(1).array() += 5.0;
  shifted.col(2).array() += 5.0;
  EXPECT_LE((softmax_rows(shifted) - p).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Loss, Examples) {
  Matrix perfect(2, 2);
  perfect << 1, 0, 0, 1;
  const std::vector<int> y = {0, 1};
  const std::vector<std::size_t> mask = {0, 1};
  EXPECT_NEAR(cross_entropy_loss(perfect, y, mask), 0.0, 1e-12);

  const Matrix uniform = Matrix::Constant(2, 2, 0.5);
  EXPECT_NEAR(cross_entropy_loss(uniform, y, mask), std::log(2.0), 1e-6);

  Matrix p(1, 2);
  p << 0.75, 0.25;
  const std::vector<int> y0 = {0};
  const std::vector<std::size_t> m0 = {0};
  EXPECT_NEAR(cross_entropy_loss(p, y0, m0), 0.2876821, 1e-6);
}

TEST(Loss, ClampedAndMasked) {
  Matrix p(2, 2);
  p << 1, 0, 0.5, 0.5;
  const std::vector<int> y = {1, 0};
  const std::vector<std::size_t> only_second = {1};
  EXPECT_NEAR(cross_entropy_loss(p, y, only_second), std::log(2.0), 1e-12);
  const std::vector<std::size_t> first = {0};
  const double clamped = cross_entropy_loss(p, y, first);
  EXPECT_TRUE(std::isfinite(clamped));
  EXPECT_NEAR(clamped, -std::log(1e-15), 1e-9);
  EXPECT_THROW(cross_entropy_loss(p, y, {}), EmptyMask);
}

TEST(Backward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    for (bool sage : {true, false}) {
      for (auto iso : {IsolatedPolicy::kZero, IsolatedPolicy::kSelf}) {
        const auto inst = testing_support::make_grad_instance(seed, sage, iso);
        const auto r = testing_support::check_gradients(inst);
        EXPECT_EQ(r.failures, 0u) << "seed " << seed << " worst " << r.worst_rel_error << " at "
                                  << r.worst_where;
        EXPECT_GT(r.checked, 10u);
      }
    }
  }
}

TEST(Backward, StationaryPointForOutputBias) {
  std::mt19937_64 rng(20);
  NetworkShape shape;
  shape.input_dim = 3;
  shape.sage_hidden = 4;
  shape.mlp_hidden = {4, 3};
  NetworkParams p = init_network(shape, rng);
  for (auto b : trainable_blocks(p)) std::fill(b.begin(), b.end(), 0.0);
  Matrix f(4, 3);
  f << 1, 2, 3, 1, 2, 3, -1, -2, -3, -1, -2, -3;
  const RowMatrix rf = f;
  const auto g = build_graph(rf, 0.9, 1);
  const std::vector<int> labels = {0, 1, 0, 1};
  const std::vector<std::size_t> mask = {0, 1, 2, 3};
  ForwardOptions opts;
  opts.mlp.dropout = 0.0;
  const auto pass = network_forward(g, f, p, Mode::kTrain, opts, 0);
  const auto grads = network_backward(pass, p, labels, mask);
  EXPECT_LE(grads.out_bias.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, NeighborWeightsUnusedWithoutEdges) {
  std::mt19937_64 rng(21);
  const Matrix f = random_matrix(6, 3, rng);
  const auto g = graph_of(6, {});
  NetworkShape shape;
  shape.input_dim = 3;
  shape.sage_hidden = 4;
  shape.mlp_hidden = {4, 3};
  const NetworkParams p = init_network(shape, rng);
  const std::vector<int> labels = {0, 1, 0, 1, 1, 0};
  const std::vector<std::size_t> mask = {0, 1, 2, 3};
  ForwardOptions opts;
  opts.mlp.dropout = 0.0;
  const auto pass = network_forward(g, f, p, Mode::kTrain, opts, 0);
  const auto grads = network_backward(pass, p, labels, mask);
  EXPECT_EQ(grads.sage_weight.rightCols(3), Matrix::Zero(4, 3));
  EXPECT_GT(grads.sage_weight.leftCols(3).cwiseAbs().maxCoeff(), 0.0);
}

TEST(RunningStats, ExponentialUpdate) {
  std::mt19937_64 rng(22);
  const Matrix f = random_matrix(10, 3, rng);
  NetworkShape shape;
  shape.input_dim = 3;
  shape.use_sage = false;
  shape.mlp_hidden = {2, 2};
  NetworkParams p = init_network(shape, rng);
  ForwardOptions opts;
  opts.mlp.dropout = 0.0;
  const auto pass = network_forward(graph_of(10, {}), f, p, Mode::kTrain, opts, 0);
  update_running_stats(p, pass, 0.1);
  const auto& c = pass.mlp.layers[0];
  const Vector expected_mean = 0.1 * c.batch_mean;
  const Vector expected_var = 0.9 * Vector::Ones(2) + 0.1 * c.batch_var * (10.0 / 9.0);
  EXPECT_TRUE(p.mlp.hidden[0].running_mean.isApprox(expected_mean, 1e-12));
  EXPECT_TRUE(p.mlp.hidden[0].running_var.isApprox(expected_var, 1e-12));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> x = {1.0, -2.0, 3.0};
  std::vector<double> g = {0.5, -4.0, 0.0};
  std::vector<std::span<double>> xs = {x}, gs = {g};
  AdamOptimizer opt(0.01, 0.9, 0.999, 1e-8);
  opt.step(xs, gs);
  EXPECT_NEAR(x[0], 0.99, 1e-6);
  EXPECT_NEAR(x[1], -1.99, 1e-6);
  EXPECT_EQ(x[2], 3.0);
}

TEST(Adam, MinimizesQuadratic) {
  std::vector<double> x = {5.0, -3.0};
  std::vector<double> g(2);
  std::vector<std::span<double>> xs = {x}, gs = {g};
  AdamOptimizer opt(0.05, 0.9, 0.999, 1e-8);
  for (int it = 0; it < 2000; ++it) {
    g[0] = 2 * x[0];
    g[1] = 2 * x[1];
    opt.step(xs, gs);
  }
  EXPECT_NEAR(x[0], 0.0, 1e-3);
  EXPECT_NEAR(x[1], 0.0, 1e-3);
}

TEST(InitNetwork, ShapesAndDeterminism) {
  NetworkShape shape;
  shape.input_dim = 10;
  std::mt19937_64 a(1), b(1);
  const auto p = init_network(shape, a);
  const auto q = init_network(shape, b);
  EXPECT_EQ(p.sage.weight.rows(), 128);
  EXPECT_EQ(p.sage.weight.cols(), 20);
  ASSERT_EQ(p.mlp.hidden.size(), 2u);
  EXPECT_EQ(p.mlp.hidden[0].weight.rows(), 64);
  EXPECT_EQ(p.mlp.hidden[1].weight.cols(), 64);
  EXPECT_EQ(p.mlp.out_weight.rows(), 2);
  EXPECT_EQ(p.mlp.out_weight.cols(), 32);
  EXPECT_EQ(p.sage.weight, q.sage.weight);
  EXPECT_EQ(p.mlp.out_weight, q.mlp.out_weight);
}

TEST(IsolatedPolicyNames, RoundTrip) {
  EXPECT_EQ(parse_isolated_policy("zero"), IsolatedPolicy::kZero);
  EXPECT_EQ(parse_isolated_policy(to_string(IsolatedPolicy::kSelf)), IsolatedPolicy::kSelf);
  EXPECT_THROW(parse_isolated_policy("mean"), ConfigError);
}
