#include "noiseopt/network.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace noiseopt {
namespace {

// One dense neuron y = w x + b + sigma * eps with identity activation.
NetworkState single_neuron(double w, double sigma, NoiseKind kind = NoiseKind::trainable) {
  Architecture arch{{1, 1, 1}, {LayerSpec::dense(1, 1, Activation::identity, {kind, sigma == 0.0 ? 1.0 : sigma})}};
  NetworkState net = init_network(arch, 0);
  net.layers[0].weights[0] = w;
  net.layers[0].bias[0] = 0.0;
  net.layers[0].sigma = Tensor({1}, sigma);
  return net;
}

ForwardTrace trace_with_eps(const NetworkState& net, double x, double eps) {
  RngStream rng(0, 0);
  ForwardTrace t = forward(net, Tensor({1, 1}, x), NoiseMode::active(), rng).trace;
  t.layers[0].noise = Tensor({1, 1}, eps);
  return t;
}

Architecture mlp(std::vector<std::size_t> sizes, Activation act, NoiseSpec noise) {
  Architecture a{{1, 1, sizes[0]}, {}};
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    const bool last = i + 1 == sizes.size();
    a.layers.push_back(LayerSpec::dense(sizes[i - 1], sizes[i], last ? Activation::identity : act,
                                        last ? NoiseSpec::none() : noise));
  }
  return a;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

TEST(ForwardTest, NoiseDisabledPassThrough) {
  const NetworkState net = single_neuron(1.0, 0.0);
  RngStream rng(1, 1);
  EXPECT_EQ(forward(net, Tensor({1, 1}, 2.0), NoiseMode::disabled(), rng).output[0], 2.0);
}

TEST(ForwardTest, FrozenNoiseByHand) {
  const NetworkState net = single_neuron(1.0, 1.0);
  const ForwardTrace t = trace_with_eps(net, 2.0, 0.5);
  RngStream rng(1, 1);
  EXPECT_EQ(forward(net, Tensor({1, 1}, 2.0), NoiseMode::frozen(t), rng).output[0], 2.5);
}

TEST(ForwardTest, MatchesLoopOracle) {
  const NetworkState net = init_network(mlp({2, 3, 2}, Activation::sigmoid, NoiseSpec::none()), 4);
  RngStream data(9, 9);
  const Tensor x = sample_uniform(data, {5, 2}, -1, 1);
  RngStream rng(0, 0);
  const Tensor out = forward(net, x, NoiseMode::disabled(), rng).output;
  for (std::size_t s = 0; s < 5; ++s) {
    double h[3];
    for (std::size_t j = 0; j < 3; ++j) {
      double v = net.layers[0].bias[j];
      for (std::size_t i = 0; i < 2; ++i) v += net.layers[0].weights.at(j, i) * x.at(s, i);
      h[j] = sigmoid(v);
    }
    for (std::size_t k = 0; k < 2; ++k) {
      double v = net.layers[1].bias[k];
      for (std::size_t j = 0; j < 3; ++j) v += net.layers[1].weights.at(k, j) * h[j];
      EXPECT_NEAR(out.at(s, k), v, 1e-12);
    }
  }
}

TEST(ForwardTest, DisabledIsDeterministicRegardlessOfRng) {
  const NetworkState net = init_network(mlp({3, 4, 2}, Activation::relu, NoiseSpec::trainable()), 2);
  const Tensor x({2, 3}, 0.3);
  RngStream a(1, 1), b(99, 5);
  EXPECT_EQ(forward(net, x, NoiseMode::disabled(), a).output, forward(net, x, NoiseMode::disabled(), b).output);
}

TEST(ForwardTest, ConvNoiseIsPerElementWithSharedSigma) {
  Architecture arch{{1, 4, 4}, {LayerSpec::conv(1, 2, Activation::identity, NoiseSpec::trainable(0.5)),
                                LayerSpec::dense(32, 2, Activation::identity)}};
  NetworkState net = init_network(arch, 3);
  net.layers[0].sigma = Tensor({2}, std::vector<double>{0.5, 2.0});
  RngStream rng(4, 4);
  const Tensor x({1, 1, 4, 4}, 0.2);
  const ForwardResult noisy = forward(net, x, NoiseMode::active(), rng);
  const ForwardResult clean = forward(net, x, NoiseMode::disabled(), rng);
  const Tensor& eps = noisy.trace.layers[0].noise;
  ASSERT_EQ(eps.shape(), (Shape{1, 2, 4, 4}));
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t p = 0; p < 16; ++p) {
      const std::size_t i = k * 16 + p;
      EXPECT_NEAR(noisy.trace.layers[0].pre[i] - clean.trace.layers[0].pre[i], net.layers[0].sigma[k] * eps[i], 1e-12);
    }
  EXPECT_NE(eps[0], eps[1]);
}

TEST(ForwardTest, FrozenTraceShapeMismatchThrows) {
  const NetworkState net = init_network(mlp({3, 4, 2}, Activation::relu, NoiseSpec::trainable()), 2);
  RngStream rng(1, 1);
  const ForwardTrace t = forward(net, Tensor({2, 3}, 0.1), NoiseMode::active(), rng).trace;
  EXPECT_THROW(forward(net, Tensor({3, 3}, 0.1), NoiseMode::frozen(t), rng), DimensionError);
  EXPECT_THROW(forward(net, Tensor({2, 5}, 0.1), NoiseMode::disabled(), rng), DimensionError);
}

TEST(ArchitectureTest, ValidatesComposition) {
  EXPECT_THROW(layer_output_shapes(mlp({3, 4, 2}, Activation::relu, NoiseSpec::trainable(0.0))), ArchitectureError);
  Architecture bad = mlp({3, 4, 2}, Activation::relu, NoiseSpec::none());
  bad.layers[1].inputs = 5;
  EXPECT_THROW(layer_output_shapes(bad), ArchitectureError);
  Architecture odd{{1, 5, 5}, {LayerSpec::conv(1, 2, Activation::relu, {}, true)}};
  EXPECT_THROW(layer_output_shapes(odd), ArchitectureError);
}

TEST(LossTest, UniformLogits) {
  const Tensor logits({1, 2}, 0.0);
  const std::vector<int> y = {0};
  const LossResult r = cross_entropy_loss(logits, y);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(r.output_grad[0], -0.5);
  EXPECT_DOUBLE_EQ(r.output_grad[1], 0.5);
}

TEST(LossTest, SaturatedLogitsAreStable) {
  const Tensor logits({1, 2}, std::vector<double>{1000, 0});
  const std::vector<int> y = {0};
  const LossResult r = cross_entropy_loss(logits, y);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 0.0, 1e-300);
  const LossResult wrong = cross_entropy_loss(logits, std::vector<int>{1});
  EXPECT_NEAR(wrong.loss, 1000.0, 1e-9);
}

TEST(LossTest, MatchesExplicitSoftmax) {
  RngStream rng(2, 2);
  const Tensor logits = sample_uniform(rng, {4, 3}, -3, 3);
  const std::vector<int> y = {0, 2, 1, 2};
  const LossResult r = cross_entropy_loss(logits, y);
  long double total = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    long double z = 0;
    for (std::size_t j = 0; j < 3; ++j) z += std::exp(static_cast<long double>(logits.at(i, j)));
    for (std::size_t j = 0; j < 3; ++j) {
      const long double p = std::exp(static_cast<long double>(logits.at(i, j))) / z;
      EXPECT_NEAR(r.output_grad.at(i, j), static_cast<double>(p - (static_cast<int>(j) == y[i] ? 1 : 0)), 1e-10);
    }
    total -= std::log(std::exp(static_cast<long double>(logits.at(i, static_cast<std::size_t>(y[i])))) / z);
  }
  EXPECT_NEAR(r.loss, static_cast<double>(total / 4), 1e-10);
}

TEST(LossTest, LabelOutOfRangeThrows) {
  EXPECT_THROW(cross_entropy_loss(Tensor({1, 3}), std::vector<int>{3}), std::out_of_range);
  EXPECT_THROW(cross_entropy_loss(Tensor({1, 3}), std::vector<int>{-1}), std::out_of_range);
}

TEST(BackwardTest, SingleNeuronSigmaGradientIsEps) {
  const NetworkState net = single_neuron(1.0, 1.0);
  const ForwardTrace t = trace_with_eps(net, 2.0, 0.7);
  RngStream rng(0, 0);
  const ForwardResult fr = forward(net, Tensor({1, 1}, 2.0), NoiseMode::frozen(t), rng);
  const GradientBundle g = backward(net, fr.trace, Tensor({1, 1}, 1.0));
  EXPECT_DOUBLE_EQ(g.layers[0].sigma[0], 0.7);
  EXPECT_DOUBLE_EQ(g.layers[0].weights[0], 2.0);
  EXPECT_DOUBLE_EQ(g.layers[0].bias[0], 1.0);
}

TEST(BackwardTest, SigmaGradientAtZeroSigma) {
  const NetworkState net = single_neuron(1.0, 0.0);
  const ForwardTrace t = trace_with_eps(net, 2.0, 0.7);
  RngStream rng(0, 0);
  const ForwardResult fr = forward(net, Tensor({1, 1}, 2.0), NoiseMode::frozen(t), rng);
  EXPECT_EQ(fr.output[0], 2.0);
  const GradientBundle g = backward(net, fr.trace, Tensor({1, 1}, 1.0));
  EXPECT_DOUBLE_EQ(g.layers[0].sigma[0], 0.7);
}

TEST(BackwardTest, DisabledNoiseGivesZeroSigmaGradient) {
  const NetworkState net = init_network(mlp({3, 4, 2}, Activation::sigmoid, NoiseSpec::trainable()), 5);
  RngStream rng(0, 0);
  const ForwardResult fr = forward(net, Tensor({2, 3}, 0.4), NoiseMode::disabled(), rng);
  const GradientBundle g = backward(net, fr.trace, Tensor({2, 2}, 1.0));
  for (double v : g.layers[0].sigma.data()) EXPECT_EQ(v, 0.0);
}

// Central differences with the same eps, every coordinate.
TEST(BackwardTest, MlpMatchesFiniteDifferences) {
  NetworkState net = init_network(mlp({4, 5, 3}, Activation::sigmoid, NoiseSpec::trainable()), 8);
  for (double& s : net.layers[0].sigma.data()) s = 0.6;
  RngStream data(3, 3);
  const Tensor x = sample_uniform(data, {3, 4}, 0, 1);
  const std::vector<int> y = {0, 2, 1};
  RngStream rng(6, 6);
  const ForwardTrace frozen = forward(net, x, NoiseMode::active(), rng).trace;
  auto loss = [&] { return cross_entropy_loss(forward(net, x, NoiseMode::frozen(frozen), rng).output, y).loss; };

  const ForwardResult fr = forward(net, x, NoiseMode::frozen(frozen), rng);
  const GradientBundle g = backward(net, fr.trace, cross_entropy_loss(fr.output, y).output_grad);
  const double h = 1e-5;
  auto check = [&](Tensor& p, const Tensor& grad) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + h;
      const double up = loss();
      p[i] = keep - h;
      const double down = loss();
      p[i] = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_LE(std::abs(fd - grad[i]), std::max(1e-4 * std::max(std::abs(fd), std::abs(grad[i])), 1e-7));
    }
  };
  for (std::size_t t = 0; t < 2; ++t) {
    check(net.layers[t].weights, g.layers[t].weights);
    check(net.layers[t].bias, g.layers[t].bias);
  }
  check(net.layers[0].sigma, g.layers[0].sigma);
}

TEST(BackwardTest, EpsFormEqualsZOverSigmaForm) {
  const NetworkState net = init_network(mlp({3, 6, 2}, Activation::relu, NoiseSpec::trainable(0.8)), 1);
  RngStream rng(1, 2);
  const ForwardResult fr = forward(net, Tensor({4, 3}, 0.5), NoiseMode::active(), rng);
  const BackpropResult r = backpropagate(net, fr.trace, Tensor({4, 2}, 1.0), {true, false, true});
  const Tensor& delta = r.residuals[0];
  const Tensor& eps = fr.trace.layers[0].noise;
  for (std::size_t u = 0; u < 6; ++u) {
    const double sigma = net.layers[0].sigma[u];
    double via_z = 0.0;
    for (std::size_t s = 0; s < 4; ++s) via_z += delta.at(s, u) * (sigma * eps.at(s, u)) / sigma;
    EXPECT_NEAR(via_z / 4, r.grads.layers[0].sigma[u], 1e-12);
  }
}

TEST(BackwardTest, BatchAdditivity) {
  const NetworkState net = init_network(mlp({3, 4, 2}, Activation::sigmoid, NoiseSpec::trainable()), 3);
  RngStream data(4, 4);
  const Tensor x = sample_uniform(data, {2, 3}, 0, 1);
  const std::vector<int> y = {1, 0};
  RngStream rng(2, 2);
  const ForwardResult both = forward(net, x, NoiseMode::active(), rng);
  const GradientBundle g = backward(net, both.trace, cross_entropy_loss(both.output, y).output_grad);

  GradientBundle parts[2];
  for (std::size_t s = 0; s < 2; ++s) {
    ForwardTrace one;
    one.layers.resize(2);
    for (std::size_t t = 0; t < 2; ++t) {
      if (!both.trace.layers[t].noise.empty()) one.layers[t].noise = both.trace.layers[t].noise.slice_rows(s, s + 1);
    }
    const ForwardResult fr = forward(net, x.slice_rows(s, s + 1), NoiseMode::frozen(one), rng);
    parts[s] = backward(net, fr.trace, cross_entropy_loss(fr.output, std::vector<int>{y[s]}).output_grad);
  }
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t i = 0; i < g.layers[t].weights.size(); ++i)
      EXPECT_NEAR(g.layers[t].weights[i], 0.5 * (parts[0].layers[t].weights[i] + parts[1].layers[t].weights[i]), 1e-12);
    for (std::size_t i = 0; i < g.layers[t].bias.size(); ++i)
      EXPECT_NEAR(g.layers[t].bias[i], 0.5 * (parts[0].layers[t].bias[i] + parts[1].layers[t].bias[i]), 1e-12);
  }
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(g.layers[0].sigma[i], 0.5 * (parts[0].layers[0].sigma[i] + parts[1].layers[0].sigma[i]), 1e-12);
}

TEST(BackwardTest, TraceMismatchThrows) {
  const NetworkState net = init_network(mlp({3, 4, 2}, Activation::sigmoid, NoiseSpec::none()), 3);
  RngStream rng(0, 0);
  const ForwardResult fr = forward(net, Tensor({2, 3}, 0.1), NoiseMode::disabled(), rng);
  EXPECT_THROW(backward(net, fr.trace, Tensor({3, 2})), DimensionError);
  ForwardTrace shallow = fr.trace;
  shallow.layers.pop_back();
  EXPECT_THROW(backward(net, shallow, Tensor({2, 2})), DimensionError);
}

TEST(PredictTest, ArgmaxAndTieBreak) {
  EXPECT_EQ(argmax_rows(Tensor({1, 2}, std::vector<double>{0.1, 0.9}))[0], 1);
  EXPECT_EQ(argmax_rows(Tensor({1, 2}, std::vector<double>{0.5, 0.5}))[0], 0);
}

TEST(PredictTest, MemorizesFourPoints) {
  NetworkState net = init_network(mlp({2, 8, 2}, Activation::sigmoid, NoiseSpec::none()), 1);
  const Tensor x({4, 2}, std::vector<double>{0, 0, 0, 1, 1, 0, 1, 1});
  const std::vector<int> y = {0, 1, 1, 0};  // xor
  RngStream rng(0, 0);
  for (int step = 0; step < 5000; ++step) {
    const ForwardResult fr = forward(net, x, NoiseMode::disabled(), rng);
    const GradientBundle g = backward(net, fr.trace, cross_entropy_loss(fr.output, y).output_grad);
    for (std::size_t t = 0; t < 2; ++t) {
      net.layers[t].weights -= g.layers[t].weights * 2.0;
      net.layers[t].bias -= g.layers[t].bias * 2.0;
    }
  }
  EXPECT_EQ(predict(net, x, NoiseMode::disabled(), rng), Labels(y.begin(), y.end()));
}

TEST(InputGradientTest, LinearNetGivesWeightRow) {
  Architecture arch{{1, 1, 3}, {LayerSpec::dense(3, 2, Activation::identity)}};
  const NetworkState net = init_network(arch, 2);
  RngStream rng(0, 0);
  const Tensor g = input_gradient(net, Tensor({3}, 0.4), 1, NoiseMode::disabled(), rng);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g[i], net.layers[0].weights.at(1, i));
  EXPECT_THROW(input_gradient(net, Tensor({3}, 0.4), 2, NoiseMode::disabled(), rng), std::out_of_range);
}

TEST(InputGradientTest, SmallCnnMatchesFiniteDifferences) {
  Architecture arch{{1, 4, 4}, {LayerSpec::conv(1, 2, Activation::sigmoid, NoiseSpec::trainable(0.5), true),
                                LayerSpec::dense(8, 3, Activation::identity)}};
  const NetworkState net = init_network(arch, 7);
  RngStream data(5, 5);
  Tensor x = sample_uniform(data, {1, 1, 4, 4}, 0, 1);
  RngStream rng(1, 1);
  const ForwardTrace frozen = forward(net, x, NoiseMode::active(), rng).trace;
  const std::size_t c = 2;
  const Tensor g = input_gradient(net, x, c, NoiseMode::frozen(frozen), rng);
  const double h = 1e-5;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = forward(net, x, NoiseMode::frozen(frozen), rng).output.at(0, c);
    x[i] = keep - h;
    const double down = forward(net, x, NoiseMode::frozen(frozen), rng).output.at(0, c);
    x[i] = keep;
    const double fd = (up - down) / (2 * h);
    EXPECT_LE(std::abs(fd - g[i]), std::max(1e-4 * std::abs(fd), 1e-7)) << "pixel " << i;
  }
}

TEST(InputGradientTest, ReluSignPatternStableUnderScaling) {
  Architecture arch{{1, 1, 4}, {LayerSpec::dense(4, 6, Activation::relu), LayerSpec::dense(6, 3, Activation::identity)}};
  NetworkState net = init_network(arch, 9);
  for (double& b : net.layers[0].bias.data()) b = 0.0;  // keeps every pre-activation sign under scaling
  RngStream data(1, 2), rng(0, 0);
  const Tensor x = sample_uniform(data, {4}, 0.1, 1);
  const Tensor g1 = input_gradient(net, x, 0, NoiseMode::disabled(), rng);
  const Tensor g2 = input_gradient(net, x * 2.0, 0, NoiseMode::disabled(), rng);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(std::signbit(g1[i]), std::signbit(g2[i]));
}

TEST(InitTest, SeededAndShaped) {
  const Architecture arch = mlp({4, 5, 3}, Activation::relu, NoiseSpec::fixed(1.0));
  const NetworkState a = init_network(arch, 1), b = init_network(arch, 1), c = init_network(arch, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.layers[0].weights, c.layers[0].weights);
  EXPECT_EQ(a.layers[0].weights.shape(), (Shape{5, 4}));
  EXPECT_EQ(a.layers[0].sigma, Tensor({5}, 1.0));
  EXPECT_TRUE(a.layers[1].sigma.empty());
  for (double v : a.layers[0].bias.data()) EXPECT_EQ(v, 0.0);
}

}  // namespace
}  // namespace noiseopt
