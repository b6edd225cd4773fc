#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "idal/losses.hpp"
#include "idal/models.hpp"
#include "idal/tensor.hpp"

using namespace idal;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

void zero_all(NamedParams& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

// Finite-difference check against the accumulated gradient of one parameter
// of a model whose forward pass is re-run by loss_fn.
double param_grad_check(Tensor& p, const std::function<Tensor()>& loss_fn,
                        double step = 1e-5) {
  p.zero_grad();
  loss_fn().backward();
  const std::vector<double> analytic = p.grad();

  double max_rel = 0.0;
  std::vector<double>& v = p.mutable_values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double orig = v[i];
    const double hi = orig + step;
    const double lo = orig - step;
    v[i] = hi;
    const double up = loss_fn().item();
    v[i] = lo;
    const double down = loss_fn().item();
    v[i] = orig;
    const double fd = (up - down) / (hi - lo);
    const double rel = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(analytic[i]));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace

TEST_CASE("dense layer with zero weights emits bias") {
  std::mt19937_64 rng(1);
  DenseLayer layer = DenseLayer::init(3, 2, rng);
  std::fill(layer.weight.mutable_values().begin(), layer.weight.mutable_values().end(),
            0.0);
  layer.bias.mutable_values() = {0.5, -0.25};
  Tensor out = layer.forward(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(out.at(i, 0) == 0.5);
    CHECK(out.at(i, 1) == -0.25);
  }
}

TEST_CASE("pyramid output dim is feature_dim regardless of stage count") {
  std::mt19937_64 rng(2);
  for (std::size_t stages : {1, 2, 4}) {
    std::vector<std::size_t> widths(stages, 6);
    PyramidExtractor model = PyramidExtractor::init(5, widths, 7, rng);
    Tensor out = model.forward(random_tensor({3, 5}, rng));
    CHECK(out.shape() == Shape{3, 7});
    CHECK(model.parameters().size() == stages * 4);
  }
  CHECK_THROWS_AS(PyramidExtractor::init(5, {}, 7, rng), ConfigError);
}

TEST_CASE("pyramid rejects wrong input width") {
  std::mt19937_64 rng(3);
  PyramidExtractor model = PyramidExtractor::init(4, {6}, 3, rng);
  CHECK_THROWS_AS(model.forward(Tensor({2, 5}, std::vector<double>(10, 0.0))),
                  ShapeError);
}

TEST_CASE("classifier rejects K < 2") {
  std::mt19937_64 rng(4);
  CHECK_THROWS_AS(ClassifierHead::init(8, 1, rng), ConfigError);
}

TEST_CASE("discriminator output stays in the open unit interval") {
  std::mt19937_64 rng(5);
  DomainDiscriminator disc = DomainDiscriminator::init(6, 16, rng);
  Tensor out = disc.forward(random_tensor({10, 6}, rng, -50.0, 50.0));
  REQUIRE(out.shape() == Shape{10, 1});
  for (double v : out.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("extractor + classifier pipeline passes gradient checks") {
  std::mt19937_64 rng(6);
  PyramidExtractor extractor = PyramidExtractor::init(4, {8, 6}, 5, rng);
  ClassifierHead classifier = ClassifierHead::init(5, 3, rng);
  Tensor x = random_tensor({4, 4}, rng);
  std::vector<int> labels = {0, 1, 2, 1};

  NamedParams params = extractor.parameters();
  for (auto& p : classifier.parameters()) params.push_back(p);

  auto loss_fn = [&]() {
    return cross_entropy(classifier.forward(extractor.forward(x)), labels);
  };
  for (auto& [name, p] : params) {
    CAPTURE(name);
    CHECK(param_grad_check(p, loss_fn) < 1e-4);
  }
}

TEST_CASE("discriminator branch passes gradient checks through conditioning") {
  std::mt19937_64 rng(7);
  PyramidExtractor extractor = PyramidExtractor::init(4, {6}, 5, rng);
  ClassifierHead classifier = ClassifierHead::init(5, 3, rng);
  auto map = ConditioningMap::make(ConditioningKind::kMultilinear, 5, 3);
  DomainDiscriminator disc = DomainDiscriminator::init(map.output_dim, 8, rng);
  Tensor xs = random_tensor({3, 4}, rng);
  Tensor xt = random_tensor({3, 4}, rng);

  auto branch = [&](const Tensor& x) {
    Tensor f = extractor.forward(x);
    Tensor g = softmax_rows(classifier.forward(f));
    return disc.forward(condition(map, grad_reverse(f, 0.7), g));
  };
  auto loss_fn = [&]() { return discriminator_bce(branch(xs), branch(xt)); };

  NamedParams disc_params = disc.parameters();
  for (auto& [name, p] : disc_params) {
    CAPTURE(name);
    CHECK(param_grad_check(p, loss_fn) < 1e-4);
  }
}

TEST_CASE("reversal coefficient scales extractor gradients") {
  std::mt19937_64 rng(8);
  PyramidExtractor extractor = PyramidExtractor::init(4, {6}, 5, rng);
  auto map = ConditioningMap::make(ConditioningKind::kConcat, 5, 2);
  DomainDiscriminator disc = DomainDiscriminator::init(map.output_dim, 8, rng);
  Tensor xs = random_tensor({3, 4}, rng);
  Tensor xt = random_tensor({3, 4}, rng);
  Tensor probs = softmax_rows(random_tensor({3, 2}, rng));

  auto run = [&](double coeff) {
    NamedParams params = extractor.parameters();
    zero_all(params);
    auto branch = [&](const Tensor& x) {
      Tensor f = extractor.forward(x);
      return disc.forward(condition(map, grad_reverse(f, coeff), probs));
    };
    discriminator_bce(branch(xs), branch(xt)).backward();
    std::vector<std::vector<double>> grads;
    for (auto& [name, p] : params) grads.push_back(p.grad());
    return grads;
  };

  auto g1 = run(1.0);
  auto g2 = run(2.0);
  auto g0 = run(0.0);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    for (std::size_t j = 0; j < g1[i].size(); ++j) {
      CHECK(g2[i][j] == Catch::Approx(2.0 * g1[i][j]).margin(1e-12));
      CHECK(g0[i][j] == 0.0);
    }
  }
}

TEST_CASE("reversal flips the extractor gradient sign") {
  // With coefficient 1 the feature gradient is exactly the negative of the
  // un-reversed branch gradient.
  std::mt19937_64 rng(9);
  auto map = ConditioningMap::make(ConditioningKind::kConcat, 5, 2);
  DomainDiscriminator disc = DomainDiscriminator::init(map.output_dim, 8, rng);
  Tensor probs = softmax_rows(random_tensor({3, 2}, rng));
  Tensor base = random_tensor({3, 5}, rng);
  Tensor other = random_tensor({3, 5}, rng);

  auto run = [&](bool reversed) {
    Tensor f(base.shape(), base.values(), true);
    Tensor input = reversed ? grad_reverse(f, 1.0) : f;
    Tensor d_src = disc.forward(condition(map, input, probs));
    Tensor d_tgt = disc.forward(condition(map, other, probs));
    discriminator_bce(d_src, d_tgt).backward();
    return f.grad();
  };
  auto plain = run(false);
  auto flipped = run(true);
  for (std::size_t i = 0; i < plain.size(); ++i) {
    CHECK(flipped[i] == Catch::Approx(-plain[i]).margin(1e-12));
  }
}

TEST_CASE("init is deterministic for a given seed") {
  auto snapshot = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    PyramidExtractor model = PyramidExtractor::init(6, {8, 4}, 5, rng);
    std::vector<double> all;
    for (auto& [name, p] : model.parameters()) {
      all.insert(all.end(), p.values().begin(), p.values().end());
    }
    return all;
  };
  CHECK(snapshot(11) == snapshot(11));
  CHECK(snapshot(11) != snapshot(12));
}
