#include <doctest.h>

#include <cmath>

#include "artstyle/metaclassifier.hpp"
#include "fixtures.hpp"

using namespace artstyle;

namespace {

// Plain re-derivation of the inference pass: dense + ReLU hidden layers, softmax output.
std::vector<double> reference_forward(const MetaClassifier& meta, std::span<const double> x) {
  std::vector<double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < meta.layers.size(); ++l) {
    const auto& L = meta.layers[l];
    std::vector<double> z(L.outputs);
    for (std::size_t o = 0; o < L.outputs; ++o) {
      double s = L.biases[o];
      for (std::size_t i = 0; i < L.inputs; ++i) s += L.weights[o * L.inputs + i] * a[i];
      z[o] = s;
    }
    if (l + 1 < meta.layers.size()) {
      for (auto& v : z) v = std::max(0.0, v);
    } else {
      const double mx = *std::max_element(z.begin(), z.end());
      double sum = 0;
      for (auto& v : z) sum += (v = std::exp(v - mx));
      for (auto& v : z) v /= sum;
    }
    a = std::move(z);
  }
  return a;
}

double reference_loss(const MetaClassifier& meta, std::span<const double> x, std::size_t label,
                      std::span<const double> weights) {
  const auto p = reference_forward(meta, x);
  const double w = weights.empty() ? 1.0 : weights[label];
  return -w * std::log(p[label] + 1e-12);
}

std::vector<double> random_features(Rng& rng, std::size_t dim) {
  std::vector<double> x(dim);
  for (auto& v : x) v = rng.uniform();
  return x;
}

// Gaussian blobs, one per class, well separated in every coordinate.
FeatureSet separable(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  FeatureSet fs;
  fs.dim = dim;
  for (std::size_t n = 0; n < per_class; ++n)
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<double> x(dim);
      for (std::size_t d = 0; d < dim; ++d) x[d] = (d % classes == c ? 1.0 : 0.0) + 0.05 * rng.normal();
      fs.add(x, static_cast<int>(c));
    }
  return fs;
}

}  // namespace

TEST_CASE("layout validation") {
  const auto l = LayerLayout::for_stack(4, 12);
  CHECK(l.input_dim == 48);
  CHECK(l.output_dim == 12);
  CHECK_NOTHROW(l.validate());
  CHECK_THROWS(LayerLayout::for_stack(4, 12, {}).validate());
  CHECK_THROWS(LayerLayout::for_stack(4, 12, {8, 8, 8}).validate());
  CHECK_THROWS(LayerLayout::for_stack(4, 12, {8}, 1.0).validate());
  CHECK_THROWS(LayerLayout::for_stack(4, 12, {0}).validate());
}

TEST_CASE("initialisation statistics and determinism") {
  const auto layout = LayerLayout::for_stack(10, 20, {256});
  const auto meta = init_meta(layout, 3);
  CHECK(meta == init_meta(layout, 3));
  CHECK_FALSE(meta == init_meta(layout, 4));
  REQUIRE(meta.layers.size() == 2);
  CHECK(meta.parameter_count() == 200 * 256 + 256 + 256 * 20 + 20);
  const auto& w = meta.layers[0].weights;
  double sum = 0, sq = 0;
  for (double v : w) {
    sum += v;
    sq += v * v;
  }
  const double mean = sum / w.size();
  const double var = sq / w.size() - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(2.0 / 200).epsilon(0.05));
  for (double b : meta.layers[0].biases) CHECK(b == 0.0);
}

TEST_CASE("forward matches the reference and zero weights give uniform output") {
  Rng rng(5);
  for (auto hidden : {std::vector<std::size_t>{7}, std::vector<std::size_t>{9, 5}}) {
    const auto meta = init_meta(LayerLayout::for_stack(3, 4, hidden, 0.5), 11);
    for (int t = 0; t < 20; ++t) {
      const auto x = random_features(rng, 12);
      const auto p = forward(meta, x);
      const auto ref = reference_forward(meta, x);
      for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(p[k] - ref[k]) < 1e-12);
    }
  }
  auto zero = init_meta(LayerLayout::for_stack(2, 5, {6}), 1);
  for (auto& L : zero.layers) std::fill(L.weights.begin(), L.weights.end(), 0.0);
  const auto p = forward(zero, random_features(rng, 10));
  for (std::size_t k = 0; k < 5; ++k) CHECK(p[k] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK_THROWS(forward(zero, std::vector<double>(9, 0.0)));
}

TEST_CASE("dropout is active only in training mode") {
  const auto meta = init_meta(LayerLayout::for_stack(4, 3, {32}, 0.5), 2);
  Rng rng(3);
  const auto x = random_features(rng, 12);
  Rng a(8), b(8);
  CHECK(forward(meta, x, true, &a) == forward(meta, x, true, &b));
  bool differs = false;
  for (int i = 0; i < 5; ++i) differs = differs || !(forward(meta, x, true, &a) == forward(meta, x));
  CHECK(differs);
  CHECK_THROWS(forward(meta, x, true, nullptr));
}

TEST_CASE("loss definition") {
  const std::vector<double> p{0.25, 0.5, 0.25};
  CHECK(loss(p, 1) == doctest::Approx(-std::log(0.5 + 1e-12)));
  const std::vector<double> w{1.0, 3.0, 1.0};
  CHECK(loss(p, 1, w) == doctest::Approx(-3.0 * std::log(0.5 + 1e-12)));
  const std::vector<double> zero{1.0, 0.0, 0.0};
  CHECK(loss(zero, 1) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("analytic gradient agrees with finite differences on a 6-4-3 network") {
  Rng rng(21);
  for (int t = 0; t < 10; ++t) {
    const auto meta = init_meta(LayerLayout::for_stack(2, 3, {4}, 0.5), 100 + t);
    REQUIRE(meta.layout.input_dim == 6);
    const auto x = random_features(rng, 6);
    const auto label = static_cast<std::size_t>(rng.uniform_index(3));
    CHECK(gradient_check(meta, x, label, 1e-5) < 1e-5);
    const std::vector<double> w{0.5, 2.0, 1.5};
    CHECK(gradient_check(meta, x, label, 1e-5, w) < 1e-5);
  }
  CHECK_THROWS(gradient_check(init_meta(LayerLayout::for_stack(2, 3, {4}), 1), std::vector<double>(6, 0.1), 0, 1e-2));
}

TEST_CASE("loss_gradient matches an independent numeric derivative") {
  Rng rng(31);
  auto meta = init_meta(LayerLayout::for_stack(3, 3, {5, 4}, 0.3), 7);
  const auto x = random_features(rng, 9);
  const std::vector<double> w{1.0, 1.0, 2.0};
  double loss_value = 0;
  const auto grad = loss_gradient(meta, x, 2, w, nullptr, &loss_value);
  CHECK(loss_value == doctest::Approx(reference_loss(meta, x, 2, w)).epsilon(1e-12));
  const double h = 1e-6;
  double worst = 0;
  for (std::size_t l = 0; l < meta.layers.size(); ++l) {
    for (std::size_t i = 0; i < meta.layers[l].weights.size(); ++i) {
      auto& p = meta.layers[l].weights[i];
      const double saved = p;
      p = saved + h;
      const double up = reference_loss(meta, x, 2, w);
      p = saved - h;
      const double down = reference_loss(meta, x, 2, w);
      p = saved;
      worst = std::max(worst, std::abs((up - down) / (2 * h) - grad[l].weights[i]));
    }
    for (std::size_t i = 0; i < meta.layers[l].biases.size(); ++i) {
      auto& p = meta.layers[l].biases[i];
      const double saved = p;
      p = saved + h;
      const double up = reference_loss(meta, x, 2, w);
      p = saved - h;
      const double down = reference_loss(meta, x, 2, w);
      p = saved;
      worst = std::max(worst, std::abs((up - down) / (2 * h) - grad[l].biases[i]));
    }
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("uniform class weight of two equals doubling the learning rate for one step") {
  const auto data = separable(3, 10, 6, 1);
  const auto meta = init_meta(LayerLayout::for_stack(2, 3, {5}, 0.0), 4);
  TrainConfig a;
  a.batch_size = data.size();
  a.max_epochs = 1;
  a.learning_rate = 0.02;
  a.class_weights = {2.0, 2.0, 2.0};
  a.seed = 6;
  TrainConfig b = a;
  b.learning_rate = 0.04;
  b.class_weights = {};
  const auto ra = train_meta(meta, data, data, a).model;
  const auto rb = train_meta(meta, data, data, b).model;
  for (std::size_t l = 0; l < ra.layers.size(); ++l)
    for (std::size_t i = 0; i < ra.layers[l].weights.size(); ++i)
      CHECK(ra.layers[l].weights[i] == doctest::Approx(rb.layers[l].weights[i]).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto data = separable(3, 10, 6, 2);
  const auto meta = init_meta(LayerLayout::for_stack(2, 3, {5}, 0.5), 4);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.max_epochs = 3;
  const auto result = train_meta(meta, data, data, cfg);
  CHECK(result.model == meta);
  CHECK(parameter_digest(result.model) == parameter_digest(meta));
}

TEST_CASE("training separates linearly separable data and is reproducible") {
  const auto train = separable(4, 100, 8, 3);
  const auto val = separable(4, 25, 8, 4);
  const auto meta = init_meta(LayerLayout::for_stack(2, 4, {16}, 0.2), 5);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 32;
  cfg.max_epochs = 60;
  cfg.seed = 9;
  const auto r1 = train_meta(meta, train, val, cfg);
  CHECK(accuracy_of(r1.model, train) >= 0.99);
  CHECK(accuracy_of(r1.model, val) >= 0.99);
  CHECK(r1.history.best_epoch >= 1);
  CHECK(r1.history.best_epoch <= r1.history.epochs.size());
  const auto r2 = train_meta(meta, train, val, cfg);
  CHECK(parameter_digest(r1.model) == parameter_digest(r2.model));
  CHECK(serialize_history(r1.history) == serialize_history(r2.history));
  CHECK(serialize_history(r1.history).rfind("epoch,train_loss,train_accuracy,val_accuracy\n", 0) == 0);
}

TEST_CASE("early stopping restores the best epoch") {
  const auto train = separable(3, 40, 6, 5);
  const auto val = separable(3, 10, 6, 6);
  const auto meta = init_meta(LayerLayout::for_stack(2, 3, {8}, 0.0), 7);
  TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.early_stop_patience = 3;
  cfg.learning_rate = 0.05;
  const auto r = train_meta(meta, train, val, cfg);
  CHECK(r.history.epochs.size() < 200);
  const auto best = r.history.epochs[r.history.best_epoch - 1].validation_accuracy;
  for (const auto& e : r.history.epochs) CHECK(e.validation_accuracy <= best);
  CHECK(accuracy_of(r.model, val) == doctest::Approx(best));
}

TEST_CASE("training input validation and divergence") {
  const auto data = separable(3, 5, 6, 8);
  const auto meta = init_meta(LayerLayout::for_stack(2, 3, {4}), 1);
  FeatureSet empty;
  empty.dim = 6;
  CHECK_THROWS(train_meta(meta, empty, data, {}));
  CHECK_THROWS(train_meta(meta, data, empty, {}));
  TrainConfig bad;
  bad.class_weights = {1.0, 2.0};
  CHECK_THROWS(train_meta(meta, data, data, bad));
  bad = {};
  bad.batch_size = 0;
  CHECK_THROWS(train_meta(meta, data, data, bad));
  TrainConfig wild;
  wild.learning_rate = 1e300;
  wild.max_epochs = 5;
  CHECK_THROWS_AS(train_meta(meta, data, data, wild), RuntimeFailure);
}

TEST_CASE("checkpoint round-trip and tamper detection") {
  const auto meta = init_meta(LayerLayout::for_stack(3, 4, {6, 5}, 0.25), 12);
  const auto text = serialize_checkpoint(meta);
  const auto back = parse_checkpoint(text);
  CHECK(back == meta);
  CHECK(serialize_checkpoint(back) == text);
  auto j = nlohmann::json::parse(text);
  j["layers"][0]["weights"][0] = j["layers"][0]["weights"][0].get<double>() + 1.0;
  CHECK_THROWS_AS(parse_checkpoint(j.dump()), DataError);
  CHECK_THROWS_AS(parse_checkpoint("{}"), DataError);
  CHECK_THROWS_AS(parse_checkpoint("[1,2"), DataError);
}
