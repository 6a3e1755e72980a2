#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vidpoint/checkpoint.hpp"
#include "vidpoint/nn.hpp"
#include "vidpoint/rng.hpp"

using namespace vidpoint;
using namespace vidpoint::nn;

namespace {

Tensor2 random_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
  Tensor2 t(rows, cols);
  for (double& v : t.data) v = rng.normal(0.0, scale);
  return t;
}

DenseLayer random_layer(int in, int out, Activation act, Rng& rng) {
  DenseLayer layer = make_dense(in, out, act);
  he_initialize(layer, rng);
  for (double& b : layer.bias) b = rng.normal(0.0, 0.1);
  return layer;
}

}  // namespace

TEST_CASE("dense_forward identity layer and relu saturation") {
  DenseLayer identity = make_dense(3, 3, Activation::kNone);
  for (int i = 0; i < 3; ++i) identity.weights.at(i, i) = 1.0;
  Rng rng(3);
  Tensor2 x = random_tensor(5, 3, rng);
  Tensor2 y = dense_forward(identity, x);
  CHECK(y.data == x.data);

  DenseLayer relu = make_dense(2, 2, Activation::kRelu);
  relu.weights.at(0, 0) = 1.0;
  relu.weights.at(1, 1) = 1.0;
  relu.bias = {-10.0, -10.0};
  Tensor2 small(4, 2);
  for (double& v : small.data) v = 0.5;
  Tensor2 zeros = dense_forward(relu, small);
  for (double v : zeros.data) CHECK(v == 0.0);

  Tensor2 wrong(4, 3);
  CHECK_THROWS_AS(dense_forward(relu, wrong), Error);
}

TEST_CASE("dense_forward matches a scalar-loop reference") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int in = 1 + static_cast<int>(rng.uniform_index(8));
    const int out = 1 + static_cast<int>(rng.uniform_index(8));
    const int n = 1 + static_cast<int>(rng.uniform_index(6));
    const Activation act = static_cast<Activation>(rng.uniform_index(3));
    DenseLayer layer = random_layer(in, out, act, rng);
    Tensor2 x = random_tensor(n, in, rng);

    Tensor2 y = dense_forward(layer, x);

    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < out; ++c) {
        double z = layer.bias[static_cast<std::size_t>(c)];
        for (int k = 0; k < in; ++k) z += x.at(r, k) * layer.weights.at(c, k);
        double expect = z;
        if (act == Activation::kRelu) expect = z > 0 ? z : 0;
        if (act == Activation::kTanh) expect = std::tanh(z);
        CHECK(std::abs(y.at(r, c) - expect) < 1e-12);
      }
    }
  }
}

TEST_CASE("dense_backward trivial cases") {
  Rng rng(7);
  DenseLayer layer = random_layer(4, 3, Activation::kTanh, rng);
  Tensor2 x = random_tensor(5, 4, rng);

  Tensor2 zero_up(5, 3);
  DenseGradients grads = dense_backward(layer, x, zero_up);
  for (double v : grads.input.data) CHECK(v == 0.0);
  for (double v : grads.weights.data) CHECK(v == 0.0);
  for (double v : grads.bias) CHECK(v == 0.0);

  // Linear layer, single row, upstream = I row: grad_x equals that row of W.
  DenseLayer linear = random_layer(4, 4, Activation::kNone, rng);
  Tensor2 one(1, 4);
  Tensor2 up(1, 4);
  up.at(0, 2) = 1.0;
  DenseGradients g2 = dense_backward(linear, one, up);
  for (int k = 0; k < 4; ++k) {
    CHECK(g2.input.at(0, k) == doctest::Approx(linear.weights.at(2, k)));
  }
}

TEST_CASE("dense_backward matches finite differences") {
  Rng rng(11);
  for (Activation act : {Activation::kNone, Activation::kRelu, Activation::kTanh}) {
    DenseLayer layer = random_layer(6, 4, act, rng);
    Tensor2 x = random_tensor(3, 6, rng);
    Tensor2 weight_sum = random_tensor(3, 4, rng);  // fixed projection to a scalar

    // Loss = sum_ij weight_sum_ij * forward(x)_ij.
    const auto loss = [&]() {
      Tensor2 y = dense_forward(layer, x);
      double acc = 0.0;
      for (std::size_t i = 0; i < y.data.size(); ++i) acc += weight_sum.data[i] * y.data[i];
      return acc;
    };

    DenseGradients analytic = dense_backward(layer, x, weight_sum);
    const std::span<double> params[] = {layer.weights.flat(),
                                        {layer.bias.data(), layer.bias.size()},
                                        x.flat()};
    const std::span<const double> grads[] = {analytic.weights.flat(),
                                             {analytic.bias.data(), analytic.bias.size()},
                                             analytic.input.flat()};
    FiniteDiffReport report = finite_diff_check(loss, params, grads, 1e-5, 1e-4, 17, 60);
    CHECK(report.passed);
    CHECK(report.max_rel_err <= 1e-4);
  }
}

TEST_CASE("maxpool_points singleton, tie rule, permutation invariance") {
  Tensor2 single(1, 3);
  single.data = {3.0, -1.0, 2.0};
  MaxPoolResult pooled = maxpool_points(single);
  CHECK(pooled.values == std::vector<double>{3.0, -1.0, 2.0});
  CHECK(pooled.argmax_rows == std::vector<int>{0, 0, 0});

  Tensor2 dup(2, 2);
  dup.data = {1.0, 5.0, 1.0, 5.0};
  MaxPoolResult tied = maxpool_points(dup);
  CHECK(tied.values == std::vector<double>{1.0, 5.0});
  CHECK(tied.argmax_rows == std::vector<int>{0, 0});

  Rng rng(13);
  Tensor2 features = random_tensor(20, 6, rng);
  MaxPoolResult base = maxpool_points(features);
  Tensor2 reversed(20, 6);
  for (int r = 0; r < 20; ++r) {
    for (int c = 0; c < 6; ++c) reversed.at(r, c) = features.at(19 - r, c);
  }
  MaxPoolResult rev = maxpool_points(reversed);
  CHECK(base.values == rev.values);

  Tensor2 empty(0, 4);
  CHECK_THROWS_AS(maxpool_points(empty), Error);
}

TEST_CASE("maxpool gradient matches finite differences at non-tied points") {
  Rng rng(17);
  Tensor2 features = random_tensor(10, 5, rng);
  Tensor2 weight_sum = random_tensor(1, 5, rng);

  const auto loss = [&]() {
    MaxPoolResult pooled = maxpool_points(features);
    double acc = 0.0;
    for (std::size_t c = 0; c < pooled.values.size(); ++c) {
      acc += weight_sum.data[c] * pooled.values[c];
    }
    return acc;
  };

  MaxPoolResult pooled = maxpool_points(features);
  Tensor2 analytic = maxpool_backward(pooled, 10, weight_sum.flat());
  const std::span<double> params[] = {features.flat()};
  const std::span<const double> grads[] = {analytic.flat()};
  FiniteDiffReport report = finite_diff_check(loss, params, grads, 1e-5, 1e-4, 23, 50);
  CHECK(report.passed);
}

TEST_CASE("adam zero gradient is a fixed point and descends a quadratic") {
  AdamConfig config;
  config.learning_rate = 0.1;
  AdamState state(config);

  std::vector<double> w = {1.0};
  std::vector<double> zero = {0.0};
  const std::span<double> params[] = {{w.data(), 1}};
  {
    const std::span<const double> grads[] = {{zero.data(), 1}};
    state.step(params, grads);
    CHECK(w[0] == doctest::Approx(1.0));
  }

  // One step on f(w) = w^2 from w=1 moves downhill.
  std::vector<double> g = {2.0 * w[0]};
  {
    const std::span<const double> grads[] = {{g.data(), 1}};
    state.step(params, grads);
  }
  CHECK(w[0] < 1.0);

  // 200 steps reach f < 1e-3.
  AdamState fresh(config);
  w = {1.0};
  for (int i = 0; i < 200; ++i) {
    g[0] = 2.0 * w[0];
    const std::span<const double> grads[] = {{g.data(), 1}};
    fresh.step(params, grads);
  }
  CHECK(w[0] * w[0] < 1e-3);
}

TEST_CASE("adam is deterministic") {
  Rng rng(19);
  Tensor2 w1 = random_tensor(4, 3, rng);
  Tensor2 w2 = w1;
  Tensor2 g = random_tensor(4, 3, rng);

  AdamState s1, s2;
  const std::span<double> p1[] = {w1.flat()};
  const std::span<double> p2[] = {w2.flat()};
  const std::span<const double> gs[] = {g.flat()};
  for (int i = 0; i < 10; ++i) {
    s1.step(p1, gs);
    s2.step(p2, gs);
  }
  CHECK(w1.data == w2.data);  // bitwise
}

TEST_CASE("finite_diff_check exactness on a linear loss and corruption detection") {
  Rng rng(23);
  Tensor2 w = random_tensor(5, 5, rng);
  Tensor2 c = random_tensor(5, 5, rng);

  const auto loss = [&]() {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.data.size(); ++i) acc += c.data[i] * w.data[i];
    return acc;
  };
  const std::span<double> params[] = {w.flat()};
  {
    const std::span<const double> grads[] = {c.flat()};
    FiniteDiffReport report = finite_diff_check(loss, params, grads, 1e-5, 1e-9, 29, 50);
    CHECK(report.passed);
    CHECK(report.max_rel_err < 1e-9);
  }

  Tensor2 corrupted = c;
  corrupted.data[7] += 1.0;
  {
    const std::span<const double> grads[] = {corrupted.flat()};
    FiniteDiffReport report = finite_diff_check(loss, params, grads, 1e-5, 1e-4, 29, 50);
    CHECK_FALSE(report.passed);
    CHECK(report.max_rel_err > 1e-4);
  }
}

TEST_CASE("checkpoint round trip at float32 and corruption errors") {
  Rng rng(31);
  std::vector<NamedTensor> tensors;
  tensors.push_back({"encoder.w0", random_tensor(8, 3, rng)});
  tensors.push_back({"encoder.b0", random_tensor(1, 8, rng)});
  tensors.push_back({"head.w", random_tensor(10, 8, rng)});

  const auto dir = std::filesystem::temp_directory_path() / "vidpoint_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(path, tensors);

  std::vector<NamedTensor> loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    CHECK(loaded[i].name == tensors[i].name);
    CHECK(loaded[i].tensor.rows == tensors[i].tensor.rows);
    CHECK(loaded[i].tensor.cols == tensors[i].tensor.cols);
    for (std::size_t j = 0; j < tensors[i].tensor.data.size(); ++j) {
      CHECK(loaded[i].tensor.data[j] ==
            static_cast<double>(static_cast<float>(tensors[i].tensor.data[j])));
    }
  }

  // Saving the loaded values again round-trips exactly.
  const std::string path2 = (dir / "model2.ckpt").string();
  save_checkpoint(path2, loaded);
  std::vector<NamedTensor> reloaded = load_checkpoint(path2);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(reloaded[i].tensor.data == loaded[i].tensor.data);
  }

  // Truncation.
  {
    std::ifstream is(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream os((dir / "trunc.ckpt").string(), std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "trunc.ckpt").string()), Error);

  // Bad magic.
  {
    std::ofstream os((dir / "junk.ckpt").string(), std::ios::binary);
    os << "not a checkpoint";
  }
  try {
    load_checkpoint((dir / "junk.ckpt").string());
    FAIL("expected header error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCorruptHeader);
  }
  std::filesystem::remove_all(dir);
}
