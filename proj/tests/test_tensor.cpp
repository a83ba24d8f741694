#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "nbsa/ops.hpp"
#include "nbsa/rng.hpp"
#include "nbsa/tensor.hpp"
#include "nbsa/tensor_io.hpp"

using namespace nbsa;

namespace {

Tensor rnd(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity, annihilator and a hand-expanded product") {
  const Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  const Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  const Tensor ia = matmul(eye, a);
  for (int i = 0; i < 4; ++i) CHECK(ia.data()[i] == a.data()[i]);

  const Tensor z = matmul(Tensor::zeros({2, 3}), Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6}));
  for (int i = 0; i < 4; ++i) CHECK(z.data()[i] == 0.0);

  // [[1,2],[3,4]]·[[5],[6]] = [[1*5+2*6],[3*5+4*6]] = [[17],[39]]
  const Tensor v = matmul(a, Tensor::from_data({2, 1}, {5, 6}));
  CHECK(v.data()[0] == 17.0);
  CHECK(v.data()[1] == 39.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected a dimension error");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul chains reassociate within 1e-10") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor a = rnd({4, 4}, rng), b = rnd({4, 4}, rng), c = rnd({4, 4}, rng);
    Tensor left = matmul(matmul(a, b), c);
    Tensor right = matmul(a, matmul(b, c));
    for (int i = 0; i < 16; ++i) CHECK(std::fabs(left.data()[i] - right.data()[i]) < 1e-10);
  }
}

TEST_CASE("softmax_rows forced values") {
  const Tensor flat = softmax_rows(Tensor::from_data({1, 2}, {0, 0}));
  CHECK(flat.data()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(flat.data()[1] == doctest::Approx(0.5).epsilon(1e-15));

  const Tensor skew = softmax_rows(Tensor::from_data({1, 2}, {std::log(3.0), 0.0}));
  CHECK(skew.data()[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(skew.data()[1] == doctest::Approx(0.25).epsilon(1e-14));

  // with max subtraction exp(-1000) underflows to exactly 0
  const Tensor hot = softmax_rows(Tensor::from_data({1, 2}, {1000.0, 0.0}));
  CHECK(hot.data()[0] == 1.0);
  CHECK(hot.data()[1] == 0.0);
}

TEST_CASE("softmax_rows rows sum to one within 1e-12") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(5)), n = 1 + static_cast<int>(rng.below(7));
    Tensor p = softmax_rows(rnd({m, n}, rng, -40.0, 40.0));
    for (int i = 0; i < m; ++i) {
      double s = 0;
      for (int j = 0; j < n; ++j) s += p.data()[static_cast<size_t>(i) * n + j];
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("conv2d identity kernel, bias-only kernel and box sums") {
  Rng rng(3);
  Tensor x = rnd({1, 4, 4}, rng);
  Tensor delta = Tensor::zeros({1, 1, 3, 3});
  delta.data()[4] = 1.0;  // center tap
  Tensor y = conv2d(x, delta, Tensor::zeros({1}));
  for (int i = 0; i < 16; ++i) CHECK(y.data()[i] == x.data()[i]);

  Tensor zero_k = Tensor::zeros({2, 1, 3, 3});
  Tensor bias = Tensor::from_data({2}, {0.25, -1.5});
  Tensor b = conv2d(x, zero_k, bias);
  for (int i = 0; i < 16; ++i) {
    CHECK(b.data()[i] == 0.25);
    CHECK(b.data()[16 + i] == -1.5);
  }

  // all-ones kernel over a constant-1 map counts the valid neighbourhood
  Tensor ones_in = Tensor::full({1, 4, 4}, 1.0);
  Tensor ones_k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor s = conv2d(ones_in, ones_k, Tensor::zeros({1}));
  CHECK(s.data()[0] == 4.0);   // corner
  CHECK(s.data()[1] == 6.0);   // edge
  CHECK(s.data()[5] == 9.0);   // interior
  CHECK(s.data()[15] == 4.0);  // far corner
}

TEST_CASE("conv2d rejects unsupported kernel sizes") {
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1})),
                  ValidationError);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 5, 5}), Tensor::zeros({1})),
                  ValidationError);
}

TEST_CASE("elementwise relu, add identity and scaling") {
  const Tensor r = relu(Tensor::from_data({3}, {-1, 0, 2}));
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 0.0);
  CHECK(r.data()[2] == 2.0);

  Rng rng(5);
  Tensor x = rnd({2, 3}, rng);
  Tensor same = add(x, Tensor::zeros({2, 3}));
  for (int i = 0; i < 6; ++i) CHECK(same.data()[i] == x.data()[i]);

  const Tensor h = scale(Tensor::from_data({2}, {2, 4}), 0.5);
  CHECK(h.data()[0] == 1.0);
  CHECK(h.data()[1] == 2.0);

  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ValidationError);
}

TEST_CASE("maxpool2 and nearest upsample2") {
  const Tensor m = maxpool2(Tensor::from_data({1, 2, 2}, {1, 2, 3, 4}));
  CHECK(m.size() == 1);
  CHECK(m.data()[0] == 4.0);

  const Tensor u = upsample2(Tensor::from_data({1, 1, 1}, {7}));
  CHECK(u.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(u.data()[i] == 7.0);

  const Tensor c = upsample2(maxpool2(Tensor::full({2, 4, 4}, 3.25)));
  for (int64_t i = 0; i < c.size(); ++i) CHECK(c.data()[i] == 3.25);

  CHECK_THROWS_AS(maxpool2(Tensor::zeros({1, 3, 4})), ValidationError);
}

TEST_CASE("softmax cross entropy hand values") {
  LabelMask target = make_label_mask(2, 2);
  const Tensor uniform = Tensor::zeros({4, 2, 2});
  CHECK(softmax_cross_entropy(uniform, target).value() == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  Tensor confident = Tensor::zeros({4, 2, 2});
  for (int p = 0; p < 4; ++p) confident.data()[p] = 1e3;  // class 0 everywhere
  CHECK(softmax_cross_entropy(confident, target).value() == doctest::Approx(0.0).epsilon(1e-12));

  // one pixel, K=2, logits [0, ln3], target 1: loss = -log(3/4)
  LabelMask one = make_label_mask(1, 1);
  one.labels[0] = 1;
  const Tensor logits = Tensor::from_data({2, 1, 1}, {0.0, std::log(3.0)});
  CHECK(softmax_cross_entropy(logits, one).value() == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-14));

  LabelMask bad = make_label_mask(1, 1);
  bad.labels[0] = 2;
  CHECK_THROWS_AS(softmax_cross_entropy(logits, bad), ValidationError);
}

TEST_CASE("tensor invariants: shape product, finite guard") {
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ValidationError);
  Tensor inf_in = Tensor::from_data({2}, {1.0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS(scale(inf_in, 1.0));
}

TEST_CASE("tns round trip through f32 storage") {
  Rng rng(17);
  Tensor t = Tensor::zeros({3, 5, 2});
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(static_cast<float>(rng.uniform(-2, 2)));
  const std::string path = (std::filesystem::temp_directory_path() / "nbsa_roundtrip.tns").string();
  save_tensor(t, path);
  Tensor back = load_tensor(path);
  REQUIRE(back.shape() == t.shape());
  for (int64_t i = 0; i < t.size(); ++i) CHECK(back.data()[i] == t.data()[i]);
  std::remove(path.c_str());
}
