#include "mtq/autodiff.hpp"
#include "mtq/dsp.hpp"
#include "mtq/errors.hpp"
#include "mtq/layers.hpp"
#include "mtq/optimizer.hpp"

#include "support/gradcheck.hpp"

#include <doctest.h>

#include <cmath>

using namespace mtq;
using namespace mtq::nn;
using mtq::testing::check_gradients;

namespace {

Tensor rand_tensor(Shape s, std::uint64_t seed, double limit = 1.0) {
  Rng rng(seed);
  return uniform_tensor(std::move(s), limit, rng);
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar-level LSTM over rows of x in the given order, writing h into out
// columns [col0, col0 + H).
void reference_lstm(const Tensor& x, const Tensor& wi, const Tensor& wr, const Tensor& b,
                     bool reverse, std::size_t col0, Tensor& out) {
  const std::size_t T = x.rows(), D = x.cols(), H = wr.rows();
  std::vector<double> h(H, 0.0), c(H, 0.0);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    std::vector<double> z(4 * H);
    for (std::size_t j = 0; j < 4 * H; ++j) {
      double acc = b[j];
      for (std::size_t d = 0; d < D; ++d) acc += x.at(t, d) * wi.at(d, j);
      for (std::size_t k = 0; k < H; ++k) acc += h[k] * wr.at(k, j);
      z[j] = acc;
    }
    for (std::size_t k = 0; k < H; ++k) {
      const double ig = sigm(z[k]), fg = sigm(z[H + k]), gg = std::tanh(z[2 * H + k]),
                   og = sigm(z[3 * H + k]);
      c[k] = fg * c[k] + ig * gg;
      h[k] = og * std::tanh(c[k]);
      out.at(t, col0 + k) = h[k];
    }
  }
}

// Weighted sum against fixed random weights: a loss whose gradient reaches
// every output element.
Var probe(Graph& g, Var y, std::uint64_t seed) {
  const Tensor& v = g.value(y);
  Tensor w = rand_tensor(v.shape(), seed);
  return sum(g, mul(g, y, g.input(w)));
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("backward: sum gives ones, zero scale gives zeros") {
  ParamStore ps;
  auto& p = ps.add("p", rand_tensor({3, 4}, 1));
  {
    Graph g;
    g.backward(sum(g, g.param(p)));
  }
  for (double v : p.grad.values()) CHECK(v == 1.0);
  ps.zero_grad();
  {
    Graph g;
    g.backward(scale(g, sum(g, g.param(p)), 0.0));
  }
  for (double v : p.grad.values()) CHECK(v == 0.0);
}

TEST_CASE("backward clears the tape and rejects an empty one") {
  ParamStore ps;
  auto& p = ps.add("p", Tensor({2}, {1.0, 2.0}));
  Graph g;
  g.backward(sum(g, g.param(p)));
  CHECK(g.size() == 0);
  CHECK_THROWS_AS(g.backward(Var{0}), Error);
}

TEST_CASE("backward requires a scalar loss") {
  ParamStore ps;
  auto& p = ps.add("p", Tensor({2}, {1.0, 2.0}));
  Graph g;
  CHECK_THROWS_AS(g.backward(g.param(p)), ShapeError);
}

TEST_CASE("param store rejects duplicate names and keeps order") {
  ParamStore ps;
  ps.add("a", Tensor({1}));
  ps.add("b", Tensor({2}));
  CHECK_THROWS_AS(ps.add("a", Tensor({1})), ConfigError);
  CHECK(ps.names() == std::vector<std::string>{"a", "b"});
  CHECK(ps.num_values() == 3);
}

TEST_CASE("conv2d: identity 1x1 kernel and zero input") {
  Graph g;
  const Tensor x = rand_tensor({1, 5, 6}, 2);
  Var y = conv2d(g, g.input(x), g.input(Tensor({1, 1, 1, 1}, {1.0})), g.input(Tensor({1})), {});
  CHECK(g.value(y).values() == x.values());

  Var z = conv2d(g, g.input(Tensor({2, 4, 4})), g.input(rand_tensor({3, 2, 3, 3}, 3)),
                 g.input(Tensor({3}, {0.5, -1.0, 2.0})), {1, 1, 1, 1});
  const Tensor& zv = g.value(z);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < 16; ++i) CHECK(zv[c * 16 + i] == (c == 0 ? 0.5 : c == 1 ? -1.0 : 2.0));
  }
}

TEST_CASE("conv2d matches a nested-loop oracle") {
  const Tensor x = rand_tensor({2, 8, 8}, 4);
  const Tensor w = rand_tensor({3, 2, 3, 3}, 5);
  const Tensor b = rand_tensor({3}, 6);
  for (const Conv2dSpec spec : {Conv2dSpec{1, 1, 0, 0}, Conv2dSpec{1, 2, 1, 1}, Conv2dSpec{2, 2, 1, 0}}) {
    Graph g;
    const Tensor& y = g.value(conv2d(g, g.input(x), g.input(w), g.input(b), spec));
    const std::size_t ho = (8 + 2 * spec.pad_h - 3) / spec.stride_h + 1;
    const std::size_t wo = (8 + 2 * spec.pad_w - 3) / spec.stride_w + 1;
    REQUIRE(y.shape() == Shape{3, ho, wo});
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t r = 0; r < ho; ++r)
        for (std::size_t c = 0; c < wo; ++c) {
          double acc = b[o];
          for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t kr = 0; kr < 3; ++kr)
              for (std::size_t kc = 0; kc < 3; ++kc) {
                const long rr = long(r * spec.stride_h + kr) - long(spec.pad_h);
                const long cc = long(c * spec.stride_w + kc) - long(spec.pad_w);
                if (rr < 0 || cc < 0 || rr >= 8 || cc >= 8) continue;
                acc += w[((o * 2 + i) * 3 + kr) * 3 + kc] * x[(i * 8 + rr) * 8 + cc];
              }
          REQUIRE(y[(o * ho + r) * wo + c] == doctest::Approx(acc).epsilon(1e-10));
        }
  }
}

TEST_CASE("conv2d reports both shapes on mismatch") {
  Graph g;
  try {
    conv2d(g, g.input(Tensor({2, 4, 4})), g.input(Tensor({1, 3, 3, 3})), g.input(Tensor({1})), {});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 4 x 4]") != std::string::npos);
    CHECK(msg.find("[1 x 3 x 3 x 3]") != std::string::npos);
  }
}

TEST_CASE("bilstm matches a scalar reference") {
  const std::size_t T = 5, D = 4, H = 3;
  const Tensor x = rand_tensor({T, D}, 7);
  Tensor w[6] = {rand_tensor({D, 4 * H}, 8, 0.5), rand_tensor({H, 4 * H}, 9, 0.5),
                 rand_tensor({4 * H}, 10, 0.5),   rand_tensor({D, 4 * H}, 11, 0.5),
                 rand_tensor({H, 4 * H}, 12, 0.5), rand_tensor({4 * H}, 13, 0.5)};
  Graph g;
  const Tensor& y = g.value(bilstm(g, g.input(x), {g.input(w[0]), g.input(w[1]), g.input(w[2])},
                                   {g.input(w[3]), g.input(w[4]), g.input(w[5])}));
  Tensor ref({T, 2 * H});
  reference_lstm(x, w[0], w[1], w[2], false, 0, ref);
  reference_lstm(x, w[3], w[4], w[5], true, H, ref);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

TEST_CASE("bilstm zero input and zero bias gives zero output") {
  Graph g;
  auto lw = [&](std::uint64_t s) {
    return LstmWeights{g.input(rand_tensor({4, 12}, s)), g.input(rand_tensor({3, 12}, s + 1)),
                       g.input(Tensor({12}))};
  };
  const Tensor& y = g.value(bilstm(g, g.input(Tensor({6, 4})), lw(1), lw(3)));
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("attention: single row, uniform weights, direct formula") {
  {
    Graph g;
    const Tensor x = rand_tensor({1, 3}, 14);
    const Tensor wv = rand_tensor({3, 3}, 15);
    const Tensor& y = g.value(self_attention(g, g.input(x), g.input(rand_tensor({3, 3}, 16)),
                                             g.input(rand_tensor({3, 3}, 17)), g.input(wv)));
    const RowMatrix v = x.matrix() * wv.matrix();
    for (std::size_t j = 0; j < 3; ++j) CHECK(y[j] == doctest::Approx(v(0, long(j))).epsilon(1e-12));
  }
  {
    Graph g;
    const Tensor x = rand_tensor({4, 3}, 18);
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    const Tensor& y = g.value(self_attention(g, g.input(x), g.input(Tensor({3, 3})),
                                             g.input(Tensor({3, 3})), g.input(eye)));
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t j = 0; j < 3; ++j) {
        double m = 0;
        for (std::size_t s = 0; s < 4; ++s) m += x.at(s, j) / 4.0;
        CHECK(y.at(t, j) == doctest::Approx(m).epsilon(1e-12));
      }
  }
  {
    const std::size_t T = 4, D = 8;
    const Tensor x = rand_tensor({T, D}, 19);
    const Tensor q = rand_tensor({D, D}, 20), k = rand_tensor({D, D}, 21), v = rand_tensor({D, D}, 22);
    Graph g;
    const Tensor& y = g.value(self_attention(g, g.input(x), g.input(q), g.input(k), g.input(v)));
    const RowMatrix Q = x.matrix() * q.matrix(), K = x.matrix() * k.matrix(), V = x.matrix() * v.matrix();
    RowMatrix logits = Q * K.transpose() / std::sqrt(double(D));
    for (long r = 0; r < long(T); ++r) {
      double z = 0;
      for (long c = 0; c < long(T); ++c) z += std::exp(logits(r, c));
      for (long c = 0; c < long(T); ++c) logits(r, c) = std::exp(logits(r, c)) / z;
    }
    const RowMatrix ref = logits * V;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < D; ++j)
        CHECK(y.at(t, j) == doctest::Approx(ref(long(t), long(j))).epsilon(1e-10));
  }
}

TEST_CASE("softmax rows sum to one and ignore per-row shifts") {
  Graph g;
  const Tensor a = rand_tensor({5, 7}, 23, 10.0);
  Tensor b = a;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) b.at(r, c) += double(r) * 3.5 - 1.0;
  const Tensor& sa = g.value(softmax_rows(g, g.input(a)));
  const Tensor& sb = g.value(softmax_rows(g, g.input(b)));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      s += sa.at(r, c);
      CHECK(sa.at(r, c) == doctest::Approx(sb.at(r, c)).epsilon(1e-12));
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("gradient check: elementwise and matrix ops") {
  ParamStore ps;
  auto& a = ps.add("a", rand_tensor({3, 4}, 30));
  auto& b = ps.add("b", rand_tensor({4, 2}, 31));
  auto& c = ps.add("c", rand_tensor({3, 2}, 32));
  auto& bias = ps.add("bias", rand_tensor({2}, 33));
  auto& pos = ps.add("pos", rand_tensor({3, 2}, 34, 0.4));
  for (double& v : pos.value.values()) v = std::abs(v) + 0.1;
  const auto r = check_gradients(ps, [&](Graph& g) {
    Var m = add_row_bias(g, matmul(g, g.param(a), g.param(b)), g.param(bias));
    Var s = sub(g, tanh(g, m), sigmoid(g, g.param(c)));
    Var t = mul(g, s, log1p_scaled(g, g.param(pos), 3.0, 0.7));
    Var u = concat_cols(g, {t, transpose(g, transpose(g, squash(g, g.param(c), 1.0, 5.0)))});
    Var w = softmax_rows(g, u);
    return add(g, scale(g, sum(g, mul(g, w, u)), 0.5), mean(g, m));
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradient check: relu away from the kink") {
  ParamStore ps;
  auto& a = ps.add("a", rand_tensor({4, 5}, 35));
  for (double& v : a.value.values()) v = v >= 0 ? v + 0.05 : v - 0.05;
  const auto r = check_gradients(ps, [&](Graph& g) { return probe(g, relu(g, g.param(a)), 36); });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradient check: conv2d") {
  ParamStore ps;
  auto& x = ps.add("x", rand_tensor({2, 7, 9}, 40));
  auto& w = ps.add("w", rand_tensor({3, 2, 3, 3}, 41));
  auto& b = ps.add("b", rand_tensor({3}, 42));
  const auto r = check_gradients(
      ps,
      [&](Graph& g) {
        return probe(g, conv2d(g, g.param(x), g.param(w), g.param(b), {1, 2, 1, 1}), 43);
      },
      1e-3, 64);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradient check: channels_to_frames and as_single_channel") {
  ParamStore ps;
  auto& x = ps.add("x", rand_tensor({3, 4, 5}, 44));
  auto& y = ps.add("y", rand_tensor({4, 6}, 45));
  const auto r = check_gradients(ps, [&](Graph& g) {
    Var a = channels_to_frames(g, g.param(x));
    Var b = channels_to_frames(g, as_single_channel(g, g.param(y)));
    return probe(g, concat_cols(g, {a, b}), 46);
  });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradient check: bilstm") {
  const std::size_t T = 6, D = 4, H = 3;
  ParamStore ps;
  auto& x = ps.add("x", rand_tensor({T, D}, 50));
  Parameter* w[6];
  const char* names[6] = {"fi", "fr", "fb", "bi", "br", "bb"};
  for (int i = 0; i < 6; ++i) {
    const Shape s = i % 3 == 0 ? Shape{D, 4 * H} : i % 3 == 1 ? Shape{H, 4 * H} : Shape{4 * H};
    w[i] = &ps.add(names[i], rand_tensor(s, 51 + i, 0.6));
  }
  const auto r = check_gradients(
      ps,
      [&](Graph& g) {
        return probe(g, bilstm(g, g.param(x), {g.param(*w[0]), g.param(*w[1]), g.param(*w[2])},
                               {g.param(*w[3]), g.param(*w[4]), g.param(*w[5])}),
                     57);
      },
      1e-3, 48);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradient check: attention and dense") {
  ParamStore ps;
  auto& x = ps.add("x", rand_tensor({5, 4}, 60));
  auto& q = ps.add("q", rand_tensor({4, 4}, 61));
  auto& k = ps.add("k", rand_tensor({4, 4}, 62));
  auto& v = ps.add("v", rand_tensor({4, 4}, 63));
  auto& fw = ps.add("fw", rand_tensor({4, 3}, 64));
  auto& fb = ps.add("fb", rand_tensor({3}, 65));
  const auto r = check_gradients(
      ps,
      [&](Graph& g) {
        Var a = self_attention(g, g.param(x), g.param(q), g.param(k), g.param(v));
        return probe(g, dense(g, a, g.param(fw), g.param(fb)), 66);
      },
      1e-3, 32);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradient check: sinc filter response") {
  ParamStore ps;
  auto& low = ps.add("low", Tensor({3}, {200.0, 900.0, 2500.0}));
  auto& band = ps.add("band", Tensor({3}, {150.0, 400.0, 1200.0}));
  const auto r = check_gradients(ps, [&](Graph& g) {
    Var resp = sinc_filter_response(g, g.param(low), g.param(band), 16000, 63, 128);
    return probe(g, resp, 67);
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("sinc response equals the DFT of the kernels") {
  Graph g;
  const Tensor& resp = g.value(sinc_filter_response(g, g.input(Tensor({1}, {500.0})),
                                                    g.input(Tensor({1}, {700.0})), 16000, 31, 64));
  dsp::SincBandParams p{{500.0}, {700.0}, 31};
  const Tensor k = dsp::sinc_kernels(p, 16000);
  std::vector<double> frame(64, 0.0);
  for (std::size_t i = 0; i < 31; ++i) frame[i] = k.at(0, i);
  const auto spec = dsp::rfft(frame);
  for (std::size_t b = 0; b < spec.size(); ++b) {
    CHECK(resp.at(0, b) == doctest::Approx(std::norm(spec[b])).epsilon(1e-10).scale(1.0));
  }
}

TEST_CASE("adam: first step of a unit gradient moves by lr") {
  ParamStore ps;
  auto& p = ps.add("p", Tensor({1}, {2.0}));
  p.grad[0] = 1.0;
  adam_step(ps, {0.1, 0.9, 0.999, 1e-8}, 1);
  CHECK(p.value[0] == doctest::Approx(2.0 - 0.1).epsilon(1e-9));
}

TEST_CASE("adam: zero gradient leaves values and moments unchanged") {
  ParamStore ps;
  auto& p = ps.add("p", rand_tensor({4}, 70));
  const Tensor before = p.value;
  adam_step(ps, {}, 1);
  CHECK(p.value.values() == before.values());
  for (double v : p.first_moment.values()) CHECK(v == 0.0);
  for (double v : p.second_moment.values()) CHECK(v == 0.0);
}

TEST_CASE("adam is deterministic and runs the post-step hook") {
  auto make = [] {
    ParamStore ps;
    auto& p = ps.add("p", rand_tensor({5}, 71));
    p.grad = rand_tensor({5}, 72);
    return ps;
  };
  ParamStore a = make(), b = make();
  int hooks = 0;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    adam_step(a, {1e-2}, s, [&] { ++hooks; });
    adam_step(b, {1e-2}, s);
  }
  CHECK(hooks == 3);
  CHECK(a.get("p").value.values() == b.get("p").value.values());
}

TEST_CASE("init helpers") {
  CHECK(glorot_limit(10, 20) == doctest::Approx(std::sqrt(6.0 / 30.0)));
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform(rng, 0.25);
    REQUIRE((u >= -0.25 && u <= 0.25));
  }
}

TEST_CASE("branch signature tracks relu sides only when enabled") {
  auto sig = [](double x, bool track) {
    nn::Graph g;
    g.set_branch_tracking(track);
    nn::relu(g, g.input(Tensor({1, 3}, {x, 1.0, -1.0})));
    return g.branch_signature();
  };
  CHECK(sig(0.5, true) == sig(0.7, true));
  CHECK(sig(0.5, true) != sig(-0.5, true));
  CHECK(sig(0.5, false) == sig(-0.5, false));
}

}  // TEST_SUITE
