#include <cmath>
#include <complex>
#include <numbers>

#include "doctest.h"
#include "gradcheck.hpp"
#include "ldm4ts/conditioning/conditioning.hpp"
#include "ldm4ts/errors.hpp"

using namespace ldm4ts;
using namespace ldm4ts::cond;

namespace {

// Independent FNV-1a for the hash-count oracle.
std::size_t oracle_bin(const std::string& tok) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : tok) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return static_cast<std::size_t>(h % 1024);
}

std::vector<double> oracle_counts(const std::string& text) {
  std::vector<double> c(1024, 0.0);
  std::string tok;
  for (char ch : text + " ") {
    if (ch == ' ' || ch == '\n' || ch == '\t') {
      if (!tok.empty()) c[oracle_bin(tok)] += 1;
      tok.clear();
    } else {
      tok += ch;
    }
  }
  return c;
}

// Top-k lags by repeated argmax of a directly swept autocorrelation.
std::vector<std::size_t> oracle_lags(const std::vector<double>& x) {
  const std::size_t L = x.size();
  double mu = 0;
  for (double v : x) mu += v / static_cast<double>(L);
  std::vector<double> r(L / 2 + 1, -1e300);
  double den = 0;
  for (double v : x) den += (v - mu) * (v - mu);
  for (std::size_t k = 1; k <= L / 2; ++k) {
    double num = 0;
    for (std::size_t t = k; t < L; ++t) num += (x[t] - mu) * (x[t - k] - mu);
    r[k] = num / den;
  }
  std::vector<std::size_t> out;
  for (int i = 0; i < 5; ++i) {
    std::size_t best = 1;
    for (std::size_t k = 2; k <= L / 2; ++k)
      if (r[k] > r[best]) best = k;
    out.push_back(best);
    r[best] = -1e300;
  }
  return out;
}

}  // namespace

TEST_CASE("hann window") {
  for (std::size_t L : {2u, 3u, 8u, 97u}) {
    auto w = hann_window(L);
    CHECK(w.front() == 0.0);
    CHECK(std::abs(w.back()) < 1e-15);
    if (L % 2) CHECK(std::abs(w[L / 2] - 1.0) < 1e-15);
  }
  CHECK_THROWS_AS(hann_window(1), ConfigError);
  CHECK_THROWS_AS(fft_encode(Tensor({1, 1, 2})), ConfigError);
}

TEST_CASE("frequency embedding") {
  CHECK(fft_encode(Tensor({2, 8, 3})).max() == 0.0);
  CHECK(fft_encode(Tensor({2, 8, 3})).min() == 0.0);

  RngStream rng(1, "fft");
  const std::size_t L = 8, D = 2;
  Tensor X = rng.normal_tensor({2, L, D});
  Tensor c = fft_encode(X);
  REQUIRE(c.shape() == Shape{2, 2 * D * L});
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<double> expect;
    std::vector<double> im;
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t k = 0; k < L; ++k) {
        std::complex<double> s = 0;
        for (std::size_t t = 0; t < L; ++t) {
          const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * double(t) / double(L - 1));
          s += w * X.at({b, t, d}) * std::polar(1.0, -2 * std::numbers::pi * double(k * t) / double(L));
        }
        expect.push_back(s.real());
        im.push_back(s.imag());
      }
    }
    expect.insert(expect.end(), im.begin(), im.end());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(c[b * 2 * D * L + i] - expect[i]) < 1e-10);
  }

  Tensor Y = rng.normal_tensor({2, L, D});
  Tensor sum(X.shape());
  for (std::size_t i = 0; i < X.numel(); ++i) sum[i] = 2.0 * X[i] - 3.0 * Y[i];
  Tensor cs = fft_encode(sum), cy = fft_encode(Y);
  for (std::size_t i = 0; i < cs.numel(); ++i) CHECK(std::abs(cs[i] - (2 * c[i] - 3 * cy[i])) < 1e-10);
}

TEST_CASE("python float formatting") {
  CHECK(python_float(1.0) == "1.0");
  CHECK(python_float(2.5) == "2.5");
  CHECK(python_float(-4.0) == "-4.0");
  CHECK(python_float(0.1) == "0.1");
  CHECK(python_float(0.0001) == "0.0001");
  CHECK(python_float(0.00001) == "1e-05");
  CHECK(python_float(1.5e-7) == "1.5e-07");
  CHECK(python_float(1e16) == "1e+16");
  CHECK(python_float(1234567890123456.0) == "1234567890123456.0");
  CHECK(python_float(0.1 + 0.2) == "0.30000000000000004");
  CHECK(python_float(123.456) == "123.456");
  CHECK(python_float(0.0) == "0.0");
}

TEST_CASE("prompt statistics and template") {
  PromptConfig cfg;
  cfg.description = "toy";
  cfg.seq_len = 4;
  cfg.pred_len = 2;
  auto p = generate_prompt(Tensor({1, 4, 1}, std::vector<double>{1, 2, 3, 4}), cfg);
  CHECK(p[0].stats.min == 1.0);
  CHECK(p[0].stats.max == 4.0);
  CHECK(p[0].stats.median == 2.5);
  CHECK(p[0].stats.trend == "upward");
  CHECK(p[0].stats.lags == std::vector<std::size_t>{1, 2});
  CHECK(p[0].text ==
        "<|start_prompt|>Dataset description: toy. Task: forecast the next 2 steps given the previous 4 steps. "
        "Input statistics: min value 1.0, max value 4.0, median value 2.5, trend is upward, top-5 lags are "
        "[1, 2].<|<end_prompt>|>");

  auto down = generate_prompt(Tensor({1, 3, 1}, std::vector<double>{3, 2, 1}), cfg);
  CHECK(down[0].stats.trend == "downward");

  auto flat = generate_prompt(Tensor({1, 96, 2}, 0.5), cfg);
  CHECK(flat[0].stats.trend == "flat");
  CHECK(flat[0].stats.lags == std::vector<std::size_t>{1, 2, 3, 4, 5});

  RngStream rng(2, "prompt");
  Tensor X({1, 96, 2});
  std::vector<double> mean(96);
  for (std::size_t t = 0; t < 96; ++t) {
    for (std::size_t d = 0; d < 2; ++d)
      X.at({0, t, d}) = std::sin(2 * std::numbers::pi * double(t) / 24.0 + 0.3 * double(d)) + 0.05 * rng.normal();
    mean[t] = (X.at({0, t, 0}) + X.at({0, t, 1})) / 2;
  }
  auto s = generate_prompt(X, cfg);
  const auto& lags = s[0].stats.lags;
  CHECK(std::find(lags.begin(), lags.end(), 24) != lags.end());
  CHECK(lags == oracle_lags(mean));
  CHECK(generate_prompt(X, cfg)[0].text == s[0].text);
}

TEST_CASE("text embedding") {
  const std::string a = "<|start_prompt|>Dataset description: toy. min value 1.0, max value 4.0";
  const std::string b = "<|start_prompt|>Dataset description: toy. min value 1.0, max value 5.0";
  Tensor ca = hash_counts({a}), cb = hash_counts({b});
  const auto oa = oracle_counts(a), ob = oracle_counts(b);
  std::size_t differ = 0;
  for (std::size_t k = 0; k < 1024; ++k) {
    CHECK(ca[k] == oa[k]);
    CHECK(cb[k] == ob[k]);
    differ += ca[k] != cb[k];
  }
  CHECK(differ >= 1);

  nn::Scope s{3, "text"};
  TextEncoder enc(s, 256);
  TextEncoder enc2(s, 256);
  ag::Var e1 = enc({a, b}), e2 = enc2({a, b});
  CHECK(e1.shape() == Shape{2, 256});
  CHECK(e1.value() == e2.value());
  CHECK(e1.value().all_finite());
  CHECK_THROWS_AS(enc({"   "}), ValidationError);

  TextEncoder small(nn::Scope{4, "text"}, 16);
  const Tensor pooled = small.pooled({a, b});
  RngStream wr(5, "w");
  const Tensor w = wr.normal_tensor({2, 16});
  auto r = testutil::grad_check(
      [&] { return ag::sum(small.project(ag::constant(pooled)) * ag::constant(w)); }, small.parameters());
  CHECK_MESSAGE(r.max_rel < 1e-4, r.worst);
}

TEST_CASE("condition fusion") {
  FusionConfig fc;
  fc.d_model = 16;
  fc.freq_dim = 12;
  fc.heads = 4;
  ConditionFusion f(nn::Scope{6, "fusion"}, fc);
  RngStream rng(7, "fuse");
  ag::Var ct = ag::constant(rng.normal_tensor({2, 16}));
  ag::Var cf = ag::constant(rng.normal_tensor({2, 12}));

  // Every latent position carries the same vector v.
  Tensor v = rng.normal_tensor({2, 4});
  Tensor z({2, 4, 3, 3});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < 9; ++i) z[(b * 4 + c) * 9 + i] = v[b * 4 + c];
  Tensor out = f(ct, cf, ag::constant(z)).value();
  Tensor expect = f.attn.wo(f.attn.wv(ag::constant(v))).value();
  REQUIRE(out.shape() == Shape{2, 16});
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(std::abs(out[i] - expect[i]) < 1e-12);

  Tensor zr = rng.normal_tensor({2, 4, 3, 3});
  Tensor weights;
  Tensor o1 = f(ct, cf, ag::constant(zr), &weights).value();
  REQUIRE(weights.shape() == Shape{2, 4, 1, 9});
  for (std::size_t r = 0; r < 8; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < 9; ++k) {
      CHECK(weights[r * 9 + k] >= 0.0);
      s += weights[r * 9 + k];
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  // Reverse the spatial positions: the attention output is unchanged.
  Tensor zp(zr.shape());
  for (std::size_t bc = 0; bc < 8; ++bc)
    for (std::size_t i = 0; i < 9; ++i) zp[bc * 9 + i] = zr[bc * 9 + 8 - i];
  Tensor o2 = f(ct, cf, ag::constant(zp)).value();
  for (std::size_t i = 0; i < o1.numel(); ++i) CHECK(std::abs(o1[i] - o2[i]) < 1e-12);

  const Tensor w = rng.normal_tensor({2, 16});
  auto r = testutil::grad_check([&] { return ag::sum(f(ct, cf, ag::constant(zr)) * ag::constant(w)); },
                                f.parameters());
  CHECK_MESSAGE(r.max_rel < 1e-4, r.worst);

  FusionConfig bad = fc;
  bad.heads = 5;
  CHECK_THROWS_AS(ConditionFusion(nn::Scope{6, "x"}, bad), ConfigError);

  FusionConfig free = fc;
  free.uses_latent = false;
  ConditionFusion g(nn::Scope{6, "fusion"}, free);
  CHECK(g(ct, cf, ag::Var()).value() == g.query(ct, cf).value());

  FusionConfig def;
  def.freq_dim = 2 * 7 * 96;
  ConditionFusion d(nn::Scope{1, "fusion"}, def);
  CHECK(d(ag::constant(Tensor({3, 256})), ag::constant(Tensor({3, 1344})), ag::constant(Tensor({3, 4, 8, 8})))
            .shape() == Shape{3, 256});
}
