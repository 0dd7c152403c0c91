#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ldm4ts/conditioning/conditioning.hpp"
#include "ldm4ts/errors.hpp"

namespace ldm4ts::cond {

std::string python_float(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return std::signbit(v) ? "-0.0" : "0.0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
  std::string sci(buf, res.ptr);
  const auto epos = sci.find('e');
  const int exp = std::stoi(sci.substr(epos + 1));
  std::string mant = sci.substr(0, epos);
  std::string sign;
  if (mant[0] == '-') {
    sign = "-";
    mant.erase(0, 1);
  }
  std::string digits;
  for (char c : mant)
    if (c != '.') digits += c;
  if (exp < -4 || exp >= 16) {
    std::string m = digits.substr(0, 1);
    if (digits.size() > 1) m += "." + digits.substr(1);
    char e[16];
    std::snprintf(e, sizeof e, "e%c%02d", exp < 0 ? '-' : '+', std::abs(exp));
    return sign + m + e;
  }
  std::string out;
  if (exp < 0) {
    out = "0." + std::string(static_cast<std::size_t>(-exp - 1), '0') + digits;
  } else {
    const auto ip = static_cast<std::size_t>(exp) + 1;
    if (digits.size() <= ip) {
      out = digits + std::string(ip - digits.size(), '0') + ".0";
    } else {
      out = digits.substr(0, ip) + "." + digits.substr(ip);
    }
  }
  return sign + out;
}

PromptStats prompt_stats(std::span<const double> window, std::size_t L, std::size_t D) {
  if (window.size() != L * D || L == 0 || D == 0) throw DimensionError("prompt window size mismatch");
  PromptStats s;
  std::vector<double> v(window.begin(), window.end());
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);

  std::vector<double> m(L, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t d = 0; d < D; ++d) m[t] += window[t * D + d];
    m[t] /= static_cast<double>(D);
  }
  double slope = 0.0;
  for (std::size_t t = 1; t < L; ++t) slope += m[t] - m[t - 1];
  if (L > 1) slope /= static_cast<double>(L - 1);
  s.trend = slope > 0 ? "upward" : slope < 0 ? "downward" : "flat";

  const double mu = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(L);
  double var = 0.0;
  for (double x : m) var += (x - mu) * (x - mu);
  if (!(var > 0.0)) {
    s.lags = {1, 2, 3, 4, 5};
    return s;
  }
  std::vector<std::pair<double, std::size_t>> ac;
  for (std::size_t k = 1; k <= L / 2; ++k) {
    double c = 0.0;
    for (std::size_t t = 0; t + k < L; ++t) c += (m[t] - mu) * (m[t + k] - mu);
    ac.emplace_back(c / var, k);
  }
  std::stable_sort(ac.begin(), ac.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; i < std::min<std::size_t>(5, ac.size()); ++i) s.lags.push_back(ac[i].second);
  return s;
}

std::string render_prompt(const PromptStats& s, const PromptConfig& cfg) {
  std::string lags = "[";
  for (std::size_t i = 0; i < s.lags.size(); ++i) lags += (i ? ", " : "") + std::to_string(s.lags[i]);
  lags += "]";
  return "<|start_prompt|>Dataset description: " + cfg.description + ". Task: forecast the next " +
         std::to_string(cfg.pred_len) + " steps given the previous " + std::to_string(cfg.seq_len) +
         " steps. Input statistics: min value " + python_float(s.min) + ", max value " + python_float(s.max) +
         ", median value " + python_float(s.median) + ", trend is " + s.trend + ", top-5 lags are " + lags +
         ".<|<end_prompt>|>";
}

std::vector<PromptText> generate_prompt(const Tensor& X, const PromptConfig& cfg) {
  if (X.rank() != 3) throw DimensionError("generate_prompt expects B x L x D, got " + shape_str(X.shape()));
  const std::size_t B = X.dim(0), L = X.dim(1), D = X.dim(2);
  std::vector<PromptText> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    out[b].stats = prompt_stats(std::span<const double>(X.ptr() + b * L * D, L * D), L, D);
    out[b].text = render_prompt(out[b].stats, cfg);
  }
  return out;
}

}  // namespace ldm4ts::cond
