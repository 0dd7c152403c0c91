#include "ldm4ts/data/windows.hpp"

#include <algorithm>
#include <cmath>

#include "ldm4ts/errors.hpp"

namespace ldm4ts::data {

SplitSpec SplitSpec::for_dataset(const std::string& name) {
  SplitSpec s;
  if (name == "ETTh1" || name == "ETTh2") {
    s.train_rows = 12 * 30 * 24;
    s.val_rows = s.test_rows = 4 * 30 * 24;
  } else if (name == "ETTm1" || name == "ETTm2") {
    s.train_rows = 12 * 30 * 24 * 4;
    s.val_rows = s.test_rows = 4 * 30 * 24 * 4;
  }
  return s;
}

SplitRows resolve_rows(std::size_t n, const SplitSpec& spec) {
  if (!(spec.few_shot > 0.0 && spec.few_shot <= 1.0)) throw ConfigError("few-shot fraction must lie in (0, 1]");
  SplitRows r{};
  if (spec.train_rows > 0) {
    r.train_end = spec.train_rows;
    r.val_end = r.train_end + spec.val_rows;
    r.test_end = r.val_end + spec.test_rows;
    if (r.test_end > n) {
      throw ConfigError("split row counts (" + std::to_string(r.test_end) + ") exceed series length " +
                        std::to_string(n));
    }
    return r;
  }
  if (spec.train_ratio <= 0 || spec.test_ratio <= 0 || spec.train_ratio + spec.test_ratio >= 1.0) {
    throw ConfigError("split ratios must be positive and leave room for validation");
  }
  const auto train = static_cast<std::size_t>(static_cast<double>(n) * spec.train_ratio);
  const auto test = static_cast<std::size_t>(static_cast<double>(n) * spec.test_ratio);
  r.train_end = train;
  r.val_end = n - test;
  r.test_end = n;
  return r;
}

WindowSet::WindowSet(std::shared_ptr<const Tensor> values, std::vector<std::size_t> origins,
                     std::size_t L, std::size_t H, std::size_t label_len)
    : values_(std::move(values)), origins_(std::move(origins)), L_(L), H_(H), label_len_(label_len) {}

WindowBatch WindowSet::batch(std::span<const std::size_t> idx) const {
  const std::size_t d = dims();
  WindowBatch b{Tensor({idx.size(), L_, d}), Tensor({idx.size(), H_, d}), {}};
  const double* v = values_->ptr();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t o = origins_.at(idx[i]);
    b.origins.push_back(o);
    std::copy_n(v + o * d, L_ * d, b.X.ptr() + i * L_ * d);
    std::copy_n(v + (o + L_) * d, H_ * d, b.Y.ptr() + i * H_ * d);
  }
  return b;
}

WindowBatch WindowSet::range(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < std::min(end, size()); ++i) idx.push_back(i);
  return batch(idx);
}

namespace {

struct RowRange {
  std::size_t begin, end;
};

std::vector<RowRange> window_ranges(const SplitRows& r, std::size_t L, bool overlap) {
  auto ctx = [&](std::size_t b) { return overlap ? (b >= L ? b - L : 0) : b; };
  return {{0, r.train_end}, {ctx(r.train_end), r.val_end}, {ctx(r.val_end), r.test_end}};
}

}  // namespace

Splits make_windows(const SeriesFrame& frame, const SplitSpec& spec, std::size_t L, std::size_t H,
                    std::size_t label_len) {
  if (L == 0 || H == 0) throw ConfigError("seq_len and pred_len must be positive");
  if (label_len > L) throw ConfigError("label_len cannot exceed seq_len");
  Splits s;
  s.rows = resolve_rows(frame.rows(), spec);
  auto values = std::make_shared<const Tensor>(frame.values);
  const auto ranges = window_ranges(s.rows, L, spec.context_overlap);
  const char* names[] = {"train", "val", "test"};
  WindowSet* sets[] = {&s.train, &s.val, &s.test};
  for (int k = 0; k < 3; ++k) {
    const auto [b, e] = ranges[static_cast<std::size_t>(k)];
    const std::size_t own = k == 0 ? e : (k == 1 ? s.rows.val_end - s.rows.train_end : s.rows.test_end - s.rows.val_end);
    if (own == 0 && k > 0) {
      *sets[k] = WindowSet(values, {}, L, H, label_len);  // split disabled
      continue;
    }
    if (e - b < L + H) {
      throw ConfigError(std::string(names[k]) + " split has " + std::to_string(e - b) +
                        " rows, needs at least seq_len + pred_len = " + std::to_string(L + H));
    }
    std::size_t count = e - b - L - H + 1;
    if (k == 0 && spec.few_shot < 1.0) {
      count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(spec.few_shot * static_cast<double>(count))));
    }
    std::vector<std::size_t> origins(count);
    for (std::size_t i = 0; i < count; ++i) origins[i] = b + i;
    *sets[k] = WindowSet(values, std::move(origins), L, H, label_len);
  }
  return s;
}

OriginCounts window_origin_counts(std::size_t n_rows, const SplitSpec& spec, std::size_t L) {
  const auto ranges = window_ranges(resolve_rows(n_rows, spec), L, spec.context_overlap);
  auto count = [L](RowRange r) { return r.end - r.begin >= L ? r.end - r.begin - L + 1 : 0; };
  return {count(ranges[0]), count(ranges[1]), count(ranges[2])};
}

}  // namespace ldm4ts::data
