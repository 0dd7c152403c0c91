#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ldm4ts/data/series.hpp"

namespace ldm4ts::data {

struct SplitSpec {
  // Explicit row counts take precedence when train_rows > 0.
  std::size_t train_rows = 0, val_rows = 0, test_rows = 0;
  double train_ratio = 0.7, test_ratio = 0.2;  // val gets the remainder
  double few_shot = 1.0;
  // When set, val/test windows may draw their look-back from the L rows that
  // precede the split (the usual ETT benchmark window-count convention).
  // Off by default so no val/test window touches a training timestamp.
  bool context_overlap = false;

  // Standard benchmark row counts for ETTh1/ETTh2/ETTm1/ETTm2, the
  // ratio split for every other name.
  static SplitSpec for_dataset(const std::string& name);
};

struct SplitRows {
  std::size_t train_end, val_end, test_end;  // split i owns [prev_end, end)
};

SplitRows resolve_rows(std::size_t n_rows, const SplitSpec& spec);

struct WindowBatch {
  Tensor X;  // B x L x D
  Tensor Y;  // B x H x D
  std::vector<std::size_t> origins;
};

// Sliding stride-1 windows over a shared value array. Window i reads rows
// [origin, origin + L) as X and [origin + L, origin + L + H) as Y.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(std::shared_ptr<const Tensor> values, std::vector<std::size_t> origins, std::size_t L,
            std::size_t H, std::size_t label_len);

  std::size_t size() const { return origins_.size(); }
  std::size_t seq_len() const { return L_; }
  std::size_t pred_len() const { return H_; }
  std::size_t label_len() const { return label_len_; }
  std::size_t dims() const { return values_ ? values_->dim(1) : 0; }
  std::size_t origin(std::size_t i) const { return origins_.at(i); }
  const std::vector<std::size_t>& origins() const { return origins_; }

  WindowBatch batch(std::span<const std::size_t> idx) const;
  WindowBatch range(std::size_t begin, std::size_t end) const;

 private:
  std::shared_ptr<const Tensor> values_;
  std::vector<std::size_t> origins_;
  std::size_t L_ = 0, H_ = 0, label_len_ = 0;
};

struct Splits {
  WindowSet train, val, test;
  SplitRows rows;
};

// Throws ConfigError when a split cannot hold L + H rows. A val or test split
// with zero rows yields an empty window set.
Splits make_windows(const SeriesFrame& frame, const SplitSpec& spec, std::size_t L,
                    std::size_t H, std::size_t label_len);

struct OriginCounts {
  std::size_t train, val, test;
};
// Number of positions where a length-L look-back fits in each split (the
// horizon-independent "dataset size" convention).
OriginCounts window_origin_counts(std::size_t n_rows, const SplitSpec& spec, std::size_t L);

}  // namespace ldm4ts::data
