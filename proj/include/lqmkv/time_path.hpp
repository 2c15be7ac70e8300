#pragma once

#include <utility>
#include <vector>

#include "lqmkv/types.hpp"

namespace lqmkv {

// Deterministic time-indexed coefficient: either a constant matrix or
// piecewise-linear samples over a grid.  Solvers evaluate it at arbitrary
// times (including integrator stage times); values outside the sample grid
// clamp to the nearest endpoint.
template <typename Value>
class TimePath {
 public:
  TimePath() = default;
  explicit TimePath(Value constant) : constant_(std::move(constant)) {}
  TimePath(std::vector<double> grid, std::vector<Value> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (grid_.size() != values_.size() || grid_.size() < 2)
      fail(ErrorKind::InvalidParams, "time path needs grid and values of equal length >= 2");
    for (std::size_t i = 1; i < grid_.size(); ++i)
      if (!(grid_[i] > grid_[i - 1]))
        fail(ErrorKind::InvalidParams, "time path grid must be strictly increasing");
  }

  bool is_constant() const { return grid_.empty(); }
  bool empty() const { return grid_.empty() && constant_.size() == 0; }

  Value operator()(double t) const {
    if (is_constant()) return constant_;
    if (t <= grid_.front()) return values_.front();
    if (t >= grid_.back()) return values_.back();
    std::size_t hi = 1;
    while (grid_[hi] < t) ++hi;
    double w = (t - grid_[hi - 1]) / (grid_[hi] - grid_[hi - 1]);
    return (1.0 - w) * values_[hi - 1] + w * values_[hi];
  }

  const Value& constant_value() const { return constant_; }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<Value>& values() const { return values_; }

 private:
  Value constant_{};
  std::vector<double> grid_;
  std::vector<Value> values_;
};

using TimeMat = TimePath<Mat>;
using TimeVec = TimePath<Vec>;

inline TimeMat zero_mat_path(int rows, int cols) {
  return TimeMat(Mat::Zero(rows, cols));
}
inline TimeVec zero_vec_path(int rows) { return TimeVec(Vec::Zero(rows)); }

inline double sup_norm(const TimeMat& p, double t0, double t1, int samples = 65) {
  double best = 0.0;
  for (int i = 0; i < samples; ++i) {
    double t = t0 + (t1 - t0) * i / (samples - 1);
    best = std::max(best, p(t).cwiseAbs().maxCoeff());
  }
  return best;
}

}  // namespace lqmkv
