#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace finsler {

/// Dense rank-R array with all extents equal to n, row-major.
template <int Rank>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(int n, double fill = 0.0) : n_(n), data_(size_for(n), fill) {}

  int extent() const { return n_; }
  std::size_t size() const { return data_.size(); }

  template <class... I>
  double& operator()(I... idx) {
    static_assert(sizeof...(I) == Rank);
    return data_[flat({static_cast<int>(idx)...})];
  }
  template <class... I>
  double operator()(I... idx) const {
    static_assert(sizeof...(I) == Rank);
    return data_[flat({static_cast<int>(idx)...})];
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  double max_abs_diff(const Tensor& o) const {
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::abs(data_[i] - o.data_[i]));
    return m;
  }

 private:
  static std::size_t size_for(int n) {
    std::size_t s = 1;
    for (int r = 0; r < Rank; ++r) s *= static_cast<std::size_t>(n);
    return s;
  }
  std::size_t flat(std::array<int, Rank> idx) const {
    std::size_t f = 0;
    for (int r = 0; r < Rank; ++r) f = f * static_cast<std::size_t>(n_) + static_cast<std::size_t>(idx[r]);
    return f;
  }

  int n_ = 0;
  std::vector<double> data_;
};

using Tensor3 = Tensor<3>;
using Tensor4 = Tensor<4>;

}  // namespace finsler
