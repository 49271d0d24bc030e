#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace riskcast {

/// Dense row-major tensor of doubles.
///
/// Most kernels in this library operate on rank-2 tensors ([rows, cols]);
/// higher ranks are used only as storage (e.g. decoded trajectories).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor vector(std::initializer_list<double> values);
  static Tensor row(std::span<const double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Rank-2 helpers.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  const double& operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
  const double& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row_span(std::size_t r);
  std::span<const double> row_span(std::size_t r) const;

  void fill(double v);
  void reshape(std::vector<std::size_t> shape);
  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);

/// out = a[m,k] * b[k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// out = a^T * b, a is [k,m], b is [k,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// out = a * b^T, a is [m,k], b is [n,k]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// acc += a^T * b
void add_matmul_tn(Tensor& acc, const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);
/// Concatenates rank-2 tensors with equal row counts along columns.
Tensor concat_cols(std::span<const Tensor* const> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Columns [begin, begin+count) of a rank-2 tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
/// Selected rows of a rank-2 tensor, in the given order.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

double max_abs_diff(const Tensor& a, const Tensor& b);

/// Throws DimensionError with `what` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

}  // namespace riskcast
