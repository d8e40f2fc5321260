#pragma once

#include <string>
#include <vector>

namespace osdn {

using Shape = std::vector<int>;

int shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense n-dimensional array of doubles, row-major.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, double fill);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double x) { return Tensor(Shape{1}, {x}); }

  int numel() const { return static_cast<int>(v.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double& operator[](int i) { return v[static_cast<size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;

  double item() const;  // value of a 1-element tensor
};

// Throws std::runtime_error with a message naming the op and the offending
// shapes when `cond` is false.
void require(bool cond, const std::string& msg);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace osdn
