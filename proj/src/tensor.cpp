#include "osdn/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace osdn {

int shape_numel(const Shape& s) {
  int n = 1;
  for (int d : s) {
    if (d < 0) throw std::runtime_error("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

Tensor::Tensor(Shape s) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), 0.0) {}

Tensor::Tensor(Shape s, double fill)
    : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
  if (shape_numel(shape) != static_cast<int>(v.size()))
    throw std::runtime_error("Tensor: " + std::to_string(v.size()) +
                             " values do not fill shape " + shape_str(shape));
}

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double Tensor::item() const {
  require(numel() == 1, "item(): tensor has " + std::to_string(numel()) + " elements");
  return v[0];
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "max_abs_diff: shape mismatch " + shape_str(a.shape) + " vs " +
                               shape_str(b.shape));
  double m = 0.0;
  for (int i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace osdn
