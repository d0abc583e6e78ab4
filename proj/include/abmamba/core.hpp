#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace abmamba {

using Index = Eigen::Index;

// Sequences are stored one time step per row, so row access is contiguous.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Blocks template deduction so Eigen expressions convert at call sites.
template <typename T>
using NoDeduce = std::type_identity_t<T>;

// Error taxonomy. The CLI maps each kind onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class InputError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 1; }
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename Scalar>
Scalar softplus(Scalar x) {
  // log1p(exp(x)) without overflow for large x.
  return x > Scalar(20) ? x : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Scalar silu(Scalar x) {
  return x * sigmoid(x);
}

template <typename Scalar>
Scalar silu_grad(Scalar x) {
  const Scalar s = sigmoid(x);
  return s * (Scalar(1) + x * (Scalar(1) - s));
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

using Rng = std::mt19937_64;

template <typename Derived>
void fill_uniform(Eigen::PlainObjectBase<Derived>& m, double bound, Rng& rng) {
  using Scalar = typename Derived::Scalar;
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

template <typename Derived>
void fill_normal(Eigen::PlainObjectBase<Derived>& m, double stddev, Rng& rng) {
  using Scalar = typename Derived::Scalar;
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

// Parameter structs expose `visit(f, prefix)`, calling f(name, tensor) for
// every trainable tensor in a fixed order. Gradients reuse the same struct.
template <typename Params>
Params zeros_like(const Params& p) {
  Params z = p;
  z.visit([](const std::string&, auto& t) { t.setZero(); });
  return z;
}

template <typename Params>
Index parameter_count(Params& p) {
  Index n = 0;
  p.visit([&](const std::string&, auto& t) { n += t.size(); });
  return n;
}

template <typename Scalar>
struct TensorRef {
  std::string name;
  Scalar* data;
  Index rows;
  Index cols;
  Index size() const { return rows * cols; }
};

template <typename Params>
auto tensor_refs(Params& p) {
  using Scalar = typename Params::Scalar;
  std::vector<TensorRef<Scalar>> refs;
  p.visit([&](const std::string& name, auto& t) {
    refs.push_back({name, t.data(), t.rows(), t.cols()});
  });
  return refs;
}

// a += b over every tensor.
template <typename Params>
void accumulate(Params& a, Params& b) {
  auto ra = tensor_refs(a);
  auto rb = tensor_refs(b);
  for (std::size_t i = 0; i < ra.size(); ++i)
    for (Index j = 0; j < ra[i].size(); ++j) ra[i].data[j] += rb[i].data[j];
}

}  // namespace abmamba
