#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "iconpeft/errors.hpp"
#include "iconpeft/rng.hpp"

namespace iconpeft {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

// Finiteness scanning after each op. On by default in debug builds; tests and
// verification commands switch it on explicitly.
namespace detail {
inline bool& finite_checks_flag() {
#ifdef NDEBUG
  static bool on = false;
#else
  static bool on = true;
#endif
  return on;
}
}  // namespace detail

inline bool finite_checks_enabled() { return detail::finite_checks_flag(); }
inline void set_finite_checks(bool on) { detail::finite_checks_flag() = on; }

// Dense row-major tensor. Copies share storage (cheap handles); ops always
// allocate fresh storage for their outputs.
template <class S>
class Tensor {
 public:
  using value_type = S;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.validate_shape();
    t.st_ = std::make_shared<Storage>();
    t.st_->data.assign(static_cast<size_t>(numel_of(t.shape_)), S(0));
    return t;
  }

  static Tensor full(Shape shape, S value) {
    Tensor t = zeros(std::move(shape));
    for (S& x : t.st_->data) x = value;
    return t;
  }

  static Tensor from(Shape shape, std::vector<S> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.validate_shape();
    if (numel_of(t.shape_) != static_cast<int64_t>(values.size())) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(t.shape_));
    }
    t.st_ = std::make_shared<Storage>();
    t.st_->data = std::move(values);
    return t;
  }

  static Tensor scalar(S value) { return full({1}, value); }

  // Seeded normal draw, sigma-scaled. Stream depends only on the seed.
  static Tensor randn(Shape shape, uint64_t seed, double sigma = 1.0) {
    Tensor t = zeros(std::move(shape));
    SeededRng rng(seed);
    for (S& x : t.st_->data) x = static_cast<S>(rng.normal() * sigma);
    return t;
  }

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return st_ ? static_cast<int64_t>(st_->data.size()) : 0; }

  // Tensors are shared handles: const protects the handle, not the values,
  // so backward rules can accumulate into captured inputs.
  std::span<S> data() const { return {st_->data.data(), st_->data.size()}; }
  S* data_ptr() const { return st_->data.data(); }

  S item() const {
    if (!st_ || st_->data.size() != 1) {
      throw ShapeError("item() requires a single-element tensor, got shape " +
                       shape_str(shape_));
    }
    return st_->data[0];
  }

  bool requires_grad() const { return st_ && st_->requires_grad; }
  void set_requires_grad(bool v) const { st_->requires_grad = v; }

  bool has_grad() const { return st_ && !st_->grad.empty(); }

  // Allocates (zeroed) on first use so frozen paths never pay for buffers.
  void ensure_grad() const {
    if (st_->grad.empty()) st_->grad.assign(st_->data.size(), S(0));
  }

  std::span<S> grad() const {
    ensure_grad();
    return {st_->grad.data(), st_->grad.size()};
  }

  void zero_grad() const {
    if (has_grad()) std::fill(st_->grad.begin(), st_->grad.end(), S(0));
  }

  void drop_grad() const {
    if (st_) st_->grad.clear();
  }

  // Deep copy of values (not grad); keeps the requires_grad flag.
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.st_ = std::make_shared<Storage>();
    t.st_->data = st_->data;
    t.st_->requires_grad = st_->requires_grad;
    return t;
  }

  bool shares_storage(const Tensor& other) const { return st_ == other.st_; }
  const void* storage_id() const { return st_.get(); }

  bool all_finite() const {
    for (S x : st_->data) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

 private:
  struct Storage {
    std::vector<S> data;
    std::vector<S> grad;  // empty until ensure_grad()
    bool requires_grad = false;
  };

  void validate_shape() const {
    for (int64_t e : shape_) {
      if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::shared_ptr<Storage> st_;
};

// Ordered record of executed ops. Ops append a backward rule while a tape is
// active; backward() replays the rules in exact reverse execution order.
// One thread per tape; nesting is allowed (innermost tape records).
template <class S>
class Tape {
 public:
  Tape() : prev_(active_) { active_ = this; }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(const Tensor<S>& output, std::function<void()> rule) {
    outputs_.push_back(output.storage_id());
    rules_.push_back(std::move(rule));
  }

  size_t size() const { return rules_.size(); }
  bool consumed() const { return consumed_; }

  void backward(Tensor<S>& loss) {
    if (consumed_) throw Error("tape already consumed by a previous backward()");
    if (loss.numel() != 1) {
      throw Error("backward() requires a scalar loss, got shape " +
                  shape_str(loss.shape()));
    }
    bool on_tape = false;
    for (const void* id : outputs_) {
      if (id == loss.storage_id()) {
        on_tape = true;
        break;
      }
    }
    if (!on_tape) throw Error("backward() loss was not produced on this tape");
    loss.ensure_grad();
    loss.grad()[0] = S(1);
    for (size_t i = rules_.size(); i-- > 0;) rules_[i]();
    consumed_ = true;
    rules_.clear();
    outputs_.clear();
  }

 private:
  std::vector<std::function<void()>> rules_;
  std::vector<const void*> outputs_;
  bool consumed_ = false;
  Tape* prev_ = nullptr;
  static thread_local Tape* active_;
};

template <class S>
thread_local Tape<S>* Tape<S>::active_ = nullptr;

template <class S>
void backward(Tensor<S>& loss, Tape<S>& tape) {
  tape.backward(loss);
}

namespace detail {

template <class S>
void check_finite(const Tensor<S>& t, const char* op) {
  if (!finite_checks_enabled()) return;
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

}  // namespace detail

}  // namespace iconpeft
