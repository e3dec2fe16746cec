#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcr {

using Shape = std::vector<std::size_t>;

/// Raised when operand extents are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for invalid model / harness configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::uint64_t version = 0;
};

}  // namespace detail

// Dense row-major array of doubles. Copies share storage (handle semantics);
// use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  // Extent of axis `axis`; negative values count from the back.
  std::size_t extent(int axis) const;

  std::span<const double> data() const { return impl_->data; }
  // Mutable access bumps the version counter; the tape refuses to run a
  // backward rule whose inputs were modified after recording.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return impl_->data[flat_index]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Handles share storage, so gradient access does not need a mutable handle.
  std::span<double> grad_buffer() const;  // allocates zeros on first use
  void zero_grad() const { impl_->grad.clear(); }

  std::uint64_t version() const { return impl_->version; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  Tensor clone() const;   // deep copy, keeps requires_grad, drops grad
  Tensor detach() const;  // deep copy without grad participation

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Records differentiable operations in execution order. One tape belongs to
// one thread of work; ops record onto the tape made active by Tape::Scope.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and replays backward rules in reverse order.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  static Tape* active();

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  // Suspends recording (e.g. for finite-difference probes).
  class Pause {
   public:
    Pause();
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* previous_;
  };

 private:
  struct Node {
    std::vector<Tensor> inputs;
    std::vector<std::uint64_t> versions;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// True when an op over `inputs` must be recorded on the active tape.
bool needs_grad(std::initializer_list<const Tensor*> inputs);
bool needs_grad(const std::vector<Tensor>& inputs);

// Marks `output` as differentiable and records `backward` on the active tape.
void record_op(std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn backward);

}  // namespace lcr
