#include "xrot/autodiff/tensor.hpp"

#include "xrot/error.hpp"

#include <algorithm>
#include <functional>
#include <sstream>
#include <unordered_map>

namespace xrot::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  raise(ErrorCode::ShapeMismatch, op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<detail::Node<T>>();
  node->data.assign(ad::numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, Buffer<T> data, bool requires_grad) {
  if (data.size() != ad::numel(shape)) {
    shape_error("from_data", shape, Shape{data.size()});
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data(Shape{1}, Buffer<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, Buffer<T> data, std::vector<Tensor> inputs,
                                 BackwardFn backward) {
  Tensor out = from_data(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->backward = std::move(backward);
  out.node_->parents.reserve(inputs.size());
  for (auto& t : inputs) out.node_->parents.push_back(t.node_);
  return out;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) raise(ErrorCode::NotScalar, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
void Tensor<T>::backward() {
  if (!node_ || numel() != 1) {
    raise(ErrorCode::NotScalar, "backward() needs a one-element tensor, got " +
                                    (node_ ? shape_str(shape()) : std::string("undefined")));
  }
  if (!node_->requires_grad) return;

  using NodeT = detail::Node<T>;
  enum class Mark { Open, Done };
  std::unordered_map<NodeT*, Mark> marks;
  std::vector<NodeT*> order;  // post-order: parents before children

  struct Frame {
    NodeT* node;
    std::size_t next;
  };
  std::vector<Frame> stack{{node_.get(), 0}};
  marks[node_.get()] = Mark::Open;
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      NodeT* p = f.node->parents[f.next++].get();
      if (!p->requires_grad) continue;
      auto it = marks.find(p);
      if (it == marks.end()) {
        marks[p] = Mark::Open;
        stack.push_back({p, 0});
      } else if (it->second == Mark::Open) {
        raise(ErrorCode::GraphCycle, "autodiff graph contains a cycle");
      }
    } else {
      marks[f.node] = Mark::Done;
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  for (NodeT* n : order) {
    if (n->backward) n->grad.assign(n->data.size(), T(0));
  }
  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward) n->backward(n->grad);
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace xrot::ad
