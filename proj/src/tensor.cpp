#include "pat/tensor.hpp"

#include <sstream>

namespace pat {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename S>
Tensor<S> Tensor<S>::zeros(Shape shape) {
  return full(std::move(shape), S(0));
}

template <typename S>
Tensor<S> Tensor<S>::full(Shape shape, S value) {
  for (int e : shape)
    if (e <= 0) throw DimensionError("non-positive extent in " + shape_str(shape));
  auto d = std::make_shared<Storage>();
  d->data.assign(static_cast<std::size_t>(numel(shape)), value);
  d->shape = std::move(shape);
  return Tensor(std::move(d));
}

template <typename S>
Tensor<S> Tensor<S>::from(Shape shape, std::vector<S> values) {
  for (int e : shape)
    if (e <= 0) throw DimensionError("non-positive extent in " + shape_str(shape));
  if (numel(shape) != static_cast<std::int64_t>(values.size()))
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not fill shape " + shape_str(shape));
  auto d = std::make_shared<Storage>();
  d->shape = std::move(shape);
  d->data = std::move(values);
  return Tensor(std::move(d));
}

template <typename S>
Tensor<S> Tensor<S>::scalar(S value) {
  auto d = std::make_shared<Storage>();
  d->data.assign(1, value);
  return Tensor(std::move(d));
}

template <typename S>
S Tensor<S>::value() const {
  if (!d_ || d_->data.size() != 1)
    throw ContractError("value() requires a scalar tensor, got " +
                        (d_ ? shape_str(d_->shape) : std::string("<null>")));
  return d_->data[0];
}

template <typename S>
void Tensor<S>::set_requires_grad(bool flag) {
  d_->requires_grad = flag;
  if (flag) d_->grad_path = true;
}

template <typename S>
void Tensor<S>::ensure_grad_storage() {
  if (d_->grad.empty()) d_->grad.assign(d_->data.size(), S(0));
}

template <typename S>
std::vector<S>& Tensor<S>::grad() {
  ensure_grad_storage();
  return d_->grad;
}

template <typename S>
const std::vector<S>& Tensor<S>::grad() const {
  if (!has_grad())
    throw ContractError("gradient not populated; run backward() first");
  return d_->grad;
}

template <typename S>
void Tensor<S>::zero_grad() {
  if (!d_->grad.empty()) d_->grad.assign(d_->data.size(), S(0));
}

template <typename S>
void Tape<S>::backward(const Tensor<S>& loss) {
  if (!loss.valid() || loss.size() != 1)
    throw ContractError("backward requires a scalar loss, got " +
                        (loss.valid() ? shape_str(loss.shape())
                                      : std::string("<null>")));
  if (!loss.on_grad_path())
    throw ContractError("loss is not part of the recorded computation");
  Tensor<S> seed = loss;
  seed.ensure_grad_storage();
  seed.grad()[0] = S(1);
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  steps_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template void Tape<float>::backward(const Tensor<float>&);
template void Tape<double>::backward(const Tensor<double>&);

}  // namespace pat
