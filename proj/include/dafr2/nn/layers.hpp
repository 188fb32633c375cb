#pragma once

#include <cmath>

#include "dafr2/nn/batch_norm.hpp"
#include "dafr2/nn/conv2d.hpp"
#include "dafr2/nn/layer.hpp"

namespace dafr2::nn {

/// y = x W^T + b on [m, in] input.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng)
      : in_(in_features), out_(out_features), weight_("weight", Tensor<T>({out_features, in_features})),
        bias_("bias", Tensor<T>({out_features})) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    uniform_init(weight_.value, bound, rng);
    uniform_init(bias_.value, bound, rng);
  }

  Tensor<T> forward(const Tensor<T>& input, Mode) override {
    if (input.rank() != 2 || input.dim(1) != in_)
      throw ShapeError("linear: expected [m," + std::to_string(in_) + "], got " + shape_string(input.shape()));
    input_ = input;
    const auto m = static_cast<Eigen::Index>(input.dim(0));
    Tensor<T> out({input.dim(0), out_});
    ConstMatrixMap<T> x(input.data(), m, static_cast<Eigen::Index>(in_));
    ConstMatrixMap<T> w(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.data(), static_cast<Eigen::Index>(out_));
    MatrixMap<T> y(out.data(), m, static_cast<Eigen::Index>(out_));
    y.noalias() = x * w.transpose();
    y.rowwise() += b;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    const auto m = static_cast<Eigen::Index>(input_.dim(0));
    ConstMatrixMap<T> dy(grad_output.data(), m, static_cast<Eigen::Index>(out_));
    ConstMatrixMap<T> x(input_.data(), m, static_cast<Eigen::Index>(in_));
    ConstMatrixMap<T> w(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    MatrixMap<T> dw(weight_.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    dw.noalias() += dy.transpose() * x;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad.data(), static_cast<Eigen::Index>(out_));
    db += dy.colwise().sum();
    Tensor<T> dx(input_.shape());
    MatrixMap<T> dxm(dx.data(), m, static_cast<Eigen::Index>(in_));
    dxm.noalias() = dy * w;
    return dx;
  }

  void collect_parameters(const std::string& prefix, std::vector<Parameter<T>*>& out) override {
    weight_.name = join_name(prefix, "weight");
    bias_.name = join_name(prefix, "bias");
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Linear>(*this); }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  const Parameter<T>& weight() const { return weight_; }
  const Parameter<T>& bias() const { return bias_; }

 private:
  std::size_t in_, out_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& input, Mode) override {
    Tensor<T> out = input;
    mask_.assign(input.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i] > T{0})
        mask_[i] = 1;
      else
        out[i] = T{0};
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    Tensor<T> dx = grad_output;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (!mask_[i]) dx[i] = T{0};
    return dx;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  std::vector<unsigned char> mask_;
};

/// [n,c,h,w] -> [n,c] spatial mean.
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& input, Mode) override {
    if (input.rank() != 4) throw ShapeError("global average pool expects [n,c,h,w]");
    shape_ = input.shape();
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    Tensor<T> out({n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
      double sum = 0.0;
      for (std::size_t s = 0; s < hw; ++s) sum += input[i * hw + s];
      out[i] = static_cast<T>(sum / static_cast<double>(hw));
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    Tensor<T> dx(shape_);
    const std::size_t hw = shape_[2] * shape_[3];
    for (std::size_t i = 0; i < grad_output.size(); ++i) {
      const T g = static_cast<T>(grad_output[i] / static_cast<double>(hw));
      for (std::size_t s = 0; s < hw; ++s) dx[i * hw + s] = g;
    }
    return dx;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

 private:
  Shape shape_;
};

/// Runs child layers in order; names them "<prefix>.<child name>".
template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;
  Sequential(const Sequential& other) : names_(other.names_) {
    for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
  }
  Sequential& operator=(const Sequential& other) {
    if (this != &other) *this = Sequential(other);
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  Sequential& add(std::string name, std::unique_ptr<Layer<T>> layer) {
    names_.push_back(std::move(name));
    layers_.push_back(std::move(layer));
    return *this;
  }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    Tensor<T> x = input;
    for (auto& layer : layers_) x = layer->forward(x, mode);
    return x;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    Tensor<T> g = grad_output;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  void collect_parameters(const std::string& prefix, std::vector<Parameter<T>*>& out) override {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_parameters(join_name(prefix, names_[i]), out);
  }
  void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) override {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_buffers(join_name(prefix, names_[i]), out);
  }
  void collect_batch_norms(std::vector<BatchNorm<T>*>& out) override {
    for (auto& layer : layers_) layer->collect_batch_norms(out);
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Sequential>(*this); }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Residual block: relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x)).
/// The shortcut is a strided 1x1 conv + BN when the shape changes.
template <typename T>
class BasicBlock final : public Layer<T> {
 public:
  BasicBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride, double bn_momentum, double bn_eps,
             Rng& rng) {
    main_.add("conv1", std::make_unique<Conv2d<T>>(in_channels, out_channels, 3, stride, 1, false, rng))
        .add("bn1", std::make_unique<BatchNorm<T>>(out_channels, bn_momentum, bn_eps))
        .add("relu1", std::make_unique<ReLU<T>>())
        .add("conv2", std::make_unique<Conv2d<T>>(out_channels, out_channels, 3, 1, 1, false, rng))
        .add("bn2", std::make_unique<BatchNorm<T>>(out_channels, bn_momentum, bn_eps));
    if (stride != 1 || in_channels != out_channels) {
      shortcut_.emplace();
      shortcut_->add("conv", std::make_unique<Conv2d<T>>(in_channels, out_channels, 1, stride, 0, false, rng))
          .add("bn", std::make_unique<BatchNorm<T>>(out_channels, bn_momentum, bn_eps));
    }
  }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    Tensor<T> main = main_.forward(input, mode);
    const Tensor<T> skip = shortcut_ ? shortcut_->forward(input, mode) : input;
    if (skip.shape() != main.shape()) throw ShapeError("basic block: residual shape mismatch");
    for (std::size_t i = 0; i < main.size(); ++i) main[i] += skip[i];
    return relu_.forward(main, mode);
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    const Tensor<T> g = relu_.backward(grad_output);
    Tensor<T> dx = main_.backward(g);
    const Tensor<T> dskip = shortcut_ ? shortcut_->backward(g) : g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dskip[i];
    return dx;
  }

  void collect_parameters(const std::string& prefix, std::vector<Parameter<T>*>& out) override {
    main_.collect_parameters(prefix, out);
    if (shortcut_) shortcut_->collect_parameters(join_name(prefix, "shortcut"), out);
  }
  void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) override {
    main_.collect_buffers(prefix, out);
    if (shortcut_) shortcut_->collect_buffers(join_name(prefix, "shortcut"), out);
  }
  void collect_batch_norms(std::vector<BatchNorm<T>*>& out) override {
    main_.collect_batch_norms(out);
    if (shortcut_) shortcut_->collect_batch_norms(out);
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BasicBlock>(*this); }

 private:
  Sequential<T> main_;
  std::optional<Sequential<T>> shortcut_;
  ReLU<T> relu_;
};

}  // namespace dafr2::nn
