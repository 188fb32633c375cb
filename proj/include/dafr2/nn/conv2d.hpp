#pragma once

#include "dafr2/nn/layer.hpp"

namespace dafr2::nn {

/// 2-D convolution, square kernel, zero padding. Lowered to one GEMM per
/// mini-batch via im2col; the column buffer is rebuilt in backward() instead
/// of being cached.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t padding,
         bool bias, Rng& rng)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding),
        weight_("weight", Tensor<T>({out_channels, in_channels, kernel, kernel})) {
    if (stride == 0 || kernel == 0) throw ParameterError("conv2d: kernel and stride must be positive");
    kaiming_normal(weight_.value, out_channels * kernel * kernel, rng);
    if (bias) bias_.emplace("bias", Tensor<T>({out_channels}));
  }

  std::size_t out_size(std::size_t in) const {
    if (in + 2 * pad_ < k_) throw ShapeError("conv2d: input smaller than kernel");
    return (in + 2 * pad_ - k_) / stride_ + 1;
  }

  Tensor<T> forward(const Tensor<T>& input, Mode) override {
    if (input.rank() != 4 || input.dim(1) != in_)
      throw ShapeError("conv2d: expected [n," + std::to_string(in_) + ",h,w], got " + shape_string(input.shape()));
    input_ = input;
    const std::size_t n = input.dim(0), oh = out_size(input.dim(2)), ow = out_size(input.dim(3));
    const std::size_t positions = oh * ow;
    RowMatrix<T> cols = im2col(input, oh, ow);
    ConstMatrixMap<T> w(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_ * k_ * k_));
    RowMatrix<T> y = w * cols;  // [out, n*positions]

    Tensor<T> out({n, out_, oh, ow});
    for (std::size_t img = 0; img < n; ++img)
      for (std::size_t c = 0; c < out_; ++c) {
        T* dst = out.data() + (img * out_ + c) * positions;
        const T* src = y.data() + c * n * positions + img * positions;
        const T b = bias_ ? bias_->value[c] : T{0};
        for (std::size_t p = 0; p < positions; ++p) dst[p] = src[p] + b;
      }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    const std::size_t n = input_.dim(0), oh = grad_output.dim(2), ow = grad_output.dim(3);
    const std::size_t positions = oh * ow;
    RowMatrix<T> dy(static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(n * positions));
    for (std::size_t img = 0; img < n; ++img)
      for (std::size_t c = 0; c < out_; ++c) {
        const T* src = grad_output.data() + (img * out_ + c) * positions;
        T* dst = dy.data() + c * n * positions + img * positions;
        std::copy_n(src, positions, dst);
      }
    RowMatrix<T> cols = im2col(input_, oh, ow);
    MatrixMap<T> dw(weight_.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_ * k_ * k_));
    dw.noalias() += dy * cols.transpose();
    if (bias_)
      for (std::size_t c = 0; c < out_; ++c) bias_->grad[c] += dy.row(static_cast<Eigen::Index>(c)).sum();

    ConstMatrixMap<T> w(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_ * k_ * k_));
    RowMatrix<T> dcols = w.transpose() * dy;
    return col2im(dcols, oh, ow);
  }

  void collect_parameters(const std::string& prefix, std::vector<Parameter<T>*>& out) override {
    weight_.name = join_name(prefix, "weight");
    out.push_back(&weight_);
    if (bias_) {
      bias_->name = join_name(prefix, "bias");
      out.push_back(&*bias_);
    }
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

  Parameter<T>& weight() { return weight_; }

 private:
  RowMatrix<T> im2col(const Tensor<T>& x, std::size_t oh, std::size_t ow) const {
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), positions = oh * ow;
    RowMatrix<T> cols = RowMatrix<T>::Zero(static_cast<Eigen::Index>(in_ * k_ * k_), static_cast<Eigen::Index>(n * positions));
    for (std::size_t c = 0; c < in_; ++c)
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          T* row = cols.data() + ((c * k_ + ky) * k_ + kx) * n * positions;
          for (std::size_t img = 0; img < n; ++img) {
            const T* plane = x.data() + (img * in_ + c) * h * w;
            T* dst = row + img * positions;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pad_);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                dst[oy * ow + ox] = plane[static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)];
              }
            }
          }
        }
    return cols;
  }

  Tensor<T> col2im(const RowMatrix<T>& cols, std::size_t oh, std::size_t ow) const {
    const std::size_t n = input_.dim(0), h = input_.dim(2), w = input_.dim(3), positions = oh * ow;
    Tensor<T> dx(input_.shape());
    for (std::size_t c = 0; c < in_; ++c)
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const T* row = cols.data() + ((c * k_ + ky) * k_ + kx) * n * positions;
          for (std::size_t img = 0; img < n; ++img) {
            T* plane = dx.data() + (img * in_ + c) * h * w;
            const T* src = row + img * positions;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pad_);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                plane[static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)] += src[oy * ow + ox];
              }
            }
          }
        }
    return dx;
  }

  std::size_t in_, out_, k_, stride_, pad_;
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
  Tensor<T> input_;
};

}  // namespace dafr2::nn
