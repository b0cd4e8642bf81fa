#pragma once

#include <cstddef>
#include <span>

// 1-D "same" convolution kernels (stride 1, zero padding (k-1)/2, odd k).
// Tensors are channel-major: x[c * len + t], w[(o * in_ch + i) * k + j].
//
// The top-level functions are the OpenMP kernels used by the model. The
// `reference` namespace keeps plain serial loops that tests and the kernel
// benchmark compare against.

namespace ecgadv::kernels {

struct ConvShape {
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t len = 1;
  std::size_t k = 1;

  std::size_t input_size() const { return in_ch * len; }
  std::size_t output_size() const { return out_ch * len; }
  std::size_t weight_size() const { return out_ch * in_ch * k; }
};

/// y = conv(x, w); y is overwritten.
void conv1d_forward(std::span<const double> x, std::span<const double> w, std::span<double> y,
                    const ConvShape& s);
/// gx = conv^T(gy, w); gx is overwritten.
void conv1d_backward_input(std::span<const double> gy, std::span<const double> w,
                           std::span<double> gx, const ConvShape& s);
/// gw += d<gy, conv(x, w)>/dw; accumulates into gw.
void conv1d_backward_weight(std::span<const double> gy, std::span<const double> x,
                            std::span<double> gw, const ConvShape& s);

namespace reference {

void conv1d_forward(std::span<const double> x, std::span<const double> w, std::span<double> y,
                    const ConvShape& s);
void conv1d_backward_input(std::span<const double> gy, std::span<const double> w,
                           std::span<double> gx, const ConvShape& s);
void conv1d_backward_weight(std::span<const double> gy, std::span<const double> x,
                            std::span<double> gw, const ConvShape& s);

}  // namespace reference

}  // namespace ecgadv::kernels
