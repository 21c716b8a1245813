#pragma once

// Dense building blocks for the detector. Feature maps are stored as
// row-major [channels, height * width] matrices.

#include <vector>

#include "darthkit/geometry.hpp"
#include "darthkit/tensor.hpp"

namespace darthkit::nn {

struct ConvShape {
  int in_channels = 0;
  int in_height = 0;
  int in_width = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int out_height = 0;
  int out_width = 0;
};

ConvShape conv_shape(int in_channels, int in_height, int in_width, int out_channels,
                     int kernel, int stride, int pad);

void im2col(const Matrix& input, const ConvShape& s, Matrix& cols);
void col2im(const Matrix& cols, const ConvShape& s, Matrix& d_input);

/// out = weight * cols + bias, weight: [out_ch, in_ch*k*k].
Matrix conv_forward(const Matrix& input, const ConvShape& s, const double* weight,
                    const double* bias, Matrix& cols);

/// Accumulates weight/bias gradients; returns d_input when `need_input`.
void conv_backward(const Matrix& d_out, const Matrix& cols, const ConvShape& s,
                   const double* weight, double* d_weight, double* d_bias,
                   Matrix* d_input);

void relu_inplace(Matrix& m) noexcept;
/// d *= (activation > 0)
void relu_backward(const Matrix& activation, Matrix& d) noexcept;

/// Bilinear sampling plan for one RoI: `pool*pool` bins with four samples
/// each, every sample spreading over four feature cells.
struct RoiSamplingPlan {
  static constexpr int kSamplesPerBin = 4;
  static constexpr int kEntriesPerBin = kSamplesPerBin * 4;
  int bins = 0;
  std::vector<int> index;      // bins * kEntriesPerBin
  std::vector<double> weight;  // same layout, already divided by kSamplesPerBin
};

RoiSamplingPlan plan_roi_sampling(const BoundingBox& roi, int feat_width, int feat_height,
                                  int stride, int pool);

/// pooled row layout: channel-major, bins inner (c * bins + b).
void roi_pool_forward(const Matrix& feat, const RoiSamplingPlan& plan, double* pooled_row);
void roi_pool_backward(const double* d_pooled_row, const RoiSamplingPlan& plan, Matrix& d_feat);

}  // namespace darthkit::nn
