#include "nn.hpp"

#include <algorithm>
#include <cmath>

namespace darthkit::nn {

ConvShape conv_shape(int in_channels, int in_height, int in_width, int out_channels,
                     int kernel, int stride, int pad) {
  ConvShape s;
  s.in_channels = in_channels;
  s.in_height = in_height;
  s.in_width = in_width;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  s.out_height = (in_height + 2 * pad - kernel) / stride + 1;
  s.out_width = (in_width + 2 * pad - kernel) / stride + 1;
  return s;
}

void im2col(const Matrix& input, const ConvShape& s, Matrix& cols) {
  const int k = s.kernel;
  const int out_hw = s.out_height * s.out_width;
  cols.setZero(static_cast<Eigen::Index>(s.in_channels) * k * k, out_hw);
  for (int c = 0; c < s.in_channels; ++c) {
    const double* in = input.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < s.out_height; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.in_height) continue;
          for (int ox = 0; ox < s.out_width; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.in_width) continue;
            dst[oy * s.out_width + ox] = in[iy * s.in_width + ix];
          }
        }
      }
    }
  }
}

void col2im(const Matrix& cols, const ConvShape& s, Matrix& d_input) {
  const int k = s.kernel;
  d_input.setZero(s.in_channels, static_cast<Eigen::Index>(s.in_height) * s.in_width);
  for (int c = 0; c < s.in_channels; ++c) {
    double* out = d_input.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < s.out_height; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.in_height) continue;
          for (int ox = 0; ox < s.out_width; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.in_width) continue;
            out[iy * s.in_width + ix] += src[oy * s.out_width + ox];
          }
        }
      }
    }
  }
}

Matrix conv_forward(const Matrix& input, const ConvShape& s, const double* weight,
                    const double* bias, Matrix& cols) {
  const Eigen::Index fan_in = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
  Eigen::Map<const Matrix> w(weight, s.out_channels, fan_in);
  Eigen::Map<const Vector> b(bias, s.out_channels);
  if (s.kernel == 1 && s.stride == 1 && s.pad == 0) {
    cols = input;
  } else {
    im2col(input, s, cols);
  }
  Matrix out = w * cols;
  out.colwise() += b;
  return out;
}

void conv_backward(const Matrix& d_out, const Matrix& cols, const ConvShape& s,
                   const double* weight, double* d_weight, double* d_bias,
                   Matrix* d_input) {
  const Eigen::Index fan_in = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
  Eigen::Map<const Matrix> w(weight, s.out_channels, fan_in);
  Eigen::Map<Matrix> dw(d_weight, s.out_channels, fan_in);
  Eigen::Map<Vector> db(d_bias, s.out_channels);
  dw.noalias() += d_out * cols.transpose();
  db += d_out.rowwise().sum();
  if (d_input) {
    Matrix d_cols = w.transpose() * d_out;
    if (s.kernel == 1 && s.stride == 1 && s.pad == 0) {
      *d_input = std::move(d_cols);
    } else {
      col2im(d_cols, s, *d_input);
    }
  }
}

void relu_inplace(Matrix& m) noexcept { m = m.cwiseMax(0.0); }

void relu_backward(const Matrix& activation, Matrix& d) noexcept {
  d = (activation.array() > 0.0).select(d, 0.0);
}

RoiSamplingPlan plan_roi_sampling(const BoundingBox& roi, int fw, int fh, int stride, int pool) {
  RoiSamplingPlan plan;
  plan.bins = pool * pool;
  plan.index.assign(static_cast<std::size_t>(plan.bins) * RoiSamplingPlan::kEntriesPerBin, 0);
  plan.weight.assign(plan.index.size(), 0.0);
  // Continuous feature coordinates with half-pixel alignment.
  const double inv = 1.0 / stride;
  const double x0 = roi.x1 * inv - 0.5;
  const double y0 = roi.y1 * inv - 0.5;
  const double bin_w = std::max(roi.width() * inv, 0.0) / pool;
  const double bin_h = std::max(roi.height() * inv, 0.0) / pool;
  for (int by = 0; by < pool; ++by) {
    for (int bx = 0; bx < pool; ++bx) {
      const int bin = by * pool + bx;
      int e = bin * RoiSamplingPlan::kEntriesPerBin;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          double y = y0 + (by + (sy + 0.5) * 0.5) * bin_h;
          double x = x0 + (bx + (sx + 0.5) * 0.5) * bin_w;
          if (y < -1.0 || y > fh || x < -1.0 || x > fw) {
            e += 4;
            continue;
          }
          y = std::max(y, 0.0);
          x = std::max(x, 0.0);
          int y_lo = static_cast<int>(std::floor(y));
          int x_lo = static_cast<int>(std::floor(x));
          int y_hi, x_hi;
          if (y_lo >= fh - 1) {
            y_lo = y_hi = fh - 1;
            y = y_lo;
          } else {
            y_hi = y_lo + 1;
          }
          if (x_lo >= fw - 1) {
            x_lo = x_hi = fw - 1;
            x = x_lo;
          } else {
            x_hi = x_lo + 1;
          }
          const double ly = y - y_lo, lx = x - x_lo;
          const double hy = 1.0 - ly, hx = 1.0 - lx;
          const double q = 1.0 / RoiSamplingPlan::kSamplesPerBin;
          const int idx[4] = {y_lo * fw + x_lo, y_lo * fw + x_hi, y_hi * fw + x_lo, y_hi * fw + x_hi};
          const double wts[4] = {hy * hx * q, hy * lx * q, ly * hx * q, ly * lx * q};
          for (int c = 0; c < 4; ++c, ++e) {
            plan.index[e] = idx[c];
            plan.weight[e] = wts[c];
          }
        }
      }
    }
  }
  return plan;
}

void roi_pool_forward(const Matrix& feat, const RoiSamplingPlan& plan, double* pooled_row) {
  const int channels = static_cast<int>(feat.rows());
  for (int c = 0; c < channels; ++c) {
    const double* f = feat.row(c).data();
    for (int b = 0; b < plan.bins; ++b) {
      double acc = 0.0;
      const int base = b * RoiSamplingPlan::kEntriesPerBin;
      for (int e = 0; e < RoiSamplingPlan::kEntriesPerBin; ++e) {
        acc += plan.weight[base + e] * f[plan.index[base + e]];
      }
      pooled_row[c * plan.bins + b] = acc;
    }
  }
}

void roi_pool_backward(const double* d_pooled_row, const RoiSamplingPlan& plan, Matrix& d_feat) {
  const int channels = static_cast<int>(d_feat.rows());
  for (int c = 0; c < channels; ++c) {
    double* df = d_feat.row(c).data();
    for (int b = 0; b < plan.bins; ++b) {
      const double g = d_pooled_row[c * plan.bins + b];
      if (g == 0.0) continue;
      const int base = b * RoiSamplingPlan::kEntriesPerBin;
      for (int e = 0; e < RoiSamplingPlan::kEntriesPerBin; ++e) {
        df[plan.index[base + e]] += g * plan.weight[base + e];
      }
    }
  }
}

}  // namespace darthkit::nn
