#pragma once

// Dense building blocks for the toy network. Feature maps are channel-major
// (C x H x W) double arrays; every backward routine accumulates (+=) into its
// gradient outputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace objclear::toynet::layers {

inline int conv_out(int n, int stride) { return (n + 2 - 3) / stride + 1; }

/// 3x3 convolution, zero padding 1.
inline void conv3x3_forward(const double* in, int cin, int h, int w, const double* weight,
                            const double* bias, int cout, int stride, double* out) {
    const int oh = conv_out(h, stride), ow = conv_out(w, stride);
    for (int co = 0; co < cout; ++co) {
        double* o = out + static_cast<std::ptrdiff_t>(co) * oh * ow;
        std::fill(o, o + oh * ow, bias[co]);
        for (int ci = 0; ci < cin; ++ci) {
            const double* src = in + static_cast<std::ptrdiff_t>(ci) * h * w;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double wv = weight[((co * cin + ci) * 3 + ky) * 3 + kx];
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        const double* srow = src + iy * w;
                        double* orow = o + oy * ow;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kx - 1;
                            if (ix < 0 || ix >= w) continue;
                            orow[ox] += wv * srow[ix];
                        }
                    }
                }
        }
    }
}

/// din may be null when the input gradient is not needed.
inline void conv3x3_backward(const double* in, int cin, int h, int w, const double* weight, int cout,
                             int stride, const double* dout, double* dweight, double* dbias,
                             double* din) {
    const int oh = conv_out(h, stride), ow = conv_out(w, stride);
    for (int co = 0; co < cout; ++co) {
        const double* g = dout + static_cast<std::ptrdiff_t>(co) * oh * ow;
        double bsum = 0.0;
        for (int i = 0; i < oh * ow; ++i) bsum += g[i];
        dbias[co] += bsum;
        for (int ci = 0; ci < cin; ++ci) {
            const double* src = in + static_cast<std::ptrdiff_t>(ci) * h * w;
            double* dsrc = din ? din + static_cast<std::ptrdiff_t>(ci) * h * w : nullptr;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const std::size_t widx = static_cast<std::size_t>(((co * cin + ci) * 3 + ky) * 3 + kx);
                    const double wv = weight[widx];
                    double wsum = 0.0;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        const double* srow = src + iy * w;
                        const double* grow = g + oy * ow;
                        double* drow = dsrc ? dsrc + iy * w : nullptr;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kx - 1;
                            if (ix < 0 || ix >= w) continue;
                            wsum += grow[ox] * srow[ix];
                            if (drow) drow[ix] += wv * grow[ox];
                        }
                    }
                    dweight[widx] += wsum;
                }
        }
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void silu_forward(const std::vector<double>& pre, std::vector<double>& act) {
    act.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) act[i] = pre[i] * sigmoid(pre[i]);
}

/// dpre = dact * silu'(pre)
inline void silu_backward(const std::vector<double>& pre, const std::vector<double>& dact,
                          std::vector<double>& dpre) {
    dpre.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) {
        const double s = sigmoid(pre[i]);
        dpre[i] = dact[i] * (s + pre[i] * s * (1.0 - s));
    }
}

/// Nearest-neighbour 2x upsampling.
inline void upsample2_forward(const double* in, int c, int h, int w, double* out) {
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x)
                out[(ch * 2 * h + y) * 2 * w + x] = in[(ch * h + y / 2) * w + x / 2];
}

inline void upsample2_backward(const double* dout, int c, int h, int w, double* din) {
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x)
                din[(ch * h + y / 2) * w + x / 2] += dout[(ch * 2 * h + y) * 2 * w + x];
}

/// out[r, j] = sum_i in[r, i] * weight[i, j]  (rows x n_in) * (n_in x n_out)
inline void matmul(const double* in, int rows, int n_in, const double* weight, int n_out, double* out) {
    for (int r = 0; r < rows; ++r) {
        double* o = out + static_cast<std::ptrdiff_t>(r) * n_out;
        std::fill(o, o + n_out, 0.0);
        for (int i = 0; i < n_in; ++i) {
            const double a = in[r * n_in + i];
            const double* wrow = weight + static_cast<std::ptrdiff_t>(i) * n_out;
            for (int j = 0; j < n_out; ++j) o[j] += a * wrow[j];
        }
    }
}

/// Accumulates dweight += in^T dout and din += dout weight^T (din may be null).
inline void matmul_backward(const double* in, int rows, int n_in, const double* weight, int n_out,
                            const double* dout, double* dweight, double* din) {
    for (int r = 0; r < rows; ++r) {
        const double* g = dout + static_cast<std::ptrdiff_t>(r) * n_out;
        for (int i = 0; i < n_in; ++i) {
            const double a = in[r * n_in + i];
            const double* wrow = weight + static_cast<std::ptrdiff_t>(i) * n_out;
            double* dwrow = dweight + static_cast<std::ptrdiff_t>(i) * n_out;
            double acc = 0.0;
            for (int j = 0; j < n_out; ++j) {
                dwrow[j] += a * g[j];
                acc += g[j] * wrow[j];
            }
            if (din) din[r * n_in + i] += acc;
        }
    }
}

}  // namespace objclear::toynet::layers
