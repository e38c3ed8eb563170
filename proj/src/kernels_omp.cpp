#include <algorithm>
#include <cmath>
#include <vector>

#include "tedi/kernels.hpp"

namespace tedi::nn::kernels::omp {

namespace {

constexpr int kRowBlock = 4;
constexpr int kColBlock = 256;

// C[rows, n] += alpha * A[rows, k] B[k, n] for up to kRowBlock rows; A and
// B are plain row-major. Each B row is loaded once per row block.
template <class T, int Rows>
void gemm_rows(int n, int k, T alpha, const T* a, const T* b, T* c) {
  for (int jb = 0; jb < n; jb += kColBlock) {
    const int jn = std::min(kColBlock, n - jb);
    for (int p = 0; p < k; ++p) {
      const T* __restrict brow = b + static_cast<long>(p) * n + jb;
      T av[Rows];
      for (int r = 0; r < Rows; ++r) av[r] = alpha * a[static_cast<long>(r) * k + p];
      for (int r = 0; r < Rows; ++r) {
        T* __restrict crow = c + static_cast<long>(r) * n + jb;
        const T s = av[r];
#pragma omp simd
        for (int j = 0; j < jn; ++j) crow[j] += s * brow[j];
      }
    }
  }
}

template <class T>
void transpose(int rows, int cols, const T* src, T* dst) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) dst[static_cast<long>(j) * rows + i] = src[static_cast<long>(i) * cols + j];
  }
}

}  // namespace

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta, T* c) {
  // Materialize op(A) as M x K and op(B) as K x N so the inner loop is a
  // contiguous axpy over N.
  std::vector<T> a_buf, b_buf;
  if (trans_a) {
    a_buf.resize(static_cast<std::size_t>(m) * k);
    transpose(k, m, a, a_buf.data());
    a = a_buf.data();
  }
  if (trans_b) {
    b_buf.resize(static_cast<std::size_t>(k) * n);
    transpose(n, k, b, b_buf.data());
    b = b_buf.data();
  }
  const int blocks = (m + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int i0 = blk * kRowBlock;
    const int rows = std::min(kRowBlock, m - i0);
    T* crow = c + static_cast<long>(i0) * n;
    if (beta == T(0)) {
      std::fill(crow, crow + static_cast<long>(rows) * n, T(0));
    } else if (beta != T(1)) {
      for (long i = 0; i < static_cast<long>(rows) * n; ++i) crow[i] *= beta;
    }
    const T* arow = a + static_cast<long>(i0) * k;
    switch (rows) {
      case 4: gemm_rows<T, 4>(n, k, alpha, arow, b, crow); break;
      case 3: gemm_rows<T, 3>(n, k, alpha, arow, b, crow); break;
      case 2: gemm_rows<T, 2>(n, k, alpha, arow, b, crow); break;
      default: gemm_rows<T, 1>(n, k, alpha, arow, b, crow); break;
    }
  }
}

template <class T>
void im2col(const ConvShape& s, const T* x, T* col) {
  const int lout = s.out_length();
  const long cols = static_cast<long>(s.batch) * lout;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < s.in_channels; ++ci) {
    for (int kk = 0; kk < s.kernel; ++kk) {
      T* row = col + (static_cast<long>(ci) * s.kernel + kk) * cols;
      const int shift = kk - s.pad;
      for (int b = 0; b < s.batch; ++b) {
        const T* xs = x + (static_cast<long>(ci) * s.batch + b) * s.in_length;
        T* dst = row + static_cast<long>(b) * lout;
        if (s.stride == 1) {
          const int t_lo = std::max(0, -shift);
          const int t_hi = std::min(lout, s.in_length - shift);
          for (int t = 0; t < t_lo; ++t) dst[t] = T(0);
          for (int t = t_lo; t < t_hi; ++t) dst[t] = xs[t + shift];
          for (int t = std::max(t_hi, t_lo); t < lout; ++t) dst[t] = T(0);
        } else {
          for (int t = 0; t < lout; ++t) {
            const int src = t * s.stride + shift;
            dst[t] = (src >= 0 && src < s.in_length) ? xs[src] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const ConvShape& s, const T* col, T* dx) {
  const int lout = s.out_length();
  const long cols = static_cast<long>(s.batch) * lout;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < s.in_channels; ++ci) {
    for (int kk = 0; kk < s.kernel; ++kk) {
      const T* row = col + (static_cast<long>(ci) * s.kernel + kk) * cols;
      const int shift = kk - s.pad;
      for (int b = 0; b < s.batch; ++b) {
        T* xs = dx + (static_cast<long>(ci) * s.batch + b) * s.in_length;
        const T* src = row + static_cast<long>(b) * lout;
        for (int t = 0; t < lout; ++t) {
          const int dst = t * s.stride + shift;
          if (dst >= 0 && dst < s.in_length) xs[dst] += src[t];
        }
      }
    }
  }
}

template <class T>
void group_norm_forward(const NormShape& s, const T* x, const T* gamma, const T* beta, T eps, T* y, T* mean,
                        T* rstd) {
  const int cg = s.channels / s.groups;
  const long plane = static_cast<long>(s.batch) * s.length;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < s.batch; ++b) {
    for (int g = 0; g < s.groups; ++g) {
      T sum = 0;
      for (int c = g * cg; c < (g + 1) * cg; ++c) {
        const T* xs = x + c * plane + static_cast<long>(b) * s.length;
        for (int t = 0; t < s.length; ++t) sum += xs[t];
      }
      const T n = static_cast<T>(cg * s.length);
      const T mu = sum / n;
      T var = 0;
      for (int c = g * cg; c < (g + 1) * cg; ++c) {
        const T* xs = x + c * plane + static_cast<long>(b) * s.length;
        for (int t = 0; t < s.length; ++t) var += (xs[t] - mu) * (xs[t] - mu);
      }
      const T r = T(1) / std::sqrt(var / n + eps);
      mean[b * s.groups + g] = mu;
      rstd[b * s.groups + g] = r;
      for (int c = g * cg; c < (g + 1) * cg; ++c) {
        const long base = c * plane + static_cast<long>(b) * s.length;
        const T scale = r * gamma[c];
        const T shift = beta[c] - mu * scale;
        for (int t = 0; t < s.length; ++t) y[base + t] = x[base + t] * scale + shift;
      }
    }
  }
}

template <class T>
void group_norm_backward(const NormShape& s, const T* x, const T* gamma, const T* mean, const T* rstd,
                         const T* dy, T* dx, T* dgamma, T* dbeta) {
  const int cg = s.channels / s.groups;
  const long plane = static_cast<long>(s.batch) * s.length;
  // Groups own disjoint channels, so dgamma/dbeta writes never collide.
#pragma omp parallel for schedule(static)
  for (int g = 0; g < s.groups; ++g) {
    for (int b = 0; b < s.batch; ++b) {
      const T mu = mean[b * s.groups + g];
      const T r = rstd[b * s.groups + g];
      const T n = static_cast<T>(cg * s.length);
      T sum_dxh = 0, sum_dxh_xh = 0;
      for (int c = g * cg; c < (g + 1) * cg; ++c) {
        const long base = c * plane + static_cast<long>(b) * s.length;
        T dg = 0, db = 0;
        for (int t = 0; t < s.length; ++t) {
          const T xh = (x[base + t] - mu) * r;
          dg += dy[base + t] * xh;
          db += dy[base + t];
        }
        dgamma[c] += dg;
        dbeta[c] += db;
        sum_dxh += db * gamma[c];
        sum_dxh_xh += dg * gamma[c];
      }
      const T inv_n = T(1) / n;
      for (int c = g * cg; c < (g + 1) * cg; ++c) {
        const long base = c * plane + static_cast<long>(b) * s.length;
        const T gc = gamma[c];
        for (int t = 0; t < s.length; ++t) {
          const T xh = (x[base + t] - mu) * r;
          dx[base + t] += r * (dy[base + t] * gc - (sum_dxh + xh * sum_dxh_xh) * inv_n);
        }
      }
    }
  }
}

template <class T>
void attention_forward(const AttentionShape& s, const T* q, const T* k, const T* v, T* out, T* probs) {
  const long plane = static_cast<long>(s.batch) * s.length;
  const int len = s.length;
  const T scale = T(1) / std::sqrt(static_cast<T>(s.channels));
#pragma omp parallel for schedule(static)
  for (int b = 0; b < s.batch; ++b) {
    T* p = probs + static_cast<long>(b) * len * len;
    const long off = static_cast<long>(b) * len;
    std::fill(p, p + static_cast<long>(len) * len, T(0));
    for (int c = 0; c < s.channels; ++c) {
      const T* qc = q + c * plane + off;
      const T* kc = k + c * plane + off;
      for (int i = 0; i < len; ++i) {
        const T qi = qc[i] * scale;
        for (int j = 0; j < len; ++j) p[i * len + j] += qi * kc[j];
      }
    }
    for (int i = 0; i < len; ++i) {
      T* row = p + static_cast<long>(i) * len;
      const T mx = *std::max_element(row, row + len);
      T z = 0;
      for (int j = 0; j < len; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      const T inv = T(1) / z;
      for (int j = 0; j < len; ++j) row[j] *= inv;
    }
    for (int c = 0; c < s.channels; ++c) {
      const T* vc = v + c * plane + off;
      T* oc = out + c * plane + off;
      for (int i = 0; i < len; ++i) {
        T acc = 0;
        for (int j = 0; j < len; ++j) acc += p[i * len + j] * vc[j];
        oc[i] = acc;
      }
    }
  }
}

template <class T>
void attention_backward(const AttentionShape& s, const T* q, const T* k, const T* v, const T* probs,
                        const T* dout, T* dq, T* dk, T* dv) {
  const long plane = static_cast<long>(s.batch) * s.length;
  const int len = s.length;
  const T scale = T(1) / std::sqrt(static_cast<T>(s.channels));
#pragma omp parallel
  {
    std::vector<T> dp(static_cast<std::size_t>(len) * len);
#pragma omp for schedule(static)
    for (int b = 0; b < s.batch; ++b) {
      const T* p = probs + static_cast<long>(b) * len * len;
      const long off = static_cast<long>(b) * len;
      std::fill(dp.begin(), dp.end(), T(0));
      for (int c = 0; c < s.channels; ++c) {
        const T* doc = dout + c * plane + off;
        const T* vc = v + c * plane + off;
        T* dvc = dv + c * plane + off;
        for (int i = 0; i < len; ++i) {
          for (int j = 0; j < len; ++j) {
            dp[i * len + j] += doc[i] * vc[j];
            dvc[j] += p[i * len + j] * doc[i];
          }
        }
      }
      // dp -> dS (scaled), in place
      for (int i = 0; i < len; ++i) {
        T dot = 0;
        for (int j = 0; j < len; ++j) dot += dp[i * len + j] * p[i * len + j];
        for (int j = 0; j < len; ++j) dp[i * len + j] = p[i * len + j] * (dp[i * len + j] - dot) * scale;
      }
      for (int c = 0; c < s.channels; ++c) {
        const T* qc = q + c * plane + off;
        const T* kc = k + c * plane + off;
        T* dqc = dq + c * plane + off;
        T* dkc = dk + c * plane + off;
        for (int i = 0; i < len; ++i) {
          T acc = 0;
          for (int j = 0; j < len; ++j) {
            acc += dp[i * len + j] * kc[j];
            dkc[j] += dp[i * len + j] * qc[i];
          }
          dqc[i] += acc;
        }
      }
    }
  }
}

template <class T>
void silu_forward(long n, const T* x, T* y) {
#pragma omp parallel for simd schedule(static)
  for (long i = 0; i < n; ++i) y[i] = x[i] / (T(1) + std::exp(-x[i]));
}

template <class T>
void silu_backward(long n, const T* x, const T* dy, T* dx) {
#pragma omp parallel for simd schedule(static)
  for (long i = 0; i < n; ++i) {
    const T sg = T(1) / (T(1) + std::exp(-x[i]));
    dx[i] += dy[i] * sg * (T(1) + x[i] * (T(1) - sg));
  }
}

#define TEDI_INSTANTIATE(T)                                                                              \
  template void gemm<T>(bool, bool, int, int, int, T, const T*, const T*, T, T*);                      \
  template void im2col<T>(const ConvShape&, const T*, T*);                                              \
  template void col2im<T>(const ConvShape&, const T*, T*);                                              \
  template void group_norm_forward<T>(const NormShape&, const T*, const T*, const T*, T, T*, T*, T*);   \
  template void group_norm_backward<T>(const NormShape&, const T*, const T*, const T*, const T*,        \
                                       const T*, T*, T*, T*);                                           \
  template void attention_forward<T>(const AttentionShape&, const T*, const T*, const T*, T*, T*);      \
  template void attention_backward<T>(const AttentionShape&, const T*, const T*, const T*, const T*,    \
                                      const T*, T*, T*, T*);                                            \
  template void silu_forward<T>(long, const T*, T*);                                                    \
  template void silu_backward<T>(long, const T*, const T*, T*);

TEDI_INSTANTIATE(float)
TEDI_INSTANTIATE(double)

}  // namespace tedi::nn::kernels::omp
