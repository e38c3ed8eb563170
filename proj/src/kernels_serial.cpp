#include <algorithm>
#include <cmath>
#include <vector>

#include "tedi/kernels.hpp"

namespace tedi::nn::kernels::serial {

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta, T* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = alpha * acc + (beta == T(0) ? T(0) : beta * c[i * n + j]);
    }
  }
}

template <class T>
void im2col(const ConvShape& s, const T* x, T* col) {
  const int lout = s.out_length();
  const long cols = static_cast<long>(s.batch) * lout;
  for (int ci = 0; ci < s.in_channels; ++ci) {
    for (int kk = 0; kk < s.kernel; ++kk) {
      T* row = col + (static_cast<long>(ci) * s.kernel + kk) * cols;
      for (int b = 0; b < s.batch; ++b) {
        const T* xs = x + (static_cast<long>(ci) * s.batch + b) * s.in_length;
        for (int t = 0; t < lout; ++t) {
          const int src = t * s.stride + kk - s.pad;
          row[b * lout + t] = (src >= 0 && src < s.in_length) ? xs[src] : T(0);
        }
      }
    }
  }
}

template <class T>
void col2im(const ConvShape& s, const T* col, T* dx) {
  const int lout = s.out_length();
  const long cols = static_cast<long>(s.batch) * lout;
  for (int ci = 0; ci < s.in_channels; ++ci) {
    for (int kk = 0; kk < s.kernel; ++kk) {
      const T* row = col + (static_cast<long>(ci) * s.kernel + kk) * cols;
      for (int b = 0; b < s.batch; ++b) {
        T* xs = dx + (static_cast<long>(ci) * s.batch + b) * s.in_length;
        for (int t = 0; t < lout; ++t) {
          const int src = t * s.stride + kk - s.pad;
          if (src >= 0 && src < s.in_length) xs[src] += row[b * lout + t];
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
  for (int b = 0; b < s.batch; ++b) {
    for (int g = 0; g < s.groups; ++g) {
      T sum = 0;
      for (int c = g * cg; c < (g + 1) * cg; ++c) {
        for (int t = 0; t < s.length; ++t) sum += x[c * plane + b * s.length + t];
      }
      const T n = static_cast<T>(cg * s.length);
      const T mu = sum / n;
      T var = 0;
      for (int c = g * cg; c < (g + 1) * cg; ++c) {
        for (int t = 0; t < s.length; ++t) {
          const T d = x[c * plane + b * s.length + t] - mu;
          var += d * d;
        }
      }
      const T r = T(1) / std::sqrt(var / n + eps);
      mean[b * s.groups + g] = mu;
      rstd[b * s.groups + g] = r;
      for (int c = g * cg; c < (g + 1) * cg; ++c) {
        for (int t = 0; t < s.length; ++t) {
          const long i = c * plane + b * s.length + t;
          y[i] = (x[i] - mu) * r * gamma[c] + beta[c];
        }
      }
    }
  }
}

template <class T>
void group_norm_backward(const NormShape& s, const T* x, const T* gamma, const T* mean, const T* rstd,
                         const T* dy, T* dx, T* dgamma, T* dbeta) {
  const int cg = s.channels / s.groups;
  const long plane = static_cast<long>(s.batch) * s.length;
  for (int b = 0; b < s.batch; ++b) {
    for (int g = 0; g < s.groups; ++g) {
      const T mu = mean[b * s.groups + g];
      const T r = rstd[b * s.groups + g];
      const T n = static_cast<T>(cg * s.length);
      T sum_dxh = 0, sum_dxh_xh = 0;
      for (int c = g * cg; c < (g + 1) * cg; ++c) {
        for (int t = 0; t < s.length; ++t) {
          const long i = c * plane + b * s.length + t;
          const T xh = (x[i] - mu) * r;
          const T dxh = dy[i] * gamma[c];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh;
          dgamma[c] += dy[i] * xh;
          dbeta[c] += dy[i];
        }
      }
      for (int c = g * cg; c < (g + 1) * cg; ++c) {
        for (int t = 0; t < s.length; ++t) {
          const long i = c * plane + b * s.length + t;
          const T xh = (x[i] - mu) * r;
          const T dxh = dy[i] * gamma[c];
          dx[i] += r / n * (n * dxh - sum_dxh - xh * sum_dxh_xh);
        }
      }
    }
  }
}

template <class T>
void attention_forward(const AttentionShape& s, const T* q, const T* k, const T* v, T* out, T* probs) {
  const long plane = static_cast<long>(s.batch) * s.length;
  const T scale = T(1) / std::sqrt(static_cast<T>(s.channels));
  for (int b = 0; b < s.batch; ++b) {
    T* p = probs + static_cast<long>(b) * s.length * s.length;
    for (int i = 0; i < s.length; ++i) {
      T mx = -INFINITY;
      for (int j = 0; j < s.length; ++j) {
        T acc = 0;
        for (int c = 0; c < s.channels; ++c) {
          acc += q[c * plane + b * s.length + i] * k[c * plane + b * s.length + j];
        }
        p[i * s.length + j] = acc * scale;
        mx = std::max(mx, acc * scale);
      }
      T z = 0;
      for (int j = 0; j < s.length; ++j) {
        p[i * s.length + j] = std::exp(p[i * s.length + j] - mx);
        z += p[i * s.length + j];
      }
      for (int j = 0; j < s.length; ++j) p[i * s.length + j] /= z;
    }
    for (int c = 0; c < s.channels; ++c) {
      for (int i = 0; i < s.length; ++i) {
        T acc = 0;
        for (int j = 0; j < s.length; ++j) acc += p[i * s.length + j] * v[c * plane + b * s.length + j];
        out[c * plane + b * s.length + i] = acc;
      }
    }
  }
}

template <class T>
void attention_backward(const AttentionShape& s, const T* q, const T* k, const T* v, const T* probs,
                        const T* dout, T* dq, T* dk, T* dv) {
  const long plane = static_cast<long>(s.batch) * s.length;
  const T scale = T(1) / std::sqrt(static_cast<T>(s.channels));
  const int len = s.length;
  std::vector<T> dp(static_cast<std::size_t>(len) * len);
  for (int b = 0; b < s.batch; ++b) {
    const T* p = probs + static_cast<long>(b) * len * len;
    const long off = static_cast<long>(b) * len;
    // dv[c, j] = sum_i p[i, j] dout[c, i];  dp[i, j] = sum_c dout[c, i] v[c, j]
    for (int i = 0; i < len; ++i) {
      for (int j = 0; j < len; ++j) {
        T acc = 0;
        for (int c = 0; c < s.channels; ++c) {
          acc += dout[c * plane + off + i] * v[c * plane + off + j];
          dv[c * plane + off + j] += p[i * len + j] * dout[c * plane + off + i];
        }
        dp[i * len + j] = acc;
      }
    }
    // softmax backward, then through the scaled dot product
    for (int i = 0; i < len; ++i) {
      T dot = 0;
      for (int j = 0; j < len; ++j) dot += dp[i * len + j] * p[i * len + j];
      for (int j = 0; j < len; ++j) {
        const T ds = p[i * len + j] * (dp[i * len + j] - dot) * scale;
        for (int c = 0; c < s.channels; ++c) {
          dq[c * plane + off + i] += ds * k[c * plane + off + j];
          dk[c * plane + off + j] += ds * q[c * plane + off + i];
        }
      }
    }
  }
}

template <class T>
void silu_forward(long n, const T* x, T* y) {
  for (long i = 0; i < n; ++i) y[i] = x[i] / (T(1) + std::exp(-x[i]));
}

template <class T>
void silu_backward(long n, const T* x, const T* dy, T* dx) {
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

}  // namespace tedi::nn::kernels::serial
