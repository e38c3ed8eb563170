#pragma once

// Dense kernels behind the denoiser. Every kernel exists twice:
//   kernels::serial - straightforward loops, the reference for tests
//   kernels::omp    - OpenMP-parallel with a cache-friendlier loop order
// Both are instantiated for float and double. Activations use the
// [channels, batch, length] layout, contiguous in length.

namespace tedi::nn::kernels {

struct ConvShape {
  int in_channels;
  int out_channels;
  int batch;
  int in_length;
  int kernel;
  int stride;
  int pad;
  int out_length() const { return (in_length + 2 * pad - kernel) / stride + 1; }
};

struct NormShape {
  int channels;
  int batch;
  int length;
  int groups;
};

struct AttentionShape {
  int channels;
  int batch;
  int length;
};

namespace serial {

// C = alpha * op(A) op(B) + beta * C, row-major; op(A) is M x K, op(B) is K x N.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta, T* c);

// x [Cin, B, Lin] -> col [Cin*kernel, B*Lout]
template <class T>
void im2col(const ConvShape& s, const T* x, T* col);
// Adds col back into dx.
template <class T>
void col2im(const ConvShape& s, const T* col, T* dx);

// Per (batch, group) normalization; saves mean and rstd, each [B*G].
template <class T>
void group_norm_forward(const NormShape& s, const T* x, const T* gamma, const T* beta, T eps, T* y, T* mean,
                        T* rstd);
// Accumulates dx, dgamma, dbeta.
template <class T>
void group_norm_backward(const NormShape& s, const T* x, const T* gamma, const T* mean, const T* rstd,
                         const T* dy, T* dx, T* dgamma, T* dbeta);

// Single-head softmax(q^T k / sqrt(C)) v over the length axis; saves probs [B, L, L].
template <class T>
void attention_forward(const AttentionShape& s, const T* q, const T* k, const T* v, T* out, T* probs);
// Accumulates dq, dk, dv.
template <class T>
void attention_backward(const AttentionShape& s, const T* q, const T* k, const T* v, const T* probs,
                        const T* dout, T* dq, T* dk, T* dv);

template <class T>
void silu_forward(long n, const T* x, T* y);
template <class T>
void silu_backward(long n, const T* x, const T* dy, T* dx);

}  // namespace serial

namespace omp {

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta, T* c);
template <class T>
void im2col(const ConvShape& s, const T* x, T* col);
template <class T>
void col2im(const ConvShape& s, const T* col, T* dx);
template <class T>
void group_norm_forward(const NormShape& s, const T* x, const T* gamma, const T* beta, T eps, T* y, T* mean,
                        T* rstd);
template <class T>
void group_norm_backward(const NormShape& s, const T* x, const T* gamma, const T* mean, const T* rstd,
                         const T* dy, T* dx, T* dgamma, T* dbeta);
template <class T>
void attention_forward(const AttentionShape& s, const T* q, const T* k, const T* v, T* out, T* probs);
template <class T>
void attention_backward(const AttentionShape& s, const T* q, const T* k, const T* v, const T* probs,
                        const T* dout, T* dq, T* dk, T* dv);
template <class T>
void silu_forward(long n, const T* x, T* y);
template <class T>
void silu_backward(long n, const T* x, const T* dy, T* dx);

}  // namespace omp

}  // namespace tedi::nn::kernels
