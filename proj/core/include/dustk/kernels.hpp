#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace dustk {

using Token = std::int32_t;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using ConstMatMap = Eigen::Map<const Mat>;

// Dense building blocks of the decoder. Activations are [rows, width]
// matrices where rows = batch * seq_len; row r sits at position r % seq_len
// of sequence r / seq_len. Each forward has a matching backward that maps an
// output gradient to input gradients.
namespace kernels {

// y = x * w / sqrt(mean(x^2) + eps), per row. inv_rms receives the per-row
// scale for the backward pass.
void rmsnorm_forward(const Mat& x, const Eigen::Ref<const Eigen::RowVectorXd>& weight,
                     double eps, Mat& y, Vec& inv_rms);
void rmsnorm_backward(const Mat& x, const Eigen::Ref<const Eigen::RowVectorXd>& weight,
                      const Vec& inv_rms, const Mat& dy, Mat& dx,
                      Eigen::RowVectorXd& dweight);

struct RopeShape {
  std::size_t seq_len = 0;
  std::size_t n_heads = 0;
  std::size_t head_dim = 0;
  double theta = 10000.0;
};

// Rotary embedding in the rotate-half layout: within each head, element i
// pairs with i + head_dim/2 and rotates by pos * theta^(-2i/head_dim).
// inverse = true applies the transpose rotation (the backward pass).
void rope_apply(Mat& x, const RopeShape& shape, bool inverse = false);

struct AttentionShape {
  std::size_t seq_len = 0;
  std::size_t n_heads = 0;
  std::size_t n_kv_heads = 0;
  std::size_t head_dim = 0;
};

// Causal softmax attention with grouped KV heads. probs receives one
// [seq_len, seq_len] matrix per (sequence, head), sequence-major.
void attention_forward(const Mat& q, const Mat& k, const Mat& v,
                       const AttentionShape& shape, Mat& out, std::vector<Mat>& probs);
void attention_backward(const Mat& q, const Mat& k, const Mat& v,
                        const AttentionShape& shape, const std::vector<Mat>& probs,
                        const Mat& dout, Mat& dq, Mat& dk, Mat& dv);

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Row-wise log-softmax.
Mat log_softmax_rows(const Mat& logits);

}  // namespace kernels
}  // namespace dustk
