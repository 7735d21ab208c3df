#include "dustk/kernels.hpp"

#include <cmath>
#include <limits>

namespace dustk::kernels {

void rmsnorm_forward(const Mat& x, const Eigen::Ref<const Eigen::RowVectorXd>& weight,
                     double eps, Mat& y, Vec& inv_rms) {
  const auto d = static_cast<double>(x.cols());
  inv_rms = ((x.array().square().rowwise().sum() / d) + eps).rsqrt();
  y = (x.array().colwise() * inv_rms.array()).rowwise() * weight.array();
}

void rmsnorm_backward(const Mat& x, const Eigen::Ref<const Eigen::RowVectorXd>& weight,
                      const Vec& inv_rms, const Mat& dy, Mat& dx,
                      Eigen::RowVectorXd& dweight) {
  const auto d = static_cast<double>(x.cols());
  const Mat normed = x.array().colwise() * inv_rms.array();
  dweight = (dy.array() * normed.array()).colwise().sum();
  const Mat g = dy.array().rowwise() * weight.array();
  // d/dx [x r] with r = (mean x^2 + eps)^-1/2: r g - x r^3 <g, x> / d
  const Vec gx = (g.array() * x.array()).rowwise().sum();
  const Vec coef = inv_rms.array().cube() * gx.array() / d;
  dx = (g.array().colwise() * inv_rms.array()) - (x.array().colwise() * coef.array());
}

void rope_apply(Mat& x, const RopeShape& shape, bool inverse) {
  const std::size_t half = shape.head_dim / 2;
  std::vector<double> inv_freq(half);
  for (std::size_t i = 0; i < half; ++i) {
    inv_freq[i] = std::pow(shape.theta, -2.0 * static_cast<double>(i) /
                                            static_cast<double>(shape.head_dim));
  }
  const double sign = inverse ? -1.0 : 1.0;
  std::vector<double> cos_t(half);
  std::vector<double> sin_t(half);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto pos = static_cast<double>(static_cast<std::size_t>(r) % shape.seq_len);
    for (std::size_t i = 0; i < half; ++i) {
      const double angle = pos * inv_freq[i];
      cos_t[i] = std::cos(angle);
      sin_t[i] = sign * std::sin(angle);
    }
    double* row = x.row(r).data();
    for (std::size_t h = 0; h < shape.n_heads; ++h) {
      double* head = row + h * shape.head_dim;
      for (std::size_t i = 0; i < half; ++i) {
        const double a = head[i];
        const double b = head[i + half];
        head[i] = a * cos_t[i] - b * sin_t[i];
        head[i + half] = b * cos_t[i] + a * sin_t[i];
      }
    }
  }
}

void attention_forward(const Mat& q, const Mat& k, const Mat& v,
                       const AttentionShape& s, Mat& out, std::vector<Mat>& probs) {
  const auto T = static_cast<Eigen::Index>(s.seq_len);
  const auto hd = static_cast<Eigen::Index>(s.head_dim);
  const Eigen::Index n_seq = q.rows() / T;
  const std::size_t group = s.n_heads / s.n_kv_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.head_dim));
  out.resize(q.rows(), q.cols());
  probs.assign(static_cast<std::size_t>(n_seq) * s.n_heads, Mat());
  for (Eigen::Index b = 0; b < n_seq; ++b) {
    for (std::size_t h = 0; h < s.n_heads; ++h) {
      const auto kvh = static_cast<Eigen::Index>(h / group);
      const auto qh = static_cast<Eigen::Index>(h);
      Mat& p = probs[static_cast<std::size_t>(b) * s.n_heads + h];
      p.noalias() = q.block(b * T, qh * hd, T, hd) *
                    k.block(b * T, kvh * hd, T, hd).transpose();
      p *= scale;
      for (Eigen::Index i = 0; i < T; ++i) {
        auto row = p.row(i);
        const double mx = row.head(i + 1).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          row(j) = std::exp(row(j) - mx);
          sum += row(j);
        }
        row.head(i + 1) /= sum;
        row.tail(T - i - 1).setZero();
      }
      out.block(b * T, qh * hd, T, hd).noalias() = p * v.block(b * T, kvh * hd, T, hd);
    }
  }
}

void attention_backward(const Mat& q, const Mat& k, const Mat& v,
                        const AttentionShape& s, const std::vector<Mat>& probs,
                        const Mat& dout, Mat& dq, Mat& dk, Mat& dv) {
  const auto T = static_cast<Eigen::Index>(s.seq_len);
  const auto hd = static_cast<Eigen::Index>(s.head_dim);
  const Eigen::Index n_seq = q.rows() / T;
  const std::size_t group = s.n_heads / s.n_kv_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.head_dim));
  dq = Mat::Zero(q.rows(), q.cols());
  dk = Mat::Zero(k.rows(), k.cols());
  dv = Mat::Zero(v.rows(), v.cols());
  Mat dp;
  for (Eigen::Index b = 0; b < n_seq; ++b) {
    for (std::size_t h = 0; h < s.n_heads; ++h) {
      const auto kvh = static_cast<Eigen::Index>(h / group);
      const auto qh = static_cast<Eigen::Index>(h);
      const Mat& p = probs[static_cast<std::size_t>(b) * s.n_heads + h];
      const auto d_o = dout.block(b * T, qh * hd, T, hd);
      dv.block(b * T, kvh * hd, T, hd).noalias() += p.transpose() * d_o;
      dp.noalias() = d_o * v.block(b * T, kvh * hd, T, hd).transpose();
      // softmax backward: ds = p * (dp - <dp, p>_row); masked entries have p = 0.
      const Vec inner = (dp.array() * p.array()).rowwise().sum();
      dp = p.array() * (dp.array().colwise() - inner.array());
      dp *= scale;
      dq.block(b * T, qh * hd, T, hd).noalias() += dp * k.block(b * T, kvh * hd, T, hd);
      dk.block(b * T, kvh * hd, T, hd).noalias() +=
          dp.transpose() * q.block(b * T, qh * hd, T, hd);
    }
  }
}

Mat log_softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

}  // namespace dustk::kernels
