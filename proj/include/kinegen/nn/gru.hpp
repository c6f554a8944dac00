#pragma once

#include <string>
#include <vector>

#include "kinegen/nn/core.hpp"

namespace kinegen::nn {

// Gate equations (reset gate inside the candidate's recurrent term):
//   z = sigmoid(Wz x + Uz h_prev + bz)
//   r = sigmoid(Wr x + Ur h_prev + br)
//   hc = tanh(Wh x + Uh (r . h_prev) + bh)
//   h = (1 - z) . h_prev + z . hc

struct GruStackConfig {
  int layers = 1;
  int hidden = 1;
  int input_dim = 1;
};

namespace detail {
inline std::string gru_pname(int layer, const char* tag) {
  return "l" + std::to_string(layer) + "." + tag;
}
}  // namespace detail

// Multi-layer GRU over a batch of equal-length sequences.
//
// Sequences are packed time-major: a (dim x T*B) matrix whose columns
// [t*B, (t+1)*B) hold timestep t of every sequence. Input projections and
// weight gradients are computed as single GEMMs over all timesteps; only
// the recurrent products run step by step.
class GruStack {
 public:
  explicit GruStack(GruStackConfig cfg) : cfg_(cfg) {
    if (cfg.layers < 1 || cfg.hidden < 1 || cfg.input_dim < 1) {
      throw validation_error("gru stack dimensions must be >= 1");
    }
  }

  const GruStackConfig& config() const { return cfg_; }

  void create_params(ParameterStore& store, Rng& rng) const {
    for (int l = 0; l < cfg_.layers; ++l) {
      const int in = l == 0 ? cfg_.input_dim : cfg_.hidden;
      const int h = cfg_.hidden;
      for (const char* gate : {"Wz", "Wr", "Wh"}) {
        Mat& w = store.create(detail::gru_pname(l, gate), h, in);
        init_uniform(w, rng, in);
      }
      for (const char* gate : {"Uz", "Ur", "Uh"}) {
        Mat& u = store.create(detail::gru_pname(l, gate), h, h);
        init_uniform(u, rng, h);
      }
      for (const char* gate : {"bz", "br", "bh"}) {
        store.create(detail::gru_pname(l, gate), h, 1);
      }
    }
  }

  struct Cache {
    int T = 0, B = 0;
    Mat input;                    // input_dim x T*B
    std::vector<Mat> h, z, r, hc, rh;  // hidden x T*B per layer
  };

  // X: input_dim x (T*B). Returns the top layer's state sequence.
  Mat forward(const ParameterStore& ps, const Mat& X, int T, int B,
              Cache* cache) const {
    const int h = cfg_.hidden;
    const Eigen::Index tb = static_cast<Eigen::Index>(T) * B;
    if (X.rows() != cfg_.input_dim || X.cols() != tb) {
      throw shape_error("gru forward: input shape mismatch");
    }
    if (cache) {
      cache->T = T;
      cache->B = B;
      cache->input = X;
      cache->h.assign(static_cast<std::size_t>(cfg_.layers), Mat());
      cache->z.assign(static_cast<std::size_t>(cfg_.layers), Mat());
      cache->r.assign(static_cast<std::size_t>(cfg_.layers), Mat());
      cache->hc.assign(static_cast<std::size_t>(cfg_.layers), Mat());
      cache->rh.assign(static_cast<std::size_t>(cfg_.layers), Mat());
    }

    Mat layer_in = X;
    Mat H;
    for (int l = 0; l < cfg_.layers; ++l) {
      const Mat& Wz = ps.at(detail::gru_pname(l, "Wz"));
      const Mat& Wr = ps.at(detail::gru_pname(l, "Wr"));
      const Mat& Wh = ps.at(detail::gru_pname(l, "Wh"));
      const Mat& Uz = ps.at(detail::gru_pname(l, "Uz"));
      const Mat& Ur = ps.at(detail::gru_pname(l, "Ur"));
      const Mat& Uh = ps.at(detail::gru_pname(l, "Uh"));
      const Vec bz = ps.at(detail::gru_pname(l, "bz")).col(0);
      const Vec br = ps.at(detail::gru_pname(l, "br")).col(0);
      const Vec bh = ps.at(detail::gru_pname(l, "bh")).col(0);

      // fused update/reset recurrent weights, one GEMM per step
      Mat Uzr(2 * h, h);
      Uzr.topRows(h) = Uz;
      Uzr.bottomRows(h) = Ur;

      // all input projections and biases in one shot
      Mat Gzr(2 * h, tb);
      Gzr.topRows(h).noalias() = Wz * layer_in;
      Gzr.bottomRows(h).noalias() = Wr * layer_in;
      Gzr.topRows(h).colwise() += bz;
      Gzr.bottomRows(h).colwise() += br;
      Mat Gh(h, tb);
      Gh.noalias() = Wh * layer_in;
      Gh.colwise() += bh;

      H.resize(h, tb);
      Mat Z(h, tb), R(h, tb), HC(h, tb), RH(h, tb);
      Mat A(2 * h, B), ah(h, B);
      for (int t = 0; t < T; ++t) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(t) * B;
        A = Gzr.middleCols(c0, B);
        if (t > 0) A.noalias() += Uzr * H.middleCols(c0 - B, B);
        sigmoid_inplace(A);
        Z.middleCols(c0, B) = A.topRows(h);
        R.middleCols(c0, B) = A.bottomRows(h);
        if (t > 0) {
          RH.middleCols(c0, B).array() =
              A.bottomRows(h).array() * H.middleCols(c0 - B, B).array();
        } else {
          RH.middleCols(c0, B).setZero();
        }
        ah = Gh.middleCols(c0, B);
        if (t > 0) ah.noalias() += Uh * RH.middleCols(c0, B);
        tanh_inplace(ah);
        HC.middleCols(c0, B) = ah;
        if (t > 0) {
          H.middleCols(c0, B).array() =
              H.middleCols(c0 - B, B).array() +
              A.topRows(h).array() *
                  (ah.array() - H.middleCols(c0 - B, B).array());
        } else {
          H.middleCols(c0, B).array() = A.topRows(h).array() * ah.array();
        }
      }

      if (cache) {
        const auto li = static_cast<std::size_t>(l);
        cache->h[li] = H;
        cache->z[li] = std::move(Z);
        cache->r[li] = std::move(R);
        cache->hc[li] = std::move(HC);
        cache->rh[li] = std::move(RH);
      }
      layer_in = H;
    }
    return H;
  }

  // d_top: gradient on the top layer's state sequence (hidden x T*B).
  // Accumulates parameter gradients into *grads when given; returns the
  // gradient on the input sequence when want_input_grad.
  Mat backward(const ParameterStore& ps, const Cache& cache, const Mat& d_top,
               ParameterStore* grads, bool want_input_grad) const {
    const int h = cfg_.hidden;
    const int T = cache.T, B = cache.B;
    const Eigen::Index tb = static_cast<Eigen::Index>(T) * B;
    if (d_top.rows() != h || d_top.cols() != tb) {
      throw shape_error("gru backward: gradient shape mismatch");
    }

    Mat d_upper = d_top;
    Mat d_in;
    for (int l = cfg_.layers - 1; l >= 0; --l) {
      const auto li = static_cast<std::size_t>(l);
      const Mat& Uz = ps.at(detail::gru_pname(l, "Uz"));
      const Mat& Ur = ps.at(detail::gru_pname(l, "Ur"));
      const Mat& Uh = ps.at(detail::gru_pname(l, "Uh"));
      const Mat& H = cache.h[li];
      const Mat& Z = cache.z[li];
      const Mat& R = cache.r[li];
      const Mat& HC = cache.hc[li];

      Mat Uzr_t(h, 2 * h);
      Uzr_t.leftCols(h) = Uz.transpose();
      Uzr_t.rightCols(h) = Ur.transpose();
      const Mat Uh_t = Uh.transpose();

      Mat dAZ(h, tb), dAR(h, tb), dAH(h, tb);
      Mat dh(h, B), dah(h, B), drh(h, B), dazr(2 * h, B);
      dh.setZero();
      for (int t = T - 1; t >= 0; --t) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(t) * B;
        dh += d_upper.middleCols(c0, B);
        const auto z = Z.middleCols(c0, B).array();
        const auto r = R.middleCols(c0, B).array();
        const auto hc = HC.middleCols(c0, B).array();
        if (t > 0) {
          const auto h_prev = H.middleCols(c0 - B, B).array();
          dazr.topRows(h).array() =
              dh.array() * (hc - h_prev) * z * (1.0 - z);
          dah.array() = dh.array() * z * (1.0 - hc.square());
          dAH.middleCols(c0, B) = dah;
          drh.noalias() = Uh_t * dah;
          dazr.bottomRows(h).array() =
              drh.array() * h_prev * r * (1.0 - r);
          // carry into h_prev: direct, candidate, and gate paths
          dh.array() = dh.array() * (1.0 - z) + drh.array() * r;
          dh.noalias() += Uzr_t * dazr;
          dAZ.middleCols(c0, B) = dazr.topRows(h);
          dAR.middleCols(c0, B) = dazr.bottomRows(h);
        } else {
          // h_prev = 0: no reset-gate or recurrent contributions
          dAZ.middleCols(c0, B).array() = dh.array() * hc * z * (1.0 - z);
          dAR.middleCols(c0, B).setZero();
          dAH.middleCols(c0, B).array() =
              dh.array() * z * (1.0 - hc.square());
        }
      }

      const Mat& layer_in = l == 0 ? cache.input : cache.h[li - 1];
      if (grads) {
        // stacked previous states, zero block at t=0
        Mat Hprev(h, tb);
        Hprev.leftCols(B).setZero();
        Hprev.rightCols(tb - B) = H.leftCols(tb - B);
        grads->at(detail::gru_pname(l, "Wz")).noalias() +=
            dAZ * layer_in.transpose();
        grads->at(detail::gru_pname(l, "Wr")).noalias() +=
            dAR * layer_in.transpose();
        grads->at(detail::gru_pname(l, "Wh")).noalias() +=
            dAH * layer_in.transpose();
        grads->at(detail::gru_pname(l, "Uz")).noalias() +=
            dAZ * Hprev.transpose();
        grads->at(detail::gru_pname(l, "Ur")).noalias() +=
            dAR * Hprev.transpose();
        grads->at(detail::gru_pname(l, "Uh")).noalias() +=
            dAH * cache.rh[li].transpose();
        grads->at(detail::gru_pname(l, "bz")).col(0) += dAZ.rowwise().sum();
        grads->at(detail::gru_pname(l, "br")).col(0) += dAR.rowwise().sum();
        grads->at(detail::gru_pname(l, "bh")).col(0) += dAH.rowwise().sum();
      }

      if (l > 0 || want_input_grad) {
        const Mat& Wz = ps.at(detail::gru_pname(l, "Wz"));
        const Mat& Wr = ps.at(detail::gru_pname(l, "Wr"));
        const Mat& Wh = ps.at(detail::gru_pname(l, "Wh"));
        d_in.resize(layer_in.rows(), tb);
        d_in.noalias() = Wz.transpose() * dAZ;
        d_in.noalias() += Wr.transpose() * dAR;
        d_in.noalias() += Wh.transpose() * dAH;
        if (l > 0) d_upper = d_in;
      }
    }
    return want_input_grad ? d_in : Mat();
  }

 private:
  GruStackConfig cfg_;
};

// One GRU step on plain vectors; parameter names as in GruStack layer 0.
inline Vec gru_cell(const Vec& x, const Vec& h_prev,
                    const ParameterStore& params, int layer = 0) {
  const Mat& Wz = params.at(detail::gru_pname(layer, "Wz"));
  const Mat& Wr = params.at(detail::gru_pname(layer, "Wr"));
  const Mat& Wh = params.at(detail::gru_pname(layer, "Wh"));
  const Mat& Uz = params.at(detail::gru_pname(layer, "Uz"));
  const Mat& Ur = params.at(detail::gru_pname(layer, "Ur"));
  const Mat& Uh = params.at(detail::gru_pname(layer, "Uh"));
  if (x.size() != Wz.cols() || h_prev.size() != Uz.cols()) {
    throw shape_error("gru_cell: dimension mismatch");
  }
  Vec az = Wz * x + Uz * h_prev + params.at(detail::gru_pname(layer, "bz")).col(0);
  Vec ar = Wr * x + Ur * h_prev + params.at(detail::gru_pname(layer, "br")).col(0);
  for (Eigen::Index i = 0; i < az.size(); ++i) az(i) = sigmoid(az(i));
  for (Eigen::Index i = 0; i < ar.size(); ++i) ar(i) = sigmoid(ar(i));
  Vec ah = Wh * x + Uh * (ar.array() * h_prev.array()).matrix() +
           params.at(detail::gru_pname(layer, "bh")).col(0);
  const Vec hc = ah.array().tanh();
  return ((1.0 - az.array()) * h_prev.array() + az.array() * hc.array())
      .matrix();
}

}  // namespace kinegen::nn
