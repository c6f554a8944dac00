#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kinegen/nn/core.hpp"

namespace kinegen::nn {

// Standard LSTM gates:
//   i, f, o = sigmoid(W x + U h_prev + b), g = tanh(...)
//   c = f . c_prev + i . g
//   h = o . tanh(c)
// An optional 0/1 mask freezes h and c on padded steps so right-padding
// never updates the recurrent state.

struct LstmConfig {
  int input_dim = 1;
  int hidden = 1;
};

namespace detail {
inline std::string lstm_pname(const std::string& prefix, const char* tag) {
  return prefix + tag;
}
}  // namespace detail

class LstmLayer {
 public:
  LstmLayer(LstmConfig cfg, std::string prefix)
      : cfg_(cfg), prefix_(std::move(prefix)) {
    if (cfg.input_dim < 1 || cfg.hidden < 1) {
      throw validation_error("lstm dimensions must be >= 1");
    }
  }

  const LstmConfig& config() const { return cfg_; }

  void create_params(ParameterStore& store, Rng& rng) const {
    const int h = cfg_.hidden;
    for (const char* gate : {"Wi", "Wf", "Wo", "Wg"}) {
      Mat& w = store.create(detail::lstm_pname(prefix_, gate), h,
                            cfg_.input_dim);
      init_uniform(w, rng, cfg_.input_dim);
    }
    for (const char* gate : {"Ui", "Uf", "Uo", "Ug"}) {
      Mat& u = store.create(detail::lstm_pname(prefix_, gate), h, h);
      init_uniform(u, rng, h);
    }
    for (const char* gate : {"bi", "bf", "bo", "bg"}) {
      store.create(detail::lstm_pname(prefix_, gate), h, 1);
    }
  }

  struct Cache {
    int T = 0, B = 0;
    Mat input;                     // input_dim x T*B
    Mat mask;                      // 1 x T*B (all ones when none given)
    Mat I, F, O, G, TC, C, H;      // hidden x T*B
  };

  // X: input_dim x (T*B); mask: nullptr or 1 x (T*B) of {0,1}.
  Mat forward(const ParameterStore& ps, const Mat& X, int T, int B,
              const Mat* mask, Cache* cache) const {
    const int h = cfg_.hidden;
    const Eigen::Index tb = static_cast<Eigen::Index>(T) * B;
    if (X.rows() != cfg_.input_dim || X.cols() != tb) {
      throw shape_error("lstm forward: input shape mismatch");
    }
    if (mask && (mask->rows() != 1 || mask->cols() != tb)) {
      throw shape_error("lstm forward: mask shape mismatch");
    }

    Mat Uall(4 * h, h);
    Uall.middleRows(0, h) = ps.at(detail::lstm_pname(prefix_, "Ui"));
    Uall.middleRows(h, h) = ps.at(detail::lstm_pname(prefix_, "Uf"));
    Uall.middleRows(2 * h, h) = ps.at(detail::lstm_pname(prefix_, "Uo"));
    Uall.middleRows(3 * h, h) = ps.at(detail::lstm_pname(prefix_, "Ug"));

    Mat Gin(4 * h, tb);
    Gin.middleRows(0, h).noalias() =
        ps.at(detail::lstm_pname(prefix_, "Wi")) * X;
    Gin.middleRows(h, h).noalias() =
        ps.at(detail::lstm_pname(prefix_, "Wf")) * X;
    Gin.middleRows(2 * h, h).noalias() =
        ps.at(detail::lstm_pname(prefix_, "Wo")) * X;
    Gin.middleRows(3 * h, h).noalias() =
        ps.at(detail::lstm_pname(prefix_, "Wg")) * X;
    Gin.middleRows(0, h).colwise() +=
        Vec(ps.at(detail::lstm_pname(prefix_, "bi")).col(0));
    Gin.middleRows(h, h).colwise() +=
        Vec(ps.at(detail::lstm_pname(prefix_, "bf")).col(0));
    Gin.middleRows(2 * h, h).colwise() +=
        Vec(ps.at(detail::lstm_pname(prefix_, "bo")).col(0));
    Gin.middleRows(3 * h, h).colwise() +=
        Vec(ps.at(detail::lstm_pname(prefix_, "bg")).col(0));

    Mat I(h, tb), F(h, tb), O(h, tb), G(h, tb), TC(h, tb), C(h, tb), H(h, tb);
    Mat A(4 * h, B), c_cand(h, B), h_cand(h, B);
    for (int t = 0; t < T; ++t) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(t) * B;
      A = Gin.middleCols(c0, B);
      if (t > 0) A.noalias() += Uall * H.middleCols(c0 - B, B);
      sigmoid_inplace(A.topRows(3 * h));
      tanh_inplace(A.bottomRows(h));
      I.middleCols(c0, B) = A.middleRows(0, h);
      F.middleCols(c0, B) = A.middleRows(h, h);
      O.middleCols(c0, B) = A.middleRows(2 * h, h);
      G.middleCols(c0, B) = A.middleRows(3 * h, h);
      if (t > 0) {
        c_cand.array() = A.middleRows(h, h).array() *
                             C.middleCols(c0 - B, B).array() +
                         A.middleRows(0, h).array() * A.middleRows(3 * h, h).array();
      } else {
        c_cand.array() =
            A.middleRows(0, h).array() * A.middleRows(3 * h, h).array();
      }
      TC.middleCols(c0, B) = c_cand.array().tanh().matrix();
      h_cand.array() =
          A.middleRows(2 * h, h).array() * TC.middleCols(c0, B).array();
      if (mask) {
        const auto m = mask->middleCols(c0, B).row(0).array();
        for (Eigen::Index col = 0; col < B; ++col) {
          if (m(col) != 0.0) {
            C.col(c0 + col) = c_cand.col(col);
            H.col(c0 + col) = h_cand.col(col);
          } else if (t > 0) {
            C.col(c0 + col) = C.col(c0 - B + col);
            H.col(c0 + col) = H.col(c0 - B + col);
          } else {
            C.col(c0 + col).setZero();
            H.col(c0 + col).setZero();
          }
        }
      } else {
        C.middleCols(c0, B) = c_cand;
        H.middleCols(c0, B) = h_cand;
      }
    }

    if (cache) {
      cache->T = T;
      cache->B = B;
      cache->input = X;
      cache->mask = mask ? *mask : Mat::Ones(1, tb);
      cache->I = std::move(I);
      cache->F = std::move(F);
      cache->O = std::move(O);
      cache->G = std::move(G);
      cache->TC = std::move(TC);
      cache->C = C;
      cache->H = H;
      return H;
    }
    return H;
  }

  Mat backward(const ParameterStore& ps, const Cache& cache, const Mat& d_h,
               ParameterStore* grads, bool want_input_grad) const {
    const int h = cfg_.hidden;
    const int T = cache.T, B = cache.B;
    const Eigen::Index tb = static_cast<Eigen::Index>(T) * B;
    if (d_h.rows() != h || d_h.cols() != tb) {
      throw shape_error("lstm backward: gradient shape mismatch");
    }

    Mat Uall_t(h, 4 * h);
    Uall_t.middleCols(0, h) =
        ps.at(detail::lstm_pname(prefix_, "Ui")).transpose();
    Uall_t.middleCols(h, h) =
        ps.at(detail::lstm_pname(prefix_, "Uf")).transpose();
    Uall_t.middleCols(2 * h, h) =
        ps.at(detail::lstm_pname(prefix_, "Uo")).transpose();
    Uall_t.middleCols(3 * h, h) =
        ps.at(detail::lstm_pname(prefix_, "Ug")).transpose();

    Mat dA(4 * h, tb);
    Mat dh(h, B), dc(h, B), dh_cand(h, B), dc_cand(h, B), da(4 * h, B);
    dh.setZero();
    dc.setZero();
    for (int t = T - 1; t >= 0; --t) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(t) * B;
      dh += d_h.middleCols(c0, B);
      const auto m =
          cache.mask.middleCols(c0, B).row(0).array().replicate(h, 1);
      const auto i = cache.I.middleCols(c0, B).array();
      const auto f = cache.F.middleCols(c0, B).array();
      const auto o = cache.O.middleCols(c0, B).array();
      const auto g = cache.G.middleCols(c0, B).array();
      const auto tc = cache.TC.middleCols(c0, B).array();

      dh_cand.array() = m * dh.array();
      dc_cand.array() = m * dc.array();
      // pass-through part survives on masked steps
      dh.array() -= dh_cand.array();
      dc.array() -= dc_cand.array();

      da.middleRows(2 * h, h).array() =
          dh_cand.array() * tc * o * (1.0 - o);          // d a_o
      dc_cand.array() += dh_cand.array() * o * (1.0 - tc.square());
      da.middleRows(0, h).array() = dc_cand.array() * g * i * (1.0 - i);
      if (t > 0) {
        const auto c_prev = cache.C.middleCols(c0 - B, B).array();
        da.middleRows(h, h).array() =
            dc_cand.array() * c_prev * f * (1.0 - f);    // d a_f
      } else {
        da.middleRows(h, h).setZero();
      }
      da.middleRows(3 * h, h).array() =
          dc_cand.array() * i * (1.0 - g.square());      // d a_g
      dA.middleCols(c0, B) = da;

      dc.array() += dc_cand.array() * f;
      dh.noalias() += Uall_t * da;
    }

    if (grads) {
      Mat Hprev(h, tb);
      Hprev.leftCols(B).setZero();
      Hprev.rightCols(tb - B) = cache.H.leftCols(tb - B);
      const Mat& X = cache.input;
      grads->at(detail::lstm_pname(prefix_, "Wi")).noalias() +=
          dA.middleRows(0, h) * X.transpose();
      grads->at(detail::lstm_pname(prefix_, "Wf")).noalias() +=
          dA.middleRows(h, h) * X.transpose();
      grads->at(detail::lstm_pname(prefix_, "Wo")).noalias() +=
          dA.middleRows(2 * h, h) * X.transpose();
      grads->at(detail::lstm_pname(prefix_, "Wg")).noalias() +=
          dA.middleRows(3 * h, h) * X.transpose();
      grads->at(detail::lstm_pname(prefix_, "Ui")).noalias() +=
          dA.middleRows(0, h) * Hprev.transpose();
      grads->at(detail::lstm_pname(prefix_, "Uf")).noalias() +=
          dA.middleRows(h, h) * Hprev.transpose();
      grads->at(detail::lstm_pname(prefix_, "Uo")).noalias() +=
          dA.middleRows(2 * h, h) * Hprev.transpose();
      grads->at(detail::lstm_pname(prefix_, "Ug")).noalias() +=
          dA.middleRows(3 * h, h) * Hprev.transpose();
      grads->at(detail::lstm_pname(prefix_, "bi")).col(0) +=
          dA.middleRows(0, h).rowwise().sum();
      grads->at(detail::lstm_pname(prefix_, "bf")).col(0) +=
          dA.middleRows(h, h).rowwise().sum();
      grads->at(detail::lstm_pname(prefix_, "bo")).col(0) +=
          dA.middleRows(2 * h, h).rowwise().sum();
      grads->at(detail::lstm_pname(prefix_, "bg")).col(0) +=
          dA.middleRows(3 * h, h).rowwise().sum();
    }

    if (!want_input_grad) return Mat();
    Mat dX(cfg_.input_dim, tb);
    dX.noalias() =
        ps.at(detail::lstm_pname(prefix_, "Wi")).transpose() * dA.middleRows(0, h);
    dX.noalias() +=
        ps.at(detail::lstm_pname(prefix_, "Wf")).transpose() * dA.middleRows(h, h);
    dX.noalias() +=
        ps.at(detail::lstm_pname(prefix_, "Wo")).transpose() * dA.middleRows(2 * h, h);
    dX.noalias() +=
        ps.at(detail::lstm_pname(prefix_, "Wg")).transpose() * dA.middleRows(3 * h, h);
    return dX;
  }

 private:
  LstmConfig cfg_;
  std::string prefix_;
};

// One LSTM step on plain vectors; parameter names as in LstmLayer.
inline std::pair<Vec, Vec> lstm_cell(const Vec& x, const Vec& h_prev,
                                     const Vec& c_prev,
                                     const ParameterStore& params,
                                     const std::string& prefix = "") {
  const Mat& Wi = params.at(prefix + "Wi");
  if (x.size() != Wi.cols() || h_prev.size() != Wi.rows() ||
      c_prev.size() != Wi.rows()) {
    throw shape_error("lstm_cell: dimension mismatch");
  }
  auto gate = [&](const char* w, const char* u, const char* b) {
    return Vec(params.at(prefix + w) * x + params.at(prefix + u) * h_prev +
               params.at(prefix + b).col(0));
  };
  Vec ai = gate("Wi", "Ui", "bi");
  Vec af = gate("Wf", "Uf", "bf");
  Vec ao = gate("Wo", "Uo", "bo");
  Vec ag = gate("Wg", "Ug", "bg");
  for (Eigen::Index k = 0; k < ai.size(); ++k) {
    ai(k) = sigmoid(ai(k));
    af(k) = sigmoid(af(k));
    ao(k) = sigmoid(ao(k));
  }
  const Vec g = ag.array().tanh();
  const Vec c =
      (af.array() * c_prev.array() + ai.array() * g.array()).matrix();
  const Vec h = (ao.array() * c.array().tanh()).matrix();
  return {h, c};
}

// reverses the time blocks of a packed (dim x T*B) sequence batch
inline Mat reverse_time(const Mat& X, int T, int B) {
  Mat out(X.rows(), X.cols());
  for (int t = 0; t < T; ++t) {
    out.middleCols(static_cast<Eigen::Index>(T - 1 - t) * B, B) =
        X.middleCols(static_cast<Eigen::Index>(t) * B, B);
  }
  return out;
}

}  // namespace kinegen::nn
