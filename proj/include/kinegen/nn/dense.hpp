#pragma once

#include <string>
#include <utility>

#include "kinegen/nn/core.hpp"

namespace kinegen::nn {

// Affine map with a pointwise activation, applied column by column. Over
// a packed sequence batch this covers every timestep in one GEMM.
class Dense {
 public:
  Dense(int input_dim, int output_dim, Activation act, std::string prefix)
      : in_(input_dim), out_(output_dim), act_(act),
        prefix_(std::move(prefix)) {
    if (input_dim < 1 || output_dim < 1) {
      throw validation_error("dense dimensions must be >= 1");
    }
  }

  int input_dim() const { return in_; }
  int output_dim() const { return out_; }

  void create_params(ParameterStore& store, Rng& rng) const {
    Mat& w = store.create(prefix_ + "W", out_, in_);
    init_uniform(w, rng, in_);
    store.create(prefix_ + "b", out_, 1);
  }

  struct Cache {
    Mat input;   // in x N
    Mat output;  // out x N (post-activation)
  };

  Mat forward(const ParameterStore& ps, const Mat& X, Cache* cache) const {
    if (X.rows() != in_) throw shape_error("dense forward: input mismatch");
    Mat Y(out_, X.cols());
    Y.noalias() = ps.at(prefix_ + "W") * X;
    Y.colwise() += Vec(ps.at(prefix_ + "b").col(0));
    apply_activation(act_, Y);
    if (cache) {
      cache->input = X;
      cache->output = Y;
    }
    return Y;
  }

  Mat backward(const ParameterStore& ps, const Cache& cache, const Mat& dY,
               ParameterStore* grads, bool want_input_grad) const {
    if (dY.rows() != out_ || dY.cols() != cache.output.cols()) {
      throw shape_error("dense backward: gradient mismatch");
    }
    const Mat dA =
        (dY.array() * activation_grad_from_output(act_, cache.output).array())
            .matrix();
    if (grads) {
      grads->at(prefix_ + "W").noalias() += dA * cache.input.transpose();
      grads->at(prefix_ + "b").col(0) += dA.rowwise().sum();
    }
    if (!want_input_grad) return Mat();
    Mat dX(in_, dA.cols());
    dX.noalias() = ps.at(prefix_ + "W").transpose() * dA;
    return dX;
  }

  Vec apply(const ParameterStore& ps, const Vec& x) const {
    Mat y = forward(ps, x, nullptr);
    return y.col(0);
  }

 private:
  int in_, out_;
  Activation act_;
  std::string prefix_;
};

}  // namespace kinegen::nn
