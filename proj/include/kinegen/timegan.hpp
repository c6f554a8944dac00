#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kinegen/common.hpp"
#include "kinegen/ingest.hpp"
#include "kinegen/nn/checkpoint.hpp"
#include "kinegen/nn/core.hpp"
#include "kinegen/nn/dense.hpp"
#include "kinegen/nn/gru.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/types.hpp"

namespace kinegen {

using nn::Mat;
using nn::Vec;

// Per-feature min/max normalization, fitted on training data only.
struct Scaler {
  double min = 0.0;
  double max = 1.0;

  static Scaler fit(const Mat& values) {
    if (values.size() == 0) throw validation_error("scaler: empty input");
    Scaler s;
    s.min = values.minCoeff();
    s.max = values.maxCoeff();
    if (s.max == s.min) {
      throw degenerate_data_error("scaler: all values identical");
    }
    return s;
  }

  double span() const { return max - min; }
  double scale1(double x) const { return (x - min) / span(); }
  double inverse1(double u) const { return min + u * span(); }
  Mat scale(const Mat& x) const {
    return ((x.array() - min) / span()).matrix();
  }
  Mat inverse(const Mat& u) const {
    return (u.array() * span() + min).matrix();
  }
};

struct TimeGanConfig {
  int seq_len = 0;      // padded class length, set from the batch
  int feat_dim = 1;     // velocity norm
  int latent_dim = 1;   // matches feat_dim
  int hidden = 28;
  int layers = 3;
  int batch_size = 15;
  int epochs_embedding = 2000;
  int epochs_supervised = 2000;
  int epochs_joint = 2000;
  double gamma = 1.0;              // supervised weight in the generator loss
  double eta = 10.0;               // moment-matching weight
  double embedder_sup_weight = 0.1;  // supervised share of the E/R refresh
  double lr = 1e-3;
  bool per_step_discriminator = false;  // default: last-state logit
  std::uint64_t seed = 0;

  void validate() const {
    if (seq_len < 2) throw validation_error("timegan: seq_len must be >= 2");
    if (feat_dim < 1 || latent_dim < 1 || hidden < 1 || layers < 1) {
      throw validation_error("timegan: network dimensions must be positive");
    }
    if (batch_size < 1) {
      throw validation_error("timegan: batch_size must be positive");
    }
    if (epochs_embedding < 0 || epochs_supervised < 0 || epochs_joint < 0) {
      throw validation_error("timegan: epoch counts must be nonnegative");
    }
    if (lr <= 0.0) throw validation_error("timegan: lr must be positive");
  }
};

struct TrainingHistory {
  std::vector<double> reconstruction;  // phase 1, per epoch
  std::vector<double> supervised;      // phase 2, per epoch
  std::vector<double> discriminator;   // phase 3, per epoch
  std::vector<double> generator;       // phase 3, per epoch
  std::vector<double> refresh;         // phase 3 embedder/recovery, per epoch
};

namespace detail {

// A recurrent tower: GRU stack plus a dense head applied per timestep.
struct Net {
  nn::GruStack stack;
  nn::Dense head;
  nn::ParameterStore params;

  Net(int input_dim, int hidden, int layers, int out_dim,
      nn::Activation head_act, std::uint64_t seed)
      : stack(nn::GruStackConfig{.layers = layers,
                                 .hidden = hidden,
                                 .input_dim = input_dim}),
        head(hidden, out_dim, head_act, "head."),
        params(seed) {
    Rng rng(seed);
    stack.create_params(params, rng);
    head.create_params(params, rng);
  }

  struct Cache {
    nn::GruStack::Cache stack;
    nn::Dense::Cache head;
  };

  Mat forward(const Mat& X, int T, int B, Cache* cache) const {
    const Mat H = stack.forward(params, X, T, B, cache ? &cache->stack : nullptr);
    return head.forward(params, H, cache ? &cache->head : nullptr);
  }

  Mat backward(const Cache& cache, const Mat& dY, nn::ParameterStore* grads,
               bool want_input_grad) const {
    const Mat dH = head.backward(params, cache.head, dY, grads, true);
    return stack.backward(params, cache.stack, dH, grads, want_input_grad);
  }
};

// First/second-moment match between a generated batch and the real batch,
// computed per timestep across the batch dimension (timestep-major blocks of
// B columns) and averaged over timesteps.  Matching the cross-batch spread at
// every timestep is what keeps the generator from collapsing onto a single
// profile.  Variances are smoothed by 1e-6 so the gradient stays bounded for
// near-constant blocks.
inline double moment_loss(const Mat& x_hat, const Mat& x, int B,
                          Mat* d_x_hat) {
  const Eigen::Index cols = x_hat.cols();
  const Eigen::Index rows = x_hat.rows();
  const Eigen::Index block = static_cast<Eigen::Index>(B);
  const Eigen::Index steps = cols / block;
  const double nb = static_cast<double>(rows) * static_cast<double>(block);
  if (d_x_hat) d_x_hat->setZero(rows, cols);
  double loss = 0.0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const auto gen = x_hat.middleCols(t * block, block);
    const auto real = x.middleCols(t * block, block);
    const double mean_h = gen.mean();
    const double mean_x = real.mean();
    const double std_h =
        std::sqrt((gen.array() - mean_h).square().sum() / nb + 1e-6);
    const double std_x =
        std::sqrt((real.array() - mean_x).square().sum() / nb + 1e-6);
    loss += std::abs(mean_h - mean_x) + std::abs(std_h - std_x);
    if (d_x_hat) {
      const double s_mean =
          mean_h > mean_x ? 1.0 : (mean_h < mean_x ? -1.0 : 0.0);
      const double s_std = std_h > std_x ? 1.0 : (std_h < std_x ? -1.0 : 0.0);
      auto dgen = d_x_hat->middleCols(t * block, block);
      dgen.setConstant(s_mean / nb);
      dgen.array() += s_std * (gen.array() - mean_h) / (nb * std_h);
    }
  }
  const double scale = 1.0 / static_cast<double>(steps);
  if (d_x_hat) *d_x_hat *= scale;
  return loss * scale;
}

}  // namespace detail

// Five cooperating networks over scaled, padded velocity sequences:
// embedder E and recovery R form an autoencoder, generator G drives the
// latent space, supervisor S enforces stepwise dynamics, discriminator D
// judges embedded sequences.
class TimeGanModel {
 public:
  TimeGanModel(TimeGanConfig cfg, ClassLabel label)
      : cfg_(validated(std::move(cfg))), label_(label),
        embedder_(cfg_.feat_dim, cfg_.hidden, cfg_.layers, cfg_.hidden,
                  nn::Activation::sigmoid, mix_seed(cfg_.seed, 1)),
        // linear readout: the recovery net must reach the near-zero tail
        // values of padded profiles, which a sigmoid head starves of
        // gradient; the sampler bounds its output instead
        recovery_(cfg_.hidden, cfg_.hidden, cfg_.layers, cfg_.feat_dim,
                  nn::Activation::identity, mix_seed(cfg_.seed, 2)),
        generator_(cfg_.latent_dim, cfg_.hidden, cfg_.layers, cfg_.hidden,
                   nn::Activation::sigmoid, mix_seed(cfg_.seed, 3)),
        supervisor_(cfg_.hidden, cfg_.hidden, cfg_.layers, cfg_.hidden,
                    nn::Activation::sigmoid, mix_seed(cfg_.seed, 4)),
        discriminator_(cfg_.hidden, cfg_.hidden, cfg_.layers, 1,
                       nn::Activation::identity, mix_seed(cfg_.seed, 5)) {}

  const TimeGanConfig& config() const { return cfg_; }
  const ClassLabel& label() const { return label_; }
  const Scaler& scaler() const { return scaler_; }
  void set_scaler(Scaler s) { scaler_ = s; }

  detail::Net& net(char which) {
    switch (which) {
      case 'E': return embedder_;
      case 'R': return recovery_;
      case 'G': return generator_;
      case 'S': return supervisor_;
      case 'D': return discriminator_;
    }
    throw validation_error("unknown network tag");
  }
  const detail::Net& net(char which) const {
    return const_cast<TimeGanModel*>(this)->net(which);
  }

  // --- loss kernels ----------------------------------------------------
  // Each recomputes its forward pass from the current parameters and, when
  // gradient stores are given, accumulates analytic gradients into them.
  // xb/zb are packed 1 x (seq_len*B) scaled inputs (timestep-major blocks).

  double reconstruction_pass(const Mat& xb, int B, nn::ParameterStore* gE,
                             nn::ParameterStore* gR) const {
    const int T = cfg_.seq_len;
    detail::Net::Cache ce, cr;
    const Mat H = embedder_.forward(xb, T, B, gE ? &ce : nullptr);
    const Mat xr = recovery_.forward(H, T, B, gR ? &cr : nullptr);
    const double loss = nn::mse(xr, xb);
    if (gE || gR) {
      const Mat dxr = nn::mse_grad(xr, xb);
      const Mat dH = recovery_.backward(cr, dxr, gR, gE != nullptr);
      if (gE) embedder_.backward(ce, dH, gE, false);
    }
    return loss;
  }

  // Supervised next-step loss on precomputed embeddings H (hidden x T*B).
  double supervised_pass(const Mat& H, int B, nn::ParameterStore* gS) const {
    const int T = cfg_.seq_len;
    const Eigen::Index shift = static_cast<Eigen::Index>(B);
    const Eigen::Index body = static_cast<Eigen::Index>(T - 1) * B;
    detail::Net::Cache cs;
    const Mat SH = supervisor_.forward(H, T, B, gS ? &cs : nullptr);
    const Mat diff = SH.leftCols(body) - H.rightCols(body);
    const double n = static_cast<double>(diff.size());
    const double loss = diff.squaredNorm() / n;
    if (gS) {
      Mat dSH = Mat::Zero(SH.rows(), SH.cols());
      dSH.leftCols(body) = diff * (2.0 / n);
      supervisor_.backward(cs, dSH, gS, false);
    }
    return loss;
  }

  double supervised_pass_from_input(const Mat& xb, int B,
                                    nn::ParameterStore* gS) const {
    return supervised_pass(embed(xb, B), B, gS);
  }

  // Discriminator step: real embeddings toward 1, generator output and
  // supervised generator output toward 0.
  double discriminator_pass(const Mat& xb, const Mat& zb, int B,
                            nn::ParameterStore* gD) const {
    const int T = cfg_.seq_len;
    const Mat He = embed(xb, B);
    const Mat Eh = generator_.forward(zb, T, B, nullptr);
    const Mat Hh = supervisor_.forward(Eh, T, B, nullptr);

    double loss = 0.0;
    for (const auto& [seq, target] :
         {std::pair<const Mat*, double>{&He, 1.0}, {&Eh, 0.0}, {&Hh, 0.0}}) {
      detail::Net::Cache cd;
      Mat logits = disc_logits(*seq, B, gD ? &cd : nullptr);
      loss += nn::bce_with_logits_mean(logits, target);
      if (gD) {
        disc_backward(cd, nn::bce_with_logits_mean_grad(logits, target), gD,
                      nullptr);
      }
    }
    return loss;
  }

  // Generator/supervisor step: fool the discriminator on both latent paths,
  // keep stepwise dynamics on real embeddings, match first two moments of
  // the recovered output.
  double generator_pass(const Mat& xb, const Mat& zb, int B,
                        nn::ParameterStore* gG, nn::ParameterStore* gS) const {
    const int T = cfg_.seq_len;
    const bool wants = gG != nullptr || gS != nullptr;

    detail::Net::Cache cg, cs, cr;
    const Mat Eh = generator_.forward(zb, T, B, wants ? &cg : nullptr);
    const Mat Hh = supervisor_.forward(Eh, T, B, wants ? &cs : nullptr);
    const Mat x_hat = recovery_.forward(Hh, T, B, wants ? &cr : nullptr);

    Mat dEh, dHh;
    if (wants) {
      dEh = Mat::Zero(Eh.rows(), Eh.cols());
      dHh = Mat::Zero(Hh.rows(), Hh.cols());
    }

    double loss = 0.0;
    {  // fooling terms
      detail::Net::Cache cd1, cd2;
      Mat l1 = disc_logits(Eh, B, wants ? &cd1 : nullptr);
      Mat l2 = disc_logits(Hh, B, wants ? &cd2 : nullptr);
      loss += nn::bce_with_logits_mean(l1, 1.0);
      loss += nn::bce_with_logits_mean(l2, 1.0);
      if (wants) {
        Mat tmp;
        disc_backward(cd1, nn::bce_with_logits_mean_grad(l1, 1.0), nullptr,
                      &tmp);
        dEh += tmp;
        disc_backward(cd2, nn::bce_with_logits_mean_grad(l2, 1.0), nullptr,
                      &tmp);
        dHh += tmp;
      }
    }
    {  // per-timestep moment matching on the recovered sequence
      Mat dxh;
      const double lm =
          detail::moment_loss(x_hat, xb, B, wants ? &dxh : nullptr);
      loss += cfg_.eta * lm;
      if (wants) {
        dxh *= cfg_.eta;
        dHh += recovery_.backward(cr, dxh, nullptr, true);
      }
    }
    {  // supervised dynamics on real embeddings (updates S only)
      const Mat He = embed(xb, B);
      const double ls = supervised_scaled_pass(He, B, gS, cfg_.gamma);
      loss += cfg_.gamma * ls;
    }
    if (wants) {
      dEh += supervisor_.backward(cs, dHh, gS, gG != nullptr);
      if (gG) generator_.backward(cg, dEh, gG, false);
    }
    return loss;
  }

  // Embedder/recovery refresh inside the joint phase.
  double refresh_pass(const Mat& xb, int B, nn::ParameterStore* gE,
                      nn::ParameterStore* gR) const {
    const int T = cfg_.seq_len;
    const Eigen::Index body = static_cast<Eigen::Index>(T - 1) * B;
    const bool wants = gE != nullptr || gR != nullptr;

    detail::Net::Cache ce, cr, cs;
    const Mat He = embedder_.forward(xb, T, B, wants ? &ce : nullptr);
    const Mat xr = recovery_.forward(He, T, B, wants ? &cr : nullptr);
    const Mat SH = supervisor_.forward(He, T, B, wants ? &cs : nullptr);

    const double l_rec = nn::mse(xr, xb);
    const Mat diff = SH.leftCols(body) - He.rightCols(body);
    const double n_sup = static_cast<double>(diff.size());
    const double l_sup = diff.squaredNorm() / n_sup;
    const double loss = l_rec + cfg_.embedder_sup_weight * l_sup;

    if (wants) {
      Mat dHe = recovery_.backward(cr, nn::mse_grad(xr, xb), gR, true);
      const double w = cfg_.embedder_sup_weight * 2.0 / n_sup;
      // target side of the supervised term
      dHe.rightCols(body) -= w * diff;
      // input side, routed through the frozen supervisor
      Mat dSH = Mat::Zero(SH.rows(), SH.cols());
      dSH.leftCols(body) = w * diff;
      dHe += supervisor_.backward(cs, dSH, nullptr, true);
      if (gE) embedder_.backward(ce, dHe, gE, false);
    }
    return loss;
  }

  Mat embed(const Mat& xb, int B) const {
    return embedder_.forward(xb, cfg_.seq_len, B, nullptr);
  }

  // --- training ----------------------------------------------------------

  // rows: trials x seq_len, already scaled to [0,1].
  void run_phase1(const Mat& rows, int epochs, Rng& rng,
                  TrainingHistory* hist) {
    nn::Adam optE(adam()), optR(adam());
    for (int epoch = 0; epoch < epochs; ++epoch) {
      double epoch_loss = 0.0;
      int batches = 0;
      for_each_batch(rows, rng, [&](const Mat& xb, int B) {
        nn::ParameterStore gE = embedder_.params.zeros_like();
        nn::ParameterStore gR = recovery_.params.zeros_like();
        const double loss = reconstruction_pass(xb, B, &gE, &gR);
        check_finite(loss, "embedding phase", epoch);
        optE.step(embedder_.params, gE);
        optR.step(recovery_.params, gR);
        epoch_loss += loss;
        ++batches;
      });
      if (hist) hist->reconstruction.push_back(epoch_loss / batches);
    }
  }

  void run_phase2(const Mat& rows, int epochs, Rng& rng,
                  TrainingHistory* hist) {
    // the embedder is frozen here, so embeddings are computed once
    const int n = static_cast<int>(rows.rows());
    const Mat H_all = embed(pack_rows(rows, identity_index(n)), n);
    nn::Adam optS(adam());
    for (int epoch = 0; epoch < epochs; ++epoch) {
      double epoch_loss = 0.0;
      int batches = 0;
      for_each_index_batch(n, rng, [&](const std::vector<int>& idx) {
        const Mat Hb = gather_embedding(H_all, n, idx);
        nn::ParameterStore gS = supervisor_.params.zeros_like();
        const double loss = supervised_pass(Hb, static_cast<int>(idx.size()),
                                            &gS);
        check_finite(loss, "supervised phase", epoch);
        optS.step(supervisor_.params, gS);
        epoch_loss += loss;
        ++batches;
      });
      if (hist) hist->supervised.push_back(epoch_loss / batches);
    }
  }

  void run_phase3(const Mat& rows, int epochs, Rng& rng,
                  TrainingHistory* hist) {
    nn::Adam optD(adam()), optG(adam()), optS(adam()), optE(adam()),
        optR(adam());
    const int T = cfg_.seq_len;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      double d_loss = 0.0, g_loss = 0.0, e_loss = 0.0;
      int batches = 0;
      for_each_batch(rows, rng, [&](const Mat& xb, int B) {
        Mat zb(cfg_.latent_dim, static_cast<Eigen::Index>(T) * B);
        for (Eigen::Index k = 0; k < zb.size(); ++k) {
          zb.data()[k] = rng.uniform();
        }

        nn::ParameterStore gD = discriminator_.params.zeros_like();
        const double ld = discriminator_pass(xb, zb, B, &gD);
        check_finite(ld, "joint phase (discriminator)", epoch);
        optD.step(discriminator_.params, gD);

        nn::ParameterStore gG = generator_.params.zeros_like();
        nn::ParameterStore gS = supervisor_.params.zeros_like();
        const double lg = generator_pass(xb, zb, B, &gG, &gS);
        check_finite(lg, "joint phase (generator)", epoch);
        optG.step(generator_.params, gG);
        optS.step(supervisor_.params, gS);

        nn::ParameterStore gE = embedder_.params.zeros_like();
        nn::ParameterStore gR = recovery_.params.zeros_like();
        const double le = refresh_pass(xb, B, &gE, &gR);
        check_finite(le, "joint phase (refresh)", epoch);
        optE.step(embedder_.params, gE);
        optR.step(recovery_.params, gR);

        d_loss += ld;
        g_loss += lg;
        e_loss += le;
        ++batches;
      });
      if (hist) {
        hist->discriminator.push_back(d_loss / batches);
        hist->generator.push_back(g_loss / batches);
        hist->refresh.push_back(e_loss / batches);
      }
    }
  }

  TrainingHistory train(const PaddedBatch& batch) {
    cfg_.validate();
    if (batch.rows.rows() == 0) {
      throw validation_error("timegan train: empty batch");
    }
    if (batch.label != label_) {
      throw validation_error("timegan train: batch class " +
                             batch.label.str() + " does not match model " +
                             label_.str());
    }
    if (batch.rows.cols() != cfg_.seq_len) {
      throw shape_error("timegan train: batch length " +
                        std::to_string(batch.rows.cols()) +
                        " != configured seq_len " +
                        std::to_string(cfg_.seq_len));
    }
    if (static_cast<Eigen::Index>(cfg_.batch_size) > batch.rows.rows()) {
      throw validation_error("timegan train: batch_size exceeds dataset size");
    }
    rate_ = batch.rate;
    scaler_ = Scaler::fit(batch.rows);
    const Mat rows = scaler_.scale(batch.rows);

    TrainingHistory hist;
    Rng r1(mix_seed(cfg_.seed, 11));
    run_phase1(rows, cfg_.epochs_embedding, r1, &hist);
    Rng r2(mix_seed(cfg_.seed, 12));
    run_phase2(rows, cfg_.epochs_supervised, r2, &hist);
    Rng r3(mix_seed(cfg_.seed, 13));
    run_phase3(rows, cfg_.epochs_joint, r3, &hist);
    return hist;
  }

  // --- sampling ----------------------------------------------------------

  TrialSet sample(int n, std::uint64_t seed) const {
    if (n < 0) throw validation_error("sample: negative count");
    TrialSet out;
    out.provenance = Provenance::synthetic;
    if (n == 0) return out;

    Rng rng(mix_seed(cfg_.seed, mix_seed(seed, 97)));
    const int T = cfg_.seq_len;
    int produced = 0;
    int attempts = 0;
    const int max_attempts = 100 * n + 100;
    while (produced < n) {
      const int want = n - produced;
      if ((attempts += want) > max_attempts) {
        throw degenerate_data_error(
            "sample: trimming rejected too many draws for class " +
            label_.str());
      }
      Mat zb(cfg_.latent_dim, static_cast<Eigen::Index>(T) * want);
      for (Eigen::Index k = 0; k < zb.size(); ++k) {
        zb.data()[k] = rng.uniform();
      }
      const Mat Eh = generator_.forward(zb, T, want, nullptr);
      const Mat Hh = supervisor_.forward(Eh, T, want, nullptr);
      const Mat x_hat = scaler_.inverse(recovery_.forward(Hh, T, want, nullptr));

      // clamp to physical range: no negative speeds, and at most 10%
      // headroom above the fastest training sample
      const double cap = scaler_.max * 1.1;
      for (int b = 0; b < want; ++b) {
        std::vector<double> v(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
          v[static_cast<std::size_t>(t)] = std::clamp(
              x_hat(0, static_cast<Eigen::Index>(t) * want + b), 0.0, cap);
        }
        std::vector<double> trimmed;
        try {
          trimmed = trim(v);
        } catch (const degenerate_data_error&) {
          continue;  // redraw in the next round
        }
        if (trimmed.size() < 2) continue;  // too short to be a trial
        Trial trial;
        trial.trial_id =
            "syn-" + label_.str() + "-" + std::to_string(produced);
        trial.label = label_;
        trial.v = std::move(trimmed);
        trial.rate = rate_;
        out.trials.push_back(std::move(trial));
        ++produced;
      }
    }
    out.validate();
    return out;
  }

  // --- persistence ---------------------------------------------------------

  void save(const std::filesystem::path& path) const {
    nlohmann::ordered_json config;
    config["class"] = label_.str();
    config["seq_len"] = cfg_.seq_len;
    config["feat_dim"] = cfg_.feat_dim;
    config["latent_dim"] = cfg_.latent_dim;
    config["hidden"] = cfg_.hidden;
    config["layers"] = cfg_.layers;
    config["batch_size"] = cfg_.batch_size;
    config["epochs_embedding"] = cfg_.epochs_embedding;
    config["epochs_supervised"] = cfg_.epochs_supervised;
    config["epochs_joint"] = cfg_.epochs_joint;
    config["gamma"] = cfg_.gamma;
    config["eta"] = cfg_.eta;
    config["embedder_sup_weight"] = cfg_.embedder_sup_weight;
    config["lr"] = cfg_.lr;
    config["per_step_discriminator"] = cfg_.per_step_discriminator;
    config["rate"] = rate_;
    config["scaler"] = {{"min", scaler_.min}, {"max", scaler_.max}};

    nlohmann::ordered_json doc;
    doc["format_version"] = nn::checkpoint_format;
    doc["config"] = config;
    doc["seed"] = cfg_.seed;
    nlohmann::ordered_json params;
    for (const auto& [tag, net] : net_table()) {
      const nlohmann::ordered_json sub = nn::params_to_json(net->params);
      for (const auto& [k, v] : sub.items()) {
        params[std::string(tag) + "/" + k] = v;
      }
    }
    doc["parameters"] = std::move(params);

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
      std::ofstream outf(tmp, std::ios::binary | std::ios::trunc);
      if (!outf) throw io_error("cannot open " + tmp.string());
      outf << doc.dump(1) << '\n';
      if (!outf.good()) throw io_error("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw io_error("rename failed: " + path.string());
  }

  static TimeGanModel load(const std::filesystem::path& path) {
    const nlohmann::json doc = nn::load_checkpoint(path);
    const auto& config = doc.at("config");
    TimeGanConfig cfg;
    cfg.seq_len = config.at("seq_len").get<int>();
    cfg.feat_dim = config.at("feat_dim").get<int>();
    cfg.latent_dim = config.at("latent_dim").get<int>();
    cfg.hidden = config.at("hidden").get<int>();
    cfg.layers = config.at("layers").get<int>();
    cfg.batch_size = config.at("batch_size").get<int>();
    cfg.epochs_embedding = config.at("epochs_embedding").get<int>();
    cfg.epochs_supervised = config.at("epochs_supervised").get<int>();
    cfg.epochs_joint = config.at("epochs_joint").get<int>();
    cfg.gamma = config.at("gamma").get<double>();
    cfg.eta = config.at("eta").get<double>();
    cfg.embedder_sup_weight = config.at("embedder_sup_weight").get<double>();
    cfg.lr = config.at("lr").get<double>();
    cfg.per_step_discriminator = config.at("per_step_discriminator").get<bool>();
    cfg.seed = doc.at("seed").get<std::uint64_t>();

    TimeGanModel model(cfg, ClassLabel::parse(config.at("class").get<std::string>()));
    model.rate_ = config.at("rate").get<double>();
    model.scaler_.min = config.at("scaler").at("min").get<double>();
    model.scaler_.max = config.at("scaler").at("max").get<double>();

    const auto& params = doc.at("parameters");
    for (const auto& [tag, net] : model.net_table()) {
      nlohmann::json sub;
      const std::string prefix = std::string(tag) + "/";
      for (const auto& [k, v] : params.items()) {
        if (k.rfind(prefix, 0) == 0) sub[k.substr(prefix.size())] = v;
      }
      nn::params_from_json(sub, net->params);
    }
    return model;
  }

  double rate() const { return rate_; }
  void set_rate(double r) { rate_ = r; }

  // Packs selected rows (trials x T) into a 1 x (T*B) timestep-major batch.
  Mat pack_rows(const Mat& rows, const std::vector<int>& idx) const {
    const int T = cfg_.seq_len;
    const auto B = static_cast<Eigen::Index>(idx.size());
    Mat out(1, static_cast<Eigen::Index>(T) * B);
    for (int t = 0; t < T; ++t) {
      for (Eigen::Index b = 0; b < B; ++b) {
        out(0, static_cast<Eigen::Index>(t) * B + b) = rows(idx[b], t);
      }
    }
    return out;
  }

 private:
  std::array<std::pair<const char*, detail::Net*>, 5> net_table() {
    return {{{"embedder", &embedder_},
             {"recovery", &recovery_},
             {"generator", &generator_},
             {"supervisor", &supervisor_},
             {"discriminator", &discriminator_}}};
  }
  std::array<std::pair<const char*, const detail::Net*>, 5> net_table() const {
    return {{{"embedder", &embedder_},
             {"recovery", &recovery_},
             {"generator", &generator_},
             {"supervisor", &supervisor_},
             {"discriminator", &discriminator_}}};
  }

  static TimeGanConfig validated(TimeGanConfig c) {
    c.validate();
    return c;
  }

  nn::AdamConfig adam() const { return nn::AdamConfig{.lr = cfg_.lr}; }

  static void check_finite(double loss, const char* phase, int epoch) {
    if (!std::isfinite(loss)) {
      throw numerical_error(std::string("non-finite loss in ") + phase +
                            " at epoch " + std::to_string(epoch));
    }
  }

  static std::vector<int> identity_index(int n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }

  // One epoch = ceil(n/batch_size) batches of a shuffled index permutation.
  template <typename Fn>
  void for_each_index_batch(int n, Rng& rng, Fn&& fn) const {
    std::vector<int> perm = identity_index(n);
    rng.shuffle(perm);
    for (int start = 0; start < n; start += cfg_.batch_size) {
      const int stop = std::min(n, start + cfg_.batch_size);
      fn(std::vector<int>(perm.begin() + start, perm.begin() + stop));
    }
  }

  template <typename Fn>
  void for_each_batch(const Mat& rows, Rng& rng, Fn&& fn) const {
    for_each_index_batch(static_cast<int>(rows.rows()), rng,
                         [&](const std::vector<int>& idx) {
                           fn(pack_rows(rows, idx),
                              static_cast<int>(idx.size()));
                         });
  }

  // Re-packs columns of a full-population embedding (hidden x T*n) into a
  // batch-sized block (hidden x T*B) for the chosen trials.
  Mat gather_embedding(const Mat& H_all, int n, const std::vector<int>& idx) const {
    const int T = cfg_.seq_len;
    const auto B = static_cast<Eigen::Index>(idx.size());
    Mat out(H_all.rows(), static_cast<Eigen::Index>(T) * B);
    for (int t = 0; t < T; ++t) {
      for (Eigen::Index b = 0; b < B; ++b) {
        out.col(static_cast<Eigen::Index>(t) * B + b) =
            H_all.col(static_cast<Eigen::Index>(t) * n + idx[b]);
      }
    }
    return out;
  }

  // Discriminator logits: one per sequence from the final state by default,
  // or one per timestep when configured.
  Mat disc_logits(const Mat& Hseq, int B, detail::Net::Cache* cache) const {
    const int T = cfg_.seq_len;
    const Mat top = discriminator_.stack.forward(discriminator_.params, Hseq,
                                                 T, B,
                                                 cache ? &cache->stack : nullptr);
    const Mat in = cfg_.per_step_discriminator
                       ? top
                       : Mat(top.rightCols(B));
    return discriminator_.head.forward(discriminator_.params, in,
                                       cache ? &cache->head : nullptr);
  }

  void disc_backward(const detail::Net::Cache& cache, const Mat& dlogits,
                     nn::ParameterStore* gD, Mat* d_input) const {
    const int T = cfg_.seq_len;
    const Eigen::Index B = dlogits.cols() / (cfg_.per_step_discriminator ? T : 1);
    const Mat dIn = discriminator_.head.backward(discriminator_.params,
                                                 cache.head, dlogits, gD, true);
    Mat dTop;
    if (cfg_.per_step_discriminator) {
      dTop = dIn;
    } else {
      dTop = Mat::Zero(dIn.rows(), static_cast<Eigen::Index>(T) * B);
      dTop.rightCols(B) = dIn;
    }
    const Mat dX = discriminator_.stack.backward(discriminator_.params,
                                                 cache.stack, dTop, gD,
                                                 d_input != nullptr);
    if (d_input) *d_input = dX;
  }

  // Supervised loss routed through a dedicated cache so the generator pass
  // can weight it without re-deriving the shared formula.
  double supervised_scaled_pass(const Mat& H, int B, nn::ParameterStore* gS,
                                double weight) const {
    const int T = cfg_.seq_len;
    const Eigen::Index body = static_cast<Eigen::Index>(T - 1) * B;
    detail::Net::Cache cs;
    const Mat SH = supervisor_.forward(H, T, B, gS ? &cs : nullptr);
    const Mat diff = SH.leftCols(body) - H.rightCols(body);
    const double n = static_cast<double>(diff.size());
    const double loss = diff.squaredNorm() / n;
    if (gS) {
      Mat dSH = Mat::Zero(SH.rows(), SH.cols());
      dSH.leftCols(body) = diff * (2.0 * weight / n);
      supervisor_.backward(cs, dSH, gS, false);
    }
    return loss;
  }

  TimeGanConfig cfg_;
  ClassLabel label_;
  Scaler scaler_;
  double rate_ = 22.0;
  detail::Net embedder_, recovery_, generator_, supervisor_, discriminator_;
};

}  // namespace kinegen
