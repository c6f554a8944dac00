#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kinegen/common.hpp"
#include "kinegen/nn/core.hpp"
#include "kinegen/nn/dense.hpp"
#include "kinegen/nn/lstm.hpp"
#include "kinegen/parallel.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/stats.hpp"
#include "kinegen/types.hpp"

namespace kinegen {

using nn::Mat;
using nn::Vec;

// --- evaluation tasks ----------------------------------------------------

enum class TaskTarget { care, weight };
enum class TaskSubset { all, heavy_only, light_only, careful_only,
                        not_careful_only };

inline std::string task_target_str(TaskTarget t) {
  return t == TaskTarget::care ? "care" : "weight";
}

inline std::string task_subset_str(TaskSubset s) {
  switch (s) {
    case TaskSubset::all: return "all";
    case TaskSubset::heavy_only: return "heavy_only";
    case TaskSubset::light_only: return "light_only";
    case TaskSubset::careful_only: return "careful_only";
    case TaskSubset::not_careful_only: return "not_careful_only";
  }
  throw validation_error("unknown task subset");
}

inline TaskTarget parse_task_target(const std::string& s) {
  if (s == "care") return TaskTarget::care;
  if (s == "weight") return TaskTarget::weight;
  throw validation_error("unknown task target: " + s);
}

inline TaskSubset parse_task_subset(const std::string& s) {
  for (TaskSubset v : {TaskSubset::all, TaskSubset::heavy_only,
                       TaskSubset::light_only, TaskSubset::careful_only,
                       TaskSubset::not_careful_only}) {
    if (task_subset_str(v) == s) return v;
  }
  throw validation_error("unknown task subset: " + s);
}

struct Task {
  TaskTarget target = TaskTarget::care;
  TaskSubset subset = TaskSubset::all;

  friend bool operator==(const Task&, const Task&) = default;

  // A subset restriction along the target axis would leave one class.
  void validate() const {
    const bool care_subset = subset == TaskSubset::careful_only ||
                             subset == TaskSubset::not_careful_only;
    const bool weight_subset = subset == TaskSubset::heavy_only ||
                               subset == TaskSubset::light_only;
    if (target == TaskTarget::care && care_subset) {
      throw validation_error("task: carefulness subset under a care target");
    }
    if (target == TaskTarget::weight && weight_subset) {
      throw validation_error("task: weight subset under a weight target");
    }
  }

  bool admits(const ClassLabel& label) const {
    switch (subset) {
      case TaskSubset::all: return true;
      case TaskSubset::heavy_only: return label.weight == Weight::W2;
      case TaskSubset::light_only: return label.weight == Weight::W1;
      case TaskSubset::careful_only: return label.care == Care::C;
      case TaskSubset::not_careful_only: return label.care == Care::NC;
    }
    return false;
  }

  int binary_label(const ClassLabel& label) const {
    if (target == TaskTarget::care) return label.care == Care::C ? 1 : 0;
    return label.weight == Weight::W2 ? 1 : 0;
  }

  std::string str() const {
    return task_target_str(target) + "/" + task_subset_str(subset);
  }
};

struct ClassifierConfig {
  int hidden = 64;     // per direction
  int fc_hidden = 32;
  int classes = 2;
  int folds = 5;
  int epochs = 100;
  int batch_size = 32;
  int patience = 10;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (folds < 2) throw validation_error("classifier: folds must be >= 2");
    if (classes != 2) {
      throw validation_error("classifier: binary tasks only");
    }
    if (hidden < 1 || fc_hidden < 1 || epochs < 1 || batch_size < 1 ||
        patience < 1) {
      throw validation_error("classifier: counts must be positive");
    }
    if (lr <= 0.0) throw validation_error("classifier: lr must be positive");
  }
};

enum class Direction { trts, tstr };

inline std::string direction_str(Direction d) {
  return d == Direction::trts ? "TRTS" : "TSTR";
}

inline Direction parse_direction(const std::string& s) {
  if (s == "TRTS") return Direction::trts;
  if (s == "TSTR") return Direction::tstr;
  throw validation_error("unknown direction: " + s);
}

struct FoldResult {
  int fold = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct EvalReport {
  Task task;
  Direction direction = Direction::trts;
  double val_acc_mean = 0.0, val_acc_std = 0.0;
  double test_acc_mean = 0.0, test_acc_std = 0.0;
  std::vector<FoldResult> per_fold;
};

// --- dataset plumbing -----------------------------------------------------

struct LabeledItem {
  const Trial* trial = nullptr;
  int label = 0;
};

inline std::vector<LabeledItem> task_items(const TrialSet& set,
                                           const Task& task) {
  task.validate();
  std::vector<LabeledItem> items;
  for (const Trial& t : set.trials) {
    if (task.admits(t.label)) {
      items.push_back({&t, task.binary_label(t.label)});
    }
  }
  return items;
}

inline void require_both_classes(const std::vector<LabeledItem>& items,
                                 const std::string& what) {
  bool has0 = false, has1 = false;
  for (const LabeledItem& it : items) (it.label ? has1 : has0) = true;
  if (!has0 || !has1) {
    throw validation_error(what + ": need both classes after task filtering");
  }
}

// One packed mini-batch of right-padded sequences.
struct SeqBatch {
  Mat X;     // 1 x (T*B)
  Mat mask;  // 1 x (T*B), {0,1}
  int T = 0, B = 0;
  std::vector<int> labels;
};

inline SeqBatch make_batch(const std::vector<LabeledItem>& items,
                           const std::vector<int>& idx) {
  if (idx.empty()) throw validation_error("make_batch: empty index list");
  SeqBatch b;
  b.B = static_cast<int>(idx.size());
  std::size_t longest = 0;
  for (int i : idx) {
    longest = std::max(longest, items[static_cast<std::size_t>(i)].trial->v.size());
  }
  b.T = static_cast<int>(longest);
  const Eigen::Index tb = static_cast<Eigen::Index>(b.T) * b.B;
  b.X = Mat::Zero(1, tb);
  b.mask = Mat::Zero(1, tb);
  for (int j = 0; j < b.B; ++j) {
    const LabeledItem& item = items[static_cast<std::size_t>(idx[j])];
    b.labels.push_back(item.label);
    for (std::size_t t = 0; t < item.trial->v.size(); ++t) {
      const Eigen::Index col = static_cast<Eigen::Index>(t) * b.B + j;
      b.X(0, col) = item.trial->v[t];
      b.mask(0, col) = 1.0;
    }
  }
  return b;
}

// Length-sorted contiguous batches keep padding (and wasted recurrent
// steps) low; the caller shuffles the batch order per epoch.
inline std::vector<std::vector<int>> bucket_batches(
    const std::vector<LabeledItem>& items, int batch_size) {
  std::vector<int> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto la = items[static_cast<std::size_t>(a)].trial->v.size();
    const auto lb = items[static_cast<std::size_t>(b)].trial->v.size();
    return la != lb ? la < lb : a < b;
  });
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop =
        std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

// --- the bi-LSTM classifier ------------------------------------------------

// Forward and reversed LSTM passes meet in their final states, which feed
// a two-layer head: 2*hidden -> fc_hidden (rectifier) -> classes, softmax.
class SequenceClassifier {
 public:
  SequenceClassifier(const ClassifierConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        fwd_(nn::LstmConfig{.input_dim = 1, .hidden = cfg.hidden}, "fw."),
        bwd_(nn::LstmConfig{.input_dim = 1, .hidden = cfg.hidden}, "bw."),
        fc1_(2 * cfg.hidden, cfg.fc_hidden, nn::Activation::relu, "fc1."),
        fc2_(cfg.fc_hidden, cfg.classes, nn::Activation::identity, "fc2."),
        params_(seed) {
    cfg.validate();
    Rng rng(seed);
    fwd_.create_params(params_, rng);
    bwd_.create_params(params_, rng);
    fc1_.create_params(params_, rng);
    fc2_.create_params(params_, rng);
  }

  const ClassifierConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  Mat logits(const SeqBatch& b) const { return forward(b, nullptr); }

  // Mean cross-entropy over the batch; accumulates gradients when asked.
  double loss_pass(const SeqBatch& b, nn::ParameterStore* grads) const {
    Caches caches;
    const Mat lg = forward(b, grads ? &caches : nullptr);
    Mat dlogits;
    const double loss =
        nn::softmax_cross_entropy(lg, b.labels, grads ? &dlogits : nullptr);
    if (grads) backward(b, caches, dlogits, grads);
    return loss;
  }

  std::vector<int> predict(const SeqBatch& b) const {
    const Mat lg = logits(b);
    std::vector<int> out(static_cast<std::size_t>(b.B));
    for (int j = 0; j < b.B; ++j) {
      Eigen::Index best = 0;
      lg.col(j).maxCoeff(&best);
      out[static_cast<std::size_t>(j)] = static_cast<int>(best);
    }
    return out;
  }

  double accuracy(const std::vector<LabeledItem>& items) const {
    if (items.empty()) throw validation_error("accuracy: empty item list");
    std::size_t hits = 0;
    for (const auto& idx : bucket_batches(items, cfg_.batch_size)) {
      const SeqBatch b = make_batch(items, idx);
      const std::vector<int> pred = predict(b);
      for (std::size_t j = 0; j < pred.size(); ++j) {
        if (pred[j] == b.labels[j]) ++hits;
      }
    }
    return static_cast<double>(hits) / static_cast<double>(items.size());
  }

  double mean_loss(const std::vector<LabeledItem>& items) const {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& idx : bucket_batches(items, cfg_.batch_size)) {
      const SeqBatch b = make_batch(items, idx);
      total += loss_pass(b, nullptr) * static_cast<double>(idx.size());
      count += idx.size();
    }
    return total / static_cast<double>(count);
  }

  // Adam with early stopping on validation loss; the best-validation
  // parameters are restored at the end.
  void fit(const std::vector<LabeledItem>& train,
           const std::vector<LabeledItem>& val, Rng& rng) {
    const auto batches = bucket_batches(train, cfg_.batch_size);
    std::vector<int> order(batches.size());
    std::iota(order.begin(), order.end(), 0);

    nn::Adam opt(nn::AdamConfig{.lr = cfg_.lr});
    nn::ParameterStore best = params_;
    double best_val = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      rng.shuffle(order);
      for (int bi : order) {
        const SeqBatch b = make_batch(train, batches[static_cast<std::size_t>(bi)]);
        nn::ParameterStore grads = params_.zeros_like();
        const double loss = loss_pass(b, &grads);
        if (!std::isfinite(loss)) {
          throw numerical_error("classifier: non-finite loss at epoch " +
                                std::to_string(epoch));
        }
        opt.step(params_, grads);
      }
      const double val_loss = mean_loss(val);
      if (val_loss < best_val) {
        best_val = val_loss;
        best = params_;
        stale = 0;
      } else if (++stale >= cfg_.patience) {
        break;
      }
    }
    params_ = best;
  }

 private:
  struct Caches {
    nn::LstmLayer::Cache fwd, bwd;
    nn::Dense::Cache fc1, fc2;
    Mat mask_rev;
  };

  Mat forward(const SeqBatch& b, Caches* c) const {
    const int h = cfg_.hidden;
    const Mat Hf = fwd_.forward(params_, b.X, b.T, b.B, &b.mask,
                                c ? &c->fwd : nullptr);
    const Mat Xr = nn::reverse_time(b.X, b.T, b.B);
    Mat Mr = nn::reverse_time(b.mask, b.T, b.B);
    const Mat Hb = bwd_.forward(params_, Xr, b.T, b.B, &Mr,
                                c ? &c->bwd : nullptr);
    if (c) c->mask_rev = std::move(Mr);

    // masking freezes each sequence's state after its last sample, so the
    // final block holds the last valid state of every sequence
    Mat concat(2 * h, b.B);
    concat.topRows(h) = Hf.rightCols(b.B);
    concat.bottomRows(h) = Hb.rightCols(b.B);

    const Mat a1 = fc1_.forward(params_, concat, c ? &c->fc1 : nullptr);
    return fc2_.forward(params_, a1, c ? &c->fc2 : nullptr);
  }

  void backward(const SeqBatch& b, const Caches& c, const Mat& dlogits,
                nn::ParameterStore* grads) const {
    const int h = cfg_.hidden;
    const Mat da1 = fc2_.backward(params_, c.fc2, dlogits, grads, true);
    const Mat dconcat = fc1_.backward(params_, c.fc1, da1, grads, true);

    const Eigen::Index tb = static_cast<Eigen::Index>(b.T) * b.B;
    Mat dHf = Mat::Zero(h, tb);
    dHf.rightCols(b.B) = dconcat.topRows(h);
    fwd_.backward(params_, c.fwd, dHf, grads, false);

    Mat dHb = Mat::Zero(h, tb);
    dHb.rightCols(b.B) = dconcat.bottomRows(h);
    bwd_.backward(params_, c.bwd, dHb, grads, false);
  }

  ClassifierConfig cfg_;
  nn::LstmLayer fwd_, bwd_;
  nn::Dense fc1_, fc2_;
  nn::ParameterStore params_;
};

// --- cross-validation ------------------------------------------------------

struct CrossValResult {
  std::vector<SequenceClassifier> models;
  std::vector<int> fold_of;  // per item index
  std::vector<double> val_accs;
  double val_mean = 0.0, val_std = 0.0;
};

// Stratified assignment: per class, a seeded shuffle dealt round-robin, so
// every fold's class counts are within one of each other.
inline std::vector<int> stratified_folds(const std::vector<LabeledItem>& items,
                                         int folds, std::uint64_t seed) {
  std::vector<int> assignment(items.size(), -1);
  for (int cls : {0, 1}) {
    std::vector<int> members;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].label == cls) members.push_back(static_cast<int>(i));
    }
    if (static_cast<int>(members.size()) < folds) {
      throw validation_error("stratified_folds: class " + std::to_string(cls) +
                             " has fewer members than folds");
    }
    Rng rng(mix_seed(seed, 1000 + static_cast<std::uint64_t>(cls)));
    rng.shuffle(members);
    for (std::size_t k = 0; k < members.size(); ++k) {
      assignment[static_cast<std::size_t>(members[k])] =
          static_cast<int>(k % static_cast<std::size_t>(folds));
    }
  }
  return assignment;
}

inline CrossValResult train_classifier(const TrialSet& set, const Task& task,
                                       const ClassifierConfig& cfg) {
  cfg.validate();
  task.validate();
  const std::vector<LabeledItem> items = task_items(set, task);
  require_both_classes(items, "train_classifier");

  CrossValResult result;
  result.fold_of = stratified_folds(items, cfg.folds, cfg.seed);

  // folds are independent: own seed, own model, own output slot
  std::vector<std::unique_ptr<SequenceClassifier>> models(
      static_cast<std::size_t>(cfg.folds));
  std::vector<double> val_accs(static_cast<std::size_t>(cfg.folds), 0.0);
  parallel_for(cfg.folds, [&](int fold) {
    std::vector<LabeledItem> train, val;
    for (std::size_t i = 0; i < items.size(); ++i) {
      (result.fold_of[i] == fold ? val : train).push_back(items[i]);
    }
    auto model = std::make_unique<SequenceClassifier>(
        cfg, mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(fold)));
    Rng rng(mix_seed(cfg.seed, 3000 + static_cast<std::uint64_t>(fold)));
    model->fit(train, val, rng);
    val_accs[static_cast<std::size_t>(fold)] = model->accuracy(val);
    models[static_cast<std::size_t>(fold)] = std::move(model);
  });
  for (int fold = 0; fold < cfg.folds; ++fold) {
    result.val_accs.push_back(val_accs[static_cast<std::size_t>(fold)]);
    result.models.push_back(std::move(*models[static_cast<std::size_t>(fold)]));
  }
  result.val_mean = mean_of(result.val_accs);
  result.val_std = std_of(result.val_accs);
  return result;
}

// TRTS: train/validate on the real set, test every fold model on the whole
// synthetic set. TSTR is the mirror image.
inline EvalReport evaluate_cross(const TrialSet& real, const TrialSet& synthetic,
                                 const Task& task, Direction direction,
                                 const ClassifierConfig& cfg) {
  const TrialSet& train_src = direction == Direction::trts ? real : synthetic;
  const TrialSet& test_src = direction == Direction::trts ? synthetic : real;

  const std::vector<LabeledItem> test_items = task_items(test_src, task);
  require_both_classes(test_items, "evaluate_cross test set");

  // sources must be disjoint trial populations
  std::unordered_set<std::string> train_ids;
  for (const Trial& t : train_src.trials) train_ids.insert(t.trial_id);
  for (const LabeledItem& it : test_items) {
    if (train_ids.count(it.trial->trial_id)) {
      throw validation_error("evaluate_cross: trial '" + it.trial->trial_id +
                             "' appears in both sets");
    }
  }

  const CrossValResult cv = train_classifier(train_src, task, cfg);

  EvalReport report;
  report.task = task;
  report.direction = direction;
  report.val_acc_mean = cv.val_mean;
  report.val_acc_std = cv.val_std;
  std::vector<double> test_accs;
  for (std::size_t f = 0; f < cv.models.size(); ++f) {
    const double acc = cv.models[f].accuracy(test_items);
    test_accs.push_back(acc);
    report.per_fold.push_back(
        {static_cast<int>(f), cv.val_accs[f], acc});
  }
  report.test_acc_mean = mean_of(test_accs);
  report.test_acc_std = std_of(test_accs);
  return report;
}

// The twelve table cells: both targets on all data, care within each
// weight level, weight within each care level; each in both directions.
inline std::vector<EvalReport> run_table_suite(const TrialSet& real,
                                               const TrialSet& synthetic,
                                               const ClassifierConfig& cfg) {
  static const std::vector<Task> tasks = {
      {TaskTarget::care, TaskSubset::all},
      {TaskTarget::weight, TaskSubset::all},
      {TaskTarget::care, TaskSubset::heavy_only},
      {TaskTarget::care, TaskSubset::light_only},
      {TaskTarget::weight, TaskSubset::careful_only},
      {TaskTarget::weight, TaskSubset::not_careful_only},
  };
  std::vector<EvalReport> reports;
  for (const Task& task : tasks) {
    for (Direction d : {Direction::trts, Direction::tstr}) {
      reports.push_back(evaluate_cross(real, synthetic, task, d, cfg));
    }
  }
  return reports;
}

// --- report serialization ----------------------------------------------

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["task"] = {{"target", task_target_str(r.task.target)},
               {"subset", task_subset_str(r.task.subset)}};
  j["direction"] = direction_str(r.direction);
  j["val_acc_mean"] = r.val_acc_mean;
  j["val_acc_std"] = r.val_acc_std;
  j["test_acc_mean"] = r.test_acc_mean;
  j["test_acc_std"] = r.test_acc_std;
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (const FoldResult& f : r.per_fold) {
    folds.push_back({{"fold", f.fold},
                     {"val_acc", f.val_acc},
                     {"test_acc", f.test_acc}});
  }
  j["per_fold"] = std::move(folds);
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.task.target = parse_task_target(j.at("task").at("target").get<std::string>());
  r.task.subset = parse_task_subset(j.at("task").at("subset").get<std::string>());
  r.direction = parse_direction(j.at("direction").get<std::string>());
  r.val_acc_mean = j.at("val_acc_mean").get<double>();
  r.val_acc_std = j.at("val_acc_std").get<double>();
  r.test_acc_mean = j.at("test_acc_mean").get<double>();
  r.test_acc_std = j.at("test_acc_std").get<double>();
  for (const auto& f : j.at("per_fold")) {
    r.per_fold.push_back({f.at("fold").get<int>(),
                          f.at("val_acc").get<double>(),
                          f.at("test_acc").get<double>()});
  }
  return r;
}

// Plain-text table with the "(validation) / test" cell layout.
inline std::string render_table(const std::vector<EvalReport>& reports) {
  auto cell = [](const EvalReport& r) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "(%5.2f+-%.2f%%) / %5.2f+-%.2f%%",
                  100.0 * r.val_acc_mean, 100.0 * r.val_acc_std,
                  100.0 * r.test_acc_mean, 100.0 * r.test_acc_std);
    return std::string(buf);
  };
  // pair the two directions of each task onto one row
  std::vector<std::pair<Task, std::array<const EvalReport*, 2>>> rows;
  for (const EvalReport& r : reports) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const auto& row) { return row.first == r.task; });
    if (it == rows.end()) {
      rows.push_back({r.task, {nullptr, nullptr}});
      it = rows.end() - 1;
    }
    it->second[r.direction == Direction::trts ? 0 : 1] = &r;
  }
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-24s | %-32s | %-32s\n", "task",
                "TRTS (val) / test", "TSTR (val) / test");
  out += line;
  out += std::string(24, '-') + "-+-" + std::string(32, '-') + "-+-" +
         std::string(32, '-') + "\n";
  for (const auto& [task, pair] : rows) {
    std::snprintf(line, sizeof(line), "%-24s | %-32s | %-32s\n",
                  task.str().c_str(),
                  pair[0] ? cell(*pair[0]).c_str() : "-",
                  pair[1] ? cell(*pair[1]).c_str() : "-");
    out += line;
  }
  out +=
      "\ntest +- is the spread of the fold models evaluated on the common "
      "test set\n";
  return out;
}

}  // namespace kinegen
