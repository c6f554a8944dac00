#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "kinegen/common.hpp"
#include "kinegen/csv.hpp"
#include "kinegen/ingest.hpp"
#include "kinegen/nn/core.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/stats.hpp"
#include "kinegen/types.hpp"

namespace kinegen {

// --- kinematic features ---------------------------------------------------

struct KinematicFeatures {
  double md = 0.0;     // movement duration, seconds
  double pa = 0.0;     // peak amplitude, m/s
  double ad_md = 0.0;  // time-to-first-peak over duration, in [0, 1]
};

inline KinematicFeatures features(const Trial& trial) {
  const std::size_t n = trial.v.size();
  if (n < 2) {
    throw validation_error("features: trial '" + trial.trial_id +
                           "' needs at least 2 samples");
  }
  KinematicFeatures f;
  f.md = static_cast<double>(n - 1) / trial.rate;
  std::size_t peak = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (trial.v[i] > trial.v[peak]) peak = i;  // first maximum wins ties
  }
  f.pa = trial.v[peak];
  f.ad_md = static_cast<double>(peak) / static_cast<double>(n - 1);
  return f;
}

// Per-class 3-sigma rule on movement duration; flagged trials stay in the
// set, the ids are metadata for reporting. Singleton classes cannot be
// scored and contribute nothing.
inline std::vector<std::string> flag_outliers(const TrialSet& set) {
  std::vector<std::string> flagged;
  for (const ClassLabel& label : ClassLabel::all()) {
    const std::vector<const Trial*> members = set.of_class(label);
    if (members.size() < 2) continue;
    std::vector<double> mds;
    mds.reserve(members.size());
    for (const Trial* t : members) mds.push_back(features(*t).md);
    const double mean = mean_of(mds);
    const double sd = std_of(mds);
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (std::abs(mds[i] - mean) > 3.0 * sd) {
        flagged.push_back(members[i]->trial_id);
      }
    }
  }
  std::sort(flagged.begin(), flagged.end());
  return flagged;
}

// --- mean profile -----------------------------------------------------

struct MeanProfile {
  nn::Vec mean;  // pointwise across trials
  nn::Vec std;   // population standard deviation
};

inline MeanProfile mean_profile(const PaddedBatch& batch) {
  const Eigen::Index n = batch.rows.rows();
  if (n == 0) throw validation_error("mean_profile: empty class");
  MeanProfile p;
  p.mean = batch.rows.colwise().mean().transpose();
  const nn::Mat centered = batch.rows.rowwise() - p.mean.transpose();
  p.std = (centered.array().square().colwise().sum() /
           static_cast<double>(n))
              .sqrt()
              .transpose()
              .matrix();
  return p;
}

// --- 2-D projections -------------------------------------------------

enum class ProjectionMethod { pca, tsne };

struct Projection2D {
  ProjectionMethod method = ProjectionMethod::pca;
  nn::Mat points;  // n x 2
  std::vector<double> explained_variance;  // PCA: top-2 fractions
  double perplexity = 0.0;                 // t-SNE metadata
  int iterations = 0;
  double kl = 0.0;
};

// Principal components of mean-centered flattened sequences. The sign of
// each component is fixed so its first non-vanishing loading is positive.
inline Projection2D pca2(const nn::Mat& X) {
  if (X.rows() < 3) throw validation_error("pca2: need at least 3 rows");
  if (X.cols() < 2) throw validation_error("pca2: need at least 2 columns");

  const nn::Mat centered = X.rowwise() - X.colwise().mean();
  Eigen::BDCSVD<nn::Mat> svd(centered,
                             Eigen::ComputeThinU | Eigen::ComputeThinV);
  const nn::Vec& sv = svd.singularValues();
  const double total = sv.array().square().sum();
  if (total <= 0.0) {
    throw degenerate_data_error("pca2: population has zero variance");
  }

  Projection2D proj;
  proj.method = ProjectionMethod::pca;
  nn::Mat components = svd.matrixV().leftCols(2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    for (Eigen::Index r = 0; r < components.rows(); ++r) {
      if (components(r, c) != 0.0) {
        if (components(r, c) < 0.0) components.col(c) = -components.col(c);
        break;
      }
    }
  }
  proj.points = centered * components;
  proj.explained_variance = {sv(0) * sv(0) / total, sv(1) * sv(1) / total};
  return proj;
}

namespace detail {

inline nn::Mat pairwise_sq_dists(const nn::Mat& X) {
  const nn::Vec sq = X.rowwise().squaredNorm();
  nn::Mat d = -2.0 * X * X.transpose();
  d.colwise() += sq;
  d.rowwise() += sq.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace detail

// Row-conditional Gaussian affinities, each row's bandwidth binary-searched
// until exp(entropy) matches the target perplexity to 1e-5.
inline nn::Mat tsne_affinities(const nn::Mat& X, double perplexity) {
  const Eigen::Index n = X.rows();
  if (perplexity <= 0.0) {
    throw validation_error("tsne: perplexity must be positive");
  }
  if (static_cast<double>(n) < 3.0 * perplexity) {
    throw validation_error("tsne: perplexity too large for population size");
  }
  const nn::Mat D = detail::pairwise_sq_dists(X);
  nn::Mat P = nn::Mat::Zero(n, n);
  const double target = perplexity;

  std::vector<double> d(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t k = 0;
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      d[k++] = D(i, j);
      dmin = std::min(dmin, D(i, j));
    }
    // shifting by the nearest neighbour keeps the largest weight at 1
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double sum = 0.0, avg = 0.0;
    for (int iter = 0; iter < 1000; ++iter) {
      sum = 0.0;
      avg = 0.0;
      for (const double dj : d) {
        const double w = std::exp(-beta * (dj - dmin));
        sum += w;
        avg += w * (dj - dmin);
      }
      avg /= sum;
      const double entropy = std::log(sum) + beta * avg;
      const double perp = std::exp(entropy);
      if (std::abs(perp - target) <= 1e-5) break;
      if (perp > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      P(i, j) = std::exp(-beta * (d[k++] - dmin)) / sum;
    }
  }
  return P;
}

// Exact t-SNE: symmetrized joint affinities, Student-t (1 dof) output
// kernel, gradient descent with momentum (0.5 then 0.8 after step 250)
// and 12x early exaggeration over the first 250 steps; learning rate n/12.
inline Projection2D tsne2(const nn::Mat& X, double perplexity = 30.0,
                          int iterations = 1000, std::uint64_t seed = 0) {
  const Eigen::Index n = X.rows();
  if (iterations < 1) throw validation_error("tsne: iterations must be >= 1");
  const nn::Mat cond = tsne_affinities(X, perplexity);
  nn::Mat P = (cond + cond.transpose()) / (2.0 * static_cast<double>(n));

  Rng rng(seed);
  nn::Mat Y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    Y(i, 0) = 1e-4 * rng.gaussian();
    Y(i, 1) = 1e-4 * rng.gaussian();
  }

  const double lr = static_cast<double>(n) / 12.0;
  const int exaggerate_until = std::min(iterations, 250);
  nn::Mat velocity = nn::Mat::Zero(n, 2);
  nn::Mat gains = nn::Mat::Ones(n, 2);
  nn::Mat num(n, n), Q(n, n), grad(n, 2);
  for (int step = 0; step < iterations; ++step) {
    num = (1.0 + detail::pairwise_sq_dists(Y).array()).inverse().matrix();
    num.diagonal().setZero();
    Q = num / num.sum();

    const double exaggeration = step < exaggerate_until ? 12.0 : 1.0;
    const nn::Mat S = ((exaggeration * P - Q).array() * num.array()).matrix();
    // grad_i = 4 sum_j S_ij (y_i - y_j)
    grad = 4.0 * (S.rowwise().sum().asDiagonal() * Y - S * Y);

    // per-coordinate gains grow while the gradient keeps its direction
    gains = ((grad.array() * velocity.array() < 0.0)
                 .select(gains.array() + 0.2, gains.array() * 0.8))
                .max(0.01)
                .matrix();
    const double momentum = step < 250 ? 0.5 : 0.8;
    velocity = momentum * velocity -
               lr * (gains.array() * grad.array()).matrix();
    Y += velocity;
    Y.rowwise() -= Y.colwise().mean();
  }

  num = (1.0 + detail::pairwise_sq_dists(Y).array()).inverse().matrix();
  num.diagonal().setZero();
  Q = num / num.sum();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (P(i, j) > 0.0) kl += P(i, j) * std::log(P(i, j) / Q(i, j));
    }
  }

  Projection2D proj;
  proj.method = ProjectionMethod::tsne;
  proj.points = std::move(Y);
  proj.perplexity = perplexity;
  proj.iterations = iterations;
  proj.kl = kl;
  return proj;
}

// --- distribution distance ---------------------------------------------

// Exact 1-D empirical Wasserstein-1 distance: the area between the two
// empirical CDFs, which are constant between pooled sample values.
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) {
    throw validation_error("wasserstein1: empty sample");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double dist = 0.0;
  std::size_t ia = 0, ib = 0;
  double prev = std::min(a.front(), b.front());
  while (ia < a.size() || ib < b.size()) {
    double x;
    if (ib == b.size() || (ia < a.size() && a[ia] <= b[ib])) {
      x = a[ia];
    } else {
      x = b[ib];
    }
    dist += std::abs(static_cast<double>(ia) / na -
                     static_cast<double>(ib) / nb) *
            (x - prev);
    while (ia < a.size() && a[ia] == x) ++ia;
    while (ib < b.size() && b[ib] == x) ++ib;
    prev = x;
  }
  return dist;
}

// --- feature histograms -----------------------------------------------

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {"md", "pa", "ad_md"};
  return names;
}

inline double feature_value(const KinematicFeatures& f,
                            const std::string& name) {
  if (name == "md") return f.md;
  if (name == "pa") return f.pa;
  if (name == "ad_md") return f.ad_md;
  throw validation_error("unknown feature: " + name);
}

struct HistogramCell {
  ClassLabel label;
  std::string feature;
  std::vector<double> edges;  // bins + 1 ascending
  std::vector<int> count_real;
  std::vector<int> count_synth;
  double w1 = 0.0;  // real vs synthetic on the raw values
};

struct FeatureHistograms {
  std::vector<HistogramCell> cells;
  std::vector<std::string> warnings;
};

namespace detail {

// linearly interpolated quantile of a sorted sample
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Freedman-Diaconis edges over the pooled sample, with a single bin for
// degenerate spreads
inline std::vector<double> fd_edges(std::vector<double> pooled) {
  std::sort(pooled.begin(), pooled.end());
  const double lo = pooled.front(), hi = pooled.back();
  if (hi == lo) return {lo - 0.5, hi + 0.5};
  const double iqr =
      quantile_sorted(pooled, 0.75) - quantile_sorted(pooled, 0.25);
  const double width =
      2.0 * iqr / std::cbrt(static_cast<double>(pooled.size()));
  std::size_t bins = 1;
  if (width > 0.0) {
    bins = static_cast<std::size_t>(std::ceil((hi - lo) / width));
  } else {
    bins = static_cast<std::size_t>(
        std::ceil(std::log2(static_cast<double>(pooled.size())))) + 1;
  }
  bins = std::max<std::size_t>(bins, 1);
  std::vector<double> edges(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) {
    edges[k] = lo + (hi - lo) * static_cast<double>(k) /
                        static_cast<double>(bins);
  }
  return edges;
}

inline std::vector<int> bin_counts(const std::vector<double>& values,
                                   const std::vector<double>& edges) {
  std::vector<int> counts(edges.size() - 1, 0);
  for (const double v : values) {
    if (v < edges.front() || v > edges.back()) continue;
    std::size_t k = static_cast<std::size_t>(
        std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
    k = k == 0 ? 0 : k - 1;                        // v == edges.front()
    k = std::min(k, counts.size() - 1);            // v == edges.back()
    ++counts[k];
  }
  return counts;
}

}  // namespace detail

// Shared-binning histograms and Wasserstein-1 distances per class and
// feature. A class missing from either source drops its cells with a
// warning instead of failing the whole report.
inline FeatureHistograms feature_histograms(const TrialSet& real,
                                            const TrialSet& synthetic) {
  FeatureHistograms out;
  for (const ClassLabel& label : ClassLabel::all()) {
    const std::vector<const Trial*> r = real.of_class(label);
    const std::vector<const Trial*> s = synthetic.of_class(label);
    if (r.empty() || s.empty()) {
      out.warnings.push_back("class " + label.str() + " omitted: missing " +
                             (r.empty() ? "real" : "synthetic") + " trials");
      continue;
    }
    for (const std::string& feat : feature_names()) {
      HistogramCell cell;
      cell.label = label;
      cell.feature = feat;
      std::vector<double> rv, sv;
      for (const Trial* t : r) rv.push_back(feature_value(features(*t), feat));
      for (const Trial* t : s) sv.push_back(feature_value(features(*t), feat));
      std::vector<double> pooled = rv;
      pooled.insert(pooled.end(), sv.begin(), sv.end());
      cell.edges = detail::fd_edges(std::move(pooled));
      cell.count_real = detail::bin_counts(rv, cell.edges);
      cell.count_synth = detail::bin_counts(sv, cell.edges);
      cell.w1 = wasserstein1(std::move(rv), std::move(sv));
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

// --- report emission -----------------------------------------------------

struct PopulationPoint {
  std::string trial_id;
  Provenance source = Provenance::real;
  ClassLabel label;
};

struct Population {
  nn::Mat X;  // n x L, co-padded flattened profiles
  std::vector<PopulationPoint> points;
};

// Flattens every trial of every set to the global maximum length so real
// and synthetic rows live in one comparable space.
inline Population joint_population(const std::vector<const TrialSet*>& sets) {
  std::size_t longest = 0, total = 0;
  for (const TrialSet* set : sets) {
    for (const Trial& t : set->trials) {
      longest = std::max(longest, t.v.size());
      ++total;
    }
  }
  if (total == 0) throw validation_error("joint_population: no trials");
  Population pop;
  pop.X = nn::Mat::Zero(static_cast<Eigen::Index>(total),
                        static_cast<Eigen::Index>(longest));
  Eigen::Index row = 0;
  for (const TrialSet* set : sets) {
    for (const Trial& t : set->trials) {
      for (std::size_t k = 0; k < t.v.size(); ++k) {
        pop.X(row, static_cast<Eigen::Index>(k)) = t.v[k];
      }
      pop.points.push_back({t.trial_id, set->provenance, t.label});
      ++row;
    }
  }
  return pop;
}

inline std::string projection_to_csv(const Projection2D& proj,
                                     const std::vector<PopulationPoint>& points) {
  if (static_cast<std::size_t>(proj.points.rows()) != points.size()) {
    throw shape_error("projection_to_csv: point/metadata count mismatch");
  }
  std::string out = "point_id,source,class,dim1,dim2\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    out += points[i].trial_id + "," + provenance_str(points[i].source) + "," +
           points[i].label.str() + "," + format_double(proj.points(r, 0)) +
           "," + format_double(proj.points(r, 1)) + "\n";
  }
  return out;
}

inline nlohmann::ordered_json projection_metadata_json(const Projection2D& p) {
  nlohmann::ordered_json j;
  j["method"] = p.method == ProjectionMethod::pca ? "PCA" : "TSNE";
  j["points"] = p.points.rows();
  if (p.method == ProjectionMethod::pca) {
    j["explained_variance"] = p.explained_variance;
  } else {
    j["perplexity"] = p.perplexity;
    j["iterations"] = p.iterations;
    j["kl_divergence"] = p.kl;
  }
  return j;
}

inline std::string histograms_to_csv(const FeatureHistograms& h) {
  std::string out = "class,feature,bin_left,bin_right,count_real,count_synth\n";
  for (const HistogramCell& cell : h.cells) {
    for (std::size_t k = 0; k + 1 < cell.edges.size(); ++k) {
      out += cell.label.str() + "," + cell.feature + "," +
             format_double(cell.edges[k]) + "," +
             format_double(cell.edges[k + 1]) + "," +
             std::to_string(cell.count_real[k]) + "," +
             std::to_string(cell.count_synth[k]) + "\n";
    }
  }
  return out;
}

inline nlohmann::ordered_json distances_json(const FeatureHistograms& h) {
  nlohmann::ordered_json j;
  j["wasserstein1"] = nlohmann::ordered_json::array();
  for (const HistogramCell& cell : h.cells) {
    j["wasserstein1"].push_back({{"class", cell.label.str()},
                                 {"feature", cell.feature},
                                 {"distance", cell.w1}});
  }
  j["warnings"] = h.warnings;
  return j;
}

}  // namespace kinegen
