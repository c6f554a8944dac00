#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kinegen/common.hpp"
#include "kinegen/types.hpp"

namespace kinegen {

// Sub-threshold ends below this value are considered rest, both when
// restoring natural trial lengths and when the surrogate plants its
// boundary samples.
inline constexpr double trim_threshold = 0.005;  // m/s

// Peaks under this absolute floor are treated as noise, not movements.
inline constexpr double segment_peak_floor = 0.05;  // m/s

// Zero-padded per-class matrix, rows are trials.
struct PaddedBatch {
  ClassLabel label;
  Eigen::Index length = 0;                 // padded length = max original
  Eigen::MatrixXd rows;                    // n x length
  std::vector<Eigen::Index> original_lengths;
  double rate = 22.0;
};

// Euclidean magnitude of the 3-D velocity, elementwise over the sequence.
inline std::vector<double> velocity_norm(const std::vector<double>& vx,
                                         const std::vector<double>& vy,
                                         const std::vector<double>& vz) {
  if (vx.size() != vy.size() || vx.size() != vz.size()) {
    throw shape_error("velocity components must have equal length");
  }
  std::vector<double> out(vx.size());
  for (std::size_t t = 0; t < vx.size(); ++t) {
    if (!std::isfinite(vx[t]) || !std::isfinite(vy[t]) ||
        !std::isfinite(vz[t])) {
      throw validation_error("velocity components must be finite");
    }
    out[t] = std::sqrt(vx[t] * vx[t] + vy[t] * vy[t] + vz[t] * vz[t]);
  }
  return out;
}

namespace detail {

// central differences inside, one-sided at the ends
inline std::vector<double> differentiate_channel(const std::vector<double>& p,
                                                 double rate) {
  const std::size_t n = p.size();
  std::vector<double> v(n);
  v[0] = (p[1] - p[0]) * rate;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    v[i] = (p[i + 1] - p[i - 1]) * rate * 0.5;
  }
  v[n - 1] = (p[n - 1] - p[n - 2]) * rate;
  return v;
}

}  // namespace detail

inline RawRecording differentiate(const RawRecording& positions) {
  positions.validate();
  if (positions.channel_kind != ChannelKind::position) {
    throw validation_error("differentiate expects a position recording");
  }
  if (positions.x.size() < 3) {
    throw validation_error("differentiate needs >= 3 samples");
  }
  RawRecording out;
  out.recording_id = positions.recording_id;
  out.rate = positions.rate;
  out.channel_kind = ChannelKind::velocity;
  out.x = detail::differentiate_channel(positions.x, positions.rate);
  out.y = detail::differentiate_channel(positions.y, positions.rate);
  out.z = detail::differentiate_channel(positions.z, positions.rate);
  return out;
}

struct Span {
  std::size_t start = 0;  // first sample below 5% of the peak (or edge)
  std::size_t end = 0;    // last index of the span, inclusive
};

// Cuts a continuous velocity-norm stream into movements. Local maxima at
// or above the absolute floor seed spans; each span extends outward from
// its peak until the stream drops below 5% of that peak. Spans that touch
// or overlap belong to the same movement and merge.
inline std::vector<Span> segment(const std::vector<double>& stream,
                                 double rate) {
  (void)rate;
  const std::size_t n = stream.size();
  for (double s : stream) {
    if (!std::isfinite(s) || s < 0.0) {
      throw validation_error("segment expects a nonnegative finite stream");
    }
  }
  if (n < 3) return {};

  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (stream[i] < segment_peak_floor) continue;
    if (stream[i] >= stream[i - 1] && stream[i] >= stream[i + 1] &&
        (stream[i] > stream[i - 1] || stream[i] > stream[i + 1])) {
      // plateau maxima count once, at their left edge
      if (stream[i] == stream[i - 1]) continue;
      peaks.push_back(i);
    }
  }

  std::vector<Span> spans;
  for (std::size_t p : peaks) {
    const double cut = 0.05 * stream[p];
    std::size_t lo = p;
    while (lo > 0 && stream[lo] >= cut) --lo;
    std::size_t hi = p;
    while (hi + 1 < n && stream[hi] >= cut) ++hi;
    spans.push_back({lo, hi});
  }

  // merge overlapping spans (same movement seen from several peaks)
  std::vector<Span> merged;
  for (const Span& s : spans) {
    if (!merged.empty() && s.start <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, s.end);
    } else {
      merged.push_back(s);
    }
  }
  return merged;
}

// Removes the maximal sub-threshold prefix and suffix; interior samples
// are untouched.
inline std::vector<double> trim(const std::vector<double>& row) {
  for (double s : row) {
    if (!std::isfinite(s)) throw validation_error("trim expects finite values");
  }
  std::size_t lo = 0;
  while (lo < row.size() && row[lo] < trim_threshold) ++lo;
  if (lo == row.size()) {
    throw degenerate_data_error(
        "trial is entirely below the trim threshold");
  }
  std::size_t hi = row.size();
  while (hi > lo && row[hi - 1] < trim_threshold) --hi;
  return std::vector<double>(row.begin() + static_cast<std::ptrdiff_t>(lo),
                             row.begin() + static_cast<std::ptrdiff_t>(hi));
}

inline Trial trim(const Trial& trial) {
  Trial out = trial;
  out.v = trim(trial.v);
  return out;
}

// Right-pads every trial of one class with zeros to the longest length.
inline PaddedBatch pad_class(const std::vector<Trial>& trials) {
  if (trials.empty()) throw validation_error("pad_class: empty trial list");
  PaddedBatch batch;
  batch.label = trials.front().label;
  batch.rate = trials.front().rate;
  Eigen::Index longest = 0;
  for (const Trial& t : trials) {
    if (!(t.label == batch.label)) {
      throw validation_error("pad_class: mixed class labels");
    }
    t.validate();
    longest = std::max(longest, static_cast<Eigen::Index>(t.v.size()));
  }
  batch.length = longest;
  batch.rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(trials.size()),
                                     longest);
  batch.original_lengths.reserve(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto len = static_cast<Eigen::Index>(trials[i].v.size());
    for (Eigen::Index t = 0; t < len; ++t) {
      batch.rows(static_cast<Eigen::Index>(i), t) =
          trials[i].v[static_cast<std::size_t>(t)];
    }
    batch.original_lengths.push_back(len);
  }
  return batch;
}

inline PaddedBatch pad_class(const std::vector<const Trial*>& trials) {
  std::vector<Trial> owned;
  owned.reserve(trials.size());
  for (const Trial* t : trials) owned.push_back(*t);
  return pad_class(owned);
}

}  // namespace kinegen
