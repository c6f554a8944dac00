#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kinegen/analysis.hpp"
#include "kinegen/csv.hpp"
#include "kinegen/types.hpp"

namespace kinegen::svg {

// Static, self-contained SVG emission. Every function is a pure function
// of its inputs (no timestamps, no randomness) so plot files take part in
// the byte-identical rerun guarantee.

inline const char* class_color(std::size_t class_idx) {
  static const char* palette[4] = {"#1f77b4", "#2ca02c", "#ff7f0e",
                                   "#d62728"};
  return palette[class_idx % 4];
}

namespace detail {

struct Frame {
  double px, py, pw, ph;            // pixel rectangle
  double x0, x1, y0, y1;            // data rectangle
  double x(double v) const { return px + (v - x0) / (x1 - x0) * pw; }
  double y(double v) const { return py + ph - (v - y0) / (y1 - y0) * ph; }
};

inline std::string num(double v) { return format_double(v); }

inline void pad_range(double& lo, double& hi) {
  if (hi <= lo) {
    lo -= 0.5;
    hi += 0.5;
    return;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

inline std::string frame_box(const Frame& f, const std::string& title) {
  std::string s;
  s += "<rect x=\"" + num(f.px) + "\" y=\"" + num(f.py) + "\" width=\"" +
       num(f.pw) + "\" height=\"" + num(f.ph) +
       "\" fill=\"none\" stroke=\"#888\"/>\n";
  s += "<text x=\"" + num(f.px + f.pw / 2) + "\" y=\"" + num(f.py - 6) +
       "\" text-anchor=\"middle\" font-size=\"13\">" + title + "</text>\n";
  // corner ticks tell the reader the data range
  s += "<text x=\"" + num(f.px) + "\" y=\"" + num(f.py + f.ph + 14) +
       "\" font-size=\"10\">" + num(f.x0) + "</text>\n";
  s += "<text x=\"" + num(f.px + f.pw) + "\" y=\"" + num(f.py + f.ph + 14) +
       "\" text-anchor=\"end\" font-size=\"10\">" + num(f.x1) + "</text>\n";
  s += "<text x=\"" + num(f.px - 4) + "\" y=\"" + num(f.py + f.ph) +
       "\" text-anchor=\"end\" font-size=\"10\">" + num(f.y0) + "</text>\n";
  s += "<text x=\"" + num(f.px - 4) + "\" y=\"" + num(f.py + 10) +
       "\" text-anchor=\"end\" font-size=\"10\">" + num(f.y1) + "</text>\n";
  return s;
}

inline std::string open_svg(double w, double h, const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) +
         "\" height=\"" + num(h) + "\" viewBox=\"0 0 " + num(w) + " " +
         num(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
         "<text x=\"" + num(w / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" + title +
         "</text>\n";
}

}  // namespace detail

// One band per source: mean curve with a +-1 std envelope.
struct ProfileBand {
  std::string label;
  std::string color;
  MeanProfile profile;
  double rate = 22.0;
};

struct ProfilePanel {
  std::string title;
  std::vector<ProfileBand> bands;
};

// 2x2 grid of per-class mean-profile panels.
inline std::string profile_grid_svg(const std::string& title,
                                    const std::vector<ProfilePanel>& panels) {
  const double W = 760, H = 560;
  std::string s = detail::open_svg(W, H, title);
  const int cols = 2;
  const double cell_w = (W - 60) / cols, cell_h = (H - 60) / 2;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const ProfilePanel& panel = panels[p];
    double xmax = 1.0, ymax = 0.0;
    for (const ProfileBand& b : panel.bands) {
      xmax = std::max(
          xmax, static_cast<double>(b.profile.mean.size() - 1) / b.rate);
      ymax = std::max(ymax, (b.profile.mean + b.profile.std).maxCoeff());
    }
    double x0 = 0.0, y0 = 0.0;
    detail::pad_range(x0, xmax);
    detail::pad_range(y0, ymax);
    detail::Frame f{60 + cell_w * static_cast<double>(p % cols) + 10,
                    50 + cell_h * static_cast<double>(p / cols) + 10,
                    cell_w - 40, cell_h - 50, x0, xmax, y0, ymax};
    s += detail::frame_box(f, panel.title);
    for (const ProfileBand& b : panel.bands) {
      const Eigen::Index n = b.profile.mean.size();
      std::string upper, lower, mean;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / b.rate;
        const double m = b.profile.mean(i), sd = b.profile.std(i);
        mean += (i ? " " : "") + detail::num(f.x(t)) + "," +
                detail::num(f.y(m));
        upper += (i ? " " : "") + detail::num(f.x(t)) + "," +
                 detail::num(f.y(m + sd));
        lower = detail::num(f.x(t)) + "," + detail::num(f.y(m - sd)) +
                (i ? " " : "") + lower;
      }
      s += "<polygon points=\"" + upper + " " + lower + "\" fill=\"" +
           b.color + "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
      s += "<polyline points=\"" + mean + "\" fill=\"none\" stroke=\"" +
           b.color + "\" stroke-width=\"1.5\"/>\n";
    }
    // per-panel legend
    double ly = f.py + 14;
    for (const ProfileBand& b : panel.bands) {
      s += "<line x1=\"" + detail::num(f.px + f.pw - 86) + "\" y1=\"" +
           detail::num(ly - 4) + "\" x2=\"" + detail::num(f.px + f.pw - 66) +
           "\" y2=\"" + detail::num(ly - 4) + "\" stroke=\"" + b.color +
           "\" stroke-width=\"2\"/>\n";
      s += "<text x=\"" + detail::num(f.px + f.pw - 62) + "\" y=\"" +
           detail::num(ly) + "\" font-size=\"10\">" + b.label + "</text>\n";
      ly += 14;
    }
  }
  return s + "</svg>\n";
}

struct ScatterPoint {
  double x = 0.0, y = 0.0;
  std::size_t class_idx = 0;
  bool synthetic = false;
};

// Projection scatter: color by class, hollow markers for synthetic points.
inline std::string scatter_svg(const std::string& title,
                               const std::vector<ScatterPoint>& points) {
  const double W = 640, H = 560;
  std::string s = detail::open_svg(W, H, title);
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (!points.empty()) {
    x0 = x1 = points[0].x;
    y0 = y1 = points[0].y;
    for (const ScatterPoint& p : points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  detail::pad_range(x0, x1);
  detail::pad_range(y0, y1);
  detail::Frame f{70, 50, W - 100, H - 160, x0, x1, y0, y1};
  s += detail::frame_box(f, "");
  for (const ScatterPoint& p : points) {
    const char* color = class_color(p.class_idx);
    s += "<circle cx=\"" + detail::num(f.x(p.x)) + "\" cy=\"" +
         detail::num(f.y(p.y)) + "\" r=\"3\"";
    if (p.synthetic) {
      s += " fill=\"none\" stroke=\"" + std::string(color) + "\"/>\n";
    } else {
      s += " fill=\"" + std::string(color) + "\" fill-opacity=\"0.7\"/>\n";
    }
  }
  // legend: classes then marker meaning
  const auto labels = ClassLabel::all();
  double lx = 70;
  const double ly = H - 70;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    s += "<circle cx=\"" + detail::num(lx) + "\" cy=\"" + detail::num(ly) +
         "\" r=\"4\" fill=\"" + class_color(c) + "\"/>\n";
    s += "<text x=\"" + detail::num(lx + 8) + "\" y=\"" +
         detail::num(ly + 4) + "\" font-size=\"11\">" + labels[c].str() +
         "</text>\n";
    lx += 110;
  }
  s += "<circle cx=\"70\" cy=\"" + detail::num(ly + 24) +
       "\" r=\"4\" fill=\"#555\"/>\n<text x=\"78\" y=\"" +
       detail::num(ly + 28) + "\" font-size=\"11\">real</text>\n";
  s += "<circle cx=\"180\" cy=\"" + detail::num(ly + 24) +
       "\" r=\"4\" fill=\"none\" stroke=\"#555\"/>\n<text x=\"188\" y=\"" +
       detail::num(ly + 28) + "\" font-size=\"11\">synthetic</text>\n";
  return s + "</svg>\n";
}

struct HistogramPanel {
  std::string title;
  std::vector<double> edges;
  std::vector<int> count_real;
  std::vector<int> count_synth;
};

// 2x2 grid of paired real/synthetic histograms (one feature, all classes).
inline std::string histogram_grid_svg(const std::string& title,
                                      const std::vector<HistogramPanel>& panels) {
  const double W = 760, H = 560;
  std::string s = detail::open_svg(W, H, title);
  const int cols = 2;
  const double cell_w = (W - 60) / cols, cell_h = (H - 60) / 2;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const HistogramPanel& panel = panels[p];
    int cmax = 1;
    for (int c : panel.count_real) cmax = std::max(cmax, c);
    for (int c : panel.count_synth) cmax = std::max(cmax, c);
    double x0 = panel.edges.front(), x1 = panel.edges.back();
    detail::pad_range(x0, x1);
    detail::Frame f{60 + cell_w * static_cast<double>(p % cols) + 10,
                    50 + cell_h * static_cast<double>(p / cols) + 10,
                    cell_w - 40, cell_h - 50, x0, x1, 0.0,
                    static_cast<double>(cmax) * 1.05};
    s += detail::frame_box(f, panel.title);
    for (std::size_t k = 0; k + 1 < panel.edges.size(); ++k) {
      const double bl = panel.edges[k], br = panel.edges[k + 1];
      const double half = (br - bl) / 2.0;
      const double yb = f.y(0.0);
      const double yr = f.y(panel.count_real[k]);
      const double ys = f.y(panel.count_synth[k]);
      s += "<rect x=\"" + detail::num(f.x(bl)) + "\" y=\"" +
           detail::num(yr) + "\" width=\"" +
           detail::num(f.x(bl + half) - f.x(bl)) + "\" height=\"" +
           detail::num(yb - yr) + "\" fill=\"#1f77b4\" fill-opacity=\"0.8\"/>\n";
      s += "<rect x=\"" + detail::num(f.x(bl + half)) + "\" y=\"" +
           detail::num(ys) + "\" width=\"" +
           detail::num(f.x(br) - f.x(bl + half)) + "\" height=\"" +
           detail::num(yb - ys) + "\" fill=\"#ff7f0e\" fill-opacity=\"0.8\"/>\n";
    }
  }
  s += "<rect x=\"60\" y=\"" + detail::num(H - 24) +
       "\" width=\"12\" height=\"12\" fill=\"#1f77b4\"/>\n<text x=\"76\" y=\"" +
       detail::num(H - 14) + "\" font-size=\"11\">real</text>\n";
  s += "<rect x=\"130\" y=\"" + detail::num(H - 24) +
       "\" width=\"12\" height=\"12\" fill=\"#ff7f0e\"/>\n<text x=\"146\" y=\"" +
       detail::num(H - 14) + "\" font-size=\"11\">synthetic</text>\n";
  return s + "</svg>\n";
}

}  // namespace kinegen::svg
