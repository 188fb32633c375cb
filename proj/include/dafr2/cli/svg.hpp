#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace dafr2::cli::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x, y;
};

struct Range {
  double lo = 0.0, hi = 1.0;
  void include(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

class Canvas {
 public:
  Canvas(double width, double height) : w_(width), h_(height) {}

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, bool dashed = false) {
    body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke + "\"" +
             (dashed ? " stroke-dasharray=\"4 3\"" : "") + "/>\n";
  }
  void dot(double x, double y, const std::string& fill, double r = 2.0) {
    body_ += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) + "\" fill=\"" + fill + "\" fill-opacity=\"0.6\"/>\n";
  }
  void text(double x, double y, std::string_view s, int size = 11, const char* anchor = "start") {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" + std::to_string(size) +
             "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
  }
  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w_) + "\" height=\"" + num(h_) + "\" viewBox=\"0 0 " + num(w_) + " " +
           num(h_) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + body_ + "</svg>\n";
  }

 private:
  double w_, h_;
  std::string body_;
};

/// One scatter panel inside a canvas, with a frame and axis labels.
struct Panel {
  double x0, y0, w, h;
  Range xr, yr;

  double px(double v) const { return x0 + (v - xr.lo) / (xr.hi - xr.lo) * w; }
  double py(double v) const { return y0 + h - (v - yr.lo) / (yr.hi - yr.lo) * h; }

  void frame(Canvas& c, std::string_view title, std::string_view xlabel, std::string_view ylabel) const {
    c.line(x0, y0 + h, x0 + w, y0 + h, "#333");
    c.line(x0, y0, x0, y0 + h, "#333");
    c.text(x0 + w / 2, y0 - 8, title, 12, "middle");
    c.text(x0 + w / 2, y0 + h + 30, xlabel, 11, "middle");
    c.text(x0 - 36, y0 + h / 2, ylabel, 11, "middle");
    c.text(x0, y0 + h + 14, num(xr.lo), 9, "middle");
    c.text(x0 + w, y0 + h + 14, num(xr.hi), 9, "middle");
    c.text(x0 - 4, y0 + h, num(yr.lo), 9, "end");
    c.text(x0 - 4, y0 + 8, num(yr.hi), 9, "end");
  }
};

inline Range padded(Range r) {
  if (!(r.hi > r.lo)) r.hi = r.lo + 1.0;
  const double pad = 0.04 * (r.hi - r.lo);
  return {r.lo - pad, r.hi + pad};
}

/// Baseline value on x, adapted value on y, with the 45-degree line.
inline std::string scatter_plot(const std::string& title, const std::vector<Series>& series, const std::string& axis_name) {
  Range r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& s : series) {
    for (double v : s.x) r.include(v);
    for (double v : s.y) r.include(v);
  }
  if (!std::isfinite(r.lo)) r = {0.0, 1.0};
  r = padded(r);
  Canvas c(460, 440);
  Panel p{70, 40, 340, 320, r, r};
  p.frame(c, title, "baseline " + axis_name, "adapted " + axis_name);
  c.line(p.px(r.lo), p.py(r.lo), p.px(r.hi), p.py(r.hi), "#888", true);
  double ly = 60;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) c.dot(p.px(s.x[i]), p.py(s.y[i]), s.color);
    c.dot(p.x0 + 12, ly - 4, s.color, 4);
    c.text(p.x0 + 20, ly, s.label + " (" + std::to_string(s.x.size()) + ")", 10);
    ly += 14;
  }
  return c.str();
}

/// Side-by-side 2-D point clouds, one panel per entry.
inline std::string cloud_panels(const std::string& title, const std::vector<std::pair<std::string, std::vector<Series>>>& panels) {
  const double pw = 300, ph = 280;
  Canvas c(80 + panels.size() * (pw + 60), ph + 110);
  c.text(40, 20, title, 13);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    Range xr{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}, yr = xr;
    for (const auto& s : panels[k].second) {
      for (double v : s.x) xr.include(v);
      for (double v : s.y) yr.include(v);
    }
    if (!std::isfinite(xr.lo)) xr = {0, 1};
    if (!std::isfinite(yr.lo)) yr = {0, 1};
    Panel p{60 + k * (pw + 60), 50, pw, ph, padded(xr), padded(yr)};
    p.frame(c, panels[k].first, "z1", "z2");
    double ly = p.y0 + 14;
    for (const auto& s : panels[k].second) {
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) c.dot(p.px(s.x[i]), p.py(s.y[i]), s.color, 1.6);
      c.dot(p.x0 + 12, ly - 4, s.color, 4);
      c.text(p.x0 + 20, ly, s.label, 10);
      ly += 14;
    }
  }
  return c.str();
}

/// Grouped bars: one group per category, one bar per series value.
inline std::string bar_chart(const std::string& title, const std::vector<std::string>& categories, const std::vector<Series>& series,
                             const std::string& ylabel) {
  const double gw = 26.0 * static_cast<double>(std::max<std::size_t>(series.size(), 1)) + 24.0;
  const double pw = std::max(300.0, gw * static_cast<double>(categories.size()));
  Canvas c(pw + 120, 420);
  Range yr{0.0, 1.0};
  for (const auto& s : series)
    for (double v : s.y) yr.include(v);
  Panel p{70, 40, pw, 280, {0, 1}, yr};
  p.frame(c, title, "", ylabel);
  for (std::size_t k = 0; k < categories.size(); ++k) {
    const double gx = p.x0 + 12 + static_cast<double>(k) * gw;
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (k >= series[s].y.size() || !std::isfinite(series[s].y[k])) continue;
      const double v = series[s].y[k];
      const double top = p.py(std::max(v, 0.0)), base = p.py(std::min(v, 0.0));
      c.rect(gx + 26.0 * static_cast<double>(s), top, 22, base - top, series[s].color);
    }
    c.text(gx + gw / 2 - 12, p.y0 + p.h + 14, categories[k], 9, "middle");
  }
  double lx = p.x0 + 10;
  for (const auto& s : series) {
    c.rect(lx, 380, 10, 10, s.color);
    c.text(lx + 14, 389, s.label, 10);
    lx += 120;
  }
  return c.str();
}

}  // namespace dafr2::cli::svg
