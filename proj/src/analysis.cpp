// Copyright 2026 The U2S Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "u2s/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "u2s/error.hpp"
#include "u2s/format.hpp"
#include "u2s/masknet.hpp"

namespace u2s {
namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  std::string s(buf, res.ptr);
  return s == "-0.00" ? "0.00" : s;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Svg {
 public:
  Svg(double width, double height) {
    o_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width) << "\" height=\""
       << fixed(height) << "\" viewBox=\"0 0 " << fixed(width) << " " << fixed(height)
       << "\">\n";
    rect(0, 0, width, height, "#ffffff");
  }

  void rect(double x, double y, double w, double h, std::string_view fill,
            std::string_view stroke = "") {
    o_ << "<rect x=\"" << fixed(x) << "\" y=\"" << fixed(y) << "\" width=\"" << fixed(w)
       << "\" height=\"" << fixed(h) << "\" fill=\"" << fill << "\"";
    if (!stroke.empty()) o_ << " stroke=\"" << stroke << "\"";
    o_ << "/>\n";
  }

  void line(double x1, double y1, double x2, double y2, std::string_view stroke = "#000000") {
    o_ << "<line x1=\"" << fixed(x1) << "\" y1=\"" << fixed(y1) << "\" x2=\"" << fixed(x2)
       << "\" y2=\"" << fixed(y2) << "\" stroke=\"" << stroke << "\"/>\n";
  }

  void circle(double cx, double cy, double r, std::string_view fill) {
    o_ << "<circle cx=\"" << fixed(cx) << "\" cy=\"" << fixed(cy) << "\" r=\"" << fixed(r)
       << "\" fill=\"" << fill << "\"/>\n";
  }

  void polygon(std::span<const std::pair<double, double>> pts, std::string_view fill) {
    o_ << "<polygon points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      o_ << (i ? " " : "") << fixed(pts[i].first) << "," << fixed(pts[i].second);
    }
    o_ << "\" fill=\"" << fill << "\"/>\n";
  }

  void polyline(std::span<const std::pair<double, double>> pts, std::string_view stroke) {
    o_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      o_ << (i ? " " : "") << fixed(pts[i].first) << "," << fixed(pts[i].second);
    }
    o_ << "\"/>\n";
  }

  void text(double x, double y, std::string_view s, std::string_view anchor = "start",
            int size = 11) {
    o_ << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(y) << "\" font-family=\"sans-serif\""
       << " font-size=\"" << size << "\" text-anchor=\"" << anchor << "\">" << xml_escape(s)
       << "</text>\n";
  }

  std::string finish() {
    o_ << "</svg>\n";
    return o_.str();
  }

 private:
  std::ostringstream o_;
};

std::string gray(double v) {
  const int level = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 1.0))));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", level, level, level);
  return buf;
}

// Plot frame with unit axes; returns nothing, callers map data with to_x/to_y.
struct Frame {
  double left = 60, top = 40, width = 360, height = 280;
  double to_x(double v) const { return left + v * width; }
  double to_y(double v) const { return top + (1.0 - v) * height; }

  void draw(Svg& svg, std::string_view title, std::string_view xlabel,
            std::string_view ylabel) const {
    svg.text(left + width / 2, 22, title, "middle", 13);
    svg.rect(left, top, width, height, "none", "#000000");
    for (int i = 0; i <= 4; ++i) {
      const double v = i / 4.0;
      svg.line(to_x(v), top + height, to_x(v), top + height + 4);
      svg.text(to_x(v), top + height + 16, fixed(v), "middle", 10);
      svg.line(left - 4, to_y(v), left, to_y(v));
      svg.text(left - 6, to_y(v) + 3, fixed(v), "end", 10);
    }
    svg.text(left + width / 2, top + height + 34, xlabel, "middle");
    svg.text(14, top + height / 2, ylabel, "middle");
  }
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    fail(ErrorCode::kInvalidArgument, "pearson_correlation: " + std::to_string(x.size()) +
                                          " vs " + std::to_string(y.size()) + " values");
  }
  if (x.size() < 2) fail(ErrorCode::kInvalidArgument, "pearson_correlation needs two values");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<ScatterRecord> scatter_records(std::string_view source, const Tensor& similarity,
                                           std::span<const double> per_class_top1,
                                           std::span<const std::string> class_names) {
  const auto v = interclass_similarity_vector(similarity);
  if (per_class_top1.size() != v.size()) {
    fail(ErrorCode::kShape, "scatter_records: " + std::to_string(v.size()) + " classes but " +
                                std::to_string(per_class_top1.size()) + " accuracies");
  }
  std::vector<ScatterRecord> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    ScatterRecord r;
    r.class_index = static_cast<int>(k);
    r.class_name = k < class_names.size() ? class_names[k] : "class_" + std::to_string(k);
    r.similarity = v[k];
    r.accuracy = per_class_top1[k];
    r.source = source;
    out.push_back(std::move(r));
  }
  return out;
}

std::string scatter_csv(std::span<const ScatterRecord> records) {
  std::string out = "source,class,name,similarity,accuracy\n";
  for (const auto& r : records) {
    out += r.source + "," + std::to_string(r.class_index) + "," + r.class_name + "," +
           format_double(r.similarity) + "," + format_double(r.accuracy) + "\n";
  }
  return out;
}

std::string scatter_svg(std::span<const ScatterRecord> records, std::string_view title) {
  Svg svg(560, 380);
  Frame f;
  f.draw(svg, title, "interclass similarity", "top-1");
  std::vector<std::string> sources;
  for (const auto& r : records) {
    if (std::find(sources.begin(), sources.end(), r.source) == sources.end()) {
      sources.push_back(r.source);
    }
  }
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    std::vector<double> xs, ys;
    for (const auto& r : records) {
      if (r.source != sources[s]) continue;
      xs.push_back(r.similarity);
      ys.push_back(r.accuracy);
      const double x = f.to_x(r.similarity), y = f.to_y(r.accuracy);
      if (s % 2 == 0) {
        svg.circle(x, y, 4, color);
      } else {
        const std::pair<double, double> tri[] = {{x, y - 5}, {x - 4.5, y + 3.5}, {x + 4.5, y + 3.5}};
        svg.polygon(tri, color);
      }
    }
    const double r = xs.size() >= 2 ? pearson_correlation(xs, ys) : 0.0;
    const double ly = f.top + 14 + 16 * static_cast<double>(s);
    svg.circle(f.left + f.width + 16, ly - 4, 4, color);
    svg.text(f.left + f.width + 26, ly, sources[s] + " r=" + fixed(r));
  }
  return svg.finish();
}

Histogram make_histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0) fail(ErrorCode::kInvalidArgument, "histogram needs at least one bin");
  if (!(hi > lo)) fail(ErrorCode::kInvalidArgument, "histogram range must have hi > lo");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    double pos = std::floor((v - lo) / width);
    pos = std::clamp(pos, 0.0, static_cast<double>(bins - 1));
    ++h.counts[static_cast<std::size_t>(pos)];
  }
  return h;
}

std::vector<std::size_t> name_order(std::span<const std::string> names) {
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return names[a] < names[b]; });
  return order;
}

std::string matrix_csv(const Tensor& matrix, std::span<const std::string> names,
                       std::span<const std::size_t> order) {
  const std::size_t m = names.size();
  if (matrix.shape != Shape{m, m} || order.size() != m) {
    fail(ErrorCode::kShape, "matrix_csv: expected a " + std::to_string(m) + "x" +
                                std::to_string(m) + " matrix, got " + shape_string(matrix.shape));
  }
  std::string out = "name";
  for (std::size_t j : order) out += "," + names[j];
  out += "\n";
  for (std::size_t i : order) {
    out += names[i];
    for (std::size_t j : order) out += "," + format_double(matrix[i * m + j]);
    out += "\n";
  }
  return out;
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "lo,hi,count\n";
  const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out += format_double(h.lo + width * static_cast<double>(b)) + "," +
           format_double(h.lo + width * static_cast<double>(b + 1)) + "," +
           std::to_string(h.counts[b]) + "\n";
  }
  return out;
}

std::string matrix_svg(const Tensor& matrix, std::span<const std::string> names,
                       std::span<const std::size_t> order, std::string_view title) {
  const std::size_t m = names.size();
  if (matrix.shape != Shape{m, m} || order.size() != m) {
    fail(ErrorCode::kShape, "matrix_svg: matrix and names disagree");
  }
  const double cell = std::max(8.0, 320.0 / static_cast<double>(std::max<std::size_t>(m, 1)));
  const double left = 110, top = 40;
  Svg svg(left + cell * static_cast<double>(m) + 20, top + cell * static_cast<double>(m) + 20);
  svg.text(left + cell * static_cast<double>(m) / 2, 22, title, "middle", 13);
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t i = order[r];
    svg.text(left - 6, top + cell * (static_cast<double>(r) + 0.5) + 4, names[i], "end", 10);
    for (std::size_t c = 0; c < m; ++c) {
      svg.rect(left + cell * static_cast<double>(c), top + cell * static_cast<double>(r), cell,
               cell, gray(matrix[i * m + order[c]]));
    }
  }
  return svg.finish();
}

std::string histogram_svg(const Histogram& h, std::string_view title) {
  Svg svg(480, 360);
  Frame f{60, 40, 380, 260};
  const std::size_t peak = std::max<std::size_t>(
      1, h.counts.empty() ? 1 : *std::max_element(h.counts.begin(), h.counts.end()));
  svg.text(f.left + f.width / 2, 22, title, "middle", 13);
  svg.rect(f.left, f.top, f.width, f.height, "none", "#000000");
  const double bw = f.width / static_cast<double>(h.counts.size());
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double frac = static_cast<double>(h.counts[b]) / static_cast<double>(peak);
    svg.rect(f.left + bw * static_cast<double>(b), f.to_y(frac), bw, frac * f.height, "#1f77b4",
             "#ffffff");
  }
  svg.text(f.left, f.top + f.height + 16, fixed(h.lo), "middle", 10);
  svg.text(f.left + f.width, f.top + f.height + 16, fixed(h.hi), "middle", 10);
  svg.text(f.left - 6, f.top + 4, std::to_string(peak), "end", 10);
  svg.text(f.left + f.width / 2, f.top + f.height + 34, "weight similarity", "middle");
  return svg.finish();
}

std::vector<HeatmapRecord> mask_heatmaps(U2sModel& model, const Dataset& data,
                                         std::span<const std::size_t> samples,
                                         std::span<const int> classes, const Csm& csm,
                                         std::size_t frame) {
  const int m = model.config().num_classes;
  for (int c : classes) {
    if (c < 0 || c >= m) {
      fail(ErrorCode::kInvalidArgument, "mask_heatmaps: class " + std::to_string(c) +
                                            " outside [0, " + std::to_string(m) + ")");
    }
  }
  if (frame >= model.config().frames) {
    fail(ErrorCode::kInvalidArgument, "mask_heatmaps: frame " + std::to_string(frame) +
                                          " outside the sampled clip");
  }
  for (std::size_t s : samples) {
    if (s >= data.samples.size()) {
      fail(ErrorCode::kInvalidArgument, "mask_heatmaps: sample " + std::to_string(s) +
                                            " outside the dataset");
    }
  }
  std::vector<HeatmapRecord> out;
  if (samples.empty()) return out;
  SamplingPlan plan{model.config().frames, SamplingMode::kTestFixed};
  Rng unused(0);
  const Batch batch = make_batch(data, samples, plan, unused);
  Graph g;
  const UniversalOutput un = forward_universal(g, model, batch.input, 0u);
  const MaskSet masks = generate_category_masks(g, un.features, model.mask_head, false);
  Var combined = combine_masks_for_prediction(g, masks, argmax_rows(g.value(un.logits)), csm);
  const Tensor& act = g.value(masks.activated);   // (N, T, M, H', W')
  const Tensor& comb = g.value(combined);         // (N, T, 1, H', W')
  const std::size_t t_count = act.shape[1], mm = act.shape[2];
  const std::size_t rows = act.shape[3], cols = act.shape[4], plane = rows * cols;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    auto emit = [&](int category, const Tensor& src, std::size_t channels, std::size_t ch) {
      HeatmapRecord r{samples[n], category, frame, rows, cols, {}};
      const std::size_t base = ((n * t_count + frame) * channels + ch) * plane;
      r.values.assign(src.values.begin() + static_cast<std::ptrdiff_t>(base),
                      src.values.begin() + static_cast<std::ptrdiff_t>(base + plane));
      out.push_back(std::move(r));
    };
    for (int c : classes) emit(c, act, mm, static_cast<std::size_t>(c));
    emit(-1, comb, 1, 0);
  }
  return out;
}

std::string heatmap_csv(const HeatmapRecord& r) {
  std::string out;
  for (std::size_t i = 0; i < r.rows; ++i) {
    for (std::size_t j = 0; j < r.cols; ++j) {
      if (j) out += ",";
      out += format_double(r.values[i * r.cols + j]);
    }
    out += "\n";
  }
  return out;
}

std::string heatmap_svg(std::span<const HeatmapRecord> records,
                        std::span<const std::string> class_names) {
  // One row per sample, in record order.
  std::vector<std::size_t> row_of(records.size());
  std::vector<std::size_t> col_of(records.size());
  std::size_t rows = 0, max_cols = 0, col = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i > 0 && records[i].sample != records[i - 1].sample) {
      ++rows;
      col = 0;
    }
    row_of[i] = rows;
    col_of[i] = col++;
    max_cols = std::max(max_cols, col);
  }
  if (!records.empty()) ++rows;
  const double cell = 12, gap = 24, label = 18;
  const std::size_t gw = records.empty() ? 1 : records.front().cols;
  const std::size_t gh = records.empty() ? 1 : records.front().rows;
  const double tile_w = cell * static_cast<double>(gw), tile_h = cell * static_cast<double>(gh);
  Svg svg(80 + (tile_w + gap) * static_cast<double>(max_cols),
          30 + (tile_h + gap + label) * static_cast<double>(rows));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const double x0 = 80 + (tile_w + gap) * static_cast<double>(col_of[i]);
    const double y0 = 30 + label + (tile_h + gap + label) * static_cast<double>(row_of[i]);
    if (col_of[i] == 0) svg.text(8, y0 + tile_h / 2, "sample " + std::to_string(r.sample));
    std::string name = "combined";
    if (r.category >= 0) {
      const auto c = static_cast<std::size_t>(r.category);
      name = c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
    }
    svg.text(x0, y0 - 5, name, "start", 10);
    for (std::size_t a = 0; a < r.rows; ++a) {
      for (std::size_t b = 0; b < r.cols; ++b) {
        svg.rect(x0 + cell * static_cast<double>(b), y0 + cell * static_cast<double>(a), cell,
                 cell, gray(r.values[a * r.cols + b]));
      }
    }
  }
  return svg.finish();
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "target_degree,alpha,mean_degree,top1,top5\n";
  for (const auto& r : rows) {
    out += format_double(r.target_degree) + "," + format_double(r.alpha) + "," +
           format_double(r.mean_degree) + "," + format_double(r.top1) + "," +
           format_double(r.top5) + "\n";
  }
  return out;
}

std::string sweep_svg(std::span<const SweepRow> rows) {
  Svg svg(480, 380);
  Frame f{60, 40, 380, 280};
  svg.text(f.left + f.width / 2, 22, "top-1 vs target degree", "middle", 13);
  svg.rect(f.left, f.top, f.width, f.height, "none", "#000000");
  if (rows.empty()) return svg.finish();
  double lo = rows.front().target_degree, hi = lo;
  for (const auto& r : rows) {
    lo = std::min(lo, r.target_degree);
    hi = std::max(hi, r.target_degree);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows) {
    pts.emplace_back(f.to_x((r.target_degree - lo) / span), f.to_y(r.top1));
  }
  svg.polyline(pts, kPalette[0]);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    svg.circle(pts[i].first, pts[i].second, 3.5, kPalette[0]);
    svg.text(pts[i].first, f.top + f.height + 16, format_double(rows[i].target_degree), "middle",
             10);
  }
  for (int i = 0; i <= 4; ++i) {
    svg.text(f.left - 6, f.to_y(i / 4.0) + 3, fixed(i / 4.0), "end", 10);
  }
  svg.text(f.left + f.width / 2, f.top + f.height + 34, "target degree", "middle");
  return svg.finish();
}

}  // namespace u2s
