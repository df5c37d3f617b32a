#pragma once

#include "hcg/io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

namespace hcg {

// Minimal SVG emission. Every plot is paired with a CSV twin carrying the
// same data, written by the callers below.

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace plot_detail {

inline const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

struct Frame {
  double x0, x1, y0, y1;
  double width = 640, height = 420, margin = 50;

  double px(double x) const {
    return margin + (x - x0) / (x1 - x0 + 1e-300) * (width - 2 * margin);
  }
  double py(double y) const {
    return height - margin - (y - y0) / (y1 - y0 + 1e-300) * (height - 2 * margin);
  }
};

inline void header(std::ofstream& out, const Frame& f, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\""
      << f.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  out << "<line x1=\"" << f.margin << "\" y1=\"" << f.height - f.margin << "\" x2=\""
      << f.width - f.margin << "\" y2=\"" << f.height - f.margin
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << f.margin << "\" y1=\"" << f.margin << "\" x2=\"" << f.margin
      << "\" y2=\"" << f.height - f.margin << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
    out << "<text x=\"" << f.px(xv) << "\" y=\"" << f.height - f.margin + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << format_double(xv).substr(0, 8) << "</text>\n";
    out << "<text x=\"" << f.margin - 6 << "\" y=\"" << f.py(yv) + 3
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << format_double(yv).substr(0, 8) << "</text>\n";
  }
}

}  // namespace plot_detail

inline void write_line_chart_svg(const std::string& path, const std::string& title,
                                 const std::vector<Series>& series) {
  using namespace plot_detail;
  Frame f{0, 1, 0, 1};
  bool first = true;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        f.x0 = f.x1 = s.x[i];
        f.y0 = f.y1 = s.y[i];
        first = false;
      }
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, s.y[i]);
      f.y1 = std::max(f.y1, s.y[i]);
    }
  }
  if (f.y0 == f.y1) {  // constant series still renders as a flat line
    f.y0 -= 0.5;
    f.y1 += 0.5;
  }
  if (f.x0 == f.x1) f.x1 += 1.0;
  std::ofstream out(path);
  header(out, f, title);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    out << "<polyline fill=\"none\" stroke=\"" << kColors[k % 8] << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out << f.px(s.x[i]) << "," << f.py(s.y[i]) << " ";
    }
    out << "\"/>\n";
    out << "<text x=\"" << f.width - f.margin + 4 << "\" y=\"" << f.margin + 14 * k
        << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"" << kColors[k % 8]
        << "\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

inline void write_bar_chart_svg(const std::string& path, const std::string& title,
                                const std::vector<std::string>& labels,
                                const std::vector<double>& values) {
  using namespace plot_detail;
  Frame f{0, static_cast<double>(labels.size()), 0, 1};
  for (double v : values) f.y1 = std::max(f.y1, v);
  std::ofstream out(path);
  header(out, f, title);
  const double bw = (f.width - 2 * f.margin) / labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double h = (f.height - 2 * f.margin) * values[i] / f.y1;
    out << "<rect x=\"" << f.margin + bw * i + bw * 0.15 << "\" y=\""
        << f.height - f.margin - h << "\" width=\"" << bw * 0.7 << "\" height=\"" << h
        << "\" fill=\"" << kColors[i % 8] << "\"/>\n";
    out << "<text x=\"" << f.margin + bw * (i + 0.5) << "\" y=\""
        << f.height - f.margin + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << labels[i] << "</text>\n";
  }
  out << "</svg>\n";
}

inline void write_scatter_svg(const std::string& path, const std::string& title,
                              const std::vector<double>& xs, const std::vector<double>& ys,
                              const std::vector<int>& groups) {
  using namespace plot_detail;
  Frame f{0, 1, 0, 1};
  if (!xs.empty()) {
    f.x0 = *std::min_element(xs.begin(), xs.end());
    f.x1 = *std::max_element(xs.begin(), xs.end());
    f.y0 = *std::min_element(ys.begin(), ys.end());
    f.y1 = *std::max_element(ys.begin(), ys.end());
    if (f.x0 == f.x1) f.x1 += 1.0;
    if (f.y0 == f.y1) f.y1 += 1.0;
  }
  std::ofstream out(path);
  header(out, f, title);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out << "<circle cx=\"" << f.px(xs[i]) << "\" cy=\"" << f.py(ys[i])
        << "\" r=\"3\" fill=\"" << kColors[groups[i] % 8] << "\" fill-opacity=\"0.7\"/>\n";
  }
  out << "</svg>\n";
}

// 2-D PCA of a set of row vectors (power iteration free: exact eigensolver).
inline std::pair<std::vector<double>, std::vector<double>> pca_2d(
    const std::vector<nn::Tensor>& rows) {
  const int n = static_cast<int>(rows.size());
  const int d = rows.empty() ? 0 : rows[0].cols;
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = rows[i](0, j);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = x.transpose() * x / std::max(1, n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd pc1 = es.eigenvectors().col(d - 1);
  const Eigen::VectorXd pc2 = es.eigenvectors().col(d - 2);
  std::vector<double> xs(n), ys(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = x.row(i).dot(pc1);
    ys[i] = x.row(i).dot(pc2);
  }
  return {xs, ys};
}

}  // namespace hcg
