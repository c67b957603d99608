#include "hsnet/svg.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hsnet/csv.hpp"

namespace hsnet {
namespace {

constexpr double kWidth = 640, kHeight = 480, kMargin = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

struct Axis {
  double lo = 0, hi = 1;
  void include(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double span() const { return hi > lo ? hi - lo : 1.0; }
};

Axis axis_over(const std::vector<double>& values) {
  Axis a{values.empty() ? 0.0 : values.front(), values.empty() ? 1.0 : values.front()};
  for (double v : values) a.include(v);
  return a;
}

double px(const Axis& a, double v) { return kMargin + (v - a.lo) / a.span() * (kWidth - 2 * kMargin); }
double py(const Axis& a, double v) {
  return kHeight - kMargin - (v - a.lo) / a.span() * (kHeight - 2 * kMargin);
}

// Fixed precision keeps the output byte-stable across runs.
std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void open_svg(std::ostream& os, const std::string& xlabel, const std::string& ylabel) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin
     << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
     << kHeight - kMargin << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 20 << "\" text-anchor=\"middle\">"
     << xlabel << "</text>\n"
     << "<text x=\"18\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << kHeight / 2 << ")\">" << ylabel << "</text>\n";
}

void axis_ticks(std::ostream& os, const Axis& x, const Axis& y) {
  os << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 14 << "\">"
     << format_double(x.lo) << "</text>\n"
     << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 14
     << "\" text-anchor=\"end\">" << format_double(x.hi) << "</text>\n"
     << "<text x=\"" << kMargin - 4 << "\" y=\"" << kHeight - kMargin << "\" text-anchor=\"end\">"
     << format_double(y.lo) << "</text>\n"
     << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin + 4 << "\" text-anchor=\"end\">"
     << format_double(y.hi) << "</text>\n";
}

}  // namespace

void write_lcurve_svg(std::ostream& os, const LCurve& curve, std::optional<std::size_t> corner) {
  std::vector<double> xs, ys;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const auto& p = curve.points[i];
    if (p.diverged) continue;
    xs.push_back(apply_transform(curve.phi, p.deviation));
    ys.push_back(apply_transform(curve.phi, p.sparsity));
    idx.push_back(i);
  }
  const std::string prefix = curve.phi == PenaltyTransform::log ? "log " : "";
  open_svg(os, prefix + "E (deviation)", prefix + "S (sparsity)");
  const Axis ax = axis_over(xs), ay = axis_over(ys);
  axis_ticks(os, ax, ay);
  os << "<polyline fill=\"none\" stroke=\"" << kPalette[0] << "\" points=\"";
  for (std::size_t j = 0; j < xs.size(); ++j) {
    os << (j ? " " : "") << coord(px(ax, xs[j])) << ',' << coord(py(ay, ys[j]));
  }
  os << "\"/>\n";
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const bool hit = corner && *corner == idx[j];
    const auto x = coord(px(ax, xs[j])), y = coord(py(ay, ys[j]));
    os << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << (hit ? 5 : 3) << "\" fill=\""
       << kPalette[hit ? 1 : 0] << "\"/>\n"
       << "<text x=\"" << x << "\" y=\"" << y << "\" dx=\"6\" dy=\"-4\">"
       << format_double(curve.points[idx[j]].lambda) << "</text>\n";
  }
  os << "</svg>\n";
}

std::vector<SensitivityProfile> sensitivity_profiles(const NetworkGraph& graph) {
  std::vector<SensitivityProfile> out;
  for (std::size_t i : trainable_sensitivity_layers(graph)) {
    const auto& s = std::get<SensitivityLayer>(graph.layer(i).kind).s;
    SensitivityProfile p{graph.layer(i).name, {}};
    for (double v : s.values()) p.magnitudes.push_back(std::abs(v));
    std::sort(p.magnitudes.begin(), p.magnitudes.end(), std::greater<>());
    out.push_back(std::move(p));
  }
  return out;
}

void write_sensitivity_svg(std::ostream& os, const std::vector<SensitivityProfile>& profiles) {
  Axis ax{0, 1}, ay{0, 0};
  for (const auto& p : profiles) {
    ax.include(static_cast<double>(p.magnitudes.size()));
    for (double m : p.magnitudes) ay.include(m);
  }
  open_svg(os, "node rank", "|s|");
  axis_ticks(os, ax, ay);
  for (std::size_t l = 0; l < profiles.size(); ++l) {
    const char* color = kPalette[l % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    const auto& m = profiles[l].magnitudes;
    for (std::size_t r = 0; r < m.size(); ++r) {
      os << (r ? " " : "") << coord(px(ax, static_cast<double>(r + 1))) << ','
         << coord(py(ay, m[r]));
    }
    os << "\"/>\n<text x=\"" << kWidth - kMargin << "\" y=\"" << kMargin + 14 * static_cast<double>(l)
       << "\" text-anchor=\"end\" fill=\"" << color << "\">" << profiles[l].layer << "</text>\n";
  }
  os << "</svg>\n";
}

void write_sensitivity_csv(std::ostream& os, const std::vector<SensitivityProfile>& profiles) {
  write_csv_row(os, {"layer", "rank", "magnitude"});
  for (const auto& p : profiles) {
    for (std::size_t r = 0; r < p.magnitudes.size(); ++r) {
      write_csv_row(os, {p.layer, std::to_string(r + 1), format_double(p.magnitudes[r])});
    }
  }
}

}  // namespace hsnet
