// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "currlab/error.hpp"
#include "currlab/harness.hpp"

namespace currlab::harness {

namespace {

constexpr const char* kTraceHeader =
    "step,train_loss,dev_accuracy,update_norm,m_norm,v_norm,mean_weight,sigma_normal,lr,data_portion";

std::string num(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_trace_csv(const training::TrainTrace& trace, std::ostream& out) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace) {
    out << r.step << ',' << num(r.train_loss) << ',' << num(r.dev_accuracy) << ',' << num(r.update_norm) << ','
        << num(r.m_norm) << ',' << num(r.v_norm) << ',' << num(r.mean_weight) << ',' << num(r.sigma_normal) << ','
        << num(r.lr) << ',' << num(r.data_portion) << '\n';
  }
}

void write_trace_csv(const training::TrainTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write trace file " + path.string());
  write_trace_csv(trace, out);
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

void write_summary_csv(std::span<const RunResult> results, std::ostream& out) {
  out << "seed,final_dev_accuracy,steps_to_convergence,aborted\n";
  for (const auto& r : results) {
    out << r.seed << ',' << num(r.final_dev_accuracy) << ',';
    if (r.steps_to_convergence) out << *r.steps_to_convergence;
    out << ',' << (r.aborted ? 1 : 0) << '\n';
  }
}

void write_summary_csv(std::span<const RunResult> results, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write summary file " + path.string());
  write_summary_csv(results, out);
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

training::TrainTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw ParseError("unexpected trace header", 1);
  training::TrainTrace trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> v;
    std::size_t start = 0;
    while (start <= line.size()) {
      const auto comma = std::min(line.find(',', start), line.size());
      double x = 0.0;
      auto [ptr, ec] = std::from_chars(line.data() + start, line.data() + comma, x);
      if (ec != std::errc() || ptr != line.data() + comma) throw ParseError("malformed trace value", line_no);
      v.push_back(x);
      start = comma + 1;
    }
    if (v.size() != 10) throw ParseError("expected 10 trace columns", line_no);
    trace.push_back({static_cast<std::size_t>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]});
  }
  return trace;
}

training::TrainTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open trace file " + path.string());
  return read_trace_csv(in);
}

Series trace_series(const training::TrainTrace& trace, const std::string& column, const std::string& label) {
  Series s;
  s.label = label;
  for (const auto& r : trace) {
    double y = 0.0;
    if (column == "train_loss") y = r.train_loss;
    else if (column == "dev_accuracy") y = r.dev_accuracy;
    else if (column == "update_norm") y = r.update_norm;
    else if (column == "m_norm") y = r.m_norm;
    else if (column == "v_norm") y = r.v_norm;
    else if (column == "mean_weight") y = r.mean_weight;
    else if (column == "sigma_normal") y = r.sigma_normal;
    else if (column == "lr") y = r.lr;
    else if (column == "data_portion") y = r.data_portion;
    else throw InvalidArgument("unknown trace column '" + column + "'");
    s.x.push_back(static_cast<double>(r.step));
    s.y.push_back(y);
  }
  return s;
}

void emit_plot(std::span<const Series> series, std::ostream& out, const std::string& title,
               const std::string& y_label) {
  constexpr double W = 800, H = 480, L = 70, R = 170, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw InvalidArgument("plot series '" + s.label + "': x/y length mismatch");
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, s.y[k]);
      y1 = std::max(y1, s.y[k]);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
      << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << num(std::round(xv * 1000) / 1000) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
        << num(std::round(yv * 1e4) / 1e4) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">step</text>\n"
      << "<text x=\"14\" y=\"" << T - 10 << "\" font-size=\"12\">" << xml_escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* colour = palette[s % std::size(palette)];
    const auto& sr = series[s];
    for (std::size_t k = 1; k < sr.x.size(); ++k) {
      if (!std::isfinite(sr.y[k - 1]) || !std::isfinite(sr.y[k])) continue;
      out << "<line x1=\"" << px(sr.x[k - 1]) << "\" y1=\"" << py(sr.y[k - 1]) << "\" x2=\"" << px(sr.x[k])
          << "\" y2=\"" << py(sr.y[k]) << "\" stroke=\"" << colour << "\" stroke-width=\"1.5\"/>\n";
    }
    const double ly = T + 16.0 * static_cast<double>(s);
    out << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
        << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << xml_escape(sr.label)
        << "</text>\n";
  }
  out << "</svg>\n";
}

void emit_plot(std::span<const Series> series, const std::filesystem::path& path, const std::string& title,
               const std::string& y_label) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write plot file " + path.string());
  emit_plot(series, out, title, y_label);
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

std::filesystem::path output_root() {
  const char* env = std::getenv("CURRLAB_OUT_DIR");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("currlab-out");
}

}  // namespace currlab::harness
