#pragma once
// Tabular and plot outputs: analysis CSV, search log (NDJSON), ablation CSV
// and a static SVG scatter of reward against latency.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "mobiledet/analysis.hpp"
#include "mobiledet/io.hpp"
#include "mobiledet/search_driver.hpp"

namespace mobiledet {

/// Per-layer cost table with a stem row first and a totals row last.
inline std::string analysis_csv(const NetworkSpec& net, const Provenance& p) {
  const auto cost = network_cost(net);
  const auto trace = derive_shapes(net);
  std::string out = csv_preamble(p) + "index,block,layer,kind,kernel,stride,in_hw,out_hw,c_in,c_out,se,madds,params\n";
  out += "stem,,,conv," + std::to_string(kStemKernel) + "," + std::to_string(kStemStride) + "," +
         std::to_string(net.input_resolution) + "x" + std::to_string(net.input_resolution) + "," +
         std::to_string(trace.stem.height) + "x" + std::to_string(trace.stem.width) + "," +
         std::to_string(kImageChannels) + "," + std::to_string(net.stem_channels) + ",false," +
         std::to_string(cost.stem.madds) + "," + std::to_string(cost.stem.params) + "\n";
  const auto refs = layer_refs(net);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& layer = net.blocks[refs[i].block].layers[refs[i].layer];
    const auto& s = trace.layers[i];
    out += std::to_string(i) + "," + std::to_string(refs[i].block) + "," + std::to_string(refs[i].layer) + "," +
           atom_key(layer.kind) + "," + std::to_string(kernel_of(layer.kind)) + "," + std::to_string(layer.stride) +
           "," + std::to_string(s.in_height) + "x" + std::to_string(s.in_width) + "," + std::to_string(s.height) +
           "x" + std::to_string(s.width) + "," + std::to_string(layer.c_in) + "," + std::to_string(layer.c_out) +
           "," + (layer.use_se ? "true" : "false") + "," + std::to_string(cost.layers[i].madds) + "," +
           std::to_string(cost.layers[i].params) + "\n";
  }
  out += "total,,,,,,,,,,," + std::to_string(cost.total_madds) + "," + std::to_string(cost.total_params) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Search log: a header record, one record per logged step, a final record.

inline json_util::Json to_json(const SearchConfig& c) {
  json_util::Json j;
  j["steps"] = c.steps;
  j["samples_per_step"] = c.samples_per_step;
  j["tau"] = c.tau;
  j["budget_ms"] = c.budget_ms;
  j["seed"] = c.seed;
  j["noise_mode"] = c.noise_mode == NoiseMode::kIid ? "iid" : "per_architecture";
  j["log_every"] = c.log_every;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["baseline_decay"] = c.baseline_decay;
  return j;
}

inline json_util::Json to_json(const ArchEvaluation& e) {
  json_util::Json j;
  j["dv"] = e.dv;
  j["quality"] = e.quality;
  j["latency_ms"] = e.latency_ms;
  j["reward"] = e.reward;
  return j;
}

inline std::string search_log_ndjson(const SearchLog& log, const SearchConfig& cfg, const std::string& space_ref,
                                     const std::string& oracle, const std::string& latency, const Provenance& p) {
  std::string out;
  json_util::Json head;
  head[json_util::kMetaKey] = meta_json(p);
  head["record"] = "header";
  head["space_ref"] = space_ref;
  head["oracle"] = oracle;
  head["latency_source"] = latency;
  head["config"] = to_json(cfg);
  out += head.dump() + "\n";
  for (const auto& s : log.steps) {
    json_util::Json j;
    j["record"] = "step";
    j["step"] = s.step;
    auto samples = json_util::Json::array();
    for (const auto& x : s.samples) {
      json_util::Json js;
      js["dv"] = x.dv;
      js["quality"] = x.quality;
      js["latency_ms"] = x.latency_ms;
      js["reward"] = x.reward;
      samples.push_back(std::move(js));
    }
    j["samples"] = std::move(samples);
    j["entropy"] = s.entropy;
    j["baseline"] = s.baseline;
    out += j.dump() + "\n";
  }
  json_util::Json fin;
  fin["record"] = "final";
  fin["best"] = to_json(log.final);
  out += fin.dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Ablation report

inline std::string report_csv(const std::vector<AblationRow>& rows, const Provenance& p) {
  std::string out =
      csv_preamble(p) + "space,device,method,budget_ms,reward,latency_ms,madds,params,frac_regular_all,frac_regular_early\n";
  for (const auto& r : rows)
    out += r.space + "," + r.device + "," + r.method + "," + fmt(r.budget_ms) + "," + fmt(r.reward) + "," + fmt(r.latency_ms) + "," + std::to_string(r.madds) +
           "," + std::to_string(r.params) + "," + fmt(r.frac_regular_all) + "," + fmt(r.frac_regular_early) + "\n";
  return out;
}

struct ScatterPoint {
  std::string label;
  double latency_ms = 0.0;
  double reward = 0.0;
};

/// Points not dominated by any other (lower-or-equal latency and
/// higher-or-equal reward, strictly better in one). Returned sorted by latency.
inline std::vector<ScatterPoint> pareto_front(std::vector<ScatterPoint> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.latency_ms != b.latency_ms ? a.latency_ms < b.latency_ms : a.reward > b.reward;
  });
  std::vector<ScatterPoint> front;
  for (const auto& p : pts)
    if (front.empty() || p.reward > front.back().reward) front.push_back(p);
  return front;
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

inline std::string num(double v) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(1);
  ss << v;
  return ss.str();
}

}  // namespace detail

/// Reward vs latency scatter; Pareto-front points are filled and joined.
inline std::string scatter_svg(const std::vector<ScatterPoint>& pts, const std::string& title, const Provenance& p) {
  constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- " + std::string(kToolName) + " " +
                    kToolVersion + "; invocation: " + detail::xml_escape(p.invocation) + " -->\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(W) + "\" height=\"" + detail::num(H) +
         "\" viewBox=\"0 0 " + detail::num(W) + " " + detail::num(H) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::num(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">" + detail::xml_escape(title) + "</text>\n";
  if (pts.empty()) return out + "</svg>\n";

  double x0 = pts[0].latency_ms, x1 = x0, y0 = pts[0].reward, y1 = y0;
  for (const auto& q : pts) {
    x0 = std::min(x0, q.latency_ms);
    x1 = std::max(x1, q.latency_ms);
    y0 = std::min(y0, q.reward);
    y1 = std::max(y1, q.reward);
  }
  const double dx = x1 > x0 ? x1 - x0 : std::max(1.0, std::abs(x0));
  const double dy = y1 > y0 ? y1 - y0 : std::max(1.0, std::abs(y0));
  x0 -= 0.05 * dx, x1 = x0 + 1.1 * dx;
  y0 -= 0.05 * dy, y1 = y0 + 1.1 * dy;
  auto sx = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

  out += "<g stroke=\"black\" fill=\"none\"><line x1=\"" + detail::num(L) + "\" y1=\"" + detail::num(H - B) +
         "\" x2=\"" + detail::num(W - R) + "\" y2=\"" + detail::num(H - B) + "\"/><line x1=\"" + detail::num(L) +
         "\" y1=\"" + detail::num(T) + "\" x2=\"" + detail::num(L) + "\" y2=\"" + detail::num(H - B) + "\"/></g>\n";
  out += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    out += "<text x=\"" + detail::num(sx(xv)) + "\" y=\"" + detail::num(H - B + 16) +
           "\" text-anchor=\"middle\">" + fmt(std::round(xv * 1000) / 1000) + "</text>\n";
    out += "<text x=\"" + detail::num(L - 6) + "\" y=\"" + detail::num(sy(yv) + 4) + "\" text-anchor=\"end\">" +
           fmt(std::round(yv * 1000) / 1000) + "</text>\n";
  }
  out += "<text x=\"" + detail::num((L + W - R) / 2) + "\" y=\"" + detail::num(H - 10) +
         "\" text-anchor=\"middle\">latency (ms)</text>\n";
  out += "<text x=\"16\" y=\"" + detail::num((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         detail::num((T + H - B) / 2) + ")\">reward</text>\n</g>\n";

  const auto front = pareto_front(pts);
  std::string path;
  for (const auto& q : front) path += (path.empty() ? "" : " ") + detail::num(sx(q.latency_ms)) + "," +
                                      detail::num(sy(q.reward));
  out += "<polyline class=\"pareto\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\"" + path +
         "\"/>\n";
  for (const auto& q : pts) {
    bool on_front = false;
    for (const auto& f : front) on_front = on_front || (f.label == q.label && f.latency_ms == q.latency_ms);
    out += "<circle cx=\"" + detail::num(sx(q.latency_ms)) + "\" cy=\"" + detail::num(sy(q.reward)) +
           "\" r=\"5\" stroke=\"#1f77b4\" fill=\"" + (on_front ? "#d62728" : "white") + "\"><title>" +
           detail::xml_escape(q.label) + "</title></circle>\n";
  }
  return out + "</svg>\n";
}

}  // namespace mobiledet
