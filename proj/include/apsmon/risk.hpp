#pragma once

// Blood-glucose risk function, windowed LBGI/HBGI and hazard labels.

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "apsmon/scs.hpp"

namespace apsmon {

/// Symmetrized BG scale; negative on the low side, zero near 112.5 mg/dl.
inline double risk_transform(double bg) {
  if (!(bg > 0.0)) throw std::invalid_argument("risk: BG must be > 0");
  return 1.509 * (std::pow(std::log(bg), 1.084) - 5.381);
}

inline double risk(double bg) {
  const double f = risk_transform(bg);
  return 10.0 * f * f;
}

inline bool risk_low_side(double bg) { return risk_transform(bg) < 0.0; }

struct RiskIndex {
  double lbgi = 0.0;
  double hbgi = 0.0;
};

/// Means over the whole window; each sample contributes to one side only.
inline RiskIndex lbgi_hbgi(std::span<const double> window) {
  if (window.empty()) throw std::invalid_argument("lbgi_hbgi: empty window");
  RiskIndex r;
  for (double bg : window) {
    const double f = risk_transform(bg);
    const double v = 10.0 * f * f;
    if (f < 0.0) r.lbgi += v;
    else if (f > 0.0) r.hbgi += v;
  }
  r.lbgi /= static_cast<double>(window.size());
  r.hbgi /= static_cast<double>(window.size());
  return r;
}

struct RiskSeries {
  std::size_t window = 12;
  std::vector<double> risk;
  std::vector<double> lbgi;
  std::vector<double> hbgi;
};

/// Trailing-window indices; the first window-1 samples use the samples
/// available so far.
inline RiskSeries risk_series(std::span<const double> bg, std::size_t window = 12) {
  if (window == 0) throw std::invalid_argument("risk_series: window must be > 0");
  RiskSeries s;
  s.window = window;
  for (std::size_t t = 0; t < bg.size(); ++t) {
    s.risk.push_back(risk(bg[t]));
    const std::size_t start = t + 1 >= window ? t + 1 - window : 0;
    const auto idx = lbgi_hbgi(bg.subspan(start, t + 1 - start));
    s.lbgi.push_back(idx.lbgi);
    s.hbgi.push_back(idx.hbgi);
  }
  return s;
}

struct LabelOptions {
  std::size_t window = 12;
  double lbgi_threshold = 5.0;
  double hbgi_threshold = 9.0;
};

struct HazardLabels {
  std::vector<Hazard> labels;
  std::optional<std::size_t> onset;  // first labeled step
  Hazard type = Hazard::None;        // label at onset

  bool hazardous() const { return onset.has_value(); }
};

/// H1 at t iff LBGI(t) exceeds its threshold and strictly increased since
/// t-1; H2 likewise on HBGI. H1 takes precedence when both hold. Changes
/// within round-off of the window mean do not count as an increase.
inline HazardLabels label(std::span<const double> bg, const LabelOptions& opt = {}) {
  if (bg.size() < opt.window) throw std::invalid_argument("label: trace shorter than window");
  const RiskSeries s = risk_series(bg, opt.window);
  HazardLabels out;
  out.labels.assign(bg.size(), Hazard::None);
  auto rose = [](double now, double before) {
    return now - before > 1e-9 * std::max(1.0, std::abs(before));
  };
  for (std::size_t t = 1; t < bg.size(); ++t) {
    Hazard h = Hazard::None;
    if (s.lbgi[t] > opt.lbgi_threshold && rose(s.lbgi[t], s.lbgi[t - 1])) h = Hazard::H1;
    else if (s.hbgi[t] > opt.hbgi_threshold && rose(s.hbgi[t], s.hbgi[t - 1])) h = Hazard::H2;
    out.labels[t] = h;
    if (h != Hazard::None && !out.onset) {
      out.onset = t;
      out.type = h;
    }
  }
  return out;
}

/// Mean of LBGI + HBGI over the full horizon.
inline double mean_risk_index(std::span<const double> bg, std::size_t window = 12) {
  if (bg.empty()) return 0.0;
  const RiskSeries s = risk_series(bg, window);
  double sum = 0.0;
  for (std::size_t t = 0; t < bg.size(); ++t) sum += s.lbgi[t] + s.hbgi[t];
  return sum / static_cast<double>(bg.size());
}

}  // namespace apsmon
