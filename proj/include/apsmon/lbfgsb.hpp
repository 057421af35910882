#pragma once

// Bound-constrained limited-memory BFGS.
//
// The search direction applies the inverse-Hessian estimate from the last
// m curvature pairs via the two-loop recursion, restricted to the free
// variables (those not held at a bound by an outward-pointing gradient).
// Iterates are projected onto the box; the line search backtracks along
// the projected path until sufficient decrease holds. Pairs with
// s.y <= 1e-12 |s||y| are discarded.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace apsmon {

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  static Box unbounded(std::size_t n) {
    return {std::vector<double>(n, -std::numeric_limits<double>::infinity()),
            std::vector<double>(n, std::numeric_limits<double>::infinity())};
  }
  bool contains(const std::vector<double>& x) const {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
    }
    return true;
  }
};

struct OptimizerConfig {
  int history = 10;          // m
  double gtol = 1e-8;        // projected-gradient infinity norm
  int max_iterations = 500;
  double armijo = 1e-4;
  int max_line_search = 60;

  void validate() const {
    if (history < 1) throw std::invalid_argument("optimizer: history must be >= 1");
    if (!(gtol > 0.0)) throw std::invalid_argument("optimizer: gtol must be > 0");
    if (max_iterations < 1) throw std::invalid_argument("optimizer: max_iterations must be >= 1");
  }
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double pg_norm = 0.0;
};

struct OptimizerResult {
  std::vector<double> x;
  double objective = 0.0;
  double pg_norm = 0.0;
  int iterations = 0;
  std::vector<IterationRecord> log;
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, OptimizerResult best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const OptimizerResult& best() const { return best_; }

 private:
  OptimizerResult best_;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline void project(std::vector<double>& x, const Box& box) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], box.lower[i], box.upper[i]);
}

inline double projected_gradient_norm(const std::vector<double>& x, const std::vector<double>& g,
                                      const Box& box) {
  double norm = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double step = std::clamp(x[i] - g[i], box.lower[i], box.upper[i]);
    norm = std::max(norm, std::abs(x[i] - step));
  }
  return norm;
}

struct CurvaturePair {
  std::vector<double> s, y;
  double rho = 0.0;
};

/// r = H g over the free variables (two-loop recursion).
inline std::vector<double> two_loop(const std::deque<CurvaturePair>& pairs,
                                    std::vector<double> q, const std::vector<char>& free) {
  for (std::size_t i = 0; i < q.size(); ++i) if (!free[i]) q[i] = 0.0;
  std::vector<double> alpha(pairs.size());
  for (std::size_t k = pairs.size(); k-- > 0;) {
    const auto& p = pairs[k];
    double sq = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) if (free[i]) sq += p.s[i] * q[i];
    alpha[k] = p.rho * sq;
    for (std::size_t i = 0; i < q.size(); ++i) if (free[i]) q[i] -= alpha[k] * p.y[i];
  }
  double gamma = 1.0;
  if (!pairs.empty()) {
    const auto& p = pairs.back();
    gamma = dot(p.s, p.y) / dot(p.y, p.y);
  }
  for (auto& v : q) v *= gamma;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    double yr = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) if (free[i]) yr += p.y[i] * q[i];
    const double beta = p.rho * yr;
    for (std::size_t i = 0; i < q.size(); ++i) if (free[i]) q[i] += (alpha[k] - beta) * p.s[i];
  }
  for (std::size_t i = 0; i < q.size(); ++i) if (!free[i]) q[i] = 0.0;
  return q;
}

}  // namespace detail

/// Minimizes `objective` over the box. `objective(x)` returns f(x);
/// `gradient(x, g)` fills g. x0 must lie inside the box.
template <class Objective, class Gradient>
OptimizerResult lbfgsb_minimize(Objective&& objective, Gradient&& gradient,
                                std::vector<double> x0, const Box& box,
                                const OptimizerConfig& cfg = {}) {
  cfg.validate();
  const std::size_t n = x0.size();
  if (box.lower.size() != n || box.upper.size() != n) {
    throw std::invalid_argument("lbfgsb: bounds dimension mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (box.lower[i] > box.upper[i]) throw std::invalid_argument("lbfgsb: lower > upper");
  }
  if (!box.contains(x0)) throw std::invalid_argument("lbfgsb: x0 outside the box");

  std::vector<double> x = std::move(x0);
  std::vector<double> g(n);
  double f = objective(x);
  gradient(x, g);

  OptimizerResult res;
  std::deque<detail::CurvaturePair> pairs;
  std::vector<double> x_new(n), g_new(n), d(n);
  std::vector<char> free(n);

  for (int iter = 0;; ++iter) {
    const double pg = detail::projected_gradient_norm(x, g, box);
    res.log.push_back({iter, f, pg});
    res.x = x;
    res.objective = f;
    res.pg_norm = pg;
    res.iterations = iter;
    if (pg <= cfg.gtol) return res;
    if (iter >= cfg.max_iterations) {
      throw NonConvergence("lbfgsb: maximum iterations reached", res);
    }

    for (std::size_t i = 0; i < n; ++i) {
      free[i] = !((x[i] <= box.lower[i] && g[i] > 0.0) || (x[i] >= box.upper[i] && g[i] < 0.0));
    }
    std::vector<double> hg = detail::two_loop(pairs, g, free);
    for (std::size_t i = 0; i < n; ++i) d[i] = -hg[i];
    double slope = detail::dot(g, d);
    if (!(slope < 0.0)) {
      pairs.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = free[i] ? -g[i] : 0.0;
      slope = detail::dot(g, d);
    }

    // Backtracking along the projected path.
    auto trial = [&](double alpha) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + alpha * d[i];
      detail::project(x_new, box);
      return objective(x_new);
    };
    auto decrease = [&](double fv) {
      double gs = 0.0;
      for (std::size_t i = 0; i < n; ++i) gs += g[i] * (x_new[i] - x[i]);
      return fv <= f + cfg.armijo * gs && gs < 0.0;
    };

    double alpha = 1.0;
    double f_new = trial(alpha);
    bool accepted = decrease(f_new);
    if (accepted) {
      // One safeguarded quadratic refinement; exact on quadratic objectives.
      const double curv = f_new - f - slope;
      if (curv > 0.0) {
        const double aq = -slope / (2.0 * curv);
        if (aq > 0.1 && aq < 10.0 && std::abs(aq - 1.0) > 1e-3) {
          const std::vector<double> keep = x_new;
          const double fq = trial(aq);
          if (fq < f_new && decrease(fq)) {
            f_new = fq;
            alpha = aq;
          } else {
            x_new = keep;
          }
        }
      }
    } else {
      for (int ls = 0; ls < cfg.max_line_search && !accepted; ++ls) {
        const double curv = f_new - f - slope * alpha;
        double next = alpha * 0.5;
        if (curv > 0.0 && std::isfinite(f_new)) {
          next = std::clamp(-slope * alpha * alpha / (2.0 * curv), 0.1 * alpha, 0.5 * alpha);
        }
        alpha = next;
        f_new = trial(alpha);
        accepted = decrease(f_new);
      }
    }
    if (!accepted) {
      if (!pairs.empty()) {
        pairs.clear();
        continue;
      }
      throw NonConvergence("lbfgsb: line search failed", res);
    }
    gradient(x_new, g_new);

    // Extend while the slope along d stays steep (curvature condition unmet).
    for (int grow = 0; grow < cfg.max_line_search && detail::dot(g_new, d) < 0.9 * slope; ++grow) {
      const std::vector<double> keep_x = x_new;
      const double f_try = trial(2.0 * alpha);
      if (!(f_try < f_new) || !decrease(f_try)) {
        x_new = keep_x;
        break;
      }
      alpha *= 2.0;
      f_new = f_try;
      gradient(x_new, g_new);
    }

    detail::CurvaturePair p;
    p.s.resize(n);
    p.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = x_new[i] - x[i];
      p.y[i] = g_new[i] - g[i];
    }
    const double sy = detail::dot(p.s, p.y);
    if (sy > 1e-12 * std::sqrt(detail::dot(p.s, p.s) * detail::dot(p.y, p.y))) {
      p.rho = 1.0 / sy;
      pairs.push_back(std::move(p));
      if (pairs.size() > static_cast<std::size_t>(cfg.history)) pairs.pop_front();
    } else {
      pairs.clear();
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
  }
}

}  // namespace apsmon
