#include "ebcobart/eb_updates.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

namespace ebcobart {

SplitCounts count_splits(const DrawSet& draws) {
  if (draws.n_draws() == 0) throw InputError("count_splits: empty draw set");
  SplitCounts out;
  out.b.assign(draws.p, 0);
  for (const auto& vars : draws.split_vars) {
    for (std::int32_t v : vars) {
      out.b[v] += 1;
      out.total += 1;
    }
  }
  return out;
}

std::vector<double> s1_estimate(const std::vector<std::int64_t>& b,
                                std::int64_t total) {
  if (total <= 0) throw NumericError("s1_estimate: no splits observed (B = 0)");
  std::vector<double> s(b.size());
  for (std::size_t j = 0; j < b.size(); ++j)
    s[j] = static_cast<double>(b[j]) / static_cast<double>(total);
  return s;
}

double update_k(const DrawSet& draws, std::size_t n_trees, double c) {
  if (draws.n_draws() == 0) throw InputError("update_k: empty draw set");
  double sum_mu2 = 0.0;
  std::int64_t n_leaves = 0;
  for (const Forest& f : draws.forests) {
    for (const Tree& t : f.trees) {
      for (const TreeNode& n : t.nodes()) {
        if (!n.is_leaf()) continue;
        sum_mu2 += n.mu * n.mu;
        ++n_leaves;
      }
    }
  }
  if (n_leaves == 0) throw InputError("update_k: draw set has no leaf values");
  if (sum_mu2 <= 0.0)
    throw NumericError("update_k: all leaf values zero, k-hat diverges");
  return c * std::sqrt(static_cast<double>(n_leaves) / sum_mu2) /
         std::sqrt(static_cast<double>(n_trees));
}

NuLambda update_nu_lambda(std::span<const double> sigma2_draws) {
  const std::size_t n = sigma2_draws.size();
  if (n < 2) throw InputError("update_nu_lambda: need at least 2 draws");
  double sum_log = 0.0, sum_inv = 0.0;
  for (double x : sigma2_draws) {
    if (!(x > 0.0)) throw InputError("update_nu_lambda: draws must be positive");
    sum_log += std::log(x);
    sum_inv += 1.0 / x;
  }
  const double nd = static_cast<double>(n);
  // With shape a = nu/2 and rate b profiled out at b = n a / sum(1/x), the
  // score reduces to log(a) - digamma(a) = s where
  //   s = mean(log x) + log(mean(1/x)) >= 0, equality iff constant input.
  const double s = sum_log / nd + std::log(sum_inv / nd);
  if (!(s > 1e-12))
    throw NumericError("update_nu_lambda: degenerate (near-constant) draws");

  // gamma-MLE style initial guess
  double a = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  if (!(a > 0.0)) a = 0.5;

  NuLambda out;
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    const double g = std::log(a) - boost::math::digamma(a) - s;
    if (std::abs(g) < 1e-10) {
      converged = true;
      out.iterations = it;
      break;
    }
    const double gprime = 1.0 / a - boost::math::trigamma(a);
    double step = g / gprime;
    double next = a - step;
    while (next <= 0.0) {
      step *= 0.5;
      next = a - step;
    }
    a = next;
  }
  if (!converged)
    throw NumericError("update_nu_lambda: Newton failed to converge in 200 iterations");
  out.nu = 2.0 * a;
  out.lambda = nd / sum_inv;  // harmonic mean; b-hat/a with b-hat = n a / sum(1/x)
  return out;
}

DepthHistogram depth_histogram(const DrawSet& draws) {
  DepthHistogram h;
  auto bump = [](std::vector<std::int64_t>& v, std::int32_t d) {
    if (static_cast<std::size_t>(d) >= v.size()) v.resize(d + 1, 0);
    v[d] += 1;
  };
  for (const Forest& f : draws.forests)
    for (const Tree& t : f.trees)
      for (const TreeNode& n : t.nodes())
        bump(n.is_leaf() ? h.terminal : h.internal, n.depth);
  return h;
}

double alpha_beta_objective(const DepthHistogram& h, double alpha, double beta) {
  double obj = 0.0;
  for (std::size_t d = 0; d < h.internal.size(); ++d) {
    if (h.internal[d] == 0) continue;
    obj += static_cast<double>(h.internal[d]) *
           (std::log(alpha) - beta * std::log1p(static_cast<double>(d)));
  }
  for (std::size_t d = 0; d < h.terminal.size(); ++d) {
    if (h.terminal[d] == 0) continue;
    const double split_p = alpha * std::pow(1.0 + static_cast<double>(d), -beta);
    if (split_p >= 1.0) return -std::numeric_limits<double>::infinity();
    obj += static_cast<double>(h.terminal[d]) * std::log1p(-split_p);
  }
  return obj;
}

namespace {

constexpr double kAlphaEps = 1e-6;
constexpr double kBetaMax = 10.0;
constexpr double kBetaMin = 1e-6;

double clamp(double x, double lo, double hi) {
  return std::min(hi, std::max(lo, x));
}

// Nelder-Mead on the clamped 2-D objective
std::pair<std::array<double, 2>, double> nelder_mead(
    const DepthHistogram& h, std::array<double, 2> start) {
  auto eval = [&](std::array<double, 2> pt) {
    pt[0] = clamp(pt[0], kAlphaEps, 1.0 - kAlphaEps);
    pt[1] = clamp(pt[1], kBetaMin, kBetaMax);
    return -alpha_beta_objective(h, pt[0], pt[1]);
  };
  std::array<std::array<double, 2>, 3> simplex = {
      start,
      {clamp(start[0] + 0.1, kAlphaEps, 1.0 - kAlphaEps), start[1]},
      {start[0], clamp(start[1] + 0.5, kBetaMin, kBetaMax)}};
  std::array<double, 3> f{};
  for (int i = 0; i < 3; ++i) f[i] = eval(simplex[i]);

  for (int iter = 0; iter < 500; ++iter) {
    std::array<int, 3> ord{0, 1, 2};
    std::sort(ord.begin(), ord.end(), [&](int a, int b) { return f[a] < f[b]; });
    const int best = ord[0], mid = ord[1], worst = ord[2];
    if (std::abs(f[worst] - f[best]) < 1e-12 * (1.0 + std::abs(f[best]))) break;

    std::array<double, 2> centroid{
        0.5 * (simplex[best][0] + simplex[mid][0]),
        0.5 * (simplex[best][1] + simplex[mid][1])};
    auto blend = [&](double t) {
      return std::array<double, 2>{centroid[0] + t * (centroid[0] - simplex[worst][0]),
                                   centroid[1] + t * (centroid[1] - simplex[worst][1])};
    };

    const auto refl = blend(1.0);
    const double f_refl = eval(refl);
    if (f_refl < f[best]) {
      const auto exp_pt = blend(2.0);
      const double f_exp = eval(exp_pt);
      if (f_exp < f_refl) {
        simplex[worst] = exp_pt;
        f[worst] = f_exp;
      } else {
        simplex[worst] = refl;
        f[worst] = f_refl;
      }
    } else if (f_refl < f[mid]) {
      simplex[worst] = refl;
      f[worst] = f_refl;
    } else {
      const auto contr = blend(-0.5);
      const double f_contr = eval(contr);
      if (f_contr < f[worst]) {
        simplex[worst] = contr;
        f[worst] = f_contr;
      } else {
        for (int i : {mid, worst}) {
          simplex[i] = {0.5 * (simplex[i][0] + simplex[best][0]),
                        0.5 * (simplex[i][1] + simplex[best][1])};
          f[i] = eval(simplex[i]);
        }
      }
    }
  }
  std::array<int, 3> ord{0, 1, 2};
  std::sort(ord.begin(), ord.end(), [&](int a, int b) { return f[a] < f[b]; });
  std::array<double, 2> best = simplex[ord[0]];
  best[0] = clamp(best[0], kAlphaEps, 1.0 - kAlphaEps);
  best[1] = clamp(best[1], kBetaMin, kBetaMax);
  return {best, f[ord[0]]};
}

}  // namespace

AlphaBeta update_alpha_beta(const DrawSet& draws, std::optional<double> fixed_beta) {
  const DepthHistogram h = depth_histogram(draws);
  std::int64_t n_internal = 0, n_terminal = 0;
  for (auto c : h.internal) n_internal += c;
  for (auto c : h.terminal) n_terminal += c;
  if (n_terminal == 0)
    throw InputError("update_alpha_beta: draw set has no terminal node records");

  AlphaBeta out;
  if (n_internal == 0) {
    // all stumps: likelihood is decreasing in alpha, pin to the box edge
    out.alpha = kAlphaEps;
    out.beta = fixed_beta.value_or(2.0);
    out.boundary = true;
    return out;
  }

  if (fixed_beta) {
    // score Z/alpha - sum_l (1+d)^-beta / (1 - alpha (1+d)^-beta) is strictly
    // decreasing in alpha: bisection
    const double beta = *fixed_beta;
    auto score = [&](double alpha) {
      double sc = static_cast<double>(n_internal) / alpha;
      for (std::size_t d = 0; d < h.terminal.size(); ++d) {
        if (h.terminal[d] == 0) continue;
        const double w = std::pow(1.0 + static_cast<double>(d), -beta);
        sc -= static_cast<double>(h.terminal[d]) * w / (1.0 - alpha * w);
      }
      return sc;
    };
    double lo = kAlphaEps, hi = 1.0 - kAlphaEps;
    if (score(lo) <= 0.0) {
      out.alpha = lo;
      out.boundary = true;
    } else if (score(hi) >= 0.0) {
      out.alpha = hi;
    } else {
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (score(mid) > 0.0 ? lo : hi) = mid;
      }
      out.alpha = 0.5 * (lo + hi);
    }
    out.beta = beta;
    return out;
  }

  const std::array<std::array<double, 2>, 4> starts = {{
      {0.1, 4.0}, {0.5, 2.0}, {0.95, 2.0}, {0.5, 0.5}}};
  double best_val = std::numeric_limits<double>::infinity();
  std::array<double, 2> best{0.5, 2.0};
  for (const auto& s : starts) {
    auto [pt, val] = nelder_mead(h, s);
    if (val < best_val) {
      best_val = val;
      best = pt;
    }
  }
  if (!std::isfinite(best_val))
    throw NumericError("update_alpha_beta: optimizer failed on this draw set");
  out.alpha = best[0];
  out.beta = best[1];
  out.boundary = best[0] <= kAlphaEps * (1.0 + 1e-9);
  return out;
}

}  // namespace ebcobart
