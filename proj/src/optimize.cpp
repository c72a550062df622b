#include "copreg/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "copreg/errors.hpp"
#include "copreg/rng.hpp"

namespace copreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_eval(const Objective& objective, const Eigen::VectorXd& x, Eigen::VectorXd* grad, int& evals) {
  ++evals;
  try {
    const double f = objective(x, grad);
    if (!std::isfinite(f)) return kInf;
    if (grad && !grad->allFinite()) return kInf;
    return f;
  } catch (const DomainError&) {
    return kInf;
  }
}

OptimResult run_bfgs(const Objective& objective, const Eigen::VectorXd& x0, const OptimOptions& opts,
                     const Eigen::MatrixXd* init_h) {
  const auto n = x0.size();
  OptimResult r;
  r.x = x0;
  r.grad = Eigen::VectorXd::Zero(n);
  r.f = safe_eval(objective, r.x, &r.grad, r.evaluations);
  if (!std::isfinite(r.f)) {
    r.message = "objective not finite at start";
    return r;
  }
  Eigen::MatrixXd h = init_h ? *init_h : Eigen::MatrixXd::Identity(n, n);
  bool scaled = init_h != nullptr;
  Eigen::VectorXd g_new(n);
  Eigen::VectorXd x_new(n);
  int stall = 0;

  for (r.iterations = 0; r.iterations < opts.max_iter; ++r.iterations) {
    const double gmax = r.grad.lpNorm<Eigen::Infinity>();
    if (gmax <= opts.grad_tol * std::max(1.0, std::abs(r.f))) {
      r.converged = true;
      r.message = "gradient tolerance reached";
      return r;
    }
    Eigen::VectorXd p = -h * r.grad;
    double slope = r.grad.dot(p);
    if (!(slope < 0.0)) {
      h = Eigen::MatrixXd::Identity(n, n);
      scaled = false;
      p = -r.grad;
      slope = r.grad.dot(p);
    }
    if (!scaled) {
      // keep the first trial step modest when no curvature is known yet
      const double pn = p.lpNorm<Eigen::Infinity>();
      if (pn > 1.0) {
        p /= pn;
        slope /= pn;
      }
    }

    double step = 1.0;
    double f_new = kInf;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = r.x + step * p;
      f_new = safe_eval(objective, x_new, opts.value_only_line_search ? nullptr : &g_new, r.evaluations);
      if (std::isfinite(f_new) && f_new <= r.f + 1e-4 * step * slope) {
        if (opts.value_only_line_search) f_new = safe_eval(objective, x_new, &g_new, r.evaluations);
        accepted = std::isfinite(f_new);
        break;
      }
      double next = 0.5 * step;
      if (std::isfinite(f_new)) {
        // minimizer of the quadratic through f(0), f'(0), f(step)
        const double q = -slope * step * step / (2.0 * (f_new - r.f - slope * step));
        if (std::isfinite(q)) next = std::clamp(q, 0.1 * step, 0.5 * step);
      }
      step = next;
    }
    if (!accepted) {
      if (gmax <= opts.stall_grad_tol * std::max(1.0, std::abs(r.f))) {
        r.converged = true;
        r.message = "line search stalled at the noise floor";
      } else {
        r.message = "line search failed";
      }
      return r;
    }

    const Eigen::VectorXd s = x_new - r.x;
    const Eigen::VectorXd y = g_new - r.grad;
    const double sy = s.dot(y);
    const double f_old = r.f;
    r.x = x_new;
    r.f = f_new;
    r.grad = g_new;

    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h * y;
      h += ((sy + y.dot(hy)) * rho * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }

    if (std::abs(f_old - r.f) <= 1e-15 * std::max(1.0, std::abs(r.f))) {
      if (++stall >= 3) {
        const double g2 = r.grad.lpNorm<Eigen::Infinity>();
        r.converged = g2 <= opts.stall_grad_tol * std::max(1.0, std::abs(r.f));
        r.message = r.converged ? "objective stalled at the noise floor" : "objective stalled";
        return r;
      }
    } else {
      stall = 0;
    }
  }
  r.message = "iteration limit reached";
  return r;
}

}  // namespace

OptimResult bfgs_minimize(const Objective& objective, const Eigen::VectorXd& x0, const OptimOptions& opts,
                          const Eigen::MatrixXd* init_inverse_hessian) {
  OptimResult best = run_bfgs(objective, x0, opts, init_inverse_hessian);
  if (best.converged) return best;
  Rng rng = Rng::stream(opts.seed, {static_cast<std::uint64_t>(x0.size())});
  int total_iter = best.iterations;
  int total_eval = best.evaluations;
  for (int k = 1; k <= opts.restarts; ++k) {
    Eigen::VectorXd start = std::isfinite(best.f) ? best.x : x0;
    for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += opts.restart_jitter * rng.normal();
    OptimResult trial = run_bfgs(objective, start, opts, nullptr);
    total_iter += trial.iterations;
    total_eval += trial.evaluations;
    if (trial.converged || !(trial.f >= best.f)) {
      best = trial;
      best.restarts_used = k;
    }
    if (best.converged) break;
  }
  best.iterations = total_iter;
  best.evaluations = total_eval;
  return best;
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            double rel_step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd fd_hessian(const Objective& objective, const Eigen::VectorXd& x, double rel_step) {
  const auto n = x.size();
  Eigen::MatrixXd hess(n, n);
  Eigen::VectorXd gp(n);
  Eigen::VectorXd gm(n);
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    const double fp = objective(xp, &gp);
    xp[j] = x[j] - h;
    const double fm = objective(xp, &gm);
    xp[j] = x[j];
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw DomainError("fd_hessian: objective not finite near x");
    hess.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

Eigen::MatrixXd fd_hessian_values(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                  double rel_step) {
  const auto n = x.size();
  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) h[i] = rel_step * std::max(1.0, std::abs(x[i]));
  auto at = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
    Eigen::VectorXd xp = x;
    xp[i] += si * h[i];
    if (j >= 0) xp[j] += sj * h[j];
    const double v = f(xp);
    if (!std::isfinite(v)) throw DomainError("fd_hessian_values: objective not finite near x");
    return v;
  };
  const double f0 = f(x);
  Eigen::MatrixXd hess(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    hess(i, i) = (at(i, 1, -1, 0) - 2.0 * f0 + at(i, -1, -1, 0)) / (h[i] * h[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) / (4.0 * h[i] * h[j]);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& m, double floor, bool* repaired) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues();
  bool changed = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (!(ev[i] >= floor)) {
      ev[i] = floor;
      changed = true;
    }
  }
  if (repaired) *repaired = changed;
  if (!changed) return sym;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd inverse_psd(const Eigen::MatrixXd& m, bool* repaired) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success) {
    if (repaired) *repaired = false;
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    return 0.5 * (inv + inv.transpose());
  }
  const Eigen::MatrixXd fixed = floor_eigenvalues(sym, 1e-10, repaired);
  if (repaired) *repaired = true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fixed);
  const Eigen::VectorXd inv_ev = es.eigenvalues().cwiseInverse();
  return es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace copreg
