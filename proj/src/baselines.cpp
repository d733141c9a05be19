#include "nebid/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "nebid/errors.hpp"

namespace nebid {

namespace {

Eigen::VectorXd stack_columns(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

}  // namespace

Eigen::VectorXd rational_from_impulse(const Eigen::Ref<const Eigen::VectorXd>& ir, Index nb, Index na) {
  if (nb < 1 || na < 0) throw InvalidArgument("rational_from_impulse: invalid orders");
  const Index K = ir.size();
  auto c = [&](Index t) { return t >= 1 && t <= K ? ir(t - 1) : 0.0; };
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(nb + na);
  for (Index t = 1; t <= nb; ++t) theta(t - 1) = c(t);
  if (na == 0 || K <= nb) return theta;
  // c(t) + sum_k a_k c(t - k) = 0 for t > nb.
  const Index rows = K - nb;
  Eigen::MatrixXd phi(rows, na);
  Eigen::VectorXd rhs(rows);
  for (Index r = 0; r < rows; ++r) {
    const Index t = nb + 1 + r;
    rhs(r) = -c(t);
    for (Index k = 1; k <= na; ++k) phi(r, k - 1) = c(t - k);
  }
  const Eigen::VectorXd a = phi.colPivHouseholderQr().solve(rhs);
  if (!a.allFinite() || !RationalTF(Eigen::VectorXd::Zero(1), a).is_stable()) return theta;
  for (Index t = 1; t <= nb; ++t) {
    double b = c(t);
    for (Index k = 1; k <= na; ++k) b += a(k - 1) * c(t - k);
    theta(t - 1) = b;
  }
  theta.tail(na) = a;
  return theta;
}

TwoStageResult two_stage(const NetworkData& data, const ModuleSet& modules, const TwoStageOptions& opts) {
  const Index p = data.p(), N = data.N(), d = data.path_dim();
  if (static_cast<Index>(modules.size()) != p) throw InvalidArgument("two_stage: one module per input is required");
  if (N <= d) throw RankDeficient("two_stage: fewer samples than sensitivity coefficients");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.R());
  qr.setThreshold(1e-10);
  if (qr.rank() < d) throw RankDeficient("two_stage: the reference regressor is rank deficient");

  TwoStageResult res;
  res.alpha.resize(d, p);
  res.w_hat.resize(N, p);
  res.sigmas.resize(p + 1);
  for (Index i = 0; i < p; ++i) {
    res.alpha.col(i) = qr.solve(data.inputs().col(i));
    res.w_hat.col(i) = data.R() * res.alpha.col(i);
    res.sigmas(i) = (data.inputs().col(i) - res.w_hat.col(i)).squaredNorm() / static_cast<double>(N - d);
  }

  const Eigen::VectorXd a_stack = stack_columns(res.alpha);
  const ThetaQuadratic quad = theta_quadratic(data, a_stack, a_stack * a_stack.transpose(), data.output());

  if (modules.all_linear()) {
    res.theta = update_theta(quad, modules, N, Eigen::VectorXd::Zero(modules.num_params()));
  } else {
    // Candidate starts: rational fit of a short FIR, FIR numerator with a = 0,
    // and random stable points.
    std::vector<Eigen::VectorXd> starts;
    const Index K = std::max<Index>(1, std::min(opts.fir_length, N / (2 * p)));
    Eigen::MatrixXd phi(N, p * K);
    for (Index i = 0; i < p; ++i) {
      Eigen::VectorXd shifted = Eigen::VectorXd::Zero(N);
      shifted.tail(N - 1) = res.w_hat.col(i).head(N - 1);
      phi.middleCols(i * K, K) = toeplitz(shifted, K);
    }
    const Eigen::VectorXd fir = phi.colPivHouseholderQr().solve(data.output());
    Eigen::VectorXd prony(modules.num_params()), zero_den(modules.num_params());
    for (std::size_t i = 0; i < modules.size(); ++i) {
      const auto& mod = modules[i];
      const Index off = modules.offset(i);
      const Eigen::VectorXd ir = fir.segment(static_cast<Index>(i) * K, K);
      if (mod.is_linear()) {
        prony.segment(off, mod.num_params()).setZero();
        zero_den.segment(off, mod.num_params()).setZero();
        continue;
      }
      prony.segment(off, mod.num_params()) = rational_from_impulse(ir, mod.nb(), mod.na());
      zero_den.segment(off, mod.num_params()).setZero();
      for (Index k = 0; k < std::min(mod.nb(), K); ++k) zero_den(off + k) = ir(k);
    }
    starts.push_back(prony);
    starts.push_back(zero_den);
    std::mt19937_64 rng(opts.seed ^ 0x243f6a8885a308d3ULL);
    for (int r = 0; r < opts.restarts; ++r) starts.push_back(random_admissible(modules, rng));

    const SmoothObjective f = [&](const Eigen::VectorXd& th, bool deriv) {
      return theta_objective(quad, modules, N, th, deriv);
    };
    std::optional<MinimizeResult> best;
    for (const auto& s : starts) {
      if (!modules.admissible(s)) continue;
      try {
        auto r = minimize_damped_newton(f, s);
        if (!best || r.value < best->value) best = std::move(r);
      } catch (const OptimizationFailure&) {
      }
    }
    if (!best) throw OptimizationFailure("two_stage: no admissible start converged");
    res.theta = best->x;
  }
  const auto gens = modules.generators(res.theta, N);
  Eigen::VectorXd e = data.output();
  for (Index i = 0; i < p; ++i) e -= toeplitz_apply(gens[static_cast<std::size_t>(i)], res.w_hat.col(i));
  res.cost = e.squaredNorm();
  res.sigmas(p) = std::max(res.cost / static_cast<double>(N), std::numeric_limits<double>::min());
  return res;
}

SmpeState smpe_initial_state(const TwoStageResult& ts) {
  return {ts.theta, ts.alpha, ts.sigmas.array().log().matrix()};
}

namespace {

struct SmpeLayout {
  Index nt, d, p;
  Index size() const { return nt + p * d + p + 1; }
};

Eigen::VectorXd pack(const SmpeState& s) {
  const Index nt = s.theta.size(), d = s.alpha.rows(), p = s.alpha.cols();
  Eigen::VectorXd x(nt + p * d + p + 1);
  x << s.theta, stack_columns(s.alpha), s.log_sigmas;
  return x;
}

SmpeState unpack(const Eigen::VectorXd& x, const SmpeLayout& L) {
  SmpeState s;
  s.theta = x.head(L.nt);
  s.alpha = Eigen::Map<const Eigen::MatrixXd>(x.data() + L.nt, L.d, L.p);
  s.log_sigmas = x.tail(L.p + 1);
  return s;
}

std::optional<LocalModel> smpe_model(const NetworkData& data, const ModuleSet& modules, const Eigen::VectorXd& x,
                                     const SmpeLayout& L, bool with_derivatives) {
  if (!x.allFinite()) return std::nullopt;
  const SmpeState s = unpack(x, L);
  if (!modules.admissible(s.theta)) return std::nullopt;
  const Index N = data.N(), p = L.p, d = L.d, nt = L.nt;
  const double dN = static_cast<double>(N);
  const auto gens = modules.generators(s.theta, N);

  LocalModel lm;
  Eigen::MatrixXd w_hat(N, p);
  Eigen::VectorXd eps_j = data.output();
  std::vector<Eigen::VectorXd> eps(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) {
    w_hat.col(i) = data.R() * s.alpha.col(i);
    eps[static_cast<std::size_t>(i)] = data.inputs().col(i) - w_hat.col(i);
    eps_j -= toeplitz_apply(gens[static_cast<std::size_t>(i)], w_hat.col(i));
  }
  Eigen::VectorXd sq(p + 1), wgt(p + 1);
  for (Index c = 0; c <= p; ++c) {
    sq(c) = c < p ? eps[static_cast<std::size_t>(c)].squaredNorm() : eps_j.squaredNorm();
    wgt(c) = std::exp(-s.log_sigmas(c));
  }
  lm.value = (wgt.cwiseProduct(sq).sum() + dN * s.log_sigmas.sum()) / dN;
  if (!std::isfinite(lm.value)) return std::nullopt;
  if (!with_derivatives) return lm;

  const Index nz = nt + p * d;
  lm.gradient = Eigen::VectorXd::Zero(L.size());
  lm.hessian = Eigen::MatrixXd::Zero(L.size(), L.size());
  // Output channel: d eps_j / d z = -Jo.
  Eigen::MatrixXd jo(N, nz);
  const Eigen::MatrixXd gj = modules.jacobian(s.theta, N);
  for (Index i = 0; i < p; ++i) {
    const auto& mod = modules[static_cast<std::size_t>(i)];
    const Index off = modules.offset(static_cast<std::size_t>(i));
    jo.middleCols(off, mod.num_params()) =
        toeplitz_apply(w_hat.col(i), gj.block(i * N, off, N, mod.num_params()));
    jo.middleCols(nt + i * d, d) = toeplitz_apply(gens[static_cast<std::size_t>(i)], data.R());
  }
  const double wj = 2.0 * wgt(p) / dN;
  lm.gradient.head(nz) = -wj * jo.transpose() * eps_j;
  lm.hessian.topLeftCorner(nz, nz).selfadjointView<Eigen::Lower>().rankUpdate(jo.transpose(), wj);
  for (Index i = 0; i < p; ++i) {
    const double wi = 2.0 * wgt(i) / dN;
    lm.gradient.segment(nt + i * d, d) -= wi * data.R().transpose() * eps[static_cast<std::size_t>(i)];
    lm.hessian.block(nt + i * d, nt + i * d, d, d).triangularView<Eigen::Lower>() += wi * data.RtR();
  }
  for (Index c = 0; c <= p; ++c) {
    lm.gradient(nz + c) = 1.0 - wgt(c) * sq(c) / dN;
    lm.hessian(nz + c, nz + c) = wgt(c) * sq(c) / dN;
  }
  lm.hessian.triangularView<Eigen::StrictlyUpper>() = lm.hessian.transpose();
  return lm;
}

}  // namespace

double smpe_cost(const NetworkData& data, const ModuleSet& modules, const SmpeState& state) {
  const SmpeLayout L{state.theta.size(), data.path_dim(), data.p()};
  if (state.alpha.rows() != L.d || state.alpha.cols() != L.p || state.log_sigmas.size() != L.p + 1 ||
      state.theta.size() != modules.num_params())
    throw InvalidArgument("smpe_cost: state has the wrong shape");
  const auto m = smpe_model(data, modules, pack(state), L, false);
  if (!m) throw InvalidArgument("smpe_cost: parameters are not admissible");
  return m->value;
}

SmpeResult smpe(const NetworkData& data, const ModuleSet& modules, const SmpeState& init, const SmpeOptions& opts) {
  const SmpeLayout L{init.theta.size(), data.path_dim(), data.p()};
  if (init.alpha.rows() != L.d || init.alpha.cols() != L.p || init.log_sigmas.size() != L.p + 1 ||
      init.theta.size() != modules.num_params())
    throw InvalidArgument("smpe: initial state has the wrong shape");
  const SmoothObjective f = [&](const Eigen::VectorXd& x, bool deriv) {
    return smpe_model(data, modules, x, L, deriv);
  };
  MinimizeOptions mo;
  mo.max_iter = opts.max_iter;
  mo.xtol = 0.0;
  mo.gtol = 0.0;
  const Index nt = L.nt;
  mo.stop = [nt, tol = opts.tol](const Eigen::VectorXd& prev, const Eigen::VectorXd& next) {
    const double den = std::max(prev.head(nt).norm(), std::numeric_limits<double>::min());
    return (next.head(nt) - prev.head(nt)).norm() / den < tol;
  };
  const MinimizeResult r = minimize_damped_newton(f, pack(init), mo);
  SmpeResult out;
  out.state = unpack(r.x, L);
  out.cost_trace = r.trace;
  out.iterations = r.iterations;
  out.converged = r.converged;
  return out;
}

double fit_metric(const Eigen::Ref<const Eigen::VectorXd>& g_true, const Eigen::Ref<const Eigen::VectorXd>& g_hat) {
  if (g_true.size() != g_hat.size()) throw InvalidArgument("fit_metric: length mismatch");
  // Both norms use the same storage and reduction order so the exact cases hold.
  const Eigen::VectorXd g = g_true;
  const Eigen::VectorXd e = g_true - g_hat;
  const double nt = g.norm();
  if (!(nt > 0.0)) throw InvalidArgument("fit_metric: undefined for a zero true response");
  return 1.0 - e.norm() / nt;
}

}  // namespace nebid
