#include "prodest/qp.hpp"

#include <cstdio>
#include <cstdlib>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace prodest::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.array().abs().maxCoeff();
}

//! Compressed-row mirror of a dense matrix. The shape-constrained QPs in this
//! project carry very sparse constraint rows (2-4 nonzeros), where CSR
//! products beat dense ones by two orders of magnitude.
struct CsrMatrix {
  int rows = 0, cols = 0;
  std::vector<int> row_ptr;
  std::vector<int> col_idx;
  std::vector<double> values;

  static CsrMatrix from_dense(const Eigen::MatrixXd& a, double drop_tol) {
    CsrMatrix m;
    m.rows = static_cast<int>(a.rows());
    m.cols = static_cast<int>(a.cols());
    m.row_ptr.assign(m.rows + 1, 0);
    for (int i = 0; i < m.rows; ++i) {
      for (int j = 0; j < m.cols; ++j) {
        if (std::abs(a(i, j)) > drop_tol) {
          m.col_idx.push_back(j);
          m.values.push_back(a(i, j));
        }
      }
      m.row_ptr[i + 1] = static_cast<int>(m.col_idx.size());
    }
    return m;
  }

  double density() const {
    const double total = static_cast<double>(rows) * cols;
    return total == 0 ? 1.0 : static_cast<double>(values.size()) / total;
  }

  void multiply(const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
    for (int i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        acc += values[k] * x[col_idx[k]];
      out[i] = acc;
    }
  }

  void multiply_transpose(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
    out.setZero();
    for (int i = 0; i < rows; ++i) {
      const double vi = v[i];
      if (vi == 0.0) continue;
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        out[col_idx[k]] += values[k] * vi;
    }
  }

  //! out += sum_i rho_i a_i a_i' (lower triangle filled, symmetrized by caller)
  void add_weighted_gram(const Eigen::VectorXd& rho, Eigen::MatrixXd& out) const {
    for (int i = 0; i < rows; ++i) {
      const double w = rho[i];
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        for (int l = row_ptr[i]; l <= k; ++l) {
          out(col_idx[k], col_idx[l]) += w * values[k] * values[l];
        }
      }
    }
  }
};

}  // namespace

void Problem::validate() const {
  const int n = num_vars();
  if (Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("qp: Q must be n x n with n = c.size()");
  if (A_ineq.size() > 0 && A_ineq.cols() != n)
    throw std::invalid_argument("qp: A_ineq column count mismatch");
  if (A_ineq.rows() != b_ineq.size())
    throw std::invalid_argument("qp: A_ineq/b_ineq row mismatch");
  if (A_eq.size() > 0 && A_eq.cols() != n)
    throw std::invalid_argument("qp: A_eq column count mismatch");
  if (A_eq.rows() != b_eq.size())
    throw std::invalid_argument("qp: A_eq/b_eq row mismatch");
  const double scale = std::max(1.0, max_abs(Q));
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("qp: Q is not symmetric within tolerance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Q, Eigen::EigenvaluesOnly);
  const double norm = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, norm))
    throw std::invalid_argument("qp: Q has eigenvalues below the PSD slack");
}

struct BoxSolver::Impl {
  // problem data (original units)
  Eigen::MatrixXd Q;
  Eigen::MatrixXd A;
  int n = 0, m = 0;

  // scalings: rows of A scaled by e, objective scaled by kappa
  Eigen::VectorXd row_scale;
  double kappa = 1.0;
  Eigen::MatrixXd A_scaled;
  CsrMatrix A_csr;
  bool use_csr = false;
  Eigen::MatrixXd Q_scaled;

  // operator-splitting state
  double sigma = 1e-6;
  double relax = 1.6;
  Eigen::VectorXd rho;
  Eigen::LDLT<Eigen::MatrixXd> kkt;
  bool factored = false;
  std::vector<bool> eq_mask;

  Impl(Eigen::MatrixXd q, Eigen::MatrixXd a) : Q(std::move(q)), A(std::move(a)) {
    n = static_cast<int>(Q.rows());
    m = static_cast<int>(A.rows());
    if (A.size() > 0 && A.cols() != n)
      throw std::invalid_argument("qp: constraint matrix column mismatch");
    const double qmax = max_abs(Q);
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, qmax))
      throw std::invalid_argument("qp: Q is not symmetric within tolerance");
    kappa = 1.0 / std::max(1.0, qmax);
    Q_scaled = kappa * Q;
    row_scale.resize(m);
    A_scaled.resize(m, n);
    for (int i = 0; i < m; ++i) {
      const double nrm = m > 0 ? A.row(i).cwiseAbs().maxCoeff() : 0.0;
      row_scale[i] = 1.0 / std::max(nrm, 1e-10);
      A_scaled.row(i) = row_scale[i] * A.row(i);
    }
    if (m > 64) {
      CsrMatrix csr = CsrMatrix::from_dense(A_scaled, 0.0);
      if (csr.density() < 0.25) {
        A_csr = std::move(csr);
        use_csr = true;
      }
    }
  }

  void factorize() {
    Eigen::MatrixXd M = Q_scaled;
    M.diagonal().array() += sigma;
    if (m > 0) {
      if (use_csr) {
        A_csr.add_weighted_gram(rho, M);
        M = M.selfadjointView<Eigen::Lower>();
      } else {
        M.noalias() += A_scaled.transpose() * rho.asDiagonal() * A_scaled;
      }
    }
    kkt.compute(M);
    factored = true;
  }

  void mat_A(const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
    if (use_csr)
      A_csr.multiply(x, out);
    else
      out.noalias() = A_scaled * x;
  }

  void mat_At(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
    if (use_csr)
      A_csr.multiply_transpose(v, out);
    else
      out.noalias() = A_scaled.transpose() * v;
  }
};

BoxSolver::BoxSolver(Eigen::MatrixXd Q, Eigen::MatrixXd A)
    : impl_(std::make_unique<Impl>(std::move(Q), std::move(A))) {}
BoxSolver::~BoxSolver() = default;
BoxSolver::BoxSolver(BoxSolver&&) noexcept = default;
BoxSolver& BoxSolver::operator=(BoxSolver&&) noexcept = default;

int BoxSolver::num_vars() const { return impl_->n; }
int BoxSolver::num_rows() const { return impl_->m; }

namespace {

struct PolishData {
  const Eigen::MatrixXd& Q;
  const Eigen::MatrixXd& A;
  int n;
  int m;
};

//! KKT solve on a working active set seeded from the splitting iterate,
//! with a few rounds of dropping wrong-signed rows and adding violated ones.
//! Returns false when no consistent active set is found within the cap.
bool polish_solution(const BoxSolver::Result& admm, const PolishData& s,
                     const Eigen::VectorXd& c_orig, const Eigen::VectorXd& lower,
                     const Eigen::VectorXd& upper, BoxSolver::Result& out) {
  const int n = s.n;
  std::vector<int> side(s.m, 0);  // 0 inactive, +1 upper, -1 lower, 2 equality
  Eigen::VectorXd ax = s.m > 0 ? Eigen::VectorXd(s.A * admm.x) : Eigen::VectorXd(0);
  const double slack_tol =
      std::max(1e-7, 10.0 * admm.primal_residual);
  for (int i = 0; i < s.m; ++i) {
    const bool is_eq = std::isfinite(lower[i]) && std::isfinite(upper[i]) &&
                       upper[i] - lower[i] <= 0.0;
    const double act_tol = slack_tol * std::max(1.0, std::abs(ax[i]));
    const bool near_up = std::isfinite(upper[i]) && upper[i] - ax[i] <= act_tol;
    const bool near_lo = std::isfinite(lower[i]) && ax[i] - lower[i] <= act_tol;
    if (is_eq) {
      side[i] = 2;
    } else if ((admm.y[i] > 0.0 && near_up) || (near_up && !near_lo)) {
      side[i] = 1;
    } else if ((admm.y[i] < 0.0 && near_lo) || (near_lo && !near_up)) {
      side[i] = -1;
    } else if (near_up) {
      side[i] = admm.y[i] >= 0.0 ? 1 : -1;
    }
  }

  const double reg = 1e-9 * std::max(1.0, max_abs(s.Q));
  Eigen::VectorXd x, y;
  double rp = 0.0, rd = 0.0;
  for (int round = 0; round < 40; ++round) {
    std::vector<int> active;
    for (int i = 0; i < s.m; ++i)
      if (side[i] != 0) active.push_back(i);
    const int k = static_cast<int>(active.size());
    const int dim = n + k;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim, dim);
    K.topLeftCorner(n, n) = s.Q;
    for (int i = 0; i < n; ++i) K(i, i) += reg;
    Eigen::VectorXd rhs(dim);
    rhs.head(n) = -c_orig;
    for (int j = 0; j < k; ++j) {
      const int i = active[j];
      K.block(n + j, 0, 1, n) = s.A.row(i);
      K.block(0, n + j, n, 1) = s.A.row(i).transpose();
      K(n + j, n + j) = -100.0 * reg;
      rhs[n + j] = side[i] == -1 ? lower[i] : upper[i];
    }
    Eigen::LDLT<Eigen::MatrixXd> fact(K);
    if (fact.info() != Eigen::Success) return false;
    // the regularized solve spreads multipliers of near-duplicate rows
    // evenly, which keeps their signs meaningful for the drop logic
    const Eigen::VectorXd sol_stable = fact.solve(rhs);
    Eigen::VectorXd sol = sol_stable;
    Eigen::MatrixXd K0 = K;
    for (int i = 0; i < n; ++i) K0(i, i) -= reg;
    for (int j = 0; j < k; ++j) K0(n + j, n + j) += 100.0 * reg;
    for (int r = 0; r < 3; ++r) sol += fact.solve(rhs - K0 * sol);

    x = sol.head(n);
    y = Eigen::VectorXd::Zero(s.m);
    for (int j = 0; j < k; ++j) y[active[j]] = sol[n + j];

    // drop the most wrong-signed actives, a slice at a time to avoid cycling
    const double y_scale =
        k > 0 ? std::max(1.0, sol_stable.tail(k).cwiseAbs().maxCoeff()) : 1.0;
    const double sign_tol = 1e-8 * y_scale;
    std::vector<std::pair<double, int>> wrong;  // (badness, row)
    for (int j = 0; j < k; ++j) {
      const int i = active[j];
      if (side[i] == 1 && sol_stable[n + j] < -sign_tol)
        wrong.emplace_back(sol_stable[n + j], i);
      else if (side[i] == -1 && sol_stable[n + j] > sign_tol)
        wrong.emplace_back(-sol_stable[n + j], i);
    }
    bool changed = false;
    if (!wrong.empty()) {
      std::sort(wrong.begin(), wrong.end());
      const int budget =
          std::max(1, static_cast<int>(wrong.size() + 3) / 4);
      for (int t = 0; t < budget && t < static_cast<int>(wrong.size()); ++t)
        side[wrong[t].second] = 0;
      changed = true;
    }
    if (changed) continue;

    // pull in rows the polished point violates
    if (s.m > 0) ax = s.A * x;
    rp = 0.0;
    for (int i = 0; i < s.m; ++i) {
      double v = 0.0;
      if (std::isfinite(upper[i])) v = std::max(v, ax[i] - upper[i]);
      if (std::isfinite(lower[i])) v = std::max(v, lower[i] - ax[i]);
      rp = std::max(rp, v);
      if (side[i] != 0) continue;
      if (std::isfinite(upper[i]) && ax[i] - upper[i] > 1e-10) {
        side[i] = 1;
        changed = true;
      } else if (std::isfinite(lower[i]) && lower[i] - ax[i] > 1e-10) {
        side[i] = -1;
        changed = true;
      }
    }
    if (changed) continue;

    Eigen::VectorXd grad = s.Q * x + c_orig;
    if (s.m > 0) grad.noalias() += s.A.transpose() * y;
    rd = grad.cwiseAbs().maxCoeff();
    if (rp <= std::max(admm.primal_residual, 1e-9) &&
        rd <= std::max(admm.dual_residual, 1e-9)) {
      out = admm;
      out.x = std::move(x);
      out.y = std::move(y);
      out.primal_residual = rp;
      out.dual_residual = rd;
      return true;
    }
    return false;
  }
  return false;
}

}  // namespace

BoxSolver::Result BoxSolver::solve(const Eigen::VectorXd& c,
                                   const Eigen::VectorXd& lower,
                                   const Eigen::VectorXd& upper,
                                   const Settings& settings,
                                   const Eigen::VectorXd* warm_x,
                                   const Eigen::VectorXd* warm_y) {
  Impl& s = *impl_;
  const int n = s.n;
  const int m = s.m;
  if (c.size() != n) throw std::invalid_argument("qp: c size mismatch");
  if (lower.size() != m || upper.size() != m)
    throw std::invalid_argument("qp: bound size mismatch");

  Result res;
  res.x = Eigen::VectorXd::Zero(n);
  res.y = Eigen::VectorXd::Zero(m);

  // unconstrained: one linear solve
  if (m == 0) {
    Eigen::MatrixXd M = s.Q;
    const double reg = 1e-12 * std::max(1.0, max_abs(s.Q));
    M.diagonal().array() += reg;
    Eigen::LDLT<Eigen::MatrixXd> fact(M);
    Eigen::VectorXd x = fact.solve(-c);
    for (int r = 0; r < 2; ++r) x += fact.solve(-c - s.Q * x);
    res.x = x;
    res.dual_residual = (s.Q * x + c).cwiseAbs().maxCoeff();
    res.objective = 0.5 * x.dot(s.Q * x) + c.dot(x);
    const double scale = std::max({1.0, c.cwiseAbs().maxCoeff(),
                                   (s.Q * x).cwiseAbs().maxCoeff()});
    res.status = res.dual_residual <= settings.eps_feas + settings.eps_rel * scale
                     ? Status::Optimal
                     : Status::MaxIterations;
    res.iterations = 1;
    return res;
  }

  // scaled bounds and cost
  Eigen::VectorXd lo(m), up(m);
  std::vector<bool> eq_mask(m);
  for (int i = 0; i < m; ++i) {
    lo[i] = std::isfinite(lower[i]) ? lower[i] * s.row_scale[i] : -kInf;
    up[i] = std::isfinite(upper[i]) ? upper[i] * s.row_scale[i] : kInf;
    eq_mask[i] = std::isfinite(lower[i]) && std::isfinite(upper[i]) &&
                 (upper[i] - lower[i]) <= 1e-14 * std::max(1.0, std::abs(upper[i]));
  }
  Eigen::VectorXd c_s = s.kappa * c;

  const double rho0 = 0.1;
  if (!s.factored || s.eq_mask != eq_mask) {
    s.rho.resize(m);
    for (int i = 0; i < m; ++i) s.rho[i] = eq_mask[i] ? 1e3 * rho0 : rho0;
    s.eq_mask = eq_mask;
    s.factorize();
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (warm_x && warm_x->size() == n)
    x = *warm_x;
  else if (settings.x0 && settings.x0->size() == n)
    x = *settings.x0;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  if (warm_y && warm_y->size() == m)
    for (int i = 0; i < m; ++i) y[i] = (*warm_y)[i] * s.kappa / s.row_scale[i];

  Eigen::VectorXd z(m), ax(m), xt(n), zt(m), rhs(n), aty(n), tmp_m(m), tmp_n(n);
  s.mat_A(x, z);
  z = z.cwiseMax(lo).cwiseMin(up);

  auto resid_report = [&](double& rp, double& rd, double& den_p, double& den_d) {
    s.mat_A(x, ax);
    rp = 0.0;
    for (int i = 0; i < m; ++i)
      rp = std::max(rp, std::abs(ax[i] - z[i]) / s.row_scale[i]);
    s.mat_At(y, aty);
    tmp_n.noalias() = s.Q_scaled * x;
    den_p = 0.0;
    for (int i = 0; i < m; ++i)
      den_p = std::max({den_p, std::abs(ax[i]) / s.row_scale[i],
                        std::abs(z[i]) / s.row_scale[i]});
    rd = (tmp_n + c_s + aty).cwiseAbs().maxCoeff() / s.kappa;
    den_d = std::max({tmp_n.cwiseAbs().maxCoeff() / s.kappa,
                      aty.cwiseAbs().maxCoeff() / s.kappa,
                      c.size() > 0 ? c.cwiseAbs().maxCoeff() : 0.0});
  };

  const int check_every = 25;
  Eigen::VectorXd y_prev_check = y;
  int it = 0;
  bool converged = false;
  int last_polish_attempt = -1000;
  int polish_backoff = 100;
  for (it = 1; it <= settings.max_iter; ++it) {
    // x update
    s.mat_At((s.rho.array() * z.array() - y.array()).matrix(), rhs);
    rhs.noalias() += s.sigma * x - c_s;
    xt = s.kkt.solve(rhs);
    s.mat_A(xt, zt);
    // relaxed z / y updates
    x = s.relax * xt + (1.0 - s.relax) * x;
    tmp_m = s.relax * zt + (1.0 - s.relax) * z;
    Eigen::VectorXd w = tmp_m + (y.array() / s.rho.array()).matrix();
    z = w.cwiseMax(lo).cwiseMin(up);
    y.array() += s.rho.array() * (tmp_m - z).array();

    if (it % check_every != 0 && it != settings.max_iter) continue;

    double rp, rd, den_p, den_d;
    resid_report(rp, rd, den_p, den_d);
    const double eps_p = settings.eps_feas;  // feasibility target is absolute
    const double eps_d = settings.eps_feas + settings.eps_rel * den_d;
    if (rp <= eps_p && rd <= eps_d) {
      converged = true;
      res.primal_residual = rp;
      res.dual_residual = rd;
      break;
    }

    // medium accuracy reached: an active-set polish usually lands on the
    // exact optimum long before the splitting iteration does
    const bool medium = rp <= std::max(eps_p, 1e-5 * std::max(1.0, den_p)) &&
                        rd <= std::max(eps_d, 1e-5 * std::max(1.0, den_d));
    if (settings.polish && medium && it - last_polish_attempt >= polish_backoff) {
      last_polish_attempt = it;
      polish_backoff = std::min(2 * polish_backoff, 3200);
      Result candidate;
      candidate.x = x;
      candidate.y = (y.array() * s.row_scale.array()).matrix() / s.kappa;
      candidate.primal_residual = rp;
      candidate.dual_residual = rd;
      const PolishData pd{s.Q, s.A, s.n, s.m};
      Result polished;
      if (polish_solution(candidate, pd, c, lower, upper, polished) &&
          polished.primal_residual <= eps_p && polished.dual_residual <= eps_d) {
        polished.objective =
            0.5 * polished.x.dot(s.Q * polished.x) + c.dot(polished.x);
        polished.iterations = it;
        polished.status = Status::Optimal;
        return polished;
      }
    }

    // primal infeasibility certificate
    Eigen::VectorXd dy = y - y_prev_check;
    const double dy_norm = dy.cwiseAbs().maxCoeff();
    if (dy_norm > 1e-12) {
      s.mat_At(dy, tmp_n);
      if (tmp_n.cwiseAbs().maxCoeff() <= 1e-10 * dy_norm) {
        double support = 0.0;
        bool unbounded_support = false;
        for (int i = 0; i < m; ++i) {
          const double dpos = std::max(dy[i], 0.0);
          const double dneg = std::min(dy[i], 0.0);
          if (dpos > 1e-10 * dy_norm && !std::isfinite(up[i])) unbounded_support = true;
          if (-dneg > 1e-10 * dy_norm && !std::isfinite(lo[i])) unbounded_support = true;
          if (std::isfinite(up[i])) support += up[i] * dpos;
          if (std::isfinite(lo[i])) support += lo[i] * dneg;
        }
        if (!unbounded_support && support <= -1e-10 * dy_norm) {
          res.status = Status::Infeasible;
          res.x = x;
          res.y = (y.array() * s.row_scale.array()).matrix() / s.kappa;
          res.primal_residual = rp;
          res.dual_residual = rd;
          res.iterations = it;
          res.objective = 0.5 * x.dot(s.Q * x) + c.dot(x);
          return res;
        }
      }
    }
    y_prev_check = y;

    // adaptive step: rebalance rho toward equal scaled residuals
    if (it % 100 == 0 && it < settings.max_iter) {
      const double num = rp / std::max(den_p, 1e-10);
      const double den = rd / std::max(den_d, 1e-10);
      const double ratio = num / std::max(den, 1e-16);
      if (ratio > 25.0 || ratio < 0.04) {
        const double factor =
            std::clamp(std::sqrt(ratio), 1e-3, 1e3);
        for (int i = 0; i < m; ++i)
          s.rho[i] = std::clamp(s.rho[i] * factor, 1e-6, 1e6);
        s.factorize();
      }
    }
  }

  if (!converged) {
    double rp, rd, den_p, den_d;
    resid_report(rp, rd, den_p, den_d);
    res.primal_residual = rp;
    res.dual_residual = rd;
  }
  res.x = x;
  res.y = (y.array() * s.row_scale.array()).matrix() / s.kappa;
  res.iterations = std::min(it, settings.max_iter);
  res.status = converged ? Status::Optimal : Status::MaxIterations;
  res.objective = 0.5 * x.dot(s.Q * x) + c.dot(x);

  if (settings.polish && converged) {
    Result polished;
    const PolishData pd{s.Q, s.A, s.n, s.m};
    if (polish_solution(res, pd, c, lower, upper, polished)) {
      polished.objective = 0.5 * polished.x.dot(s.Q * polished.x) + c.dot(polished.x);
      polished.iterations = res.iterations;
      polished.status = Status::Optimal;
      return polished;
    }
  }
  return res;
}

namespace {

struct IpmResult {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;  // >= 0, one per inequality
  Eigen::VectorXd nu;      // equality multipliers
  bool converged = false;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

//! Mehrotra predictor-corrector interior point for
//!   min 1/2 x'Qx + c'x  s.t.  A x <= b,  E x = f.
//! Handles positive-semidefinite Q through primal-dual regularization; the
//! shape-constrained least-squares programs in this project are exactly that
//! and splitting methods crawl on them.
IpmResult solve_interior(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c,
                         const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                         const Eigen::MatrixXd& E, const Eigen::VectorXd& f,
                         const Settings& settings) {
  const int n = static_cast<int>(c.size());
  const int mi = static_cast<int>(b.size());
  const int me = static_cast<int>(f.size());
  IpmResult out;

  const double kappa = 1.0 / std::max(1.0, max_abs(Q));
  const Eigen::MatrixXd Qs = kappa * Q;
  const Eigen::VectorXd cs = kappa * c;

  Eigen::VectorXd row_scale_i(mi), bs(mi);
  Eigen::MatrixXd As(mi, n);
  for (int i = 0; i < mi; ++i) {
    const double nrm = A.row(i).cwiseAbs().maxCoeff();
    row_scale_i[i] = 1.0 / std::max(nrm, 1e-10);
    As.row(i) = row_scale_i[i] * A.row(i);
    bs[i] = row_scale_i[i] * b[i];
  }
  Eigen::VectorXd row_scale_e(me), fs(me);
  Eigen::MatrixXd Es(me, n);
  for (int i = 0; i < me; ++i) {
    const double nrm = E.row(i).cwiseAbs().maxCoeff();
    row_scale_e[i] = 1.0 / std::max(nrm, 1e-10);
    Es.row(i) = row_scale_e[i] * E.row(i);
    fs[i] = row_scale_e[i] * f[i];
  }

  CsrMatrix As_csr;
  bool use_csr = false;
  if (mi > 64) {
    CsrMatrix csr = CsrMatrix::from_dense(As, 0.0);
    if (csr.density() < 0.25) {
      As_csr = std::move(csr);
      use_csr = true;
    }
  }
  auto mul_A = [&](const Eigen::VectorXd& v, Eigen::VectorXd& dst) {
    if (use_csr)
      As_csr.multiply(v, dst);
    else
      dst.noalias() = As * v;
  };
  auto mul_At = [&](const Eigen::VectorXd& v, Eigen::VectorXd& dst) {
    if (use_csr)
      As_csr.multiply_transpose(v, dst);
    else
      dst.noalias() = As.transpose() * v;
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (settings.x0 && settings.x0->size() == n) x = *settings.x0;
  Eigen::VectorXd ax(mi), slack(mi), lambda(mi), nu = Eigen::VectorXd::Zero(me);
  mul_A(x, ax);
  for (int i = 0; i < mi; ++i) {
    slack[i] = std::max(1.0, bs[i] - ax[i]);
    lambda[i] = 1.0;
  }

  const double reg = 1e-9;
  const int dim = n + me;
  Eigen::MatrixXd K(dim, dim);
  Eigen::VectorXd rhs(dim), dx(n), dnu(me), ds(mi), dl(mi), rd(n), tmp_n(n);
  Eigen::LDLT<Eigen::MatrixXd> fact;

  const int max_iters = 120;
  for (int iter = 1; iter <= max_iters; ++iter) {
    mul_A(x, ax);
    Eigen::VectorXd rp_i = ax + slack - bs;                 // == 0 at optimum
    Eigen::VectorXd rp_e = me > 0 ? Eigen::VectorXd(Es * x - fs) : Eigen::VectorXd(0);
    mul_At(lambda, rd);
    rd.noalias() += Qs * x + cs;
    if (me > 0) rd.noalias() += Es.transpose() * nu;
    const double mu = mi > 0 ? slack.dot(lambda) / mi : 0.0;

    // residuals in original units
    double rp_orig = 0.0;
    for (int i = 0; i < mi; ++i)
      rp_orig = std::max(rp_orig, std::max(0.0, ax[i] - bs[i]) / row_scale_i[i]);
    for (int i = 0; i < me; ++i)
      rp_orig = std::max(rp_orig, std::abs(rp_e[i]) / row_scale_e[i]);
    const double rd_orig = rd.cwiseAbs().maxCoeff() / kappa;
    double den_d = std::max(1.0, (Qs * x).cwiseAbs().maxCoeff() / kappa);
    den_d = std::max(den_d, c.size() > 0 ? c.cwiseAbs().maxCoeff() : 0.0);
    const double obj_scale = std::max(1.0, std::abs(0.5 * x.dot(Q * x) + c.dot(x)));
    if (rp_orig <= settings.eps_feas &&
        rd_orig <= settings.eps_feas + settings.eps_rel * den_d &&
        (mi == 0 || mu / kappa <= 1e-10 * obj_scale + 1e-9)) {
      out.converged = true;
      out.x = x;
      out.lambda.resize(mi);
      for (int i = 0; i < mi; ++i)
        out.lambda[i] = lambda[i] * row_scale_i[i] / kappa;
      out.nu.resize(me);
      for (int i = 0; i < me; ++i) out.nu[i] = nu[i] * row_scale_e[i] / kappa;
      out.primal_residual = rp_orig;
      out.dual_residual = rd_orig;
      out.iterations = iter;
      return out;
    }

    // normal-equations block with the current barrier weights
    Eigen::VectorXd d = (lambda.array() / slack.array()).matrix();
    K.setZero();
    K.topLeftCorner(n, n) = Qs;
    for (int i = 0; i < n; ++i) K(i, i) += reg;
    if (mi > 0) {
      if (use_csr) {
        As_csr.add_weighted_gram(d, K);
        K.topLeftCorner(n, n) =
            K.topLeftCorner(n, n).selfadjointView<Eigen::Lower>();
      } else {
        K.topLeftCorner(n, n).noalias() += As.transpose() * d.asDiagonal() * As;
      }
    }
    for (int i = 0; i < me; ++i) {
      K.block(n + i, 0, 1, n) = Es.row(i);
      K.block(0, n + i, n, 1) = Es.row(i).transpose();
      K(n + i, n + i) = -reg;
    }
    fact.compute(K);
    if (fact.info() != Eigen::Success) break;

    // eliminate (ds, dl): dl = -(r_comp + lambda ds)/s, ds = -rp_i - A dx,
    // leaving (Q + A'DA) dx + E' dnu = -rd + A'(r_comp/s - D rp_i)
    auto solve_direction = [&](const Eigen::VectorXd& r_comp) {
      const Eigen::VectorXd w =
          (r_comp.array() / slack.array()).matrix() - d.cwiseProduct(rp_i);
      mul_At(w, tmp_n);
      rhs.head(n) = -rd + tmp_n;
      rhs.tail(me) = -rp_e;
      const Eigen::VectorXd sol = fact.solve(rhs);
      dx = sol.head(n);
      dnu = sol.tail(me);
      Eigen::VectorXd adx(mi);
      mul_A(dx, adx);
      ds = -rp_i - adx;
      dl = -((r_comp + lambda.cwiseProduct(ds)).array() / slack.array()).matrix();
    };

    auto step_length = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
      double alpha = 1.0;
      for (int i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
      return alpha;
    };

    // predictor
    Eigen::VectorXd r_comp = slack.cwiseProduct(lambda);
    solve_direction(r_comp);
    const double alpha_p_aff = step_length(slack, ds);
    const double alpha_d_aff = step_length(lambda, dl);
    double mu_aff = 0.0;
    if (mi > 0)
      mu_aff = (slack + alpha_p_aff * ds).dot(lambda + alpha_d_aff * dl) / mi;
    const double sigma =
        mu > 0 ? std::clamp(std::pow(mu_aff / mu, 3.0), 1e-8, 1.0) : 0.0;

    // corrector
    Eigen::VectorXd corr =
        slack.cwiseProduct(lambda) + ds.cwiseProduct(dl) -
        Eigen::VectorXd::Constant(mi, sigma * mu);
    solve_direction(corr);

    const double alpha_p = std::min(1.0, 0.995 * step_length(slack, ds));
    const double alpha_d = std::min(1.0, 0.995 * step_length(lambda, dl));
    if (getenv("PRODEST_QP_DEBUG"))
      fprintf(stderr, "[ipm] it=%d mu=%.2e rp=%.2e rd=%.2e ap=%.2e ad=%.2e\n",
              iter, mu, rp_orig, rd_orig, alpha_p, alpha_d);
    x += alpha_p * dx;
    slack += alpha_p * ds;
    lambda += alpha_d * dl;
    nu += alpha_d * dnu;
    out.iterations = iter;
  }
  return out;
}

}  // namespace

Solution solve(const Problem& problem, const Settings& settings) {
  const int n = problem.num_vars();
  const int mi = problem.num_ineq();
  const int me = problem.num_eq();
  if (problem.Q.rows() != n || problem.Q.cols() != n)
    throw std::invalid_argument("qp: Q must be n x n");

  Eigen::MatrixXd A(mi + me, n);
  Eigen::VectorXd lo(mi + me), up(mi + me);
  if (mi > 0) {
    A.topRows(mi) = problem.A_ineq;
    lo.head(mi).setConstant(-kInf);
    up.head(mi) = problem.b_ineq;
  }
  if (me > 0) {
    A.bottomRows(me) = problem.A_eq;
    lo.tail(me) = problem.b_eq;
    up.tail(me) = problem.b_eq;
  }

  // interior point first: robust on the degenerate least-squares programs;
  // the splitting solver below doubles as the infeasibility detector
  if (mi > 0) {
    IpmResult ipm = solve_interior(problem.Q, problem.c, problem.A_ineq,
                                   problem.b_ineq, problem.A_eq, problem.b_eq,
                                   settings);
    if (ipm.converged) {
      Solution out;
      out.x = std::move(ipm.x);
      out.dual_ineq = std::move(ipm.lambda);
      out.dual_eq = std::move(ipm.nu);
      out.objective = 0.5 * out.x.dot(problem.Q * out.x) + problem.c.dot(out.x);
      out.status = Status::Optimal;
      out.primal_residual = ipm.primal_residual;
      out.dual_residual = ipm.dual_residual;
      out.iterations = ipm.iterations;
      return out;
    }
  }

  BoxSolver solver(problem.Q, std::move(A));
  BoxSolver::Result r = solver.solve(problem.c, lo, up, settings);

  Solution out;
  out.x = std::move(r.x);
  out.dual_ineq = r.y.head(mi);
  out.dual_eq = r.y.tail(me);
  out.objective = r.objective;
  out.status = r.status;
  out.primal_residual = r.primal_residual;
  out.dual_residual = r.dual_residual;
  out.iterations = r.iterations;
  return out;
}

}  // namespace prodest::qp
