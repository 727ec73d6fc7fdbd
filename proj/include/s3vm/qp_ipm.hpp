/**
 * @file qp_ipm.hpp
 * @brief Primal-dual interior-point engine for convex QPs and QCQPs.
 *
 * Handles problems of the form
 *
 *   min  (1/2) x'Qx + c'x
 *   s.t. Gx >= h,  Ex = f,  x'Px <= quad_rhs   (quadratic row optional)
 *
 * with Q PSD and P PSD. The method is an infeasible-start Mehrotra
 * predictor-corrector on the slack form; the single quadratic row enters the
 * Newton system through its gradient and curvature, with a merit backtrack
 * guarding the nonlinearity.
 */

#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

#include "s3vm/common.hpp"

namespace s3vm {

enum class IpmStatus { kOptimal, kInfeasible, kNumericalFailure };

struct QpIpmProblem {
    Matrix q;  ///< quadratic objective term (symmetric PSD)
    Vector c;  ///< linear objective term
    Matrix g;  ///< inequality rows, Gx >= h
    Vector h;
    Matrix e;  ///< equality rows, Ex = f
    Vector f;
    bool has_quad = false;  ///< optional row x'Px <= quad_rhs
    Matrix p;
    double quad_rhs = 0.0;

    Index dim() const { return c.size(); }
};

struct QpIpmResult {
    IpmStatus status = IpmStatus::kNumericalFailure;
    Vector x;
    double objective = kInf;
    Vector ineq_duals;      ///< multipliers of Gx >= h, nonnegative
    double quad_dual = 0.0; ///< multiplier of the quadratic row
    Vector eq_duals;
    int iterations = 0;
};

struct QpIpmOptions {
    double tol = 1e-8;
    int max_iter = 200;
    const Vector* start = nullptr;  ///< optional primal starting point
};

namespace ipm_detail {

inline double step_to_boundary(const Vector& v, const Vector& dv) {
    double alpha = kInf;
    for (Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
    return alpha;
}

}  // namespace ipm_detail

inline QpIpmResult solve_qp_ipm(const QpIpmProblem& prob, const QpIpmOptions& opts = {}) {
    const Index n = prob.dim();
    const Index ml = prob.g.rows();
    const Index me = prob.e.rows();
    const Index mq = prob.has_quad ? 1 : 0;
    const Index m = ml + mq;

    QpIpmResult res;
    res.ineq_duals = Vector::Zero(ml);
    res.eq_duals = Vector::Zero(me);

    // Unconstrained or equality-only problems reduce to one linear solve.
    if (m == 0) {
        Matrix kkt(n + me, n + me);
        kkt.setZero();
        kkt.topLeftCorner(n, n) = prob.q;
        if (me > 0) {
            kkt.topRightCorner(n, me) = prob.e.transpose();
            kkt.bottomLeftCorner(me, n) = prob.e;
        }
        Vector rhs(n + me);
        rhs.head(n) = -prob.c;
        if (me > 0) rhs.tail(me) = prob.f;
        Eigen::FullPivLU<Matrix> lu(kkt);
        if (!lu.isInvertible()) {
            res.status = IpmStatus::kNumericalFailure;
            return res;
        }
        Vector sol = lu.solve(rhs);
        res.x = sol.head(n);
        if (me > 0) res.eq_duals = sol.tail(me);
        res.objective = 0.5 * res.x.dot(prob.q * res.x) + prob.c.dot(res.x);
        res.status = IpmStatus::kOptimal;
        return res;
    }

    Vector x = (opts.start && opts.start->size() == n) ? *opts.start : Vector::Zero(n);
    Vector s(m), z(m);
    {
        Vector gap(m);
        if (ml > 0) gap.head(ml) = prob.g * x - prob.h;
        if (mq > 0) gap[ml] = prob.quad_rhs - x.dot(prob.p * x);
        for (Index i = 0; i < m; ++i) s[i] = std::max(gap[i], 1.0);
        z.setOnes();
    }
    Vector nu = Vector::Zero(me);

    const double scale_d = 1.0 + prob.c.lpNorm<Eigen::Infinity>();
    double scale_p = 1.0;
    if (ml > 0) scale_p = std::max(scale_p, prob.h.lpNorm<Eigen::Infinity>());
    if (me > 0) scale_p = std::max(scale_p, prob.f.lpNorm<Eigen::Infinity>());
    if (mq > 0) scale_p = std::max(scale_p, std::abs(prob.quad_rhs));

    auto residuals = [&](const Vector& xx, const Vector& ss, const Vector& zz, const Vector& nn,
                         Vector& rd, Vector& rp, Vector& re) {
        rd = prob.q * xx + prob.c;
        if (ml > 0) rd.noalias() -= prob.g.transpose() * zz.head(ml);
        if (mq > 0) rd.noalias() += 2.0 * zz[ml] * (prob.p * xx);
        if (me > 0) rd.noalias() += prob.e.transpose() * nn;
        rp.resize(m);
        if (ml > 0) rp.head(ml) = prob.g * xx - ss.head(ml) - prob.h;
        if (mq > 0) rp[ml] = (prob.quad_rhs - xx.dot(prob.p * xx)) - ss[ml];
        re = (me > 0) ? Vector(prob.e * xx - prob.f) : Vector();
    };

    Vector rd, rp, re;
    double prev_merit = kInf;
    int stalled = 0;

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        residuals(x, s, z, nu, rd, rp, re);
        const double mu = s.dot(z) / static_cast<double>(m);
        const double obj = 0.5 * x.dot(prob.q * x) + prob.c.dot(x);

        const double pres = rp.lpNorm<Eigen::Infinity>() +
                            ((me > 0) ? re.lpNorm<Eigen::Infinity>() : 0.0);
        const double dres = rd.lpNorm<Eigen::Infinity>();
        if (dres <= opts.tol * scale_d && pres <= opts.tol * scale_p &&
            mu <= opts.tol * (1.0 + std::abs(obj))) {
            res.status = IpmStatus::kOptimal;
            res.x = x;
            res.objective = obj;
            res.ineq_duals = z.head(ml);
            if (mq > 0) res.quad_dual = z[ml];
            res.eq_duals = nu;
            res.iterations = iter;
            return res;
        }

        // Divergence of multipliers with unresolved primal residual signals
        // an infeasible constraint system.
        const bool looks_infeasible =
            z.lpNorm<Eigen::Infinity>() > 1e7 * scale_d && pres > 100.0 * opts.tol * scale_p;
        if (iter >= 15 && looks_infeasible) {
            res.status = IpmStatus::kInfeasible;
            res.iterations = iter;
            return res;
        }

        const double merit = dres + pres + mu;
        if (merit > 0.9999 * prev_merit) {
            if (++stalled > 30) {
                if (looks_infeasible) {
                    res.status = IpmStatus::kInfeasible;
                    res.iterations = iter;
                    return res;
                }
                break;
            }
        } else {
            stalled = 0;
        }
        prev_merit = std::min(prev_merit, merit);

        // Reduced Newton matrix H = Q + 2 z_q P + G'(Z/S)G + w_q gq gq'.
        Matrix hmat = prob.q;
        Vector gq;  // gradient of the quadratic row's slack: -2Px
        if (mq > 0) {
            hmat.noalias() += (2.0 * z[ml]) * prob.p;
            gq = 2.0 * (prob.p * x);
            hmat.noalias() += (z[ml] / s[ml]) * (gq * gq.transpose());
        }
        if (ml > 0) {
            Vector w = z.head(ml).cwiseQuotient(s.head(ml));
            hmat.noalias() += prob.g.transpose() * w.asDiagonal() * prob.g;
        }

        Eigen::LLT<Matrix> llt(hmat);
        double ridge = 1e-12 * (1.0 + hmat.trace() / static_cast<double>(n));
        while (llt.info() != Eigen::Success && ridge < 1e-4) {
            Matrix hj = hmat;
            hj.diagonal().array() += ridge;
            llt.compute(hj);
            ridge *= 100.0;
        }
        if (llt.info() != Eigen::Success) break;

        Matrix eht, sched;
        Eigen::LLT<Matrix> schur_llt;
        if (me > 0) {
            eht = llt.solve(prob.e.transpose());
            sched = prob.e * eht;
            schur_llt.compute(sched);
            if (schur_llt.info() != Eigen::Success) break;
        }

        auto solve_dir = [&](const Vector& rc, Vector& dx, Vector& ds, Vector& dz, Vector& dn) {
            Vector rhs1 = -rd;
            if (ml > 0)
                rhs1.noalias() += prob.g.transpose() *
                                  ((rc.head(ml) - z.head(ml).cwiseProduct(rp.head(ml)))
                                       .cwiseQuotient(s.head(ml)));
            if (mq > 0) rhs1.noalias() -= gq * ((rc[ml] - z[ml] * rp[ml]) / s[ml]);
            if (me > 0) {
                Vector t = llt.solve(rhs1);
                dn = schur_llt.solve(prob.e * t + re);
                dx = llt.solve(rhs1 - prob.e.transpose() * dn);
            } else {
                dn = Vector();
                dx = llt.solve(rhs1);
            }
            ds.resize(m);
            if (ml > 0) ds.head(ml) = prob.g * dx + rp.head(ml);
            if (mq > 0) ds[ml] = -gq.dot(dx) + rp[ml];
            dz = (rc - z.cwiseProduct(ds)).cwiseQuotient(s);
        };

        // Predictor.
        Vector rc_aff = -s.cwiseProduct(z);
        Vector dx_a, ds_a, dz_a, dn_a;
        solve_dir(rc_aff, dx_a, ds_a, dz_a, dn_a);
        const double ap_a = std::min(1.0, ipm_detail::step_to_boundary(s, ds_a));
        const double ad_a = std::min(1.0, ipm_detail::step_to_boundary(z, dz_a));
        const double mu_aff =
            (s + ap_a * ds_a).dot(z + ad_a * dz_a) / static_cast<double>(m);
        double sigma = std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3.0);
        sigma = std::clamp(sigma, 1e-12, 1.0);

        // Corrector.
        Vector rc = Vector::Constant(m, sigma * mu) - s.cwiseProduct(z) -
                    ds_a.cwiseProduct(dz_a);
        Vector dx, ds, dz, dn;
        solve_dir(rc, dx, ds, dz, dn);

        const double tau = 0.99;
        double ap = std::min(1.0, tau * ipm_detail::step_to_boundary(s, ds));
        double ad = std::min(1.0, tau * ipm_detail::step_to_boundary(z, dz));

        // Backtrack if the nonlinear quadratic row makes the step overshoot.
        for (int bt = 0; bt < 8; ++bt) {
            Vector xn = x + ap * dx;
            Vector sn = s + ap * ds;
            Vector zn = z + ad * dz;
            Vector nn = (me > 0) ? Vector(nu + ad * dn) : nu;
            Vector rdn, rpn, ren;
            residuals(xn, sn, zn, nn, rdn, rpn, ren);
            const double mer_new = rdn.lpNorm<Eigen::Infinity>() +
                                   rpn.lpNorm<Eigen::Infinity>() +
                                   ((me > 0) ? ren.lpNorm<Eigen::Infinity>() : 0.0) +
                                   sn.dot(zn) / static_cast<double>(m);
            if (mer_new <= 10.0 * merit || (ap < 1e-8 && ad < 1e-8) || bt == 7) {
                x = std::move(xn);
                s = std::move(sn);
                z = std::move(zn);
                nu = std::move(nn);
                break;
            }
            ap *= 0.5;
            ad *= 0.5;
        }
    }

    res.status = IpmStatus::kNumericalFailure;
    res.x = x;
    res.objective = 0.5 * x.dot(prob.q * x) + prob.c.dot(x);
    res.iterations = opts.max_iter;
    return res;
}

}  // namespace s3vm
