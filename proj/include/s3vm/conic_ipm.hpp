/**
 * @file conic_ipm.hpp
 * @brief Primal-dual interior-point engine over one PSD block and an
 *        auxiliary nonnegative block.
 *
 * Solves the standard-form pair
 *
 *   (P) min <Cp, Zp> + cl'zl   s.t.  <Ak, Zp> + ak'zl = bk,  Zp >= 0 (PSD), zl >= 0
 *   (D) max b'y                s.t.  sum_k yk Ak + Sp = Cp,  sum_k yk ak + sl = cl,
 *                                    Sp >= 0 (PSD), sl >= 0
 *
 * with a Nesterov-Todd scaled path-following method and Mehrotra's adaptive
 * centering. Constraint matrices are sparse; the Schur complement is
 * assembled entry-wise from the nonzero patterns.
 */

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "s3vm/common.hpp"
#include "s3vm/parallel.hpp"
#include "s3vm/qp_ipm.hpp"  // IpmStatus

namespace s3vm {

/// One sparse equality row of the standard-form problem.
struct ConicRow {
    /// Coefficient v applied to the symmetric PSD entry (r, c), r <= c; the
    /// row value counts each off-diagonal pair once: sum v * Zp(r, c).
    struct PsdEntry {
        Index r, c;
        double v;
    };
    std::vector<PsdEntry> psd;
    std::vector<std::pair<Index, double>> lin;  ///< LP-block entries
    double rhs = 0.0;
};

struct ConicProblem {
    Index psd_dim = 0;
    Index lp_dim = 0;
    Matrix cost_psd;  ///< symmetric, psd_dim x psd_dim
    Vector cost_lp;
    std::vector<ConicRow> rows;
};

struct ConicResult {
    IpmStatus status = IpmStatus::kNumericalFailure;
    Matrix zp;      ///< primal PSD block
    Vector zl;      ///< primal LP block
    Vector y;       ///< equality multipliers
    double pobj = kInf;
    double dobj = -kInf;
    int iterations = 0;
};

struct ConicOptions {
    double tol = 1e-7;
    int max_iter = 300;
    int workers = 1;     ///< threads for Schur-complement assembly
    bool trace = false;  ///< per-iteration convergence log on stderr
};

namespace conic_detail {

/// Expanded symmetric entry (off-diagonal coefficients split over both halves).
struct Entry {
    Index r, c;
    double v;
};

inline double frob_norm(const ConicRow& row) {
    double s = 0.0;
    for (const auto& e : row.psd) s += (e.r == e.c) ? e.v * e.v : 0.5 * e.v * e.v;
    for (const auto& [idx, v] : row.lin) s += v * v;
    return std::sqrt(s);
}

/// Full symmetric eigendecomposition, divide-and-conquer when LAPACK is in.
inline bool eig_sym(const Matrix& m, Vector& values, Matrix& vectors) {
#ifdef EIGEN_USE_LAPACKE
    const lapack_int n = static_cast<lapack_int>(m.rows());
    vectors = m;
    values.resize(n);
    if (LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, vectors.data(), n, values.data()) == 0)
        return true;
#endif
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    if (es.info() != Eigen::Success) return false;
    values = es.eigenvalues();
    vectors = es.eigenvectors();
    return true;
}

/// Symmetric matrix square root (and optionally its inverse) by
/// eigendecomposition.
inline bool sqrt_pair(const Matrix& m, Matrix& half, Matrix* inv_half = nullptr) {
    Vector ev;
    Matrix u;
    if (!eig_sym(m, ev, u)) return false;
    const double floor = std::max(1e-300, ev.maxCoeff() * 1e-16);
    Vector sq(ev.size());
    for (Index i = 0; i < ev.size(); ++i) sq[i] = std::sqrt(std::max(ev[i], floor));
    half = u * sq.asDiagonal() * u.transpose();
    if (inv_half) *inv_half = u * sq.cwiseInverse().asDiagonal() * u.transpose();
    return true;
}

/// In-place Cholesky factorization of the Schur complement, routed straight
/// to LAPACK when available.
class SchurFactor {
public:
    bool compute(Matrix m) {
        f_ = std::move(m);
#ifdef EIGEN_USE_LAPACKE
        const lapack_int n = static_cast<lapack_int>(f_.rows());
        ok_ = LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L', n, f_.data(), n) == 0;
#else
        llt_.compute(f_);
        ok_ = llt_.info() == Eigen::Success;
#endif
        return ok_;
    }

    bool ok() const { return ok_; }

    Vector solve(Vector rhs) const {
#ifdef EIGEN_USE_LAPACKE
        const lapack_int n = static_cast<lapack_int>(f_.rows());
        LAPACKE_dpotrs(LAPACK_COL_MAJOR, 'L', n, 1, f_.data(), n, rhs.data(), n);
        return rhs;
#else
        return llt_.solve(rhs);
#endif
    }

private:
    Matrix f_;
#ifndef EIGEN_USE_LAPACKE
    Eigen::LLT<Matrix> llt_;
#endif
    bool ok_ = false;
};

/// Smallest eigenvalue of a symmetric matrix (contents are clobbered).
inline double smallest_eigenvalue(Matrix& m) {
#ifdef EIGEN_USE_LAPACKE
    const lapack_int n = static_cast<lapack_int>(m.rows());
    double value = 0.0;
    lapack_int found = 0;
    std::vector<lapack_int> isuppz(2);
    Vector evec(n);
    const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'N', 'I', 'L', n, m.data(), n,
                                           0.0, 0.0, 1, 1, 0.0, &found, &value, evec.data(),
                                           n, isuppz.data());
    if (info == 0 && found >= 1) return value;
#endif
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Largest alpha with M + alpha dM staying PSD, via L^-1 dM L^-T.
inline double psd_step(const Matrix& m, const Matrix& dm) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) return 0.0;
    Matrix b = llt.matrixL().solve(dm);
    b = llt.matrixL().solve(b.transpose()).eval();
    symmetrize(b);
    const double lmin = smallest_eigenvalue(b);
    if (lmin >= 0.0) return kInf;
    return -1.0 / lmin;
}

}  // namespace conic_detail

class ConicSolver {
public:
    explicit ConicSolver(const ConicProblem& prob) : prob_(prob) {
        expand_rows();
    }

    ConicResult solve(const ConicOptions& opts = {}) {
        using namespace conic_detail;
        const Index nu = prob_.psd_dim;
        const Index p = prob_.lp_dim;
        const Index m = static_cast<Index>(prob_.rows.size());
        const double cone_dim = static_cast<double>(std::max<Index>(nu + p, 1));

        ConicResult res;
        if (m == 0) throw InvalidInput("ConicSolver: no constraints");

        Vector b(m);
        for (Index k = 0; k < m; ++k) b[k] = prob_.rows[static_cast<std::size_t>(k)].rhs;

        // Starting point scaled to the data (CSDP-style heuristics).
        double max_ratio = 1.0, max_norm = 1.0;
        for (Index k = 0; k < m; ++k) {
            const double an = row_norms_[static_cast<std::size_t>(k)];
            max_ratio = std::max(max_ratio, (1.0 + std::abs(b[k])) / (1.0 + an));
            max_norm = std::max(max_norm, an);
        }
        const double cnorm = std::sqrt(prob_.cost_psd.squaredNorm() + prob_.cost_lp.squaredNorm());
        const double xi = std::clamp(10.0 * max_ratio, 1.0, 1e8);
        const double eta = std::clamp(1.0 + std::max(cnorm, max_norm), 1.0, 1e8);

        Matrix xp = Matrix::Identity(nu, nu) * xi;
        Vector xl = Vector::Constant(p, xi);
        Matrix sp = Matrix::Identity(nu, nu) * eta;
        Vector sl = Vector::Constant(p, eta);
        Vector y = Vector::Zero(m);

        const double bscale = 1.0 + b.norm();
        const double cscale = 1.0 + cnorm;

        double best_dobj = -kInf;
        int no_progress = 0;

        double t_scale = 0, t_schur = 0, t_factor = 0, t_dirs = 0, t_steps = 0;
        const auto tick = [] { return std::chrono::steady_clock::now(); };
        const auto tock = [](std::chrono::steady_clock::time_point t0) {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        };

        for (int iter = 0; iter < opts.max_iter; ++iter) {
            // Residuals.
            Vector rp = b - apply_a(xp, xl);
            Matrix rd_psd = prob_.cost_psd - sp;
            Vector rd_lp = prob_.cost_lp - sl;
            accumulate_at(-y, rd_psd, rd_lp);  // rd -= A*(y)

            const double pobj = prob_.cost_psd.cwiseProduct(xp).sum() + prob_.cost_lp.dot(xl);
            const double dobj = b.dot(y);
            const double mu = (xp.cwiseProduct(sp).sum() + xl.dot(sl)) / cone_dim;

            const double rel_p = rp.norm() / bscale;
            const double rel_d =
                std::sqrt(rd_psd.squaredNorm() + rd_lp.squaredNorm()) / cscale;
            const double rel_g =
                std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

            if (opts.trace)
                std::fprintf(stderr, "conic it %3d  mu %9.2e  rp %9.2e  rd %9.2e  gap %9.2e\n",
                             iter, mu, rel_p, rel_d, rel_g);

            if (rel_p <= opts.tol && rel_d <= opts.tol && rel_g <= opts.tol) {
                if (opts.trace)
                    std::fprintf(stderr,
                                 "phases: scale %.1f schur %.1f factor %.1f dirs %.1f steps %.1f\n",
                                 t_scale, t_schur, t_factor, t_dirs, t_steps);
                res.status = IpmStatus::kOptimal;
                res.zp = xp;
                res.zl = xl;
                res.y = y;
                res.pobj = pobj;
                res.dobj = dobj;
                res.iterations = iter;
                return res;
            }

            // Dual objective racing to +inf while primal residual stalls is
            // the classic footprint of primal infeasibility.
            if (iter > 20 && dobj > 1e9 * bscale && rel_p > 10.0 * opts.tol) {
                res.status = IpmStatus::kInfeasible;
                res.iterations = iter;
                return res;
            }
            if (dobj > best_dobj + 1e-12 * (1.0 + std::abs(best_dobj)) || rel_p > opts.tol) {
                best_dobj = std::max(best_dobj, dobj);
                no_progress = 0;
            } else if (++no_progress > 40) {
                break;
            }

            // Nesterov-Todd scaling point W: W Sp W = Xp. Any factor F with
            // F F' = W spans the scaled space used by the corrector; the
            // Cholesky factor is the cheap choice.
            auto tp0 = tick();
            Matrix w = Matrix::Zero(nu, nu);
            Matrix sp_inv = Matrix::Zero(nu, nu);
            Eigen::LLT<Matrix> wllt;
            if (nu > 0) {
                Matrix sh, shi;
                if (!sqrt_pair(sp, sh, &shi)) break;
                Matrix tmat = sh * xp * sh;
                Matrix th;
                if (!sqrt_pair(tmat, th)) break;
                w = shi * th * shi;
                symmetrize(w);
                wllt.compute(w);
                if (wllt.info() != Eigen::Success) break;
                sp_inv = shi * shi;
                symmetrize(sp_inv);
            }
            Vector wl2 = xl.cwiseQuotient(sl.cwiseMax(1e-300));
            t_scale += tock(tp0);

            tp0 = tick();
            Matrix schur = assemble_schur(w, wl2, opts.workers);
            t_schur += tock(tp0);
            tp0 = tick();
            conic_detail::SchurFactor llt;
            if (!llt.compute(schur)) {
                double ridge = 1e-12 * (1.0 + schur.trace() / static_cast<double>(m));
                for (int t = 0; t < 8 && !llt.ok(); ++t) {
                    Matrix sj = schur;
                    sj.diagonal().array() += ridge;
                    llt.compute(std::move(sj));
                    ridge *= 100.0;
                }
                if (!llt.ok()) break;
            }
            t_factor += tock(tp0);

            // The W Rd W part of the direction right-hand side is shared by
            // the predictor and corrector solves.
            Matrix wrdw = w * rd_psd * w;
            symmetrize(wrdw);
            const Vector rhs_base = rp + apply_a(wrdw, wl2.cwiseProduct(rd_lp));

            auto solve_dir = [&](const Matrix& rc_psd, const Vector& rc_lp, Matrix& dxp,
                                 Vector& dxl, Matrix& dsp, Vector& dsl, Vector& dy) {
                // M dy = rp - A(rc) + A(W rd W)
                Vector rhs = rhs_base - apply_a(rc_psd, rc_lp);
                dy = llt.solve(rhs);
                // One pass of iterative refinement; the Schur system turns
                // ill-conditioned as the iterates approach the boundary.
                dy += llt.solve(rhs - schur.selfadjointView<Eigen::Lower>() * dy);
                dsp = rd_psd;
                dsl = rd_lp;
                accumulate_at(-dy, dsp, dsl);  // dS = Rd - A*(dy)
                Matrix wdsw = w * dsp * w;
                symmetrize(wdsw);
                dxp = rc_psd - wdsw;
                symmetrize(dxp);
                dxl = rc_lp - wl2.cwiseProduct(dsl);
            };

            // Predictor (affine scaling).
            tp0 = tick();
            Matrix dxp_a, dsp_a;
            Vector dxl_a, dsl_a, dy_a;
            solve_dir(-xp, -xl, dxp_a, dxl_a, dsp_a, dsl_a, dy_a);
            t_dirs += tock(tp0);

            tp0 = tick();
            double ap = 1.0, ad = 1.0;
            if (nu > 0) {
                ap = std::min(ap, psd_step(xp, dxp_a));
                ad = std::min(ad, psd_step(sp, dsp_a));
            }
            ap = std::min(ap, ipm_detail::step_to_boundary(xl, dxl_a));
            ad = std::min(ad, ipm_detail::step_to_boundary(sl, dsl_a));

            t_steps += tock(tp0);
            const double mu_aff = ((xp + ap * dxp_a).cwiseProduct(sp + ad * dsp_a).sum() +
                                   (xl + ap * dxl_a).dot(sl + ad * dsl_a)) /
                                  cone_dim;
            double sigma = std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3.0);
            sigma = std::clamp(sigma, 1e-10, 1.0);

            // Mehrotra corrector. On the PSD block the second-order term is
            // formed in the scaled space: with F F' = W, V = F' Sp F and
            // M = sym(DXa DSa), the centering target gains -F sym(V^-1 M) F'.
            Matrix rc_psd = sigma * mu * sp_inv - xp;
            if (nu > 0) {
                const auto fmat = wllt.matrixL();
                Matrix dxa_sc = fmat.solve(dxp_a);
                dxa_sc = fmat.solve(dxa_sc.transpose()).eval();  // F^-1 dXa F^-T
                Matrix dsa_sc = fmat.transpose() * dsp_a * Matrix(fmat);
                Matrix mterm = 0.5 * (dxa_sc * dsa_sc.transpose() + dsa_sc * dxa_sc.transpose());
                Matrix v = fmat.transpose() * sp * Matrix(fmat);
                symmetrize(v);
                Eigen::LLT<Matrix> vllt(v);
                if (vllt.info() == Eigen::Success) {
                    Matrix vinv_m = vllt.solve(mterm);
                    Matrix corr =
                        Matrix(fmat) * (0.5 * (vinv_m + vinv_m.transpose())) * fmat.transpose();
                    rc_psd.noalias() -= corr;
                }
            }
            Vector rc_lp(p);
            for (Index i = 0; i < p; ++i)
                rc_lp[i] = (sigma * mu - dxl_a[i] * dsl_a[i]) / std::max(sl[i], 1e-300) - xl[i];

            tp0 = tick();
            Matrix dxp, dsp;
            Vector dxl, dsl, dy;
            solve_dir(rc_psd, rc_lp, dxp, dxl, dsp, dsl, dy);
            t_dirs += tock(tp0);

            const double tau = 0.98;
            double app = 1.0, add = 1.0;
            if (nu > 0) {
                app = std::min(app, tau * psd_step(xp, dxp));
                add = std::min(add, tau * psd_step(sp, dsp));
            }
            app = std::min({app, tau * ipm_detail::step_to_boundary(xl, dxl), 1.0});
            add = std::min({add, tau * ipm_detail::step_to_boundary(sl, dsl), 1.0});

            // The corrector is a heuristic; fall back to plain centering when
            // it collapses the step.
            if (std::min(app, add) < 0.05) {
                Matrix rc2 = sigma * mu * sp_inv - xp;
                Vector rl2(p);
                for (Index i = 0; i < p; ++i)
                    rl2[i] = sigma * mu / std::max(sl[i], 1e-300) - xl[i];
                Matrix dxp2, dsp2;
                Vector dxl2, dsl2, dy2;
                solve_dir(rc2, rl2, dxp2, dxl2, dsp2, dsl2, dy2);
                double app2 = 1.0, add2 = 1.0;
                if (nu > 0) {
                    app2 = std::min(app2, tau * psd_step(xp, dxp2));
                    add2 = std::min(add2, tau * psd_step(sp, dsp2));
                }
                app2 = std::min({app2, tau * ipm_detail::step_to_boundary(xl, dxl2), 1.0});
                add2 = std::min({add2, tau * ipm_detail::step_to_boundary(sl, dsl2), 1.0});
                if (std::min(app2, add2) > std::min(app, add)) {
                    dxp = std::move(dxp2);
                    dsp = std::move(dsp2);
                    dxl = std::move(dxl2);
                    dsl = std::move(dsl2);
                    dy = std::move(dy2);
                    app = app2;
                    add = add2;
                }
            }

            if (opts.trace) {
                const double ap_psd = nu > 0 ? psd_step(xp, dxp) : kInf;
                const double ap_lp = ipm_detail::step_to_boundary(xl, dxl);
                const double ad_psd = nu > 0 ? psd_step(sp, dsp) : kInf;
                const double ad_lp = ipm_detail::step_to_boundary(sl, dsl);
                std::fprintf(stderr,
                             "      steps: ap %.3f (psd %.3f lp %.3f)  ad %.3f (psd %.3f lp %.3f)  sigma %.2e\n",
                             app, ap_psd, ap_lp, add, ad_psd, ad_lp, sigma);
            }
            xp += app * dxp;
            xl += app * dxl;
            sp += add * dsp;
            sl += add * dsl;
            y += add * dy;
            symmetrize(xp);
            symmetrize(sp);
        }

        res.status = IpmStatus::kNumericalFailure;
        res.zp = xp;
        res.zl = xl;
        res.y = y;
        res.pobj = prob_.cost_psd.cwiseProduct(xp).sum() + prob_.cost_lp.dot(xl);
        res.dobj = b.dot(y);
        res.iterations = opts.max_iter;
        if (opts.trace)
            std::fprintf(stderr, "phases: scale %.1f schur %.1f factor %.1f dirs %.1f steps %.1f\n",
                         t_scale, t_schur, t_factor, t_dirs, t_steps);
        return res;
    }

private:
    void expand_rows() {
        const std::size_t m = prob_.rows.size();
        entries_.resize(m);
        row_norms_.resize(m);
        for (std::size_t k = 0; k < m; ++k) {
            ConicRow& row = prob_.rows[k];
            std::sort(row.lin.begin(), row.lin.end());
            auto& ex = entries_[k];
            ex.clear();
            for (const auto& e : row.psd) {
                if (e.r == e.c) {
                    ex.push_back({e.r, e.c, e.v});
                } else {
                    ex.push_back({e.r, e.c, 0.5 * e.v});
                    ex.push_back({e.c, e.r, 0.5 * e.v});
                }
            }
            row_norms_[k] = conic_detail::frob_norm(row);
        }
    }

    /// A(X): per-row inner products.
    Vector apply_a(const Matrix& xp, const Vector& xl) const {
        const Index m = static_cast<Index>(prob_.rows.size());
        Vector out(m);
        for (Index k = 0; k < m; ++k) {
            double v = 0.0;
            for (const auto& e : entries_[static_cast<std::size_t>(k)]) v += e.v * xp(e.r, e.c);
            for (const auto& [idx, coef] : prob_.rows[static_cast<std::size_t>(k)].lin)
                v += coef * xl[idx];
            out[k] = v;
        }
        return out;
    }

    /// Accumulate A*(y) into the dense dual blocks: dst += sum_k y_k A_k.
    void accumulate_at(const Vector& y, Matrix& dst_psd, Vector& dst_lp) const {
        const Index m = static_cast<Index>(prob_.rows.size());
        for (Index k = 0; k < m; ++k) {
            const double yk = y[k];
            if (yk == 0.0) continue;
            for (const auto& e : entries_[static_cast<std::size_t>(k)])
                dst_psd(e.r, e.c) += yk * e.v;
            for (const auto& [idx, coef] : prob_.rows[static_cast<std::size_t>(k)].lin)
                dst_lp[idx] += yk * coef;
        }
    }

    /// M_kl = <A_k, W A_l W> + sum_i a_k,i a_l,i w2_i, symmetric PD.
    Matrix assemble_schur(const Matrix& w, const Vector& wl2, int workers) const {
        const Index m = static_cast<Index>(prob_.rows.size());
        Matrix schur = Matrix::Zero(m, m);
        const double* wd = w.data();
        const Index nu = prob_.psd_dim;
        const auto fill_row = [&](Index k) {
            const auto& ek = entries_[static_cast<std::size_t>(k)];
            const auto& lk = prob_.rows[static_cast<std::size_t>(k)].lin;
            for (Index l = k; l < m; ++l) {
                const auto& el = entries_[static_cast<std::size_t>(l)];
                double acc = 0.0;
                for (const auto& a : ek) {
                    const double* wr = wd + a.r * nu;  // column a.r (W symmetric)
                    const double* wc = wd + a.c * nu;
                    for (const auto& bent : el)
                        acc += a.v * bent.v * wr[bent.r] * wc[bent.c];
                }
                const auto& ll = prob_.rows[static_cast<std::size_t>(l)].lin;
                if (!lk.empty() && !ll.empty()) {
                    std::size_t ik = 0, il = 0;
                    while (ik < lk.size() && il < ll.size()) {
                        if (lk[ik].first < ll[il].first) {
                            ++ik;
                        } else if (lk[ik].first > ll[il].first) {
                            ++il;
                        } else {
                            acc += lk[ik].second * ll[il].second * wl2[lk[ik].first];
                            ++ik;
                            ++il;
                        }
                    }
                }
                schur(l, k) = acc;
            }
        };
        parallel_for(m, workers, fill_row);
        schur.triangularView<Eigen::StrictlyUpper>() =
            schur.triangularView<Eigen::StrictlyLower>().transpose();
        return schur;
    }

    ConicProblem prob_;
    std::vector<std::vector<conic_detail::Entry>> entries_;
    std::vector<double> row_norms_;
};

}  // namespace s3vm
