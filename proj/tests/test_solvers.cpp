#include <catch2/catch_amalgamated.hpp>

#include "s3vm/rng.hpp"
#include "s3vm/solver.hpp"

using namespace s3vm;

namespace {

SdpConstraint entry_row(ConstraintKind kind, Index i, Index r, Index c, double v, Sense sense,
                        double rhs) {
    SdpConstraint con;
    con.kind = kind;
    con.i = i;
    con.coeffs = {{r, c, v}};
    con.sense = sense;
    con.rhs = rhs;
    return con;
}

}  // namespace

TEST_CASE("minimal SDP: min X11 subject to X11 >= 1", "[sdp]") {
    SdpModel model;
    model.dim = 2;
    model.objective = Matrix::Zero(2, 2);
    model.objective(0, 0) = 1.0;
    model.add(entry_row(ConstraintKind::kDiagLower, 0, 0, 0, 1.0, Sense::kGe, 1.0));

    SdpSolution sol = solve_sdp(model);
    REQUIRE(sol.status == IpmStatus::kOptimal);
    REQUIRE(sol.objective == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(sol.xmat(0, 0) == Catch::Approx(1.0).margin(1e-5));
    REQUIRE(sol.duals[0].dual >= -1e-8);
}

TEST_CASE("basic relaxation of a 2-point instance with cost I/2", "[sdp]") {
    // min 0.5 (X11 + X22) s.t. x1 >= 1, X11 >= 1, X22 >= 1, block PSD.
    SdpModel model;
    model.dim = 3;
    model.objective = Matrix::Zero(3, 3);
    model.objective(0, 0) = 0.5;
    model.objective(1, 1) = 0.5;
    model.add(entry_row(ConstraintKind::kBoxLower, 0, 0, 2, 1.0, Sense::kGe, 1.0));
    model.add(entry_row(ConstraintKind::kDiagLower, 0, 0, 0, 1.0, Sense::kGe, 1.0));
    model.add(entry_row(ConstraintKind::kDiagLower, 1, 1, 1, 1.0, Sense::kGe, 1.0));

    SdpSolution sol = solve_sdp(model);
    REQUIRE(sol.status == IpmStatus::kOptimal);
    REQUIRE(sol.objective == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(sol.x[0] == Catch::Approx(1.0).margin(1e-5));
    REQUIRE(sol.xmat(0, 0) == Catch::Approx(1.0).margin(1e-5));
    REQUIRE(sol.xmat(1, 1) == Catch::Approx(1.0).margin(1e-5));

    // Full block PSD within tolerance.
    Matrix full(3, 3);
    full.topLeftCorner(2, 2) = sol.xmat;
    full.col(2).head(2) = sol.x;
    full.row(2).head(2) = sol.x.transpose();
    full(2, 2) = 1.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(full);
    REQUIRE(es.eigenvalues().minCoeff() >= -1e-6);
}

TEST_CASE("contradicting box rows are reported infeasible", "[sdp]") {
    SdpModel model;
    model.dim = 2;
    model.objective = Matrix::Zero(2, 2);
    model.objective(0, 0) = 1.0;
    model.add(entry_row(ConstraintKind::kBoxLower, 0, 0, 1, 1.0, Sense::kGe, 2.0));
    model.add(entry_row(ConstraintKind::kBoxUpper, 0, 0, 1, 1.0, Sense::kLe, 1.0));
    model.add(entry_row(ConstraintKind::kDiagLower, 0, 0, 0, 1.0, Sense::kGe, 1.0));

    SdpSolution sol = solve_sdp(model);
    REQUIRE(sol.status == IpmStatus::kInfeasible);
}

TEST_CASE("weak duality against rank-one feasible points", "[sdp]") {
    // Random box-constrained model; any feasible rank-one plug-in dominates
    // the reported bound.
    Rng rng(21);
    for (int t = 0; t < 5; ++t) {
        const Index n = 3;
        Matrix a(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) a(i, j) = rng.gaussian();
        Matrix cost = a * a.transpose() + 0.5 * Matrix::Identity(n, n);

        SdpModel model;
        model.dim = n + 1;
        model.objective = Matrix::Zero(n + 1, n + 1);
        model.objective.topLeftCorner(n, n) = cost;
        for (Index i = 0; i < n; ++i) {
            model.add(entry_row(ConstraintKind::kBoxLower, i, i, n, 1.0, Sense::kGe, -2.0));
            model.add(entry_row(ConstraintKind::kBoxUpper, i, i, n, 1.0, Sense::kLe, 2.0));
            model.add(entry_row(ConstraintKind::kDiagLower, i, i, i, 1.0, Sense::kGe, 1.0));
            model.add(entry_row(ConstraintKind::kDiagUpper, i, i, i, 1.0, Sense::kLe, 4.0));
        }
        SdpSolution sol = solve_sdp(model);
        REQUIRE(sol.status == IpmStatus::kOptimal);

        for (int s = 0; s < 20; ++s) {
            Vector x(n);
            for (Index i = 0; i < n; ++i) {
                x[i] = rng.uniform(1.0, 2.0);
                if (rng.uniform01() < 0.5) x[i] = -x[i];
            }
            const double value = x.dot(cost * x);
            REQUIRE(value >= sol.objective - 1e-6 * (1.0 + std::abs(value)));
        }

        SdpSolution again = solve_sdp(model);
        REQUIRE(again.objective ==
                Catch::Approx(sol.objective).epsilon(1e-7).margin(1e-9));
    }
}

TEST_CASE("diag penalty SDP: K^-1 = 2I with one free index", "[sdp]") {
    Matrix m = 2.0 * Matrix::Identity(2, 2);
    DiagPenaltyResult r = solve_diag_penalty_sdp(m, {1});
    REQUIRE(r.status == IpmStatus::kOptimal);
    REQUIRE(r.lambda[0] == 0.0);
    REQUIRE(r.lambda[1] == Catch::Approx(1.0).margin(1e-5));
    REQUIRE(r.objective == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("QP: min x^2 with x >= 1", "[qp]") {
    QpModel model;
    model.quadratic = 2.0 * Matrix::Identity(1, 1);
    model.linear = Vector::Zero(1);
    QpConstraint c;
    c.coeffs = Vector::Ones(1);
    c.sense = Sense::kGe;
    c.rhs = 1.0;
    model.constraints.push_back(c);

    QpSolution sol = solve_qp(model);
    REQUIRE(sol.status == IpmStatus::kOptimal);
    REQUIRE(sol.point[0] == Catch::Approx(1.0).margin(1e-7));
    REQUIRE(sol.objective == Catch::Approx(1.0).margin(1e-7));
    REQUIRE(sol.duals[0] >= 0.0);
}

TEST_CASE("QCQP: min x1 over the ball of radius 2", "[qp]") {
    QpModel model;
    model.quadratic = Matrix::Zero(2, 2);
    model.linear = Vector::Zero(2);
    model.linear[0] = 1.0;
    model.has_quad_constraint = true;
    model.quad_matrix = Matrix::Identity(2, 2);
    model.quad_rhs = 4.0;

    QpSolution sol = solve_qp(model);
    REQUIRE(sol.status == IpmStatus::kOptimal);
    REQUIRE(sol.point[0] == Catch::Approx(-2.0).margin(1e-6));
    REQUIRE(sol.objective == Catch::Approx(-2.0).margin(1e-6));
    REQUIRE(sol.quad_dual >= 0.0);
}

TEST_CASE("labeling QP on three fixed positives with unit balancing mean", "[qp]") {
    // min x'Cx, C = I/2, x_i >= 1, mean of the two unlabeled entries = 1.
    QpModel model;
    model.quadratic = Matrix::Identity(3, 3);
    model.linear = Vector::Zero(3);
    for (Index i = 0; i < 3; ++i) {
        QpConstraint c;
        c.coeffs = Vector::Zero(3);
        c.coeffs[i] = 1.0;
        c.sense = Sense::kGe;
        c.rhs = 1.0;
        model.constraints.push_back(c);
    }
    QpConstraint bal;
    bal.coeffs = Vector::Zero(3);
    bal.coeffs[1] = 0.5;
    bal.coeffs[2] = 0.5;
    bal.sense = Sense::kEq;
    bal.rhs = 1.0;
    model.constraints.push_back(bal);

    QpSolution sol = solve_qp(model);
    REQUIRE(sol.status == IpmStatus::kOptimal);
    for (Index i = 0; i < 3; ++i) REQUIRE(sol.point[i] == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(sol.objective == Catch::Approx(1.5).margin(1e-6));
}

TEST_CASE("QP infeasibility is detected", "[qp]") {
    QpModel model;
    model.quadratic = Matrix::Identity(1, 1);
    model.linear = Vector::Zero(1);
    QpConstraint lo;
    lo.coeffs = Vector::Ones(1);
    lo.sense = Sense::kGe;
    lo.rhs = 2.0;
    QpConstraint hi;
    hi.coeffs = Vector::Ones(1);
    hi.sense = Sense::kLe;
    hi.rhs = 1.0;
    model.constraints = {lo, hi};

    QpSolution sol = solve_qp(model);
    REQUIRE(sol.status == IpmStatus::kInfeasible);
}

TEST_CASE("QP KKT residual is small at reported optima", "[qp]") {
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        const Index n = 2 + static_cast<Index>(rng.below(5));
        Matrix a(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) a(i, j) = rng.gaussian();
        QpModel model;
        model.quadratic = a * a.transpose() + Matrix::Identity(n, n);
        model.linear = Vector::Zero(n);
        for (Index i = 0; i < n; ++i) model.linear[i] = rng.gaussian();
        for (Index i = 0; i < n; ++i) {
            QpConstraint c;
            c.coeffs = Vector::Zero(n);
            c.coeffs[i] = 1.0;
            c.sense = (rng.uniform01() < 0.5) ? Sense::kGe : Sense::kLe;
            c.rhs = (c.sense == Sense::kGe) ? -1.0 : 1.0;
            model.constraints.push_back(c);
        }
        QpSolution sol = solve_qp(model);
        REQUIRE(sol.status == IpmStatus::kOptimal);

        // Stationarity residual with the reported multipliers.
        Vector grad = model.quadratic * sol.point + model.linear;
        for (std::size_t k = 0; k < model.constraints.size(); ++k) {
            const auto& c = model.constraints[k];
            const double s = (c.sense == Sense::kLe) ? -1.0 : 1.0;
            grad -= s * sol.duals[k] * c.coeffs;
        }
        REQUIRE(grad.lpNorm<Eigen::Infinity>() < 1e-6);
    }
}
