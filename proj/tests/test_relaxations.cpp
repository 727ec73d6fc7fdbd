#include <catch2/catch_amalgamated.hpp>

#include "s3vm/relaxations.hpp"
#include "s3vm/tightening.hpp"
#include "support/oracles.hpp"

using namespace s3vm;
using s3vm::testing::enumeration_oracle;
using s3vm::testing::random_blob_instance;
using s3vm::testing::random_ideal_instance;

namespace {

ProblemData half_identity_problem(Index n, std::vector<int> labels, bool balancing) {
    Matrix gram = Matrix::Zero(n, n);
    return assemble_problem(gram, labels, 0.5, 0.5, balancing);
}

SdpSolution point_solution(const Vector& x, const Matrix& xmat) {
    SdpSolution sol;
    sol.status = IpmStatus::kOptimal;
    sol.x = x;
    sol.xmat = xmat;
    return sol;
}

}  // namespace

TEST_CASE("qp_bound basic values", "[relaxations]") {
    ProblemData p2 = half_identity_problem(2, {+1}, false);
    REQUIRE(qp_bound(p2, BoxBounds::unbounded(2)) == Catch::Approx(0.0).margin(1e-7));

    ProblemData p1 = half_identity_problem(1, {+1}, false);
    REQUIRE(qp_bound(p1, BoxBounds::from_labels(p1)) == Catch::Approx(0.5).margin(1e-7));

    BoxBounds bad = BoxBounds::unbounded(2);
    bad.lower[0] = 2.0;
    bad.upper[0] = 1.0;
    REQUIRE(qp_bound(p2, bad) == kInf);
}

TEST_CASE("qp_lagrangian_bound reduces to qp_bound when all points labeled",
          "[relaxations]") {
    Matrix gram(2, 2);
    gram << 1.0, 0.3, 0.3, 1.0;
    ProblemData p = assemble_problem(gram, {+1, -1}, 1.0, 1.0, false);
    const double ql = qp_lagrangian_bound(p, BoxBounds::from_labels(p));
    const double q = qp_bound(p, BoxBounds::from_labels(p));
    REQUIRE(ql == Catch::Approx(q).margin(1e-6));
}

TEST_CASE("qp_lagrangian_bound with K^-1 = 2I and one unlabeled", "[relaxations]") {
    ProblemData p;
    p.n = 2;
    p.l = 1;
    p.labels = {+1};
    p.cost = Matrix::Identity(2, 2);  // K^-1 = 2I
    p.balancing_enabled = false;
    p.balancing_rhs = 1.0;
    // lambda = (0, 1) is the auxiliary optimum; the penalized QP then gives
    // v1^2 + 1 at v1 = 1.
    const double ql = qp_lagrangian_bound(p, BoxBounds::from_labels(p));
    REQUIRE(ql == Catch::Approx(2.0).margin(1e-5));
}

TEST_CASE("build_basic_sdp with infinite boxes reproduces the plain SDP rows",
          "[relaxations]") {
    ProblemData p = half_identity_problem(3, {+1, -1}, false);
    SdpModel model = build_basic_sdp(p, BoxBounds::from_labels(p));

    int box_lower = 0, box_upper = 0, diag_lower = 0, diag_upper = 0, balancing = 0;
    for (const auto& c : model.constraints) {
        switch (c.kind) {
            case ConstraintKind::kBoxLower: ++box_lower; break;
            case ConstraintKind::kBoxUpper: ++box_upper; break;
            case ConstraintKind::kDiagLower: ++diag_lower; break;
            case ConstraintKind::kDiagUpper: ++diag_upper; break;
            case ConstraintKind::kBalancing: ++balancing; break;
            default: break;
        }
    }
    REQUIRE(box_lower == 1);   // labeled +1
    REQUIRE(box_upper == 1);   // labeled -1
    REQUIRE(diag_lower == 3);
    REQUIRE(diag_upper == 0);  // infinite bounds: no upper diagonal rows
    REQUIRE(balancing == 0);
}

TEST_CASE("build_basic_sdp diagonal upper bounds are max of squares", "[relaxations]") {
    ProblemData p = half_identity_problem(2, {+1}, false);
    BoxBounds boxes;
    boxes.lower = Vector(2);
    boxes.upper = Vector(2);
    boxes.lower << 1.0, -2.0;
    boxes.upper << 3.0, -1.0;
    SdpModel model = build_basic_sdp(p, boxes);

    std::vector<double> diag_upper_rhs;
    for (const auto& c : model.constraints)
        if (c.kind == ConstraintKind::kDiagUpper) diag_upper_rhs.push_back(c.rhs);
    REQUIRE(diag_upper_rhs.size() == 2);
    REQUIRE(diag_upper_rhs[0] == Catch::Approx(9.0));
    REQUIRE(diag_upper_rhs[1] == Catch::Approx(4.0));
}

TEST_CASE("one-variable basic SDP solves to 0.5", "[relaxations]") {
    ProblemData p = half_identity_problem(1, {+1}, false);
    SdpModel model = build_basic_sdp(p, BoxBounds::from_labels(p));
    SdpSolution sol = solve_sdp(model);
    REQUIRE(sol.status == IpmStatus::kOptimal);
    REQUIRE(sol.objective == Catch::Approx(0.5).margin(1e-6));
    REQUIRE(sol.x[0] == Catch::Approx(1.0).margin(1e-5));
    REQUIRE(sol.xmat(0, 0) == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("separate_rlt finds the hand-computed violated cut", "[relaxations]") {
    BoxBounds boxes;
    boxes.lower = Vector(2);
    boxes.upper = Vector(2);
    boxes.lower << 1.0, 1.0;
    boxes.upper << 2.0, 2.0;

    Vector x(2);
    x << 1.0, 1.0;
    Matrix xmat = Matrix::Identity(2, 2);
    xmat(0, 1) = xmat(1, 0) = 0.0;
    SdpSolution sol = point_solution(x, xmat);

    CutPool cuts = separate_rlt(sol, boxes, 10, 1e-2);
    REQUIRE_FALSE(cuts.empty());
    const RltCut& top = cuts.front();
    REQUIRE(top.variant == RltCut::Variant::kLowerLower);
    REQUIRE(top.violation(x, xmat) == Catch::Approx(1.0));
}

TEST_CASE("rank-one interior points violate no RLT cut", "[relaxations]") {
    Rng rng(17);
    for (int t = 0; t < 10; ++t) {
        const Index n = 4;
        BoxBounds boxes;
        boxes.lower = Vector::Constant(n, -2.0);
        boxes.upper = Vector::Constant(n, 2.0);
        Vector x(n);
        for (Index i = 0; i < n; ++i) x[i] = rng.uniform(-1.9, 1.9);
        SdpSolution sol = point_solution(x, x * x.transpose());
        REQUIRE(separate_rlt(sol, boxes, 100, 1e-8).empty());
    }
}

TEST_CASE("separate_rlt honors the top-k rule", "[relaxations]") {
    BoxBounds boxes;
    boxes.lower = Vector::Constant(3, 1.0);
    boxes.upper = Vector::Constant(3, 2.0);
    Vector x = Vector::Ones(3);
    Matrix xmat = Matrix::Identity(3, 3);
    xmat(0, 1) = xmat(1, 0) = 0.5;  // violation 0.5 on pair (0,1)
    xmat(0, 2) = xmat(2, 0) = 0.8;  // violation 0.2 on pair (0,2)
    xmat(1, 2) = xmat(2, 1) = 1.0;  // satisfied
    SdpSolution sol = point_solution(x, xmat);

    CutPool cuts = separate_rlt(sol, boxes, 1, 1e-2);
    REQUIRE(cuts.size() == 1);
    REQUIRE(cuts[0].i == 0);
    REQUIRE(cuts[0].j == 1);
    REQUIRE(cuts[0].violation(x, xmat) == Catch::Approx(0.5));
}

TEST_CASE("purge_inactive keeps tight cuts and drops slack ones", "[relaxations]") {
    RltCut cut{0, 1, RltCut::Variant::kLowerLower, 1.0, 1.0};

    Vector x = Vector::Ones(2);
    Matrix xmat_tight = Matrix::Identity(2, 2);
    xmat_tight(0, 1) = xmat_tight(1, 0) = 1.0;  // slack exactly 0
    SdpSolution sol_tight = point_solution(x, xmat_tight);
    REQUIRE(purge_inactive({cut}, sol_tight, 1e-4).size() == 1);

    Matrix xmat_slack = xmat_tight;
    xmat_slack(0, 1) = xmat_slack(1, 0) = 1.1;  // slack 0.1
    SdpSolution sol_slack = point_solution(x, xmat_slack);
    REQUIRE(purge_inactive({cut}, sol_slack, 1e-4).empty());

    REQUIRE(purge_inactive({}, sol_slack, 1e-4).empty());
}

TEST_CASE("balancing product rows vanish at rank-one balanced points", "[relaxations]") {
    ProblemData p = half_identity_problem(4, {+1, -1}, true);
    REQUIRE(p.balancing_rhs == 0.0);
    std::vector<SdpConstraint> rows = balancing_product_cuts(p);
    REQUIRE(rows.size() == 4);

    Vector x(4);
    x << 1.0, -1.0, 2.0, -2.0;  // unlabeled mean = 0 = rhs
    Matrix z = Matrix::Zero(5, 5);
    z.topLeftCorner(4, 4) = x * x.transpose();
    z.col(4).head(4) = x;
    z.row(4).head(4) = x.transpose();
    z(4, 4) = 1.0;
    for (const auto& row : rows) {
        double act = 0.0;
        for (const auto& e : row.coeffs) act += e.v * z(e.r, e.c);
        REQUIRE(act == Catch::Approx(row.rhs).margin(1e-12));
    }

    // n-l = 2, r = 0, unlabeled row j: 1/2 (X_{j,u1} + X_{j,u2}) = 0.
    const auto& row2 = rows[2];
    REQUIRE(row2.sense == Sense::kEq);
    REQUIRE(row2.rhs == 0.0);
    REQUIRE(row2.coeffs.size() == 3);  // two product terms plus the -r x_j term

    ProblemData off = half_identity_problem(4, {+1, -1}, false);
    REQUIRE(balancing_product_cuts(off).empty());
}

TEST_CASE("cutting plane terminates immediately on an ideal-kernel instance",
          "[relaxations]") {
    auto inst = random_ideal_instance(8, 3, 99, false);
    const ProblemData& p = inst.problem;

    Vector gamma(p.n);
    for (Index i = 0; i < p.n; ++i) gamma[i] = inst.truth[static_cast<std::size_t>(i)];
    const double ub = objective(p, gamma);

    CutParams params;
    BoundResult res = cutting_plane_bound(p, BoxBounds::from_labels(p), ub, params);
    REQUIRE(res.status == IpmStatus::kOptimal);
    REQUIRE(res.iterations == 1);
    REQUIRE(res.lower_bound == Catch::Approx(ub).epsilon(1e-4));
}

TEST_CASE("bound dominance and validity on random instances", "[relaxations]") {
    for (std::uint64_t seed : {11u, 12u, 13u, 14u}) {
        auto inst = random_blob_instance(8, 2, seed, true);
        const ProblemData& p = inst.problem;

        auto oracle = enumeration_oracle(p);
        REQUIRE(oracle.value < kInf);

        TightenOptions topts;
        TightenReport obbt_rep = obbt(p, BoxBounds::from_labels(p), oracle.value, topts);
        REQUIRE_FALSE(obbt_rep.proven_optimal);
        const BoxBounds& boxes = obbt_rep.boxes;

        const double qp = qp_bound(p, boxes);
        SdpSolution basic = solve_sdp(build_basic_sdp(p, boxes));
        REQUIRE(basic.status == IpmStatus::kOptimal);

        std::vector<double> lb_trace;
        TightenCallback record = [&](const BoxBounds&, const SdpSolution&, double,
                                     double lb) -> std::optional<BoxBounds> {
            lb_trace.push_back(lb);
            return std::nullopt;
        };
        CutParams params;
        params.gap_target_percent = 0.0;
        BoundResult rlt = cutting_plane_bound(p, boxes, oracle.value, params, nullptr, record);
        REQUIRE(rlt.status == IpmStatus::kOptimal);

        // Dominance chain and upper-bound validity.
        REQUIRE(basic.objective >= qp - 1e-6 * (1.0 + std::abs(qp)));
        REQUIRE(rlt.lower_bound >= basic.objective - 1e-6 * (1.0 + std::abs(basic.objective)));
        REQUIRE(rlt.lower_bound <= oracle.value + 1e-6 * (1.0 + oracle.value));
        REQUIRE(basic.objective <= oracle.value + 1e-6 * (1.0 + oracle.value));
        REQUIRE(qp <= oracle.value + 1e-6 * (1.0 + oracle.value));

        // Lower bounds are non-decreasing along the cutting-plane loop.
        for (std::size_t k = 1; k < lb_trace.size(); ++k)
            REQUIRE(lb_trace[k] >= lb_trace[k - 1] - 1e-7);

        // Every pooled cut is valid at rank-one feasible points.
        for (std::uint64_t mask = 0; mask < (1u << (p.n - p.l)); ++mask) {
            Labeling lab;
            lab.labeled_count = p.l;
            lab.values.resize(static_cast<std::size_t>(p.n));
            for (Index i = 0; i < p.l; ++i)
                lab.values[static_cast<std::size_t>(i)] = p.labels[static_cast<std::size_t>(i)];
            for (Index u = 0; u < p.n - p.l; ++u)
                lab.values[static_cast<std::size_t>(p.l + u)] = (mask >> u) & 1 ? 1 : -1;
            SolverTolerances tight;
            tight.qp_tol = 1e-12;
            LabelQpResult qpr = label_qp(p, lab, tight);
            if (qpr.status != IpmStatus::kOptimal) continue;
            const Vector& xs = qpr.incumbent.point;
            Matrix xx = xs * xs.transpose();
            for (const auto& cut : rlt.active_cuts)
                REQUIRE(cut.violation(xs, xx) <= 1e-9);
        }
    }
}
