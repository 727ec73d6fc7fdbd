#include <catch2/catch_amalgamated.hpp>

#include "s3vm/kernels.hpp"
#include "s3vm/problem.hpp"
#include "s3vm/rng.hpp"

using namespace s3vm;

namespace {

// Independent 2x2 inversion for the assemble oracle.
Matrix invert2(const Matrix& m) {
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    Matrix inv(2, 2);
    inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    return inv / det;
}

// Naive double-loop quadratic form.
double naive_quadratic_form(const Matrix& c, const Vector& x) {
    double acc = 0.0;
    for (Index i = 0; i < x.size(); ++i)
        for (Index j = 0; j < x.size(); ++j) acc += x[i] * c(i, j) * x[j];
    return acc;
}

Matrix random_psd(Index n, Rng& rng) {
    Matrix a(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) a(i, j) = rng.gaussian();
    return a * a.transpose();
}

}  // namespace

TEST_CASE("assemble_problem builds cost = 0.5 K^-1", "[problem]") {
    Matrix gram = Matrix::Ones(2, 2);
    ProblemData p = assemble_problem(gram, {+1}, 0.5, 0.5, false);

    // D = I, K = ones + I; freeze the expected cost from the 2x2 oracle.
    Matrix k(2, 2);
    k << 2, 1, 1, 2;
    Matrix expected = 0.5 * invert2(k);
    REQUIRE((p.cost - expected).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(p.balancing_rhs == 1.0);
}

TEST_CASE("assemble_problem balancing rhs and identity case", "[problem]") {
    Matrix gram = Matrix::Zero(4, 4);
    ProblemData p = assemble_problem(gram, {+1, +1, -1, -1}, 0.5, 0.5, true);
    REQUIRE(p.balancing_rhs == 0.0);

    Matrix gram3 = Matrix::Zero(3, 3);
    ProblemData q = assemble_problem(gram3, {+1}, 0.5, 0.5, false);
    REQUIRE((q.cost - 0.5 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("assemble_problem rejects bad input", "[problem]") {
    Matrix gram = Matrix::Identity(2, 2);
    REQUIRE_THROWS_AS(assemble_problem(gram, {}, 1.0, 1.0, false), InvalidInput);
    REQUIRE_THROWS_AS(assemble_problem(gram, {+2}, 1.0, 1.0, false), InvalidInput);
    REQUIRE_THROWS_AS(assemble_problem(gram, {+1}, -1.0, 1.0, false), InvalidInput);
    Matrix asym(2, 2);
    asym << 1, 2, 3, 1;
    REQUIRE_THROWS_AS(assemble_problem(asym, {+1}, 1.0, 1.0, false), InvalidInput);
}

TEST_CASE("objective matches the naive double loop", "[problem]") {
    ProblemData p;
    p.n = 2;
    p.l = 1;
    p.labels = {+1};
    p.cost = 0.5 * Matrix::Identity(2, 2);
    Vector x(2);
    x << 1, -1;
    REQUIRE(objective(p, x) == Catch::Approx(1.0));
    REQUIRE(objective(p, Vector::Zero(2)) == 0.0);
    REQUIRE_THROWS_AS(objective(p, Vector::Zero(3)), InvalidInput);

    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        const Index n = 3 + static_cast<Index>(rng.below(6));
        ProblemData q;
        q.n = n;
        q.l = 1;
        q.labels = {+1};
        q.cost = random_psd(n, rng) + 0.1 * Matrix::Identity(n, n);
        Vector v(n);
        for (Index i = 0; i < n; ++i) v[i] = rng.gaussian();
        REQUIRE(objective(q, v) == Catch::Approx(naive_quadratic_form(q.cost, v)).margin(1e-12));
    }
}

TEST_CASE("check_feasible covers labels, squares and balancing", "[problem]") {
    Matrix gram = Matrix::Zero(4, 4);
    ProblemData p = assemble_problem(gram, {+1, -1}, 0.5, 0.5, true);
    REQUIRE(p.balancing_rhs == 0.0);

    Vector ok(4);
    ok << 1, -1, 2, -2;
    REQUIRE(check_feasible(p, ok, 1e-6));

    Vector bad(4);
    bad << 1, -1, 0.5, -0.5;
    REQUIRE_FALSE(check_feasible(p, bad, 1e-6));

    Vector unbalanced(4);
    unbalanced << 1, -1, 2, 2;
    REQUIRE_FALSE(check_feasible(p, unbalanced, 1e-6));
}

TEST_CASE("percentage_gap arithmetic and clamping", "[problem]") {
    REQUIRE(percentage_gap(100.0, 100.0) == 0.0);
    REQUIRE(percentage_gap(100.0, 99.9) == Catch::Approx(0.1));
    REQUIRE(percentage_gap(100.0, 100.000001) == 0.0);
    REQUIRE_THROWS_AS(percentage_gap(0.0, -1.0), InvalidInput);
}

TEST_CASE("cost is symmetric PD and rhs is the exact labeled mean", "[problem]") {
    Rng rng(11);
    for (int t = 0; t < 5; ++t) {
        const Index n = 4 + static_cast<Index>(rng.below(5));
        Matrix gram = random_psd(n, rng);
        std::vector<int> labels;
        const Index l = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        for (Index i = 0; i < l; ++i) labels.push_back(rng.uniform01() < 0.5 ? -1 : 1);
        ProblemData p = assemble_problem(gram, labels, 1.0, 0.2, true);

        REQUIRE((p.cost - p.cost.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        for (int s = 0; s < 100; ++s) {
            Vector x(n);
            for (Index i = 0; i < n; ++i) x[i] = rng.gaussian();
            if (x.norm() < 1e-8) continue;
            REQUIRE(objective(p, x) > 0.0);
        }
        double mean = 0.0;
        for (int y : labels) mean += y;
        mean /= static_cast<double>(l);
        REQUIRE(p.balancing_rhs == mean);
        REQUIRE(p.balancing_rhs >= -1.0);
        REQUIRE(p.balancing_rhs <= 1.0);
    }
}

TEST_CASE("box bounds basics", "[problem]") {
    Matrix gram = Matrix::Zero(3, 3);
    ProblemData p = assemble_problem(gram, {+1, -1}, 0.5, 0.5, false);
    BoxBounds b = BoxBounds::from_labels(p);
    REQUIRE(b.lower[0] == 1.0);
    REQUIRE(b.upper[0] == kInf);
    REQUIRE(b.upper[1] == -1.0);
    REQUIRE(b.sign_fixed(0));
    REQUIRE(b.sign_fixed(1));
    REQUIRE_FALSE(b.sign_fixed(2));
    REQUIRE(b.consistent());
}

TEST_CASE("rbf gram matches direct evaluation", "[kernels]") {
    Matrix feats(2, 2);
    feats << 0, 0, 1, 1;
    Matrix g = gram_matrix(feats, KernelSpec::rbf(0.5));
    REQUIRE(g(0, 0) == 1.0);
    REQUIRE(g(1, 1) == 1.0);
    REQUIRE(g(0, 1) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("linear kernel is the dot product", "[kernels]") {
    Matrix feats(2, 2);
    feats << 1, 2, 3, 4;
    Matrix g = gram_matrix(feats, KernelSpec::linear());
    REQUIRE(g(0, 1) == Catch::Approx(11.0));
}

TEST_CASE("ideal gram is the rank-one label outer product", "[kernels]") {
    Matrix both = ideal_gram({+1, -1});
    REQUIRE(both(0, 0) == 1.0);
    REQUIRE(both(0, 1) == -1.0);
    Matrix same = ideal_gram({+1, +1});
    REQUIRE(same.isApprox(Matrix::Ones(2, 2)));

    std::vector<int> truth = {+1, -1, -1, +1, -1};
    Matrix g = ideal_gram(truth);
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    Vector ev = es.eigenvalues();
    REQUIRE(ev.maxCoeff() == Catch::Approx(5.0));
    for (Index i = 0; i + 1 < ev.size(); ++i) REQUIRE(std::abs(ev[i]) < 1e-12);

    // Induced feature-space distances: 0 within class, 4 across.
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (std::size_t j = 0; j < truth.size(); ++j) {
            const double d2 = g(i, i) - 2 * g(i, j) + g(j, j);
            REQUIRE(d2 == Catch::Approx(truth[i] == truth[j] ? 0.0 : 4.0));
        }
}

TEST_CASE("default gamma is 1/d", "[kernels]") {
    REQUIRE(default_gamma(2) == 0.5);
    REQUIRE(default_gamma(144) == Catch::Approx(1.0 / 144.0));
    REQUIRE(default_gamma(1) == 1.0);
    REQUIRE_THROWS_AS(default_gamma(0), InvalidInput);
}

TEST_CASE("gram matrices are symmetric PSD with bounded entries", "[kernels]") {
    Rng rng(3);
    for (int t = 0; t < 5; ++t) {
        const Index n = 5 + static_cast<Index>(rng.below(10));
        const Index d = 2 + static_cast<Index>(rng.below(4));
        Matrix feats(n, d);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < d; ++j) feats(i, j) = rng.gaussian();

        for (auto spec : {KernelSpec::linear(), KernelSpec::rbf(default_gamma(d))}) {
            Matrix g = gram_matrix(feats, spec);
            REQUIRE((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-12);
            Eigen::SelfAdjointEigenSolver<Matrix> es(g);
            REQUIRE(es.eigenvalues().minCoeff() > -1e-8);
            if (spec.kind == KernelKind::kRbf) {
                REQUIRE(g.minCoeff() > 0.0);
                REQUIRE(g.maxCoeff() <= 1.0);
            }
        }
    }
}
