#include <doctest.h>

#include <cmath>

#include "resona/capmat.hpp"
#include "resona/errors.hpp"
#include "resona/oned.hpp"

using namespace resona;
using namespace resona::oned;

namespace {

Layout1D regular_layout(double delta) { return Layout1D::from_lengths({1.0, 1.3, 0.7}, {0.8, 1.1}, 1.0, delta, 1.0); }

Layout1D singular_pair(double delta) { return Layout1D::from_lengths({1.0, 1.0}, {2.0}, 1.0, delta, 2.0); }

// Boundary traces of the Neumann modes on (f_1^-, f_1^+, ..., f_N^+).
CMat mode_traces(const Layout1D& lay, const std::vector<int>& J, const std::vector<int>& n) {
    CMat G = CMat::Zero(2 * lay.size(), J.size());
    for (std::size_t c = 0; c < J.size(); ++c) {
        const double a = std::sqrt(2.0 / lay.length(J[c]));
        G(2 * J[c], c) = a;
        G(2 * J[c] + 1, c) = (n[c] % 2 == 0 ? 1.0 : -1.0) * a;
    }
    return G;
}

// Plane-wave coefficients on every region: continuity of u and of the weighted flux at each endpoint.
double global_min_singular(cplx w, const Layout1D& lay) {
    const int N = lay.size();
    const cplx k = w / lay.background_speed;
    const int n = 4 * N;
    CMat M = CMat::Zero(n, n);
    // columns: 0 left exterior; 1 + 2j, 2 + 2j resonator j; 1 + 2N + 2j, 2 + 2N + 2j gap j; n - 1 right exterior
    int row = 0;
    for (int j = 0; j < N; ++j) {
        const cplx kj = w / lay.speeds[j];
        const double l = lay.length(j);
        const int rc = 1 + 2 * j;
        // left end of resonator j, coming from exterior column(s)
        if (j == 0) {
            M(row, 0) = 1.0;
            M(row + 1, 0) = -I * k;
        } else {
            const int gc = 1 + 2 * N + 2 * (j - 1);
            const double g = lay.spacing(j - 1);
            M(row, gc) = std::cos(k * g);
            M(row, gc + 1) = std::sin(k * g);
            M(row + 1, gc) = -k * std::sin(k * g);
            M(row + 1, gc + 1) = k * std::cos(k * g);
        }
        M(row, rc) = -1.0;
        M(row + 1, rc + 1) = -kj / lay.deltas[j];
        row += 2;
        // right end of resonator j
        M(row, rc) = std::cos(kj * l);
        M(row, rc + 1) = std::sin(kj * l);
        M(row + 1, rc) = -kj * std::sin(kj * l) / lay.deltas[j];
        M(row + 1, rc + 1) = kj * std::cos(kj * l) / lay.deltas[j];
        if (j == N - 1) {
            M(row, n - 1) = -1.0;
            M(row + 1, n - 1) = -I * k;
        } else {
            const int gc = 1 + 2 * N + 2 * j;
            M(row, gc) = -1.0;
            M(row + 1, gc + 1) = -k;
        }
        row += 2;
    }
    for (int r = 0; r < n; ++r) M.row(r) /= M.row(r).norm();
    Eigen::JacobiSVD<CMat> svd(M);
    return svd.singularValues()(n - 1) / svd.singularValues()(0);
}

cplx nearest(const std::vector<cplx>& roots, cplx z) {
    cplx best = roots.at(0);
    for (auto r : roots) if (std::abs(r - z) < std::abs(best - z)) best = r;
    return best;
}

}  // namespace

TEST_CASE("exterior DtN blocks") {
    auto lay = Layout1D::from_lengths({1.0, 1.0}, {0.5 * pi}, 1.0, 1e-3, 1.0);
    CMat T = dtn_1d(1.0, lay);
    CHECK(std::abs(T(1, 1)) < 1e-15);
    CHECK(std::abs(T(1, 2) - 1.0) < 1e-15);
    CHECK(std::abs(T(0, 0) - I) < 1e-15);
    CHECK(T(0, 1) == cplx(0.0));

    auto near = Layout1D::from_lengths({1.0, 1.0}, {1.0}, 1.0, 1e-3, 1.0);
    const double k = 1e-4;
    CMat S = dtn_1d(k, near);
    CHECK(S(1, 1).real() == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(S(1, 2).real() == doctest::Approx(1.0).epsilon(1e-8));

    auto one = Layout1D::from_lengths({2.0}, {}, 1.0, 1e-3, 1.0);
    CMat D = dtn_1d(3.0, one);
    CHECK((D - 3.0 * I * CMat::Identity(2, 2)).norm() < 1e-15);
    CHECK(D(0, 0).imag() > 0.0);

    CHECK_THROWS_AS(dtn_1d(pi, near), PreconditionError);
}

TEST_CASE("nearest-neighbour capacitance matrix against the DtN pairing") {
    auto lay = Layout1D::from_lengths({1.0, 1.0, 1.0, 0.5}, {0.8, 1.1, 0.6}, 1.0, 1e-3, 1.0);
    lay.deltas = {1e-3, 2e-3, 5e-4, 3e-3};
    lay.speeds[3] = 0.5;
    auto C = capmat_1d(pi, lay);
    REQUIRE(C.resonant.size() == 4);
    CHECK(C.n == std::vector<int>{1, 1, 1, 1});
    CHECK(C.C(0, 2) == cplx(0.0));
    CHECK(C.C(0, 3) == cplx(0.0));

    const CMat G = mode_traces(lay, C.resonant, C.n);
    const CMat P = G.transpose() * dtn_1d(pi, lay) * G;
    for (int i = 0; i < 4; ++i) {
        const int j = C.resonant[i];
        const double pre = -lay.deltas[j] * lay.speeds[j] * lay.speeds[j] / (2.0 * pi);
        for (int c = 0; c < 4; ++c) CHECK(std::abs(C.C(i, c) - pre * P(i, c)) <= 1e-12 * C.C.norm());
    }
    for (int i = 0; i < 3; ++i) {
        const double wi = lay.deltas[i] * lay.speeds[i] * lay.speeds[i];
        const double wj = lay.deltas[i + 1] * lay.speeds[i + 1] * lay.speeds[i + 1];
        CHECK(C.C(i, i + 1) / wi == C.C(i + 1, i) / wj);
    }

    auto quarter = Layout1D::from_lengths({1.0, 2.0}, {0.5}, 1.0, 1e-3, 1.0);
    auto Cq = capmat_1d(pi, quarter);
    CHECK(std::abs(Cq.C(0, 0) - (-I * 1e-3)) < 1e-15);

    CHECK_THROWS_AS(capmat_1d(2.0, quarter), PreconditionError);
}

TEST_CASE("transfer-matrix oracle") {
    auto single = Layout1D::from_lengths({1.0}, {}, 1.0, 1.0, 1.0);
    auto none = transfer_resonances(single, 1.0, {0.5, 10.0, -2.0, 0.5});
    CHECK(none.values.empty());

    Window w{pi - 0.1, pi + 0.1, -0.05, 0.01};
    auto r6 = transfer_resonances(single, 1e-6, w);
    REQUIRE(r6.values.size() == 1);
    CHECK(std::abs(r6.values[0] - pi) < 1e-5);
    CHECK(r6.values[0].imag() < 0.0);
    auto r4 = transfer_resonances(single, 1e-4, w);
    CHECK(std::abs(r4.values[0] - pi) / std::abs(r6.values[0] - pi) == doctest::Approx(100.0).epsilon(0.01));

    auto lay = regular_layout(1e-3);
    auto rr = transfer_resonances(lay, 1e-3, {pi - 0.05, pi + 0.05, -0.02, 0.005});
    REQUIRE(rr.values.size() == 1);
    CHECK(global_min_singular(rr.values[0], lay) < 1e-12);
    CHECK(global_min_singular(rr.values[0] + 1e-3, lay) > 1e-6);

    auto pair = singular_pair(1e-4);
    auto rs = transfer_resonances(pair, 1e-4, {pi - 0.05, pi + 0.05, -0.02, 0.005});
    for (auto z : rs.values) CHECK(global_min_singular(z, pair) < 1e-12);
}

TEST_CASE("regular case: leading-order error is second order in delta") {
    std::vector<double> ds{1e-5, 1e-4, 1e-3}, err;
    for (double d : ds) {
        auto lay = regular_layout(d);
        auto C = capmat_1d(pi, lay);
        REQUIRE(C.resonant == std::vector<int>{0});
        const cplx pred = pi + C.C(0, 0);
        auto roots = transfer_resonances(lay, d, {pi - 50 * d, pi + 50 * d, -50 * d, 5 * d});
        REQUIRE(!roots.values.empty());
        err.push_back(std::abs(nearest(roots.values, pred) - pred));
    }
    auto fit = capmat::log_log_fit(ds, err);
    CHECK(fit.slope == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("Fabry-Perot block") {
    auto lay = singular_pair(1e-4);
    const double k0 = pi / 2.0;
    auto B = fp_block(k0, lay, 0, 1, {1, 1}, {1});
    CHECK(B.r == 2.0);
    CHECK(B.tau == RVec::Ones(2));
    RMat expect(2, 2);
    expect << 0.25, -0.25, -0.25, 0.25;
    CHECK((B.Csym - expect).norm() < 1e-15);
    CHECK(B.t == std::vector<double>{2.0, 2.0, 2.0});
    CHECK(B.theta.size() == 2);

    auto odd = Layout1D::from_lengths({2.0, 1.0, 1.0}, {2.0, 4.0}, 1.0, 1e-4, 2.0);
    auto Bo = fp_block(k0, odd, 0, 2, {2, 1, 1}, {1, 2});
    CHECK(Bo.tau(1) == -1.0);
    CHECK(Bo.tau(2) == 1.0);
    const RMat S = Bo.sigma() * Bo.Csym * Bo.sigma();
    Eigen::SelfAdjointEigenSolver<RMat> e1(S), e2(Bo.Csym);
    CHECK((e1.eigenvalues() - e2.eigenvalues()).norm() < 1e-14);
    for (int i = 0; i < 3; ++i) CHECK(Bo.Csym(i, i) > 0.0);
    CHECK(Bo.Csym(0, 2) == 0.0);

    CHECK_THROWS_AS(fp_block(k0, lay, 0, 0, {1}, {}), PreconditionError);
    CHECK_THROWS_AS(fp_block(k0, lay, 0, 1, {2, 1}, {1}), PreconditionError);
    auto long_run = Layout1D::from_lengths({1.0, 1.0, 1.0}, {2.0, 2.0}, 1.0, 1e-4, 2.0);
    CHECK_THROWS_AS(fp_block(k0, long_run, 0, 1, {1, 1}, {1}), PreconditionError);
}

TEST_CASE("splitting prediction") {
    auto [p, m] = splitting_prediction(1.0, 1e-4, 1.0, 1.0);
    CHECK(p == doctest::Approx(0.01));
    CHECK(m == doctest::Approx(-0.01));
    CHECK(splitting_prediction(2.0, 4e-4, 3.0, 1.5).first ==
          doctest::Approx(2.0 * splitting_prediction(2.0, 1e-4, 3.0, 1.5).first));
    CHECK_THROWS_AS(splitting_prediction(0.0, 1e-4, 1.0, 1.0), PreconditionError);
}

TEST_CASE("singular case: oracle splitting is delta^{1/2}") {
    std::vector<double> ds{1e-6, 1e-4}, res;
    for (double d : ds) {
        auto lay = singular_pair(d);
        auto B = fp_block(pi / 2.0, lay, 0, 1, {1, 1}, {1});
        Eigen::SelfAdjointEigenSolver<RMat> es(B.Csym);
        const double lam = es.eigenvalues()(1);
        auto [sp, sm] = splitting_prediction(lam, d, 2.0, B.r);
        const double s = std::sqrt(d);
        auto roots = transfer_resonances(lay, d, {pi - 3 * s, pi + 3 * s, -2 * s, 0.2 * s});
        REQUIRE(roots.values.size() >= 2);
        const cplx op = nearest(roots.values, pi + sp), om = nearest(roots.values, pi + sm);
        CHECK(std::abs(op - (pi + sp)) < 0.2 * sp);
        CHECK(std::abs(om - (pi + sm)) < 0.2 * sp);
        res.push_back(std::abs(0.5 * (op - om) - sp));
    }
    const double slope = std::log(res[1] / res[0]) / std::log(ds[1] / ds[0]);
    CHECK(slope >= 1.0);
}

TEST_CASE("singular case: residue extraction") {
    auto lay = singular_pair(1e-4);
    auto B = fp_block(pi / 2.0, lay, 0, 1, {1, 1}, {1});
    auto r = residue_extraction_1d(pi, lay, B);
    CHECK(r.rel_error <= 1e-6);
    auto r2 = residue_extraction_1d(pi, lay.with_delta(2e-4), B);
    CHECK((r2.numerical - 2.0 * r.numerical).norm() <= 1e-14 * r.numerical.norm());

    auto three = Layout1D::from_lengths({2.0, 1.0, 1.0}, {2.0, 4.0}, 1.0, 1e-4, 2.0);
    auto B3 = fp_block(pi / 2.0, three, 0, 2, {2, 1, 1}, {1, 2});
    auto r3 = residue_extraction_1d(pi, three, B3);
    CHECK(r3.rel_error <= 1e-6);
    CHECK(r3.numerical(0, 2) == cplx(0.0));
    CHECK(r3.numerical(2, 0) == cplx(0.0));
}
