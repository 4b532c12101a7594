#include <doctest.h>

#include <cmath>
#include <random>

#include "resona/errors.hpp"
#include "resona/specfun.hpp"

using namespace resona;
using namespace resona::specfun;

namespace {

double factorial(int n) { return std::tgamma(n + 1.0); }

// Finite closed form of the spherical Hankel function.
cplx hankel_closed_form(int ell, cplx z) {
    cplx sum = 0.0, ik = 1.0;
    for (int k = 0; k <= ell; ++k) {
        sum += ik * factorial(ell + k) / (factorial(k) * factorial(ell - k) * std::pow(2.0 * z, k));
        ik *= I;
    }
    return std::pow(-I, ell + 1) * std::exp(I * z) / z * sum;
}

// Power series of j_ell in long double.
long double j_series(int ell, long double x) {
    long double pref = 1.0L;
    for (int k = 1; k <= ell; ++k) pref *= x / (2.0L * k + 1.0L);
    long double term = 1.0L, sum = 1.0L;
    for (int k = 1; k < 400; ++k) {
        term *= -x * x / 2.0L / (k * (2.0L * ell + 2.0L * k + 1.0L));
        sum += term;
        if (std::fabs(term) < 1e-22L * std::fabs(sum)) break;
    }
    return pref * sum;
}

// Real part of the closed form in long double, for real x.
long double j_closed_form(int ell, long double x) {
    using lc = std::complex<long double>;
    lc sum = 0.0L, ik = 1.0L;
    long double c = 1.0L;  // (ell+k)!/(k!(ell-k)!)
    for (int k = 0; k <= ell; ++k) {
        if (k > 0) c *= (long double)(ell + k) * (ell - k + 1) / k;
        sum += ik * c / std::pow(2.0L * x, (long double)k);
        ik *= lc(0.0L, 1.0L);
    }
    lc mi = 1.0L;
    for (int k = 0; k <= ell; ++k) mi *= lc(0.0L, -1.0L);
    return (mi * std::exp(lc(0.0L, x)) / x * sum).real();
}

}  // namespace

TEST_CASE("closed forms at low degree") {
    auto v = sph_bessel(BesselKind::j, 0, 1.0);
    CHECK(std::abs(v.value - std::sin(1.0)) < 1e-15);
    CHECK(std::abs(v.derivative - (std::cos(1.0) - std::sin(1.0))) < 1e-15);
    auto y = sph_bessel(BesselKind::y, 0, 2.0);
    CHECK(std::abs(y.value + std::cos(2.0) / 2.0) < 1e-15);
}

TEST_CASE("j1 limit at the origin") {
    auto v0 = sph_bessel(BesselKind::j, 1, 0.0);
    CHECK(std::abs(v0.value) == 0.0);
    CHECK(std::abs(v0.derivative - 1.0 / 3.0) < 1e-15);
    auto v = sph_bessel(BesselKind::j, 1, 1e-8);
    CHECK(std::abs(v.value) < 1e-8);
    CHECK(std::abs(v.derivative - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("singular kinds reject the origin") {
    CHECK_THROWS_AS(sph_bessel(BesselKind::y, 2, 0.0), DomainError);
    CHECK_THROWS_AS(sph_bessel(BesselKind::h1, 0, 0.0), DomainError);
}

TEST_CASE("hankel against closed form") {
    const cplx z(3.0, 0.5);
    auto h = sph_bessel(BesselKind::h1, 2, z);
    const cplx ref = hankel_closed_form(2, z);
    CHECK(std::abs(h.value - ref) / std::abs(ref) < 1e-12);
    // derivative via the recurrence of the closed form
    const cplx dref = hankel_closed_form(1, z) - 3.0 * ref / z;
    CHECK(std::abs(h.derivative - dref) / std::abs(dref) < 1e-12);
    for (int ell : {0, 1, 5, 12}) {
        for (cplx w : {cplx(0.7, -0.05), cplx(8.0, 0.2), cplx(25.0, -0.3), cplx(2.0, 3.0)}) {
            const cplx a = sph_bessel(BesselKind::h1, ell, w).value, b = hankel_closed_form(ell, w);
            CHECK(std::abs(a - b) / std::abs(b) < 1e-11);
        }
    }
}

TEST_CASE("j stable for large degree and argument") {
    for (int ell : {0, 3, 10, 25, 40}) {
        for (double x : {0.3, 1.5, 7.0, 20.0, 45.0, 100.0}) {
            const double got = sph_bessel(BesselKind::j, ell, x).value.real();
            double ref;
            if (x <= ell + 1.0 || x < 5.0) {
                ref = double(j_series(ell, x));
            } else {
                ref = double(j_closed_form(ell, x));
            }
            const double scale = std::max(std::abs(ref), 1e-300);
            CHECK_MESSAGE(std::abs(got - ref) / scale < 1e-10, "ell=" << ell << " x=" << x);
        }
    }
}

TEST_CASE("Wronskian of j and y") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> ux(0.1, 50.0);
    std::uniform_int_distribution<int> ul(0, 30);
    for (int t = 0; t < 200; ++t) {
        const double x = ux(rng);
        const int ell = ul(rng);
        if (ell > 3 * x + 10) continue;
        auto j = sph_bessel(BesselKind::j, ell, x);
        auto y = sph_bessel(BesselKind::y, ell, x);
        const cplx w = j.value * y.derivative - j.derivative * y.value;
        CHECK(std::abs(w * x * x - 1.0) < 1e-10);
    }
}

TEST_CASE("three-term recurrence for all kinds") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> ur(0.5, 40.0), ui(-0.5, 0.5);
    for (auto kind : {BesselKind::j, BesselKind::y, BesselKind::h1}) {
        for (int t = 0; t < 40; ++t) {
            const cplx z(ur(rng), ui(rng));
            std::vector<cplx> f, df;
            sph_bessel_all(kind, 20, z, f, df);
            for (int ell = 1; ell < 20; ++ell) {
                const cplx lhs = f[ell - 1] + f[ell + 1], rhs = double(2 * ell + 1) * f[ell] / z;
                const double scale = std::abs(f[ell - 1]) + std::abs(f[ell + 1]) + std::abs(rhs);
                CHECK(std::abs(lhs - rhs) <= 1e-10 * scale);
            }
        }
    }
}

TEST_CASE("overflow is reported") {
    CHECK_THROWS_AS(sph_bessel(BesselKind::y, 40, 1e-12), OverflowError);
}

TEST_CASE("Neumann spectrum of the unit ball") {
    auto spec = neumann_ball_spectrum(1.0, 4, 2);
    REQUIRE(spec.size() == 10);
    CHECK(spec[0].ell == 1);
    CHECK(spec[0].omega == doctest::Approx(2.082).epsilon(1e-3));
    CHECK(spec[0].multiplicity == 3);
    CHECK(spec[1].ell == 2);
    CHECK(std::abs(spec[1].omega - 3.3421) < 1e-3);
    CHECK(std::abs(jprime_zero(0, 1) - 4.4934) < 1e-4);
    for (std::size_t i = 1; i < spec.size(); ++i) CHECK(spec[i - 1].omega <= spec[i].omega);
    auto spec2 = neumann_ball_spectrum(2.0, 1, 1);
    CHECK(std::abs(spec2[0].omega - 1.041) < 1e-3);
}

TEST_CASE("zeros of j' are accurate and interlace") {
    for (int ell = 1; ell <= 8; ++ell) {
        auto z = jprime_zeros_below(ell, 30.0);
        auto z1 = jprime_zeros_below(ell + 1, 30.0);
        for (double x : z) CHECK(std::abs(sph_bessel(BesselKind::j, ell, x).derivative) < 1e-13);
        for (std::size_t i = 0; i + 1 < z.size() && i < z1.size(); ++i) {
            CHECK(z[i] < z1[i]);
            CHECK(z1[i] < z[i + 1]);
        }
    }
    // j0' = -j1; its first zero solves tan x = x.
    const double b = jprime_zero(0, 1);
    CHECK(std::abs(std::tan(b) - b) < 1e-9);
}

TEST_CASE("harmonic values") {
    CHECK(sph_harmonic({0, 0}, 0.3, 1.2) == doctest::Approx(1.0 / std::sqrt(4 * pi)));
    CHECK(sph_harmonic({1, 0}, 0.0, 0.0) == doctest::Approx(std::sqrt(3.0 / (4 * pi))));
    CHECK(HarmonicIndex::from_flat(HarmonicIndex{4, -3}.flat()).m == -3);
    for (int k = 0; k < 49; ++k) CHECK(HarmonicIndex::from_flat(k).flat() == k);
}

TEST_CASE("quadrature weights and Gram matrix") {
    auto q0 = sphere_quadrature(0);
    double s = 0;
    for (double w : q0.weight) s += w;
    CHECK(std::abs(s - 4 * pi) < 1e-12);

    auto q = sphere_quadrature(16);
    s = 0;
    for (double w : q.weight) s += w;
    CHECK(std::abs(s - 4 * pi) < 1e-12);
    RMat Y = q.harmonics(9);
    RVec w = Eigen::Map<const RVec>(q.weight.data(), q.size());
    RMat G = Y.transpose() * w.asDiagonal() * Y;
    CHECK((G - RMat::Identity(81, 81)).cwiseAbs().maxCoeff() < 1e-10);

    const int a = HarmonicIndex{4, 3}.flat(), b = HarmonicIndex{2, 1}.flat(), c = HarmonicIndex{3, 1}.flat();
    CHECK(std::abs(G(a, a) - 1.0) < 1e-12);
    CHECK(std::abs(G(b, c)) < 1e-12);
}

TEST_CASE("quadrature exactness boundary") {
    // Exact for the product degree 2*ell <= p but not beyond.
    auto q = sphere_quadrature(6);
    RMat Y = q.harmonics(6);
    RVec w = Eigen::Map<const RVec>(q.weight.data(), q.size());
    RMat G = Y.transpose() * w.asDiagonal() * Y;
    CHECK((G.topLeftCorner(16, 16) - RMat::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((G - RMat::Identity(36, 36)).cwiseAbs().maxCoeff() > 1e-6);
}
