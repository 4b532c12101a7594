#include "resona/specfun.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <gsl/gsl_integration.h>

#include "resona/errors.hpp"

namespace resona::specfun {

namespace {

void check_finite(const std::vector<cplx>& f, const char* what, cplx z) {
    for (const auto& v : f) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            throw OverflowError(fmt::format("{} overflow at z = ({}, {})", what, z.real(), z.imag()));
        }
    }
}

// j_0..j_n at z != 0.
void bessel_j_values(int n, cplx z, std::vector<cplx>& f) {
    f.assign(n + 1, cplx(0.0));
    const double az = std::abs(z);
    if (az <= 1.0) {
        const cplx z2 = -0.5 * z * z;
        cplx pref = 1.0;
        for (int ell = 0; ell <= n; ++ell) {
            if (ell > 0) pref *= z / double(2 * ell + 1);
            cplx term = 1.0, sum = 1.0;
            for (int k = 1; k < 60; ++k) {
                term *= z2 / double(k * (2 * ell + 2 * k + 1));
                sum += term;
                if (std::abs(term) < 1e-17 * std::abs(sum)) break;
            }
            f[ell] = pref * sum;
        }
        return;
    }
    const cplx s = std::sin(z), c = std::cos(z);
    f[0] = s / z;
    if (n == 0) return;
    f[1] = s / (z * z) - c / z;
    const int up = std::min(n, int(az));
    for (int ell = 1; ell < up; ++ell) {
        f[ell + 1] = double(2 * ell + 1) / z * f[ell] - f[ell - 1];
    }
    if (up >= n) return;
    // Ratios r_ell = j_ell / j_{ell-1} from the continued fraction, top down.
    const int top = std::max(n, int(az)) + 40 + int(std::sqrt(double(n) + az));
    std::vector<cplx> r(top + 2, cplx(0.0));
    for (int ell = top; ell > up; --ell) {
        r[ell] = z / (double(2 * ell + 1) - z * r[ell + 1]);
    }
    for (int ell = up + 1; ell <= n; ++ell) f[ell] = r[ell] * f[ell - 1];
}

void bessel_y_values(int n, cplx z, std::vector<cplx>& f) {
    f.assign(n + 1, cplx(0.0));
    const cplx s = std::sin(z), c = std::cos(z);
    f[0] = -c / z;
    if (n == 0) return;
    f[1] = -c / (z * z) - s / z;
    for (int ell = 1; ell < n; ++ell) f[ell + 1] = double(2 * ell + 1) / z * f[ell] - f[ell - 1];
}

void hankel_values(int n, cplx z, std::vector<cplx>& f) {
    if (z.imag() <= 1.0) {
        std::vector<cplx> jv, yv;
        bessel_j_values(n, z, jv);
        bessel_y_values(n, z, yv);
        f.resize(n + 1);
        for (int ell = 0; ell <= n; ++ell) f[ell] = jv[ell] + I * yv[ell];
        return;
    }
    f.assign(n + 1, cplx(0.0));
    const cplx e = std::exp(I * z);
    f[0] = -I * e / z;
    if (n == 0) return;
    f[1] = e * (-1.0 / z - I / (z * z));
    for (int ell = 1; ell < n; ++ell) f[ell + 1] = double(2 * ell + 1) / z * f[ell] - f[ell - 1];
}

}  // namespace

void sph_bessel_all(BesselKind kind, int lmax, cplx z, std::vector<cplx>& f, std::vector<cplx>& df) {
    if (lmax < 0) throw DomainError("negative Bessel degree");
    const int n = std::max(lmax, 1);
    if (z == cplx(0.0)) {
        if (kind != BesselKind::j) throw DomainError("singular spherical Bessel function at z = 0");
        f.assign(lmax + 1, cplx(0.0));
        df.assign(lmax + 1, cplx(0.0));
        f[0] = 1.0;
        if (lmax >= 1) df[1] = 1.0 / 3.0;
        return;
    }
    std::vector<cplx> v;
    switch (kind) {
        case BesselKind::j: bessel_j_values(n, z, v); break;
        case BesselKind::y: bessel_y_values(n, z, v); break;
        case BesselKind::h1: hankel_values(n, z, v); break;
    }
    check_finite(v, "spherical Bessel", z);
    f.assign(v.begin(), v.begin() + lmax + 1);
    df.resize(lmax + 1);
    df[0] = -v[1];
    for (int ell = 1; ell <= lmax; ++ell) df[ell] = v[ell - 1] - double(ell + 1) * v[ell] / z;
    check_finite(df, "spherical Bessel derivative", z);
}

BesselValue sph_bessel(BesselKind kind, int ell, cplx z) {
    std::vector<cplx> f, df;
    sph_bessel_all(kind, ell, z, f, df);
    return {f[ell], df[ell]};
}

cplx sph_bessel_second(int ell, cplx z, cplx f, cplx df) {
    return -2.0 / z * df - (1.0 - double(ell * (ell + 1)) / (z * z)) * f;
}

namespace {

double jprime_real(int ell, double x) { return sph_bessel(BesselKind::j, ell, x).derivative.real(); }

double bisect_zero(int ell, double a, double b) {
    double fa = jprime_real(ell, a);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        if (mid <= a || mid >= b || b - a < 1e-15 * b) break;
        const double fm = jprime_real(ell, mid);
        if (fm == 0.0) return mid;
        if ((fm < 0) == (fa < 0)) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    return 0.5 * (a + b);
}

template <class Stop>
std::vector<double> scan_zeros(int ell, Stop stop) {
    if (ell < 0) throw DomainError("negative Bessel degree");
    std::vector<double> zeros;
    const double h = pi / 8.0;
    double a = h, fa = jprime_real(ell, a);
    for (int i = 2;; ++i) {
        const double b = i * h;
        if (stop(zeros, b)) break;
        const double fb = jprime_real(ell, b);
        if (fb == 0.0) {
            zeros.push_back(b);
        } else if ((fa < 0) != (fb < 0) && fa != 0.0) {
            zeros.push_back(bisect_zero(ell, a, b));
        }
        a = b;
        fa = fb;
    }
    return zeros;
}

}  // namespace

double jprime_zero(int ell, int n) {
    if (n < 1) throw DomainError("zero index must be >= 1");
    auto z = scan_zeros(ell, [n](const std::vector<double>& zs, double) { return int(zs.size()) >= n; });
    return z[n - 1];
}

std::vector<double> jprime_zeros_below(int ell, double xmax) {
    auto z = scan_zeros(ell, [xmax](const std::vector<double>&, double b) { return b - pi / 8.0 >= xmax; });
    z.erase(std::remove_if(z.begin(), z.end(), [xmax](double x) { return x >= xmax; }), z.end());
    return z;
}

std::vector<NeumannFrequency> neumann_ball_spectrum(double radius, int ell_max, int n_max) {
    if (!(radius > 0.0)) throw DomainError("radius must be positive");
    if (ell_max < 1 || n_max < 1) throw DomainError("ell_max and n_max must be >= 1");
    std::vector<NeumannFrequency> out;
    for (int ell = 0; ell <= ell_max; ++ell) {
        auto z = scan_zeros(ell, [n_max](const std::vector<double>& zs, double) { return int(zs.size()) >= n_max; });
        for (int n = 1; n <= n_max; ++n) out.push_back({ell, n, z[n - 1], z[n - 1] / radius, 2 * ell + 1});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.omega < b.omega; });
    return out;
}

HarmonicIndex HarmonicIndex::from_flat(int k) {
    const int ell = int(std::floor(std::sqrt(double(k))));
    return {ell, k - ell * ell - ell};
}

void sph_harmonics_all(int L, double theta, double phi, double* out) {
    if (L <= 0) return;
    const double x = std::cos(theta), s = std::sin(theta);
    // q[ell][m] = N_{ell m} P_ell^m(cos theta) without the Condon-Shortley phase.
    std::vector<double> q(L * L, 0.0);
    auto Q = [&](int ell, int m) -> double& { return q[ell * L + m]; };
    Q(0, 0) = 1.0 / std::sqrt(4.0 * pi);
    for (int m = 1; m < L; ++m) Q(m, m) = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * Q(m - 1, m - 1);
    for (int m = 0; m + 1 < L; ++m) Q(m + 1, m) = std::sqrt(2.0 * m + 3.0) * x * Q(m, m);
    for (int m = 0; m < L; ++m) {
        for (int ell = m + 2; ell < L; ++ell) {
            const double a = std::sqrt((4.0 * ell * ell - 1.0) / (double(ell * ell) - double(m * m)));
            const double b = std::sqrt((double((ell - 1) * (ell - 1)) - double(m * m)) / (4.0 * (ell - 1) * (ell - 1) - 1.0));
            Q(ell, m) = a * (x * Q(ell - 1, m) - b * Q(ell - 2, m));
        }
    }
    const double r2 = std::sqrt(2.0);
    for (int ell = 0; ell < L; ++ell) {
        out[ell * ell + ell] = Q(ell, 0);
        for (int m = 1; m <= ell; ++m) {
            out[ell * ell + ell + m] = r2 * Q(ell, m) * std::cos(m * phi);
            out[ell * ell + ell - m] = r2 * Q(ell, m) * std::sin(m * phi);
        }
    }
}

double sph_harmonic(HarmonicIndex idx, double theta, double phi) {
    if (!idx.valid()) throw DomainError("invalid harmonic index");
    std::vector<double> y((idx.ell + 1) * (idx.ell + 1));
    sph_harmonics_all(idx.ell + 1, theta, phi, y.data());
    return y[idx.flat()];
}

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.resize(n);
    w.resize(n);
    gsl_integration_glfixed_table* t = gsl_integration_glfixed_table_alloc(n);
    std::vector<std::pair<double, double>> pts(n);
    for (int i = 0; i < n; ++i) gsl_integration_glfixed_point(-1.0, 1.0, i, &pts[i].first, &pts[i].second, t);
    gsl_integration_glfixed_table_free(t);
    std::sort(pts.begin(), pts.end());
    for (int i = 0; i < n; ++i) {
        x[i] = pts[i].first;
        w[i] = pts[i].second;
    }
}

SphereQuadrature sphere_quadrature(int exactness_degree) {
    if (exactness_degree < 0) throw DomainError("quadrature exactness must be >= 0");
    SphereQuadrature q;
    q.exactness = exactness_degree;
    const int nt = (exactness_degree + 2) / 2;
    const int np = exactness_degree + 1;
    std::vector<double> x, w;
    gauss_legendre(nt, x, w);
    for (int i = 0; i < nt; ++i) {
        const double th = std::acos(x[i]);
        for (int j = 0; j < np; ++j) {
            const double ph = 2.0 * pi * j / np;
            q.theta.push_back(th);
            q.phi.push_back(ph);
            q.weight.push_back(w[i] * 2.0 * pi / np);
            q.unit.emplace_back(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), x[i]);
        }
    }
    return q;
}

RMat SphereQuadrature::harmonics(int L) const {
    RMat Y(size(), L * L);
    std::vector<double> row(L * L);
    for (std::size_t n = 0; n < size(); ++n) {
        sph_harmonics_all(L, theta[n], phi[n], row.data());
        for (int k = 0; k < L * L; ++k) Y(n, k) = row[k];
    }
    return Y;
}

}  // namespace resona::specfun
