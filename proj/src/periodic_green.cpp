#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <gsl/gsl_sf_gamma.h>

#include "periodic_detail.hpp"
#include "resona/errors.hpp"

namespace resona::periodic {

Lattice3D::Lattice3D(const Mat3& generators) : l(generators) {
    volume = std::abs(l.determinant());
    if (!(volume > 0.0)) throw PreconditionError("lattice generators are linearly dependent");
    dual = 2.0 * pi * l.inverse().transpose();
}

Lattice3D Lattice3D::cubic(double a) {
    if (!(a > 0.0)) throw PreconditionError("lattice constant must be positive");
    return Lattice3D(a * Mat3::Identity());
}

Lattice3D Lattice3D::hexagonal_prism(double a, double c) {
    if (!(a > 0.0) || !(c > 0.0)) throw PreconditionError("lattice constants must be positive");
    Mat3 g;
    g.col(0) = Vec3(a, 0.0, 0.0);
    g.col(1) = Vec3(0.5 * a, 0.5 * std::sqrt(3.0) * a, 0.0);
    g.col(2) = Vec3(0.0, 0.0, c);
    return Lattice3D(g);
}

bool Lattice3D::in_dual(const Vec3& v, double tol) const {
    const Vec3 n = l.transpose() * v / (2.0 * pi);
    for (int i = 0; i < 3; ++i) {
        if (std::abs(n(i) - std::round(n(i))) > tol) return false;
    }
    return true;
}

double QuasiPeriodicContext::split() const {
    if (eta > 0.0) return eta;
    return 2.5 * std::sqrt(pi) / std::cbrt(lattice.volume);
}

namespace detail {

namespace {

double prefactor(int n) {
    // 1 / (4 pi^{3/2} 4^n n!)
    return std::exp(-std::log(4.0 * std::pow(pi, 1.5)) - n * std::log(4.0) - std::lgamma(n + 1.0));
}

cplx j1_over_z(cplx z) {
    if (std::abs(z) < 0.05) {
        const cplx z2 = z * z;
        return 1.0 / 3.0 - z2 / 30.0 + z2 * z2 / 840.0 - z2 * z2 * z2 / 45360.0;
    }
    return (std::sin(z) - z * std::cos(z)) / (z * z * z);
}

}  // namespace

double image_coeff(int n, double r, double E) {
    const double x = r * r * E * E;
    return prefactor(n) * std::pow(r, 2 * n - 1) * gsl_sf_gamma_inc(0.5 - n, x);
}

double image_coeff_dr(int n, double r, double E) {
    const double x = r * r * E * E;
    const double g = gsl_sf_gamma_inc(0.5 - n, x);
    return prefactor(n) *
           ((2 * n - 1) * std::pow(r, 2 * n - 3) * g - 2.0 * std::pow(E, 1 - 2 * n) * std::exp(-x) / (r * r));
}

double series_coeff(int n, double r, double E) {
    const double x = r * r * E * E;
    double sum = 0.0, p = 1.0;  // p = (-x)^j / j!
    for (int j = 0; j < 200; ++j) {
        const double term = p / (j + 0.5 - n);
        sum += term;
        if (j > x && std::abs(term) < 1e-18 * std::abs(sum)) break;
        p *= -x / (j + 1);
    }
    return prefactor(n) * std::pow(E, 1 - 2 * n) * sum;
}

double series_coeff_dr(int n, double r, double E) {
    const double x = r * r * E * E;
    double sum = 0.0, p = -1.0;  // p = (-1)^j x^{j-1} / (j-1)!, starting at j = 1
    for (int j = 1; j < 200; ++j) {
        const double term = 2.0 * p / (j + 0.5 - n);
        sum += term;
        if (j > x && std::abs(term) < 1e-18 * std::max(std::abs(sum), 1e-300)) break;
        p *= -x / j;
    }
    return prefactor(n) * std::pow(E, 3 - 2 * n) * sum;
}

void image_direct(cplx k, double r, double E, cplx& s, cplx& t) {
    const cplx k2 = k * k;
    cplx kp = 1.0;
    s = t = 0.0;
    for (int n = 0; n < kTerms; ++n) {
        s += kp * image_coeff(n, r, E);
        t += kp * image_coeff_dr(n, r, E);
        kp *= k2;
    }
}

void self_direct(cplx k, double r, double E, cplx& c, cplx& u) {
    if (r * E < kSeriesSwitch) {
        const cplx k2 = k * k;
        cplx kp = 1.0, d = 0.0, dd = 0.0;
        for (int n = 0; n < kTerms; ++n) {
            d += kp * series_coeff(n, r, E);
            dd += kp * series_coeff_dr(n, r, E);
            kp *= k2;
        }
        const cplx z = k * r;
        const cplx sinc = r > 0.0 ? std::sin(z) / r : k;
        c = -I * sinc / (4.0 * pi) - d;
        u = I * k * k * k * j1_over_z(z) / (4.0 * pi) - dd;
        return;
    }
    cplx s, t;
    image_direct(k, r, E, s, t);
    const cplx e = std::exp(I * k * r);
    c = s - e / (4.0 * pi * r);
    u = t - e * (I * k * r - 1.0) / (4.0 * pi * r * r * r);
}

double real_cutoff(double E) { return kRealCut / E; }

double spectral_cutoff(double E, cplx k) { return std::sqrt(std::norm(k) + 4.0 * 37.0 * E * E); }

std::vector<Vec3> lattice_points_near(const Lattice3D& lat, const Vec3& d0, double radius) {
    std::vector<Vec3> out;
    int nmax[3];
    for (int i = 0; i < 3; ++i) nmax[i] = int(std::ceil(lat.dual.col(i).norm() * (d0.norm() + radius) / (2.0 * pi))) + 1;
    for (int a = -nmax[0]; a <= nmax[0]; ++a) {
        for (int b = -nmax[1]; b <= nmax[1]; ++b) {
            for (int c = -nmax[2]; c <= nmax[2]; ++c) {
                const Vec3 m = lat.point(a, b, c);
                if ((d0 - m).norm() < radius) out.push_back(m);
            }
        }
    }
    return out;
}

std::vector<Vec3> dual_points_within(const Lattice3D& lat, const Vec3& alpha, double radius) {
    std::vector<Vec3> out;
    int nmax[3];
    for (int i = 0; i < 3; ++i) nmax[i] = int(std::ceil(lat.l.col(i).norm() * (alpha.norm() + radius) / (2.0 * pi))) + 1;
    for (int a = -nmax[0]; a <= nmax[0]; ++a) {
        for (int b = -nmax[1]; b <= nmax[1]; ++b) {
            for (int c = -nmax[2]; c <= nmax[2]; ++c) {
                const Vec3 p = lat.dual_point(a, b, c) + alpha;
                if (p.norm() < radius) out.push_back(p);
            }
        }
    }
    return out;
}

Tables::Tables(double E, double image_lo, double image_hi, double self_hi) : E_(E), rcut_(real_cutoff(E)) {
    const int D = kChebDeg;
    dct_.resize(D, D);
    for (int m = 0; m < D; ++m) {
        for (int j = 0; j < D; ++j) {
            dct_(m, j) = (m == 0 ? 1.0 : 2.0) / D * std::cos(m * pi * (j + 0.5) / D);
        }
    }
    const double h = 0.25 / E;
    if (image_lo <= 0.0) throw PreconditionError("image distances must be positive");
    image_hi = std::min(image_hi, rcut_);
    if (image_lo < image_hi) {
        double r = image_lo;
        img_edges_.push_back(r);
        while (r < image_hi) {
            r += std::min(h, 0.5 * r);
            img_edges_.push_back(std::min(r, image_hi));
        }
    } else {
        img_edges_.push_back(image_lo);
    }
    self_hi = std::min(std::max(self_hi, h), rcut_);
    const int ns = std::max(1, int(std::ceil(self_hi / h)));
    for (int i = 0; i <= ns; ++i) self_edges_.push_back(self_hi * i / ns);

    auto nodes = [&](const std::vector<double>& edges) {
        std::vector<double> r;
        for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
            const double a = edges[p], b = edges[p + 1];
            for (int j = 0; j < D; ++j) r.push_back(0.5 * (a + b) + 0.5 * (b - a) * std::cos(pi * (j + 0.5) / D));
        }
        return r;
    };
    const auto ri = nodes(img_edges_);
    img_s_.resize(kTerms, Eigen::Index(ri.size()));
    img_t_.resize(kTerms, Eigen::Index(ri.size()));
    for (std::size_t q = 0; q < ri.size(); ++q) {
        for (int n = 0; n < kTerms; ++n) {
            img_s_(n, q) = image_coeff(n, ri[q], E);
            img_t_(n, q) = image_coeff_dr(n, ri[q], E);
        }
    }
    self_nodes_ = nodes(self_edges_);
    const auto nsn = Eigen::Index(self_nodes_.size());
    self_c_.resize(kTerms, nsn);
    self_u_.resize(kTerms, nsn);
    self_series_.resize(self_nodes_.size());
    for (Eigen::Index q = 0; q < nsn; ++q) {
        const double r = self_nodes_[q];
        const bool ser = r * E < kSeriesSwitch;
        self_series_[q] = ser;
        for (int n = 0; n < kTerms; ++n) {
            self_c_(n, q) = ser ? -series_coeff(n, r, E) : image_coeff(n, r, E);
            self_u_(n, q) = ser ? -series_coeff_dr(n, r, E) : image_coeff_dr(n, r, E);
        }
    }
}

Tables::Bound Tables::bind(cplx k) const {
    Bound b;
    b.t = this;
    b.k = k;
    CVec kp(kTerms);
    kp(0) = 1.0;
    for (int n = 1; n < kTerms; ++n) kp(n) = kp(n - 1) * k * k;
    const int D = kChebDeg;
    auto coeffs = [&](const CVec& vals) {
        std::vector<cplx> c(std::size_t(vals.size()));
        for (Eigen::Index p = 0; p < vals.size() / D; ++p) {
            const CVec cp = dct_ * vals.segment(p * D, D);
            for (int m = 0; m < D; ++m) c[std::size_t(p * D + m)] = cp(m);
        }
        return c;
    };
    b.img_s = coeffs(img_s_.cast<cplx>().transpose() * kp);
    b.img_t = coeffs(img_t_.cast<cplx>().transpose() * kp);
    CVec c = self_c_.cast<cplx>().transpose() * kp;
    CVec u = self_u_.cast<cplx>().transpose() * kp;
    for (Eigen::Index q = 0; q < c.size(); ++q) {
        const double r = self_nodes_[q];
        const cplx z = k * r;
        if (self_series_[q]) {
            c(q) += -I * std::sin(z) / (4.0 * pi * r);
            u(q) += I * k * k * k * j1_over_z(z) / (4.0 * pi);
        } else {
            const cplx e = std::exp(I * z);
            c(q) -= e / (4.0 * pi * r);
            u(q) -= e * (I * z - 1.0) / (4.0 * pi * r * r * r);
        }
    }
    b.self_c = coeffs(c);
    b.self_u = coeffs(u);
    return b;
}

namespace {

inline void clenshaw2(const cplx* c1, const cplx* c2, double x, cplx& f1, cplx& f2) {
    cplx a1 = 0.0, a2 = 0.0, b1 = 0.0, b2 = 0.0;
    for (int m = kChebDeg - 1; m >= 1; --m) {
        const cplx t1 = c1[m] + 2.0 * x * a1 - b1;
        const cplx t2 = c2[m] + 2.0 * x * a2 - b2;
        b1 = a1;
        a1 = t1;
        b2 = a2;
        a2 = t2;
    }
    f1 = c1[0] + x * a1 - b1;
    f2 = c2[0] + x * a2 - b2;
}

inline bool locate(const std::vector<double>& edges, double r, std::size_t& p, double& x) {
    if (edges.size() < 2 || r < edges.front() || r > edges.back()) return false;
    auto it = std::upper_bound(edges.begin(), edges.end(), r);
    p = std::size_t(std::min<std::ptrdiff_t>(it - edges.begin() - 1, std::ptrdiff_t(edges.size()) - 2));
    const double a = edges[p], b = edges[p + 1];
    x = (2.0 * r - a - b) / (b - a);
    return true;
}

}  // namespace

void Tables::Bound::image(double r, cplx& s, cplx& tt) const {
    if (r >= t->rcut_) {
        s = tt = 0.0;
        return;
    }
    std::size_t p;
    double x;
    if (!locate(t->img_edges_, r, p, x)) {
        image_direct(k, r, t->E_, s, tt);
        return;
    }
    clenshaw2(img_s.data() + p * kChebDeg, img_t.data() + p * kChebDeg, x, s, tt);
}

void Tables::Bound::self(double r, cplx& c, cplx& u) const {
    std::size_t p;
    double x;
    if (locate(t->self_edges_, r, p, x)) {
        clenshaw2(self_c.data() + p * kChebDeg, self_u.data() + p * kChebDeg, x, c, u);
        return;
    }
    if (r >= t->rcut_) {
        const cplx e = std::exp(I * k * r);
        c = -e / (4.0 * pi * r);
        u = -e * (I * k * r - 1.0) / (4.0 * pi * r * r * r);
        return;
    }
    self_direct(k, r, t->E_, c, u);
}

}  // namespace detail

namespace {

void check_wavenumber(const QuasiPeriodicContext& ctx, const Vec3& alpha, cplx k) {
    const double E = ctx.split();
    if (std::abs(k) > 4.0 * E) {
        throw PreconditionError(fmt::format("wavenumber |k| = {:.6g} exceeds 4 eta = {:.6g}; increase eta", std::abs(k), 4.0 * E));
    }
    if (std::abs(k.imag()) > 1e-12 * std::max(1.0, std::abs(k))) return;
    const double kr = k.real();
    for (const auto& p : detail::dual_points_within(ctx.lattice, alpha, kr + 1.0)) {
        if (std::abs(p.norm() - kr) <= ctx.threshold_margin * std::max(1.0, kr)) {
            throw PreconditionError(fmt::format(
                "k = {:.12g} within {:.1e} of diffraction threshold |q + alpha| = {:.12g} (alpha = [{:.6g}, {:.6g}, {:.6g}])",
                kr, ctx.threshold_margin, p.norm(), alpha(0), alpha(1), alpha(2)));
        }
    }
}

}  // namespace

void check_qp_wavenumber(const QuasiPeriodicContext& ctx, const Vec3& alpha, cplx k) { check_wavenumber(ctx, alpha, k); }

cplx qp_green(const Vec3& x, const Vec3& alpha, cplx k, const QuasiPeriodicContext& ctx) {
    check_wavenumber(ctx, alpha, k);
    const double E = ctx.split();
    const double vol = ctx.lattice.volume;
    cplx spec = 0.0;
    for (const auto& p : detail::dual_points_within(ctx.lattice, alpha, detail::spectral_cutoff(E, k))) {
        const double p2 = p.squaredNorm();
        spec += std::exp(I * p.dot(x)) * std::exp((k * k - p2) / (4.0 * E * E)) / (p2 - k * k);
    }
    spec /= vol;
    cplx real = 0.0;
    for (const auto& m : detail::lattice_points_near(ctx.lattice, x, detail::real_cutoff(E))) {
        const double r = (x - m).norm();
        if (r < 1e-12 * std::cbrt(vol)) throw PreconditionError("qp_green evaluated on the source lattice");
        cplx s, t;
        detail::image_direct(k, r, E, s, t);
        real += std::exp(I * alpha.dot(m)) * s;
    }
    return -(spec + real);
}

cplx spectral_sum(const Vec3& x, const Vec3& alpha, cplx k, const Lattice3D& lattice, int nmax) {
    cplx sum = 0.0;
    for (int a = -nmax; a <= nmax; ++a) {
        for (int b = -nmax; b <= nmax; ++b) {
            for (int c = -nmax; c <= nmax; ++c) {
                const Vec3 p = lattice.dual_point(a, b, c) + alpha;
                sum += std::exp(I * p.dot(x)) / (k * k - p.squaredNorm());
            }
        }
    }
    return sum / lattice.volume;
}

}  // namespace resona::periodic
