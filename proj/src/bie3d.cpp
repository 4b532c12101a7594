#include "resona/bie3d.hpp"

#include <cmath>

#include <fmt/format.h>

#include "resona/errors.hpp"

namespace resona::bie3d {

using specfun::BesselKind;

void SphereScene::validate() const {
    if (resonators.empty()) throw PreconditionError("scene has no resonators");
    if (!(background_speed > 0.0)) throw PreconditionError("background speed must be positive");
    for (std::size_t i = 0; i < resonators.size(); ++i) {
        const auto& a = resonators[i];
        if (!(a.radius > 0.0) || !(a.speed > 0.0)) {
            throw PreconditionError(fmt::format("resonator {}: radius and speed must be positive", i));
        }
        for (std::size_t j = 0; j < i; ++j) {
            const auto& b = resonators[j];
            const double d = (a.center - b.center).norm();
            if (!(d > a.radius + b.radius)) {
                throw PreconditionError(fmt::format("resonators {} and {} overlap (distance {}, radii {} + {})", j, i,
                                                    d, b.radius, a.radius));
            }
        }
    }
}

SphereScene SphereScene::with_delta(cplx delta) const {
    SphereScene s = *this;
    for (auto& r : s.resonators) r.delta = delta;
    return s;
}

namespace {

struct SphereEigs {
    std::vector<cplx> s, kappa, ds, dkappa;
};

SphereEigs sphere_eigs(int L, cplx k, double R, bool derivative) {
    SphereEigs e;
    e.s.resize(L);
    e.kappa.resize(L);
    if (derivative) {
        e.ds.resize(L);
        e.dkappa.resize(L);
    }
    if (k == cplx(0.0)) {
        for (int ell = 0; ell < L; ++ell) {
            e.s[ell] = -R / (2.0 * ell + 1.0);
            e.kappa[ell] = 1.0 / (2.0 * (2.0 * ell + 1.0));
            if (derivative) {
                e.ds[ell] = ell == 0 ? -I * R * R : cplx(0.0);
                e.dkappa[ell] = 0.0;
            }
        }
        return e;
    }
    const cplx x = k * R;
    std::vector<cplx> j, dj, h, dh;
    specfun::sph_bessel_all(BesselKind::j, L - 1, x, j, dj);
    specfun::sph_bessel_all(BesselKind::h1, L - 1, x, h, dh);
    for (int ell = 0; ell < L; ++ell) {
        e.s[ell] = -I * k * R * R * j[ell] * h[ell];
        e.kappa[ell] = -0.5 * I * k * k * R * R * (j[ell] * dh[ell] + dj[ell] * h[ell]);
        if (derivative) {
            const cplx d2j = specfun::sph_bessel_second(ell, x, j[ell], dj[ell]);
            const cplx d2h = specfun::sph_bessel_second(ell, x, h[ell], dh[ell]);
            e.ds[ell] = -I * R * R * (j[ell] * h[ell] + x * (dj[ell] * h[ell] + j[ell] * dh[ell]));
            e.dkappa[ell] = -I * k * R * R * (j[ell] * dh[ell] + dj[ell] * h[ell]) -
                            0.5 * I * k * k * R * R * R * (2.0 * dj[ell] * dh[ell] + d2j * h[ell] + j[ell] * d2h);
        }
    }
    return e;
}

}  // namespace

cplx single_layer_eigenvalue(int ell, cplx k, double radius) { return sphere_eigs(ell + 1, k, radius, false).s[ell]; }
cplx np_eigenvalue(int ell, cplx k, double radius) { return sphere_eigs(ell + 1, k, radius, false).kappa[ell]; }
cplx single_layer_eigenvalue_dk(int ell, cplx k, double radius) {
    return sphere_eigs(ell + 1, k, radius, true).ds[ell];
}
cplx np_eigenvalue_dk(int ell, cplx k, double radius) { return sphere_eigs(ell + 1, k, radius, true).dkappa[ell]; }

RMat projection(const specfun::SphereQuadrature& q, int L, double radius) {
    RMat Y = q.harmonics(L);
    RVec w = Eigen::Map<const RVec>(q.weight.data(), Eigen::Index(q.size()));
    return radius * Y.transpose() * w.asDiagonal();
}

LayerAssembler::LayerAssembler(const SphereScene& scene, int L, const AssemblyOptions& opts)
    : scene_(scene), L_(L), opts_(opts) {
    if (L < 1) throw PreconditionError("truncation L must be >= 1");
    scene_.validate();
    const int p = opts.quad_exactness > 0 ? opts.quad_exactness : std::max(2 * L + 4, 32);
    quad_ = specfun::sphere_quadrature(p);
    proj_ = projection(quad_, L, 1.0);
    nt_ = (p + 2) / 2;
    np_ = p + 1;
    tphi_.resize(2 * L - 1, np_);
    for (int b = 0; b < np_; ++b) {
        const double ph = 2.0 * pi * b / np_, w = 2.0 * pi / np_;
        tphi_(L - 1, b) = w;
        for (int m = 1; m < L; ++m) {
            tphi_(L - 1 + m, b) = w * std::sqrt(2.0) * std::cos(m * ph);
            tphi_(L - 1 - m, b) = w * std::sqrt(2.0) * std::sin(m * ph);
        }
    }
    {
        std::vector<double> x, w, y(L * L);
        specfun::gauss_legendre(nt_, x, w);
        theta_.resize(L * L, nt_);
        mrow_.resize(L * L);
        for (int a = 0; a < nt_; ++a) {
            specfun::sph_harmonics_all(L, std::acos(x[a]), 0.0, y.data());
            for (int f = 0; f < L * L; ++f) {
                const auto h = specfun::HarmonicIndex::from_flat(f);
                const int am = std::abs(h.m);
                const double q = am == 0 ? y[h.ell * h.ell + h.ell] : y[h.ell * h.ell + h.ell + am] / std::sqrt(2.0);
                theta_(f, a) = q * w[a];
                mrow_[f] = L - 1 + h.m;
            }
        }
    }
    const int N = scene_.size();
    const int Q = int(quad_.size());
    for (int i = 0; i < N; ++i) {
        for (int j = i + 1; j < N; ++j) {
            Pair pr{i, j, RMat(Q, Q), RMat(Q, Q), RMat(Q, Q)};
            const auto& a = scene_.resonators[i];
            const auto& b = scene_.resonators[j];
            for (int m = 0; m < Q; ++m) {
                const Vec3 x = a.center + a.radius * quad_.unit[m];
                for (int n = 0; n < Q; ++n) {
                    const Vec3 d = x - (b.center + b.radius * quad_.unit[n]);
                    const double r = d.norm();
                    pr.r(n, m) = r;
                    pr.nx(n, m) = quad_.unit[m].dot(d) / r;
                    pr.ny(n, m) = -quad_.unit[n].dot(d) / r;
                }
            }
            pairs_.push_back(std::move(pr));
        }
    }
}

namespace {

}  // namespace

CMat LayerAssembler::project_right_t(const CMat& Mt) const {
    const Eigen::Index rows = Mt.cols();
    Eigen::Map<const CMat> Z(Mt.data(), np_, nt_ * rows);
    const RMat wr = tphi_ * RMat(Z.real()), wi = tphi_ * RMat(Z.imag());
    const int n2 = L_ * L_;
    CMat out(rows, n2);
    std::vector<double> ar(n2), ai(n2);
    for (Eigen::Index r = 0; r < rows; ++r) {
        std::fill(ar.begin(), ar.end(), 0.0);
        std::fill(ai.begin(), ai.end(), 0.0);
        for (int a = 0; a < nt_; ++a) {
            const Eigen::Index col = a + nt_ * r;
            for (int f = 0; f < n2; ++f) {
                ar[f] += theta_(f, a) * wr(mrow_[f], col);
                ai[f] += theta_(f, a) * wi(mrow_[f], col);
            }
        }
        for (int f = 0; f < n2; ++f) out(r, f) = cplx(ar[f], ai[f]);
    }
    return out;
}

LayerBlocks LayerAssembler::blocks(cplx k, LayerBlocks* dk) const {
    const int N = scene_.size(), n2 = L_ * L_, n = N * n2;
    LayerBlocks out{CMat::Zero(n, n), CMat::Zero(n, n)};
    if (dk) *dk = LayerBlocks{CMat::Zero(n, n), CMat::Zero(n, n)};
    for (int i = 0; i < N; ++i) {
        auto e = sphere_eigs(L_, k, scene_.resonators[i].radius, dk != nullptr);
        for (int a = 0; a < n2; ++a) {
            const int ell = specfun::HarmonicIndex::from_flat(a).ell;
            out.single_layer(i * n2 + a, i * n2 + a) = e.s[ell];
            out.neumann_poincare(i * n2 + a, i * n2 + a) = e.kappa[ell];
            if (dk) {
                dk->single_layer(i * n2 + a, i * n2 + a) = e.ds[ell];
                dk->neumann_poincare(i * n2 + a, i * n2 + a) = e.dkappa[ell];
            }
        }
    }
    const double c = 1.0 / (4.0 * pi);
    for (const auto& p : pairs_) {
        const Eigen::Index Q = p.r.rows();
        CMat g(Q, Q), f(Q, Q), dg, df;
        if (dk) {
            dg.resize(Q, Q);
            df.resize(Q, Q);
        }
        // all kernel arrays indexed (y node, x node)
        for (Eigen::Index m = 0; m < Q; ++m) {
            for (Eigen::Index n = 0; n < Q; ++n) {
                const double r = p.r(n, m);
                const double amp = std::exp(-k.imag() * r), ph = k.real() * r;
                const cplx e(amp * std::cos(ph), amp * std::sin(ph));
                g(n, m) = -c * e / r;
                f(n, m) = -c * e * (I * k * r - 1.0) / (r * r);
                if (dk) {
                    dg(n, m) = -c * I * e;
                    df(n, m) = c * k * e;
                }
            }
        }
        const double Ri = scene_.resonators[p.i].radius, Rj = scene_.resonators[p.j].radius;
        auto put = [&](LayerBlocks& B, const CMat& gm, const CMat& fm) {
            const CMat S = (Ri * Rj) * (proj_ * project_right_t(gm));
            B.single_layer.block(p.i * n2, p.j * n2, n2, n2) = S;
            B.single_layer.block(p.j * n2, p.i * n2, n2, n2) = S.transpose();
            B.neumann_poincare.block(p.i * n2, p.j * n2, n2, n2) =
                (Ri * Rj) * (proj_ * project_right_t(fm.cwiseProduct(p.nx)));
            // rows on sphere j: transposed layout is (x node, y node)
            CMat t = fm.cwiseProduct(p.ny);
            t.transposeInPlace();
            B.neumann_poincare.block(p.j * n2, p.i * n2, n2, n2) = (Ri * Rj) * (proj_ * project_right_t(t));
        };
        put(out, g, f);
        if (dk) put(*dk, dg, df);
    }
    if (opts_.refine_tol > 0.0 && !pairs_.empty()) {
        AssemblyOptions fine = opts_;
        fine.refine_tol = 0.0;
        fine.quad_exactness = 2 * quad_.exactness;
        LayerBlocks ref = LayerAssembler(scene_, L_, fine).blocks(k);
        const double scale = std::max(ref.single_layer.cwiseAbs().maxCoeff(), ref.neumann_poincare.cwiseAbs().maxCoeff());
        const double diff = std::max((ref.single_layer - out.single_layer).cwiseAbs().maxCoeff(),
                                     (ref.neumann_poincare - out.neumann_poincare).cwiseAbs().maxCoeff());
        if (diff > opts_.refine_tol * scale) {
            throw ConvergenceError(fmt::format("cross-block quadrature not converged: relative change {:.3e} > {:.3e}",
                                               diff / scale, opts_.refine_tol));
        }
    }
    return out;
}

LayerBlocks assemble_layer_blocks(cplx k, const SphereScene& scene, int L, const AssemblyOptions& opts) {
    return LayerAssembler(scene, L, opts).blocks(k);
}

void interior_blocks(cplx omega, const SphereScene& scene, int L, CMat& S, CMat& K, CMat* dS, CMat* dK) {
    const int N = scene.size(), n2 = L * L, n = N * n2;
    S = CMat::Zero(n, n);
    K = CMat::Zero(n, n);
    if (dS) {
        *dS = CMat::Zero(n, n);
        *dK = CMat::Zero(n, n);
    }
    for (int i = 0; i < N; ++i) {
        const auto& r = scene.resonators[i];
        auto e = sphere_eigs(L, omega / r.speed, r.radius, dS != nullptr);
        for (int a = 0; a < n2; ++a) {
            const int ell = specfun::HarmonicIndex::from_flat(a).ell;
            S(i * n2 + a, i * n2 + a) = e.s[ell];
            K(i * n2 + a, i * n2 + a) = e.kappa[ell];
            if (dS) {
                (*dS)(i * n2 + a, i * n2 + a) = e.ds[ell] / r.speed;
                (*dK)(i * n2 + a, i * n2 + a) = e.dkappa[ell] / r.speed;
            }
        }
    }
}

BlockOperatorMatrix assemble_A(cplx omega, const LayerAssembler& asmb, bool with_derivative) {
    const auto& scene = asmb.scene();
    const int L = asmb.L(), n2 = L * L, n = asmb.block_size();
    const double v = scene.background_speed;
    LayerBlocks dk;
    LayerBlocks ext = asmb.blocks(omega / v, with_derivative ? &dk : nullptr);
    CMat Sb, Kb, dSb, dKb;
    interior_blocks(omega, scene, L, Sb, Kb, with_derivative ? &dSb : nullptr, with_derivative ? &dKb : nullptr);

    BlockOperatorMatrix A;
    A.omega = omega;
    A.delta_scale = scene.resonators.front().delta;
    A.L = L;
    A.n_resonators = scene.size();
    A.entries.resize(2 * n, 2 * n);
    A.entries.topLeftCorner(n, n) = Sb;
    A.entries.topRightCorner(n, n) = -ext.single_layer;
    A.entries.bottomLeftCorner(n, n) = Kb - 0.5 * CMat::Identity(n, n);
    CMat br = -(0.5 * CMat::Identity(n, n) + ext.neumann_poincare);
    for (int i = 0; i < scene.size(); ++i) br.middleRows(i * n2, n2) *= scene.resonators[i].delta;
    A.entries.bottomRightCorner(n, n) = br;
    if (with_derivative) {
        A.d_omega.resize(2 * n, 2 * n);
        A.d_omega.topLeftCorner(n, n) = dSb;
        A.d_omega.topRightCorner(n, n) = -dk.single_layer / v;
        A.d_omega.bottomLeftCorner(n, n) = dKb;
        CMat dbr = -dk.neumann_poincare / v;
        for (int i = 0; i < scene.size(); ++i) dbr.middleRows(i * n2, n2) *= scene.resonators[i].delta;
        A.d_omega.bottomRightCorner(n, n) = dbr;
    }
    return A;
}

BlockOperatorMatrix assemble_A(cplx omega, const SphereScene& scene, int L, const AssemblyOptions& opts,
                               bool with_derivative) {
    return assemble_A(omega, LayerAssembler(scene, L, opts), with_derivative);
}

namespace {

// Single layer of sum_a c_a Y_a / R over one sphere, at local offset d.
cplx sphere_single_layer(const CVec& coeff, Eigen::Index offset, int L, cplx k, double R, const Vec3& d) {
    const double r = d.norm();
    const double theta = r > 0 ? std::acos(std::clamp(d.z() / r, -1.0, 1.0)) : 0.0;
    const double phi = std::atan2(d.y(), d.x());
    std::vector<double> Y(L * L);
    specfun::sph_harmonics_all(L, theta, phi, Y.data());
    const double rl = std::min(r, R), rg = std::max(r, R);
    std::vector<cplx> radial(L);
    if (k == cplx(0.0)) {
        for (int ell = 0; ell < L; ++ell) radial[ell] = -R * std::pow(rl, ell) / std::pow(rg, ell + 1) * R / (2.0 * ell + 1.0);
    } else {
        std::vector<cplx> j, dj, h, dh;
        specfun::sph_bessel_all(BesselKind::j, L - 1, k * rl, j, dj);
        specfun::sph_bessel_all(BesselKind::h1, L - 1, k * rg, h, dh);
        for (int ell = 0; ell < L; ++ell) radial[ell] = -I * k * R * j[ell] * h[ell];
    }
    cplx u = 0.0;
    for (int a = 0; a < L * L; ++a) {
        u += coeff(offset + a) * radial[specfun::HarmonicIndex::from_flat(a).ell] * Y[a];
    }
    return u;
}

}  // namespace

std::vector<cplx> evaluate_field(const DensityPair& dens, cplx omega, const SphereScene& scene, int L,
                                 const std::vector<Vec3>& points) {
    const int N = scene.size(), n2 = L * L;
    if (dens.psi.size() != N * n2 || dens.phi.size() != N * n2) {
        throw PreconditionError("density length does not match N L^2");
    }
    const cplx k = omega / scene.background_speed;
    std::vector<cplx> out;
    out.reserve(points.size());
    for (const auto& x : points) {
        int inside = -1;
        for (int i = 0; i < N; ++i) {
            const auto& r = scene.resonators[i];
            const double dist = (x - r.center).norm();
            if (std::abs(dist - r.radius) <= 1e-6 * r.radius) {
                throw PreconditionError(fmt::format("evaluation point at distance {:.3e} from boundary of resonator {}",
                                                    std::abs(dist - r.radius), i));
            }
            if (dist < r.radius) inside = i;
        }
        if (inside >= 0) {
            const auto& r = scene.resonators[inside];
            out.push_back(sphere_single_layer(dens.psi, inside * n2, L, omega / r.speed, r.radius, x - r.center));
        } else {
            cplx u = 0.0;
            for (int i = 0; i < N; ++i) {
                const auto& r = scene.resonators[i];
                u += sphere_single_layer(dens.phi, i * n2, L, k, r.radius, x - r.center);
            }
            out.push_back(u);
        }
    }
    return out;
}

}  // namespace resona::bie3d
