#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include "periodic_detail.hpp"
#include "resona/errors.hpp"

namespace resona::periodic {

struct QPAssembler::Spectral {
    Vec3 alpha;
    std::vector<Vec3> p;
    std::vector<double> p2;
    CMat U, Up, V;  // block_size x Q
};

class EwaldTables : public detail::Tables {
public:
    using detail::Tables::Tables;
};

namespace {

struct PairImages {
    int i, j;
    std::vector<Vec3> m;
    std::vector<cplx> phase;
};

std::vector<PairImages> pair_images(const bie3d::SphereScene& s, const Lattice3D& lat, double rcut) {
    std::vector<PairImages> out;
    for (int i = 0; i < s.size(); ++i) {
        for (int j = 0; j < s.size(); ++j) {
            const auto& a = s.resonators[i];
            const auto& b = s.resonators[j];
            PairImages p{i, j, {}, {}};
            for (const auto& m : detail::lattice_points_near(lat, a.center - b.center, rcut + a.radius + b.radius)) {
                if (i == j && m.norm() == 0.0) continue;
                p.m.push_back(m);
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

}  // namespace

QPAssembler::QPAssembler(const bie3d::SphereScene& cell, int L, const QuasiPeriodicContext& ctx)
    : scene_(cell), L_(L), ctx_(ctx), E_(ctx.split()) {
    if (L < 1) throw PreconditionError("truncation L must be >= 1");
    scene_.validate();
    const int N = scene_.size();
    const double rcut = detail::real_cutoff(E_);
    double gap = std::numeric_limits<double>::infinity();
    double rmax = 0.0;
    for (const auto& p : pair_images(scene_, ctx_.lattice, rcut)) {
        const auto& a = scene_.resonators[p.i];
        const auto& b = scene_.resonators[p.j];
        for (const auto& m : p.m) {
            const double g = (a.center - b.center - m).norm() - a.radius - b.radius;
            if (g <= 0.0) {
                throw PreconditionError(fmt::format("resonator {} overlaps a lattice image of resonator {}", p.i, p.j));
            }
            gap = std::min(gap, g);
        }
        rmax = std::max(rmax, 2.0 * a.radius);
    }
    if (!std::isfinite(gap)) gap = rcut;
    const int p = ctx.quad_exactness > 0 ? ctx.quad_exactness : std::max(2 * L + 6, 24);
    quad_ = specfun::sphere_quadrature(p);
    proj_ = bie3d::projection(quad_, L, 1.0);
    nodes_.resize(N);
    normals_.resize(N);
    for (int i = 0; i < N; ++i) {
        const auto& r = scene_.resonators[i];
        for (const auto& u : quad_.unit) {
            nodes_[i].push_back(r.center + r.radius * u);
            normals_[i].push_back(u);
        }
    }
    tables_ = std::make_unique<EwaldTables>(E_, 0.999 * gap, rcut, rmax);
}

QPAssembler::~QPAssembler() = default;
QPAssembler::QPAssembler(QPAssembler&&) noexcept = default;

const QPAssembler::Spectral& QPAssembler::spectral(const Vec3& alpha) const {
    if (spec_ && (spec_->alpha - alpha).norm() == 0.0) return *spec_;
    auto s = std::make_unique<Spectral>();
    s->alpha = alpha;
    const auto ps = detail::dual_points_within(ctx_.lattice, alpha, detail::spectral_cutoff(E_, 4.0 * E_));
    const int N = scene_.size(), n2 = L_ * L_;
    const auto Q = Eigen::Index(ps.size());
    s->U.resize(N * n2, Q);
    s->Up.resize(N * n2, Q);
    s->V.resize(N * n2, Q);
    s->p = ps;
    s->p2.resize(ps.size());
    std::vector<double> Y(static_cast<std::size_t>(n2));
    std::vector<cplx> jv, jd;
    std::vector<cplx> ipow(static_cast<std::size_t>(L_)), mipow(static_cast<std::size_t>(L_));
    for (int l = 0; l < L_; ++l) {
        ipow[l] = std::pow(I, l);
        mipow[l] = std::pow(-I, l);
    }
    for (Eigen::Index q = 0; q < Q; ++q) {
        const Vec3& p = ps[std::size_t(q)];
        const double pn = p.norm();
        s->p2[std::size_t(q)] = pn * pn;
        const double th = pn > 0.0 ? std::acos(std::clamp(p(2) / pn, -1.0, 1.0)) : 0.0;
        const double ph = pn > 0.0 ? std::atan2(p(1), p(0)) : 0.0;
        specfun::sph_harmonics_all(L_, th, ph, Y.data());
        for (int i = 0; i < N; ++i) {
            const auto& r = scene_.resonators[i];
            specfun::sph_bessel_all(specfun::BesselKind::j, L_ - 1, pn * r.radius, jv, jd);
            const cplx e = std::exp(I * p.dot(r.center));
            for (int a = 0; a < n2; ++a) {
                const int l = int(std::sqrt(double(a)) + 1e-9);
                const double f = 4.0 * pi * r.radius * Y[std::size_t(a)];
                s->U(i * n2 + a, q) = f * e * ipow[l] * jv[l].real();
                s->Up(i * n2 + a, q) = f * e * ipow[l] * pn * jd[l].real();
                s->V(i * n2 + a, q) = f * std::conj(e) * mipow[l] * jv[l].real();
            }
        }
    }
    spec_ = std::move(s);
    return *spec_;
}

void QPAssembler::check_threshold(const Vec3& alpha, cplx k) const { check_qp_wavenumber(ctx_, alpha, k); }

bie3d::LayerBlocks QPAssembler::blocks(const Vec3& alpha, cplx k) const {
    check_threshold(alpha, k);
    const int N = scene_.size(), n2 = L_ * L_;
    const auto& sp = spectral(alpha);
    CVec W(Eigen::Index(sp.p2.size()));
    for (Eigen::Index q = 0; q < W.size(); ++q) {
        const double p2 = sp.p2[std::size_t(q)];
        W(q) = std::exp((k * k - p2) / (4.0 * E_ * E_)) / (p2 - k * k) / ctx_.lattice.volume;
    }
    const CMat VW = (sp.V * W.asDiagonal()).transpose();
    bie3d::LayerBlocks B;
    B.single_layer = -(sp.U * VW);
    B.neumann_poincare = -(sp.Up * VW);
    for (int i = 0; i < N; ++i) {
        const double R = scene_.resonators[i].radius;
        for (int l = 0; l < L_; ++l) {
            const cplx s = bie3d::single_layer_eigenvalue(l, k, R);
            const cplx kap = bie3d::np_eigenvalue(l, k, R);
            for (int a = l * l; a < (l + 1) * (l + 1); ++a) {
                B.single_layer(i * n2 + a, i * n2 + a) += s;
                B.neumann_poincare(i * n2 + a, i * n2 + a) += kap;
            }
        }
    }
    const auto bound = tables_->bind(k);
    const auto Q = Eigen::Index(quad_.size());
    CMat Hs(Q, Q), Hk(Q, Q);
    for (auto p : pair_images(scene_, ctx_.lattice, detail::real_cutoff(E_))) {
        for (const auto& m : p.m) p.phase.push_back(std::exp(I * alpha.dot(m)));
        const auto& X = nodes_[p.i];
        const auto& Yn = nodes_[p.j];
        const auto& nu = normals_[p.i];
        const std::size_t nm = p.m.size();
        for (Eigen::Index b = 0; b < Q; ++b) {
            for (Eigen::Index a = 0; a < Q; ++a) {
                const Vec3 d = X[std::size_t(a)] - Yn[std::size_t(b)];
                const Vec3& n = nu[std::size_t(a)];
                cplx hs = 0.0, hk = 0.0;
                for (std::size_t t = 0; t < nm; ++t) {
                    const Vec3 dm = d - p.m[t];
                    cplx s, g;
                    bound.image(dm.norm(), s, g);
                    hs += p.phase[t] * s;
                    hk += p.phase[t] * g * n.dot(dm);
                }
                if (p.i == p.j) {
                    cplx c, u;
                    bound.self(d.norm(), c, u);
                    hs += c;
                    hk += u * n.dot(d);
                }
                Hs(a, b) = hs;
                Hk(a, b) = hk;
            }
        }
        const double RR = scene_.resonators[p.i].radius * scene_.resonators[p.j].radius;
        const CMat P = proj_.cast<cplx>();
        B.single_layer.block(p.i * n2, p.j * n2, n2, n2) -= RR * P * Hs * P.transpose();
        B.neumann_poincare.block(p.i * n2, p.j * n2, n2, n2) -= RR * P * Hk * P.transpose();
    }
    return B;
}

std::vector<cplx> QPAssembler::single_layer_field(const CVec& phi, const Vec3& alpha, cplx k,
                                                  const std::vector<Vec3>& points) const {
    check_threshold(alpha, k);
    const int N = scene_.size(), n2 = L_ * L_;
    if (phi.size() != N * n2) throw PreconditionError("density length does not match N L^2");
    std::vector<cplx> out(points.size(), 0.0);
    for (int j = 0; j < N; ++j) {
        bie3d::SphereScene one;
        one.background_speed = scene_.background_speed;
        one.resonators.push_back(scene_.resonators[j]);
        one.resonators[0].speed = scene_.background_speed;
        const CVec pj = phi.segment(j * n2, n2);
        const auto u = bie3d::evaluate_field({pj, pj}, k * scene_.background_speed, one, L_, points);
        for (std::size_t i = 0; i < points.size(); ++i) out[i] += u[i];
    }

    const auto& sp = spectral(alpha);
    const CVec Vphi = sp.V.transpose() * phi;
    const double rcut = detail::real_cutoff(E_);
    const auto Q = quad_.size();
    for (std::size_t ix = 0; ix < points.size(); ++ix) {
        const Vec3& x = points[ix];
        cplx spec = 0.0;
        for (std::size_t q = 0; q < sp.p.size(); ++q) {
            const double p2 = sp.p2[q];
            spec += std::exp(I * sp.p[q].dot(x)) * std::exp((k * k - p2) / (4.0 * E_ * E_)) / (p2 - k * k) * Vphi(Eigen::Index(q));
        }
        spec /= ctx_.lattice.volume;

        cplx real = 0.0;
        for (int j = 0; j < N; ++j) {
            const auto& r = scene_.resonators[j];
            const CVec f = r.radius * proj_.transpose().cast<cplx>() * phi.segment(j * n2, n2);
            std::vector<Vec3> ms;
            for (const auto& m : detail::lattice_points_near(ctx_.lattice, x - r.center, rcut + r.radius)) {
                if (m.norm() != 0.0) ms.push_back(m);
            }
            double lo = rcut, hi = 0.0;
            for (std::size_t n = 0; n < Q; ++n) {
                const Vec3 d = x - nodes_[j][n];
                hi = std::max(hi, d.norm());
                for (const auto& m : ms) lo = std::min(lo, (d - m).norm());
            }
            if (lo <= 0.0) throw PreconditionError("single_layer_field point lies on a lattice image of the boundary");
            const detail::Tables tab(E_, 0.999 * lo, rcut, hi);
            const auto bound = tab.bind(k);
            std::vector<cplx> ph;
            for (const auto& m : ms) ph.push_back(std::exp(I * alpha.dot(m)));
            for (std::size_t n = 0; n < Q; ++n) {
                const Vec3 d = x - nodes_[j][n];
                cplx h = 0.0, s, t;
                for (std::size_t t2 = 0; t2 < ms.size(); ++t2) {
                    bound.image((d - ms[t2]).norm(), s, t);
                    h += ph[t2] * s;
                }
                bound.self(d.norm(), s, t);
                h += s;
                real += h * f(Eigen::Index(n));
            }
        }
        out[ix] -= spec + real;
    }
    return out;
}

DtNResult exterior_qp_dtn_matrix(const QPAssembler& A, const Vec3& alpha, cplx omega) {
    const cplx k = omega / A.scene().background_speed;
    const auto B = A.blocks(alpha, k);
    DtNResult r;
    Eigen::PartialPivLU<CMat> lu(B.single_layer);
    const double rc = lu.rcond();
    r.condition = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    if (r.condition > 1e12) {
        r.warnings.push_back(fmt::format("quasi-periodic single layer ill-conditioned (cond ~ {:.3e}) at omega = {:.12g}",
                                         r.condition, omega.real()));
    }
    const Eigen::Index n = B.single_layer.rows();
    r.matrix = (0.5 * CMat::Identity(n, n) + B.neumann_poincare) * lu.inverse();
    return r;
}

CMat exterior_qp_dtn(const QPAssembler& A, const Vec3& alpha, cplx omega, const CMat& traces) {
    return exterior_qp_dtn_matrix(A, alpha, omega).matrix * traces;
}

CVec interior_dtn_symbols(cplx omega, const bie3d::SphereScene& scene, int L) {
    const int n2 = L * L;
    CVec out(scene.size() * n2);
    std::vector<cplx> f, df;
    for (int i = 0; i < scene.size(); ++i) {
        const auto& r = scene.resonators[i];
        const cplx kb = omega / r.speed;
        specfun::sph_bessel_all(specfun::BesselKind::j, L - 1, kb * r.radius, f, df);
        for (int l = 0; l < L; ++l) {
            if (std::abs(f[l]) < 1e-14) {
                throw PreconditionError(fmt::format(
                    "interior Dirichlet frequency of resonator {} (degree {}) at omega = {:.12g}", i, l, omega.real()));
            }
            const cplx s = kb * df[l] / f[l];
            for (int a = l * l; a < (l + 1) * (l + 1); ++a) out(i * n2 + a) = s;
        }
    }
    return out;
}

double resonator_speed(const bie3d::SphereScene& scene) {
    const double v = scene.resonators.at(0).speed;
    for (const auto& r : scene.resonators) {
        if (std::abs(r.speed - v) > 1e-12 * v) throw PreconditionError("periodic cells need identical resonator speeds");
    }
    return v;
}

double hermiticity_defect(const CMat& M) {
    const double n = M.norm();
    return n > 0.0 ? (M - M.adjoint()).norm() / n : 0.0;
}

CMat capmat_reg_at(const QPAssembler& A, const Vec3& alpha, double omega, const RMat& traces, double vb) {
    const CMat G = traces.cast<cplx>();
    const auto D = exterior_qp_dtn_matrix(A, alpha, omega);
    return -(vb * vb / (2.0 * omega)) * G.adjoint() * D.matrix * G;
}

RegularCapacitance capmat_case1(const QPAssembler& A, const Vec3& alpha, double omega0) {
    RegularCapacitance r;
    r.alpha = alpha;
    r.omega0 = omega0;
    r.modes = capmat::neumann_modes(A.scene(), omega0, A.L());
    const double vb = resonator_speed(A.scene());
    const CMat G = r.modes.traces.cast<cplx>();
    const auto D = exterior_qp_dtn_matrix(A, alpha, omega0);
    r.condition = D.condition;
    r.warnings = D.warnings;
    r.C = -(vb * vb / (2.0 * omega0)) * G.adjoint() * D.matrix * G;
    r.hermiticity_defect = hermiticity_defect(r.C);
    return r;
}

namespace {

RVec hermitian_eigs(const CMat& M) {
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (M + M.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

}  // namespace

nep::ResonanceSet bloch_direct(const QPAssembler& A, const Vec3& alpha, double delta, double omega0,
                               const BlochOptions& opts) {
    const auto C1 = capmat_case1(A, alpha, omega0);
    const int m = C1.modes.size();
    double rad = opts.radius;
    if (rad <= 0.0) rad = 3.0 * std::abs(delta) * C1.C.norm() + 1e-9 * omega0;
    const auto& sc = A.scene();
    std::map<double, RVec> cache;
    int evals = 0;
    auto eigs = [&](double w) -> const RVec& {
        auto it = cache.find(w);
        if (it != cache.end()) return it->second;
        ++evals;
        const CVec lin = interior_dtn_symbols(w, sc, A.L());
        CMat T = -delta * exterior_qp_dtn_matrix(A, alpha, w).matrix;
        T.diagonal() += lin;
        return cache.emplace(w, hermitian_eigs(T)).first->second;
    };
    const double lo = omega0 - rad, hi = omega0 + rad;
    auto negatives = [](const RVec& e) { return int((e.array() < 0.0).count()); };
    const int nlo = negatives(eigs(lo)), nhi = negatives(eigs(hi));
    nep::ResonanceSet out;
    if (nhi - nlo != m) {
        out.warnings.push_back(fmt::format("found {} eigenvalue crossings in [{:.12g}, {:.12g}], expected {}", nhi - nlo,
                                           lo, hi, m));
    }
    for (int r = 0; r < nhi - nlo; ++r) {
        const int idx = nlo + r;
        auto g = [&](double w) { return eigs(w)(idx); };
        boost::uintmax_t it = 200;
        const double tol = opts.xtol * omega0;
        auto stop = [tol](double a, double b) { return std::abs(b - a) <= tol; };
        const int before = evals;
        const auto br = boost::math::tools::toms748_solve(g, lo, hi, g(lo), g(hi), stop, it);
        const double w = 0.5 * (br.first + br.second);
        out.values.push_back(w);
        out.multiplicity.push_back(1);
        out.residual_norms.push_back(std::abs(g(w)));
        out.iterations.push_back(evals - before);
    }
    return out;
}

std::vector<Vec3> brillouin_grid(const Lattice3D& lattice, int n) {
    if (n < 1) throw PreconditionError("Brillouin grid size must be >= 1");
    std::vector<Vec3> out;
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            for (int c = 0; c < n; ++c) {
                const Vec3 f((a + 0.5) / n - 0.5, (b + 0.5) / n - 0.5, (c + 0.5) / n - 0.5);
                out.push_back(lattice.dual * f);
            }
        }
    }
    return out;
}

BandSweep band_sweep(const QPAssembler& A, const std::vector<Vec3>& alphas, double omega0, double delta) {
    BandSweep s;
    s.omega0 = omega0;
    s.delta = delta;
    s.alphas = alphas;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        const auto C = capmat_case1(A, alphas[i], omega0);
        if (i == 0) {
            s.lambda.resize(Eigen::Index(alphas.size()), C.C.rows());
        }
        const RVec e = hermitian_eigs(C.C);
        s.lambda.row(Eigen::Index(i)) = e.transpose();
        s.max_hermiticity_defect = std::max(s.max_hermiticity_defect, C.hermiticity_defect);
        for (const auto& w : C.warnings) s.warnings.push_back(w);
        const double scale = std::max(C.C.norm(), 1e-300);
        for (Eigen::Index j = 1; j < e.size(); ++j) {
            if (e(j) - e(j - 1) < 1e-8 * scale) {
                s.warnings.push_back(fmt::format("near-degenerate bands {} and {} at alpha = [{:.6g}, {:.6g}, {:.6g}]", j - 1,
                                                 j, alphas[i](0), alphas[i](1), alphas[i](2)));
            }
        }
    }
    s.omega = (omega0 + delta * s.lambda.array()).matrix();
    return s;
}

std::vector<cplx> evaluate_bloch_mode(const QPAssembler& A, const CVec& a, const capmat::NeumannModeSet& modes,
                                      const Vec3& alpha, double omega, const std::vector<Vec3>& points) {
    if (a.size() != modes.size()) throw PreconditionError("coefficient vector length does not match the mode set");
    const auto& sc = A.scene();
    const int N = sc.size(), n2 = A.L() * A.L();
    const CVec g = modes.traces.cast<cplx>() * a;
    CVec psi(N * n2);
    for (int i = 0; i < N; ++i) {
        const auto& r = sc.resonators[i];
        for (int l = 0; l < A.L(); ++l) {
            const cplx s = bie3d::single_layer_eigenvalue(l, omega / r.speed, r.radius);
            for (int b = l * l; b < (l + 1) * (l + 1); ++b) psi(i * n2 + b) = g(i * n2 + b) / s;
        }
    }
    const auto B = A.blocks(alpha, omega / sc.background_speed);
    const CVec phi = B.single_layer.partialPivLu().solve(g);
    const bie3d::DensityPair inner{psi, CVec::Zero(psi.size())};
    std::vector<cplx> out(points.size());
    std::vector<Vec3> ext;
    std::vector<std::size_t> ext_idx;
    std::vector<cplx> ext_phase;
    for (std::size_t p = 0; p < points.size(); ++p) {
        const Vec3& x = points[p];
        bool done = false;
        for (int i = 0; i < N && !done; ++i) {
            const auto& r = sc.resonators[i];
            for (const auto& m : detail::lattice_points_near(A.context().lattice, x - r.center, r.radius * (1.0 + 1e-6))) {
                const Vec3 y = x - m;
                out[p] = std::exp(I * alpha.dot(m)) * bie3d::evaluate_field(inner, omega, sc, A.L(), {y})[0];
                done = true;
                break;
            }
        }
        if (done) continue;
        const Vec3 n = A.context().lattice.l.inverse() * (x - A.context().lattice.center());
        const Vec3 shift = A.context().lattice.l * n.array().round().matrix();
        ext.push_back(x - shift);
        ext_idx.push_back(p);
        ext_phase.push_back(std::exp(I * alpha.dot(shift)));
    }
    if (!ext.empty()) {
        const auto u = A.single_layer_field(phi, alpha, omega / sc.background_speed, ext);
        for (std::size_t e = 0; e < ext.size(); ++e) out[ext_idx[e]] = ext_phase[e] * u[e];
    }
    return out;
}

}  // namespace resona::periodic
