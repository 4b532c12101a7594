#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include "periodic_detail.hpp"
#include "resona/errors.hpp"

namespace resona::periodic {

namespace {

RVec hermitian_eigs(const CMat& M) {
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (M + M.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

int zonal_column(const capmat::NeumannModeSet& modes) {
    for (int i = 0; i < modes.size(); ++i) {
        if (modes.modes[i].m == 0) return i;
    }
    throw PreconditionError("mode set has no zonal member");
}

}  // namespace

BandgapReport bandgap_report(const QPAssembler& A, int J, const std::vector<double>& deltas, int grid_n) {
    const auto& sc = A.scene();
    if (sc.size() != 1) throw PreconditionError("bandgap_report expects a single resonator per cell");
    if (J < 2) throw PreconditionError("bandgap_report needs J >= 2");
    const auto& ball = sc.resonators[0];
    const double vb = resonator_speed(sc);
    BandgapReport rep;
    std::vector<specfun::NeumannFrequency> distinct;
    for (const auto& f : specfun::neumann_ball_spectrum(ball.radius, A.L() + J, J + 2)) {
        if (!distinct.empty() && std::abs(f.omega - distinct.back().omega) < 1e-10 * f.omega) continue;
        distinct.push_back(f);
        if (int(distinct.size()) == J) break;
    }
    std::vector<RMat> traces;
    for (const auto& f : distinct) {
        if (f.ell >= A.L()) {
            throw PreconditionError(fmt::format("branch of degree {} needs truncation L > {}", f.ell, f.ell));
        }
        BandgapBranch b;
        b.ell = f.ell;
        b.n = f.n;
        b.omega = f.omega * ball.speed;
        b.c_min = std::numeric_limits<double>::infinity();
        b.c_max = -std::numeric_limits<double>::infinity();
        const auto modes = capmat::neumann_modes(sc, b.omega, A.L());
        traces.push_back(modes.traces.col(zonal_column(modes)));
        rep.branches.push_back(b);
    }
    rep.gamma = std::numeric_limits<double>::infinity();
    for (int n = 0; n + 1 < J; ++n) rep.gamma = std::min(rep.gamma, rep.branches[n + 1].omega - rep.branches[n].omega);

    std::vector<std::string> violations;
    for (const auto& alpha : brillouin_grid(A.context().lattice, grid_n)) {
        for (int n = 0; n < J; ++n) {
            auto& b = rep.branches[n];
            try {
                const auto D = exterior_qp_dtn_matrix(A, alpha, b.omega);
                if (D.condition > 1e12) throw PreconditionError("ill-conditioned single layer");
                const CMat g = traces[n].cast<cplx>();
                const double c = (-(vb * vb / (2.0 * b.omega)) * (g.adjoint() * D.matrix * g))(0, 0).real();
                b.c_min = std::min(b.c_min, c);
                b.c_max = std::max(b.c_max, c);
            } catch (const PreconditionError& e) {
                violations.push_back(fmt::format("alpha = [{:.6g}, {:.6g}, {:.6g}] branch {}: {}", alpha(0), alpha(1),
                                                 alpha(2), n, e.what()));
            }
        }
    }
    if (!violations.empty()) {
        std::string msg = "uniform Case 1 condition fails on the Brillouin grid:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw PreconditionError(msg);
    }
    rep.M = 0.0;
    for (const auto& b : rep.branches) rep.M = std::max({rep.M, std::abs(b.c_min), std::abs(b.c_max)});
    rep.conservative = rep.M > 0.0 ? rep.gamma / (2.0 * rep.M) : std::numeric_limits<double>::infinity();
    rep.threshold = std::numeric_limits<double>::infinity();
    for (int n = 0; n + 1 < J; ++n) {
        const double den = rep.branches[n].c_max - rep.branches[n + 1].c_min;
        if (den > 0.0) {
            rep.threshold = std::min(rep.threshold, (rep.branches[n + 1].omega - rep.branches[n].omega) / den);
        }
    }
    for (double d : deltas) {
        std::vector<double> sup, inf;
        for (const auto& b : rep.branches) {
            sup.push_back(b.omega + d * (d >= 0 ? b.c_max : b.c_min));
            inf.push_back(b.omega + d * (d >= 0 ? b.c_min : b.c_max));
        }
        bool ok = true;
        for (int n = 0; n + 1 < J; ++n) ok = ok && sup[n] < inf[n + 1];
        rep.deltas.push_back(d);
        rep.separated.push_back(ok);
        rep.sup.push_back(sup);
        rep.inf.push_back(inf);
    }
    return rep;
}

Case2Prediction capmat_case2(const CMat& gamma, double omega0, double v, double vb, double delta, double zero_tol) {
    if (!(omega0 > 0.0)) throw PreconditionError("omega0 must be positive");
    Case2Prediction p;
    p.Csing = (vb * vb * v * v / (4.0 * omega0 * omega0)) * gamma.adjoint() * gamma;
    p.eigenvalues = hermitian_eigs(p.Csing);
    const double scale = std::max(p.Csing.norm(), 1.0);
    for (Eigen::Index i = 0; i < p.eigenvalues.size(); ++i) {
        const double l = p.eigenvalues(i);
        if (l > zero_tol * scale) {
            p.plus.push_back(omega0 + std::sqrt(delta) * std::sqrt(l));
            p.minus.push_back(omega0 - std::sqrt(delta) * std::sqrt(l));
        } else {
            ++p.zero_count;
        }
    }
    return p;
}

ExteriorDirichletMode exterior_dirichlet_mode(const QPAssembler& A, const Vec3& alpha, double k_lo, double k_hi,
                                              int scan_points) {
    const auto& sc = A.scene();
    auto S = [&](double k) { return A.blocks(alpha, k).single_layer; };
    auto eigs = [&](double k) { return hermitian_eigs(S(k)); };
    auto negatives = [](const RVec& e) { return int((e.array() < 0.0).count()); };
    auto interior_zero = [&](double k) {
        for (const auto& r : sc.resonators) {
            for (int l = 0; l < A.L(); ++l) {
                if (std::abs(specfun::sph_bessel(specfun::BesselKind::j, l, k * r.radius).value) < 1e-6) return true;
            }
        }
        return false;
    };
    double a = k_lo;
    RVec ea = eigs(a);
    for (int s = 1; s <= scan_points; ++s) {
        const double b = k_lo + (k_hi - k_lo) * s / scan_points;
        const RVec eb = eigs(b);
        const int na = negatives(ea), nb = negatives(eb);
        if (na != nb) {
            const int idx = nb > na ? na : na - 1;
            auto g = [&](double k) { return eigs(k)(idx); };
            boost::uintmax_t it = 200;
            auto stop = [&](double x, double y) { return std::abs(y - x) <= 1e-15 * b; };
            const auto br = boost::math::tools::toms748_solve(g, a, b, ea(idx), eb(idx), stop, it);
            const double k = 0.5 * (br.first + br.second);
            if (!interior_zero(k)) {
                const CMat Sk = S(k);
                Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (Sk + Sk.adjoint()));
                const CVec phi = es.eigenvectors().col(idx);
                const auto B = A.blocks(alpha, k);
                const Eigen::Index n = phi.size();
                const CVec psi = (0.5 * CMat::Identity(n, n) + B.neumann_poincare) * phi;
                const double h = 1e-3 * k;
                const CMat dS = (-S(k + 2 * h) + 8.0 * S(k + h) - 8.0 * S(k - h) + S(k - 2 * h)) / (12.0 * h);
                const cplx pair = psi.dot(dS * phi);  // sum conj(psi) (S' phi)
                const double norm2 = -pair.real() / (2.0 * k);
                if (!(norm2 > 0.0) || std::abs(pair.imag()) > 1e-6 * std::abs(pair)) {
                    throw ConvergenceError(fmt::format("exterior Dirichlet mode at k = {:.12g} has invalid norm {}", k,
                                                       norm2));
                }
                ExteriorDirichletMode m;
                m.k = k;
                m.norm2 = norm2;
                m.density = phi / std::sqrt(norm2);
                m.psi = psi / std::sqrt(norm2);
                return m;
            }
        }
        a = b;
        ea = eb;
    }
    throw ConvergenceError(fmt::format("no exterior Dirichlet eigenvalue found in ({}, {})", k_lo, k_hi));
}

ResidueConnection qp_residue_connection(const QPAssembler& A, const Vec3& alpha, double omega0,
                                        const ExteriorDirichletMode& mode, double h) {
    const auto& sc = A.scene();
    const double vb = resonator_speed(sc);
    const double v = sc.background_speed;
    const auto modes = capmat::neumann_modes(sc, omega0, A.L());
    auto N = [&](double s) { return CMat(s * capmat_reg_at(A, alpha, omega0 + s, modes.traces, vb)); };
    const CMat N1 = N(h), N2 = N(h / 2), N4 = N(h / 4);
    const CMat R1 = 2.0 * N2 - N1, R2 = 2.0 * N4 - N2;
    ResidueConnection r;
    r.k_dirichlet = mode.k;
    r.numerical = (4.0 * R2 - R1) / 3.0;
    r.gamma = mode.psi.adjoint() * modes.traces.cast<cplx>();
    r.formula = capmat_case2(r.gamma, omega0, v, vb, 0.0).Csing;
    const double nf = r.formula.norm();
    r.rel_error = nf > 0.0 ? (r.numerical - r.formula).norm() / nf : (r.numerical - r.formula).norm();
    return r;
}

CMat capmat_case3(const CMat& psi, double omega0, const bie3d::SphereScene& cell, int L) {
    if (psi.rows() != cell.size() * L * L) throw PreconditionError("psi rows must equal N L^2");
    const CVec lin = interior_dtn_symbols(omega0, cell, L);
    const double scale = lin.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < lin.size(); ++i) {
        if (std::abs(lin(i)) < 1e-12 * scale) {
            throw PreconditionError(fmt::format("omega0 = {:.12g} is an interior Neumann frequency (Case 2 collision)", omega0));
        }
    }
    const double v = cell.background_speed;
    return -(v * v / (2.0 * omega0)) * psi.adjoint() * lin.cwiseInverse().asDiagonal() * psi;
}

void check_honeycomb_cell(const bie3d::SphereScene& cell, const Lattice3D& lat) {
    if (cell.size() != 2) throw PreconditionError("honeycomb cell needs exactly two resonators");
    const auto& a = cell.resonators[0];
    const auto& b = cell.resonators[1];
    if (std::abs(a.radius - b.radius) > 1e-12 * a.radius || std::abs(a.speed - b.speed) > 1e-12 * a.speed) {
        throw PreconditionError("honeycomb resonators must be identical");
    }
    const Eigen::AngleAxisd rot(2.0 * pi / 3.0, Vec3::UnitZ());
    const Mat3 R = rot.toRotationMatrix();
    const Mat3 linv = lat.l.inverse();
    auto in_lattice = [&](const Vec3& v) {
        const Vec3 n = linv * v;
        return (n.array() - n.array().round()).abs().maxCoeff() < 1e-9;
    };
    for (int i = 0; i < 3; ++i) {
        if (!in_lattice(R * lat.l.col(i))) throw PreconditionError("lattice lacks threefold rotation symmetry about z");
    }
    const Vec3 d = b.center - a.center;
    if (std::abs(d(2)) > 1e-12 || !in_lattice(R * d - d)) {
        throw PreconditionError("resonator pair is not in honeycomb position (threefold symmetry violated)");
    }
}

HoneycombCone honeycomb_cone(const QPAssembler& A, double omega0, const std::vector<double>& xi_fractions,
                             const Vec3& direction) {
    const auto& lat = A.context().lattice;
    check_honeycomb_cell(A.scene(), lat);
    Vec3 dir = direction;
    dir(2) = 0.0;
    if (dir.norm() == 0.0) throw PreconditionError("direction must have an in-plane component");
    dir.normalize();
    const Vec3 K = lat.K();
    HoneycombCone out;
    const auto C0 = capmat_case1(A, K, omega0);
    if (C0.C.rows() != 2) throw PreconditionError("honeycomb cone needs one simple mode per resonator");
    const RVec e0 = hermitian_eigs(C0.C);
    out.c_K = 0.5 * (e0(0) + e0(1));
    out.degeneracy_defect = std::abs(e0(1) - e0(0)) / std::max(std::abs(out.c_K), C0.C.norm());
    for (double f : xi_fractions) {
        const double xi = f * K.norm();
        const auto C = capmat_case1(A, K + xi * dir, omega0);
        const RVec e = hermitian_eigs(C.C);
        out.xi.push_back(xi);
        out.lambda_minus.push_back(e(0));
        out.lambda_plus.push_back(e(1));
        out.trace_residual = std::abs(0.5 * C.C.trace().real() - out.c_K);
    }
    const std::size_t n = out.xi.size();
    if (n >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = out.lambda_plus[i] - out.lambda_minus[i];
            sx += out.xi[i];
            sy += y[i];
            sxx += out.xi[i] * out.xi[i];
            sxy += out.xi[i] * y[i];
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        const double icpt = (sy - slope * sx) / n;
        double ss_res = 0, ss_tot = 0;
        for (std::size_t i = 0; i < n; ++i) {
            ss_res += std::pow(y[i] - slope * out.xi[i] - icpt, 2);
            ss_tot += std::pow(y[i] - sy / n, 2);
        }
        out.fit_slope = slope;
        out.v_K = 0.5 * slope;
        out.fit_r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    }
    return out;
}

namespace {

double ball_trace_coeff(int ell, double beta) {
    const double j = specfun::sph_bessel(specfun::BesselKind::j, ell, beta).value.real();
    const double jm = ell == 0 ? std::cos(beta) / beta
                               : specfun::sph_bessel(specfun::BesselKind::j, ell - 1, beta).value.real();
    const double jp = specfun::sph_bessel(specfun::BesselKind::j, ell + 1, beta).value.real();
    const double c = 1.0 / std::sqrt(0.5 * (j * j - jm * jp));
    return c * j;
}

}  // namespace

cplx c_infinity(int ell, int n, double r, double vb, bool require_simple) {
    if (ell < 0 || n < 1) throw PreconditionError("c_infinity needs ell >= 0 and n >= 1");
    if (!(r > 0.0)) throw PreconditionError("c_infinity needs r > 0");
    if (require_simple && ell > 0) {
        throw PreconditionError(fmt::format("Neumann eigenvalue of degree {} has multiplicity {}; not simple", ell,
                                            2 * ell + 1));
    }
    const double beta = specfun::jprime_zero(ell, n);
    const double kappa = beta / r;
    const auto h = specfun::sph_bessel(specfun::BesselKind::h1, ell, kappa);
    const double t = ball_trace_coeff(ell, beta);
    return -(vb / (2.0 * beta)) * std::conj(kappa * h.derivative / h.value) * t * t;
}

cplx c_infinity_assembled(int ell, int n, double r, double vb, int L) {
    if (ell < 0 || n < 1) throw PreconditionError("c_infinity needs ell >= 0 and n >= 1");
    if (L <= ell) L = ell + 2;
    const double beta = specfun::jprime_zero(ell, n);
    const double kappa = beta / r;
    bie3d::SphereScene sc;
    sc.resonators.push_back({Vec3::Zero(), 1.0, 1.0, 0.0});
    const bie3d::LayerAssembler A(sc, L);
    const auto B = A.blocks(kappa);
    const int n2 = L * L;
    CVec g = CVec::Zero(n2);
    g(specfun::HarmonicIndex{ell, 0}.flat()) = ball_trace_coeff(ell, beta);
    const CVec flux =
        (0.5 * CMat::Identity(n2, n2) + B.neumann_poincare) * B.single_layer.partialPivLu().solve(g);
    const auto q = specfun::sphere_quadrature(2 * L + 2);
    const RMat Y = q.harmonics(L);
    const CVec u = Y.cast<cplx>() * g;
    const CVec f = Y.cast<cplx>() * flux;
    cplx pair = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) pair += q.weight[i] * u(Eigen::Index(i)) * std::conj(f(Eigen::Index(i)));
    return -(vb / (2.0 * beta)) * pair;
}

}  // namespace resona::periodic
