#include "resona/capmat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "resona/errors.hpp"

namespace resona::capmat {

using specfun::BesselKind;

namespace {

double j_real(int ell, double x) {
    if (ell < 0) return std::cos(x) / x;  // j_{-1}
    return specfun::sph_bessel(BesselKind::j, ell, x).value.real();
}

}  // namespace

NeumannModeSet neumann_modes(const bie3d::SphereScene& scene, double omega0, int L) {
    scene.validate();
    if (!(omega0 > 0.0)) throw PreconditionError("omega0 must be positive");
    NeumannModeSet set;
    set.omega0 = omega0;
    set.L = L;
    double nearest = std::numeric_limits<double>::infinity();
    for (int j = 0; j < scene.size(); ++j) {
        const auto& r = scene.resonators[j];
        const double beta = omega0 * r.radius / r.speed;
        bool any = false;
        for (int ell = 0; ell <= int(beta) + 1; ++ell) {
            const auto zeros = specfun::jprime_zeros_below(ell, beta + 1.0);
            for (std::size_t n = 0; n < zeros.size(); ++n) {
                const double z = zeros[n];
                const double w = z * r.speed / r.radius;
                if (std::abs(w - omega0) < std::abs(nearest - omega0)) nearest = w;
                if (std::abs(z - beta) > 1e-8 * beta) continue;
                if (ell >= L) {
                    throw PreconditionError(
                        fmt::format("Neumann mode of degree {} at omega0 = {} needs truncation L > {}", ell, omega0, ell));
                }
                const double R = r.radius;
                const double jb = j_real(ell, z);
                const double nrm2 = 0.5 * R * R * R * (jb * jb - j_real(ell - 1, z) * j_real(ell + 1, z));
                const double c = 1.0 / std::sqrt(nrm2);
                for (int m = -ell; m <= ell; ++m) {
                    set.modes.push_back({j, ell, m, int(n) + 1, z, c, c * R * jb});
                }
                any = true;
            }
        }
        if (any) set.resonant.push_back(j);
    }
    if (set.modes.empty()) {
        throw PreconditionError(
            fmt::format("omega0 = {} is not a Neumann frequency of any resonator; nearest is {:.12g}", omega0, nearest));
    }
    const int n2 = L * L;
    set.traces = RMat::Zero(scene.size() * n2, set.size());
    for (int i = 0; i < set.size(); ++i) {
        const auto& md = set.modes[i];
        set.traces(md.resonator * n2 + specfun::HarmonicIndex{md.ell, md.m}.flat(), i) = md.trace_coeff;
    }
    return set;
}

FluxResult exterior_normal_derivative(const CMat& g, cplx k0, const bie3d::SphereScene& scene, int L,
                                      const bie3d::AssemblyOptions& opts) {
    auto B = bie3d::assemble_layer_blocks(k0, scene, L, opts);
    if (g.rows() != B.single_layer.rows()) throw PreconditionError("trace length does not match N L^2");
    Eigen::PartialPivLU<CMat> lu(B.single_layer);
    FluxResult out;
    const double rc = lu.rcond();
    out.condition = rc > 0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    if (out.condition > 1e12) {
        out.warnings.push_back(fmt::format(
            "single layer nearly singular at k0 = ({}, {}): condition estimate {:.3e}", k0.real(), k0.imag(),
            out.condition));
    }
    const int n = int(g.rows());
    out.flux = (0.5 * CMat::Identity(n, n) + B.neumann_poincare) * lu.solve(g);
    return out;
}

double CapacitanceMatrix::symmetry_defect() const {
    const double s = scrC.norm();
    return s == 0.0 ? 0.0 : (scrC - scrC.transpose()).norm() / s;
}

CapacitanceMatrix capacitance_matrix(double omega0, const bie3d::SphereScene& scene, int L,
                                     const bie3d::AssemblyOptions& opts) {
    CapacitanceMatrix C;
    C.omega0 = omega0;
    C.modes = neumann_modes(scene, omega0, L);
    const CMat G = C.modes.traces.cast<cplx>();
    auto F = exterior_normal_derivative(G, omega0 / scene.background_speed, scene, L, opts);
    C.warnings = F.warnings;
    C.scrC = -G.transpose() * F.flux;
    const int m = C.modes.size();
    C.Dhat.resize(m);
    for (int i = 0; i < m; ++i) {
        const auto& r = scene.resonators[C.modes.modes[i].resonator];
        C.Dhat(i) = r.delta * r.speed * r.speed;
    }
    C.C = (1.0 / (2.0 * omega0)) * C.Dhat.asDiagonal() * C.scrC;
    return C;
}

int jordan_block_size(const CMat& C, cplx lambda, double rank_tol) {
    const Eigen::Index n = C.rows();
    const double nc = C.norm();
    if (nc == 0.0) return 1;
    const CMat B = C - lambda * CMat::Identity(n, n);
    Eigen::ComplexEigenSolver<CMat> es(C, false);
    int alg = 0;
    for (Eigen::Index i = 0; i < n; ++i) alg += std::abs(es.eigenvalues()(i) - lambda) <= std::sqrt(rank_tol) * nc;
    CMat P = CMat::Identity(n, n);
    int prev = 0;
    for (int p = 1; p <= n; ++p) {
        P = P * B;
        Eigen::JacobiSVD<CMat> svd(P);
        const RVec s = svd.singularValues();
        int null = 0;
        for (Eigen::Index i = 0; i < s.size(); ++i) null += s(i) <= rank_tol * std::pow(nc, p);
        if (null >= alg || null == prev) return std::max(p - (null == prev ? 1 : 0), 1);
        prev = null;
    }
    return int(n);
}

LeadingOrderPrediction leading_resonances(const CapacitanceMatrix& C, double rank_tol) {
    LeadingOrderPrediction out;
    out.omega0 = C.omega0;
    const Eigen::Index m = C.C.rows();
    Eigen::ComplexEigenSolver<CMat> es(C.C);
    out.eigenvalues = es.eigenvalues();
    out.eigenvectors = es.eigenvectors();
    const double nc = C.C.norm();
    std::vector<bool> done(m, false);
    out.jordan_q.assign(m, 1);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (done[i]) continue;
        std::vector<Eigen::Index> grp;
        for (Eigen::Index j = i; j < m; ++j) {
            if (!done[j] && std::abs(out.eigenvalues(j) - out.eigenvalues(i)) <= 1e-8 * std::max(nc, 1e-300)) {
                grp.push_back(j);
                done[j] = true;
            }
        }
        const int q = jordan_block_size(C.C, out.eigenvalues(i), rank_tol);
        for (auto j : grp) out.jordan_q[j] = q;
        if (grp.size() > 1 && q == 1) {
            CMat V(m, Eigen::Index(grp.size()));
            for (std::size_t c = 0; c < grp.size(); ++c) V.col(c) = out.eigenvectors.col(grp[c]);
            Eigen::HouseholderQR<CMat> qr(V);
            const CMat Qm = qr.householderQ() * CMat::Identity(m, Eigen::Index(grp.size()));
            for (std::size_t c = 0; c < grp.size(); ++c) out.eigenvectors.col(grp[c]) = Qm.col(c);
        }
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        out.eigenvectors.col(i).normalize();
        out.frequencies.push_back(C.omega0 + out.eigenvalues(i));
    }
    return out;
}

std::vector<cplx> eigenmode_leading(const CVec& a, const NeumannModeSet& modes, double omega0,
                                    const bie3d::SphereScene& scene, int L, const std::vector<Vec3>& points,
                                    const bie3d::AssemblyOptions& opts) {
    if (a.size() != modes.size()) throw PreconditionError("coefficient vector length does not match mode count");
    if (std::abs(a.norm() - 1.0) > 1e-10) throw PreconditionError("coefficient vector must have unit norm");
    const CVec g = modes.traces.cast<cplx>() * a;
    auto B = bie3d::assemble_layer_blocks(omega0 / scene.background_speed, scene, L, opts);
    CMat Sb, Kb;
    bie3d::interior_blocks(omega0, scene, L, Sb, Kb);
    bie3d::DensityPair d;
    d.phi = B.single_layer.partialPivLu().solve(g);
    d.psi = Sb.diagonal().cwiseInverse().cwiseProduct(g);
    return bie3d::evaluate_field(d, omega0, scene, L, points);
}

ResidueCheck interior_ntd_residue_check(double omega0, const bie3d::SphereScene& scene, int L, double h) {
    if (scene.size() != 1) throw PreconditionError("residue check needs a single-resonator scene");
    const auto modes = neumann_modes(scene, omega0, L);
    const auto& r = scene.resonators[0];
    auto ntd = [&](int ell, double w) {
        const double kb = w / r.speed;
        auto j = specfun::sph_bessel(BesselKind::j, ell, kb * r.radius);
        return j.value / (kb * j.derivative);
    };
    ResidueCheck out;
    for (int ell = 0; ell < L; ++ell) {
        auto R = [&](double s) { return s * ntd(ell, omega0 + s); };
        const cplx r0 = R(h), r1 = R(h / 2), r2 = R(h / 4);
        const cplx a0 = 2.0 * r1 - r0, a1 = 2.0 * r2 - r1;
        const cplx res = (4.0 * a1 - a0) / 3.0;
        cplx expect = 0.0;
        for (const auto& md : modes.modes) {
            if (md.ell == ell && md.m == 0) {
                expect = -(r.speed * r.speed / (2.0 * omega0)) * md.trace_coeff * md.trace_coeff;
            }
        }
        out.residues.push_back(res);
        out.expected.push_back(expect);
        if (expect != cplx(0.0)) {
            out.max_rel_error = std::max(out.max_rel_error, std::abs(res - expect) / std::abs(expect));
        } else {
            out.max_nonresonant = std::max(out.max_nonresonant, std::abs(res));
        }
    }
    return out;
}

LogFit log_log_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw PreconditionError("log-log fit needs matching samples");
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = std::log(x[i]), b = std::log(y[i]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
        syy += b * b;
    }
    LogFit f;
    const double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
    f.slope = cxy / vx;
    f.intercept = (sy - f.slope * sx) / n;
    f.r2 = vy > 0 ? cxy * cxy / (vx * vy) : 1.0;
    return f;
}

DiagnosticsReport diagnostics(const bie3d::SphereScene& scene, const std::vector<double>& frequencies, int L,
                              const bie3d::AssemblyOptions& opts) {
    if (frequencies.size() < 4) throw PreconditionError("diagnostics fits need at least 4 frequencies");
    double vstar = scene.background_speed, dmax = 0.0;
    for (const auto& r : scene.resonators) {
        vstar = std::min(vstar, r.speed);
        dmax = std::max(dmax, std::abs(r.delta));
    }
    DiagnosticsReport rep;
    std::vector<double> xs, xt, yn, yl2, yh1;
    for (double w : frequencies) {
        auto C = capacitance_matrix(w, scene, L, opts);
        DiagnosticsRow row{};
        row.omega0 = w;
        row.m = C.modes.size();
        row.symmetry_defect = C.symmetry_defect();
        Eigen::JacobiSVD<CMat> svd(C.scrC);
        row.scrC_norm = svd.singularValues()(0);
        double vi = 0.0;
        for (const auto& md : C.modes.modes) {
            const auto& r = scene.resonators[md.resonator];
            const double l2 = std::abs(md.trace_coeff);
            const double h1 = l2 * std::sqrt(1.0 + md.ell * (md.ell + 1.0) / (r.radius * r.radius));
            if (l2 > row.trace_l2) vi = r.speed;
            row.trace_l2 = std::max(row.trace_l2, l2);
            row.trace_h1 = std::max(row.trace_h1, h1);
        }
        row.uniform_indicator = dmax * (1.0 + w / scene.background_speed);
        rep.max_symmetry_defect = std::max(rep.max_symmetry_defect, row.symmetry_defect);
        rep.rows.push_back(row);
        xs.push_back(1.0 + w / vstar);
        xt.push_back(1.0 + w / vi);
        yn.push_back(row.scrC_norm);
        yl2.push_back(row.trace_l2);
        yh1.push_back(row.trace_h1);
    }
    rep.norm_fit = log_log_fit(xs, yn);
    rep.trace_l2_fit = log_log_fit(xt, yl2);
    rep.trace_h1_fit = log_log_fit(xt, yh1);
    return rep;
}

}  // namespace resona::capmat
