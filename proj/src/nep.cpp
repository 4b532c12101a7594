#include "resona/nep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "resona/errors.hpp"

namespace resona::nep {

double log_abs_det(const CMat& M) {
    if (M.rows() != M.cols()) throw PreconditionError("log_abs_det needs a square matrix");
    if (M.rows() == 0) return 0.0;
    CMat A = M;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        const double s = A.row(i).cwiseAbs().maxCoeff();
        if (s == 0.0) return -std::numeric_limits<double>::infinity();
        A.row(i) /= s;
        acc += std::log(s);
    }
    Eigen::PartialPivLU<CMat> lu(A);
    const CMat& U = lu.matrixLU();
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        const double d = std::abs(U(i, i));
        if (d == 0.0 || !std::isfinite(d)) return -std::numeric_limits<double>::infinity();
        acc += std::log(d);
    }
    return acc;
}

std::vector<ScanPoint> det_scan(const MatrixBuilder& builder, const std::vector<cplx>& grid) {
    if (grid.empty()) throw PreconditionError("det_scan needs a nonempty grid");
    std::vector<ScanPoint> out;
    out.reserve(grid.size());
    for (const cplx w : grid) {
        ScanPoint p;
        p.omega = w;
        try {
            p.log_abs_det = log_abs_det(builder(w));
            if (!std::isfinite(p.log_abs_det)) {
                p.ok = false;
                p.error = "LU breakdown";
            }
        } catch (const std::exception& e) {
            p.ok = false;
            p.error = e.what();
            p.log_abs_det = std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(p);
    }
    return out;
}

std::vector<std::size_t> scan_minima(const std::vector<ScanPoint>& s) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        if (!s[i].ok) {
            idx.push_back(i);
            continue;
        }
        if (s[i - 1].ok && s[i + 1].ok && s[i].log_abs_det < s[i - 1].log_abs_det &&
            s[i].log_abs_det <= s[i + 1].log_abs_det) {
            idx.push_back(i);
        }
    }
    return idx;
}

namespace {

bool finite(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

}  // namespace

MullerResult muller_root(const std::function<cplx(cplx)>& f, cplx x0, cplx x1, cplx x2, const MullerOptions& opts) {
    if (x0 == x1 || x1 == x2 || x0 == x2) throw PreconditionError("Muller seeds must be distinct");
    MullerResult res;
    cplx f0 = f(x0), f1 = f(x1), f2 = f(x2);
    res.trace = {x0, x1, x2};
    for (int it = 1; it <= opts.max_iter; ++it) {
        res.iterations = it;
        if (!finite(f2)) break;
        if (std::abs(f2) <= opts.residual_tol) {
            res.root = x2;
            res.residual = std::abs(f2);
            res.converged = true;
            return res;
        }
        const cplx h1 = x1 - x0, h2 = x2 - x1;
        const cplx d1 = (f1 - f0) / h1, d2 = (f2 - f1) / h2;
        const cplx a = (d2 - d1) / (h2 + h1);
        const cplx b = a * h2 + d2;
        const cplx disc = std::sqrt(b * b - 4.0 * f2 * a);
        cplx den = std::abs(b + disc) >= std::abs(b - disc) ? b + disc : b - disc;
        cplx dx = den == cplx(0.0) ? (1.0 + std::abs(x2)) * 1e-3 : -2.0 * f2 / den;
        if (!finite(dx)) dx = (1.0 + std::abs(x2)) * 1e-3;
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
        x2 = x2 + dx;
        f2 = f(x2);
        res.trace.push_back(x2);
        if (std::abs(dx) <= opts.step_tol * std::max(1.0, std::abs(x2))) {
            res.root = x2;
            res.residual = finite(f2) ? std::abs(f2) : 0.0;
            res.converged = true;
            return res;
        }
    }
    res.root = x2;
    res.residual = std::abs(f2);
    return res;
}

std::vector<cplx> muller_deflated(const std::function<cplx(cplx)>& f, int count, cplx seed,
                                  const MullerOptions& opts) {
    std::vector<cplx> roots;
    for (int n = 0; n < count; ++n) {
        auto g = [&](cplx z) {
            cplx v = f(z);
            for (const cplx r : roots) v /= (z - r);
            return v;
        };
        const double s = 1e-2 * std::max(1.0, std::abs(seed));
        auto r = muller_root(g, seed - s, seed + s, seed + I * s, opts);
        if (!r.converged) {
            throw ConvergenceError(fmt::format("Muller did not converge after {} iterations", r.iterations));
        }
        roots.push_back(r.root);
    }
    return roots;
}

int ResonanceSet::total_count() const {
    int n = 0;
    for (int p : multiplicity) n += p;
    return n;
}

std::vector<cplx> ResonanceSet::expanded() const {
    std::vector<cplx> out;
    for (std::size_t i = 0; i < values.size(); ++i) out.insert(out.end(), multiplicity[i], values[i]);
    return out;
}

int numerical_nullity(const CMat& M, double tol) {
    Eigen::BDCSVD<CMat> svd(M);
    const RVec s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return int(s.size());
    int n = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) <= tol * s(0)) ++n;
    }
    return n;
}

ResonanceSet find_cluster(const std::function<std::pair<CMat, CMat>(cplx)>& family, cplx center, double radius,
                          int expected, const ClusterOptions& opts) {
    ResonanceSet out;
    std::vector<cplx> roots;
    std::vector<int> mult;

    auto L = [&](cplx z) -> cplx {
        auto [A, dA] = family(z);
        Eigen::PartialPivLU<CMat> lu(A);
        const cplx tr = lu.solve(dA).trace();
        if (!finite(tr)) return std::numeric_limits<double>::infinity();
        cplx v = tr;
        for (std::size_t k = 0; k < roots.size(); ++k) v -= double(mult[k]) / (z - roots[k]);
        return v;
    };
    auto h = [&](cplx z) -> cplx {
        const cplx l = L(z);
        if (!finite(l)) return 0.0;
        return 1.0 / l;
    };

    // Seeds: scan minima along the real diameter, then the center, then a ring.
    std::vector<cplx> grid;
    for (int i = 0; i < opts.scan_points; ++i) {
        grid.push_back(center + radius * (-1.0 + 2.0 * i / (opts.scan_points - 1)));
    }
    auto scan = det_scan([&](cplx z) { return family(z).first; }, grid);
    std::vector<std::size_t> mins = scan_minima(scan);
    std::sort(mins.begin(), mins.end(),
              [&](std::size_t a, std::size_t b) { return scan[a].log_abs_det < scan[b].log_abs_det; });
    std::vector<cplx> seeds;
    for (auto i : mins) seeds.push_back(scan[i].omega);
    seeds.push_back(center);
    for (int j = 0; j < 8; ++j) seeds.push_back(center + 0.5 * radius * std::exp(I * (2.0 * pi * j / 8.0 + 0.3)));

    const int cap = expected > 0 ? expected : 1 << 20;
    int total = 0;
    for (const cplx s : seeds) {
        for (int attempt = 0; attempt < std::max(expected, 1) && total < cap; ++attempt) {
            const double e = 1e-4 * std::max(1.0, std::abs(s));
            const double e2 = std::min(e, 0.01 * radius);
            auto r = muller_root(h, s * (1.0 - 1e-4) - I * e2, s * (1.0 + 1e-4) + I * e2, s, opts.muller);
            if (!r.converged || std::abs(r.root - center) >= radius) break;
            bool dup = false;
            for (const cplx z : roots) dup = dup || std::abs(z - r.root) <= 1e-10 * std::max(1.0, std::abs(z));
            if (dup) break;
            const CMat A = family(r.root).first;
            Eigen::BDCSVD<CMat> svd(A);
            const RVec sv = svd.singularValues();
            int p = 0;
            for (Eigen::Index i = 0; i < sv.size(); ++i) p += sv(i) <= opts.nullity_tol * sv(0) ? 1 : 0;
            p = std::max(p, 1);
            roots.push_back(r.root);
            mult.push_back(p);
            out.values.push_back(r.root);
            out.multiplicity.push_back(p);
            out.residual_norms.push_back(sv(sv.size() - 1) / sv(0));
            out.iterations.push_back(r.iterations);
            total += p;
        }
        if (total >= cap) break;
    }
    if (expected >= 0 && total != expected) {
        out.warnings.push_back(fmt::format("cluster count {} differs from expected multiplicity {}", total, expected));
    }
    // deterministic order
    std::vector<std::size_t> ord(out.values.size());
    for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) {
        if (out.values[a].real() != out.values[b].real()) return out.values[a].real() < out.values[b].real();
        return out.values[a].imag() < out.values[b].imag();
    });
    ResonanceSet sorted;
    sorted.warnings = out.warnings;
    for (auto i : ord) {
        sorted.values.push_back(out.values[i]);
        sorted.multiplicity.push_back(out.multiplicity[i]);
        sorted.residual_norms.push_back(out.residual_norms[i]);
        sorted.iterations.push_back(out.iterations[i]);
    }
    return sorted;
}

namespace {

int neumann_multiplicity(double omega0, const bie3d::SphereScene& scene, int L) {
    int m = 0;
    for (const auto& r : scene.resonators) {
        const double beta = omega0 * r.radius / r.speed;
        for (int ell = 0; ell < L; ++ell) {
            for (double z : specfun::jprime_zeros_below(ell, beta + 1.0)) {
                if (std::abs(z - beta) <= 1e-8 * beta) m += 2 * ell + 1;
            }
        }
    }
    return m;
}

}  // namespace

ResonanceSet find_resonance_cluster(double omega0, cplx delta, const bie3d::SphereScene& scene, int L,
                                    const ClusterOptions& opts) {
    const double radius = opts.radius > 0 ? opts.radius : 10.0 * std::abs(delta) * omega0 + 1e-3;
    const int expected = opts.expected >= 0 ? opts.expected : neumann_multiplicity(omega0, scene, L);
    bie3d::LayerAssembler asmb(scene.with_delta(delta), L, opts.assembly);
    auto family = [&](cplx z) {
        auto A = bie3d::assemble_A(z, asmb, true);
        return std::make_pair(std::move(A.entries), std::move(A.d_omega));
    };
    return find_cluster(family, omega0, radius, expected, opts);
}

double hausdorff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    if (a.empty() || b.empty()) throw PreconditionError("hausdorff needs nonempty sets");
    auto directed = [](const std::vector<cplx>& x, const std::vector<cplx>& y) {
        double d = 0.0;
        for (const cplx p : x) {
            double m = std::numeric_limits<double>::infinity();
            for (const cplx q : y) m = std::min(m, std::abs(p - q));
            d = std::max(d, m);
        }
        return d;
    };
    return std::max(directed(a, b), directed(b, a));
}

}  // namespace resona::nep
