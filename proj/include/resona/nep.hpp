#pragma once

#include <functional>
#include <string>
#include <vector>

#include "resona/bie3d.hpp"
#include "resona/types.hpp"

namespace resona::nep {

using MatrixBuilder = std::function<CMat(cplx)>;

/// log|det M| from a row-scaled partial-pivot LU. Returns -inf on an exactly singular pivot.
double log_abs_det(const CMat& M);

struct ScanPoint {
    cplx omega;
    double log_abs_det = 0.0;
    bool ok = true;
    std::string error;
};

/// Evaluates log|det| on every grid point; failures are recorded per point and the scan continues.
std::vector<ScanPoint> det_scan(const MatrixBuilder& builder, const std::vector<cplx>& grid);

/// Indices of interior local minima of a scan.
std::vector<std::size_t> scan_minima(const std::vector<ScanPoint>& scan);

struct MullerOptions {
    double residual_tol = 1e-10;
    double step_tol = 1e-12;  // relative to max(1, |z|)
    int max_iter = 60;
};

struct MullerResult {
    cplx root;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
    std::vector<cplx> trace;
};

MullerResult muller_root(const std::function<cplx(cplx)>& f, cplx s0, cplx s1, cplx s2,
                         const MullerOptions& opts = {});

/// Roots of f found one at a time; each search runs on f(z) / prod (z - z_k).
std::vector<cplx> muller_deflated(const std::function<cplx(cplx)>& f, int count, cplx seed,
                                  const MullerOptions& opts = {});

struct ResonanceSet {
    std::vector<cplx> values;
    std::vector<int> multiplicity;
    std::vector<double> residual_norms;  // sigma_min / sigma_max of A at each root
    std::vector<int> iterations;
    std::vector<std::string> warnings;

    int total_count() const;
    /// Values repeated by multiplicity.
    std::vector<cplx> expanded() const;
};

struct ClusterOptions {
    double radius = 0.0;          // <= 0 selects 10 |delta| omega0 + 1e-3
    int scan_points = 21;
    double nullity_tol = 1e-9;    // relative singular-value threshold for multiplicity
    int expected = -1;            // < 0 uses the Neumann multiplicity at omega0
    MullerOptions muller{1e-14, 1e-14, 80};
    bie3d::AssemblyOptions assembly;
};

/// Roots of det A_L(omega, delta) in the disk |omega - omega0| < radius.
/// Muller runs on 1 / (tr(A^{-1} A') - sum p_k / (z - z_k)), which turns semisimple multiple roots into simple ones.
ResonanceSet find_resonance_cluster(double omega0, cplx delta, const bie3d::SphereScene& scene, int L,
                                    const ClusterOptions& opts = {});

/// Generic cluster search for any analytic matrix family with derivative.
ResonanceSet find_cluster(const std::function<std::pair<CMat, CMat>(cplx)>& family, cplx center, double radius,
                          int expected, const ClusterOptions& opts);

/// Number of singular values below tol * sigma_max.
int numerical_nullity(const CMat& M, double tol);

double hausdorff(const std::vector<cplx>& a, const std::vector<cplx>& b);

}  // namespace resona::nep
