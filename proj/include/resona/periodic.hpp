#pragma once

#include <memory>
#include <string>
#include <vector>

#include "resona/bie3d.hpp"
#include "resona/capmat.hpp"
#include "resona/nep.hpp"
#include "resona/types.hpp"

namespace resona::periodic {

using Mat3 = Eigen::Matrix3d;

struct Lattice3D {
    Mat3 l;     // columns l_1, l_2, l_3
    Mat3 dual;  // columns alpha_1, alpha_2, alpha_3 with alpha_i . l_j = 2 pi delta_ij
    double volume = 0.0;

    Lattice3D() = default;
    explicit Lattice3D(const Mat3& generators);
    static Lattice3D cubic(double a);
    /// Triangular in-plane lattice (l_1 = a e_x, l_2 = a (1/2, sqrt3/2, 0)) with out-of-plane period c.
    static Lattice3D hexagonal_prism(double a, double c);

    Vec3 point(int n1, int n2, int n3) const { return l * Vec3(n1, n2, n3); }
    Vec3 dual_point(int n1, int n2, int n3) const { return dual * Vec3(n1, n2, n3); }
    Vec3 center() const { return 0.5 * (l.col(0) + l.col(1) + l.col(2)); }
    /// In-plane high-symmetry points of the hexagonal prism.
    Vec3 K() const { return (2.0 * dual.col(0) + dual.col(1)) / 3.0; }
    Vec3 Kprime() const { return (dual.col(0) + 2.0 * dual.col(1)) / 3.0; }
    /// True when v is a dual lattice vector within tol.
    bool in_dual(const Vec3& v, double tol = 1e-10) const;
};

struct QuasiPeriodicContext {
    Lattice3D lattice;
    double eta = 0.0;               // <= 0 selects 2.5 sqrt(pi) / |Y|^{1/3}
    double threshold_margin = 1e-6; // relative distance of k from |q + alpha|
    int quad_exactness = -1;        // lattice-correction quadrature; <= 0 selects max(2L + 6, 24)

    double split() const;
};

/// Throws PreconditionError when k is within the margin of a diffraction threshold or too large for the split.
void check_qp_wavenumber(const QuasiPeriodicContext& ctx, const Vec3& alpha, cplx k);

/// G^{alpha,k}(x, 0) with (Delta + k^2) G = sum_m delta(x - m) e^{i alpha . m}.
cplx qp_green(const Vec3& x, const Vec3& alpha, cplx k, const QuasiPeriodicContext& ctx);

/// Brute-force truncated spectral sum (1/|Y|) sum_{|n_i| <= nmax} e^{i(q+alpha).x} / (k^2 - |q+alpha|^2).
cplx spectral_sum(const Vec3& x, const Vec3& alpha, cplx k, const Lattice3D& lattice, int nmax);

class EwaldTables;

/// Galerkin assembly of the alpha-quasiperiodic layer operators for spheres inside one cell.
class QPAssembler {
public:
    QPAssembler(const bie3d::SphereScene& cell, int L, const QuasiPeriodicContext& ctx);
    ~QPAssembler();
    QPAssembler(QPAssembler&&) noexcept;

    int L() const { return L_; }
    int block_size() const { return int(scene_.resonators.size()) * L_ * L_; }
    const bie3d::SphereScene& scene() const { return scene_; }
    const QuasiPeriodicContext& context() const { return ctx_; }

    /// S^{alpha,k} and (K^{-alpha,k})^*.
    bie3d::LayerBlocks blocks(const Vec3& alpha, cplx k) const;

    /// Field of the single layer S^{alpha,k}[phi] at points off the boundaries of the reference cell.
    std::vector<cplx> single_layer_field(const CVec& phi, const Vec3& alpha, cplx k,
                                         const std::vector<Vec3>& points) const;

private:
    struct Spectral;
    const Spectral& spectral(const Vec3& alpha) const;
    void check_threshold(const Vec3& alpha, cplx k) const;

    bie3d::SphereScene scene_;
    int L_;
    QuasiPeriodicContext ctx_;
    double E_;
    specfun::SphereQuadrature quad_;
    RMat proj_;
    std::vector<std::vector<Vec3>> nodes_;
    std::vector<std::vector<Vec3>> normals_;
    std::unique_ptr<EwaldTables> tables_;
    mutable std::unique_ptr<Spectral> spec_;
};

struct DtNResult {
    CMat matrix;  // (1/2 + K*) S^{-1} on the Galerkin space
    double condition = 0.0;
    std::vector<std::string> warnings;
};

/// alpha-quasiperiodic exterior DtN matrix at k = omega / v.
DtNResult exterior_qp_dtn_matrix(const QPAssembler& A, const Vec3& alpha, cplx omega);

/// Exterior fluxes of the given trace columns.
CMat exterior_qp_dtn(const QPAssembler& A, const Vec3& alpha, cplx omega, const CMat& traces);

/// Ball interior DtN symbol k_b j_l'(k_b R) / j_l(k_b R) on every channel.
CVec interior_dtn_symbols(cplx omega, const bie3d::SphereScene& scene, int L);

/// Common speed v_b of all resonators; throws PreconditionError when they differ.
double resonator_speed(const bie3d::SphereScene& scene);

/// Relative Hermiticity defect ||M - M^H|| / ||M||.
double hermiticity_defect(const CMat& M);

struct RegularCapacitance {
    Vec3 alpha;
    double omega0 = 0.0;
    CMat C;
    double hermiticity_defect = 0.0;
    double condition = 0.0;
    capmat::NeumannModeSet modes;
    std::vector<std::string> warnings;
};

/// Case 1 matrix -(v_b^2 / 2 omega0) <Lambda_ext g_q, g_p> (conjugate-linear in the second slot).
RegularCapacitance capmat_case1(const QPAssembler& A, const Vec3& alpha, double omega0);
/// Same at an arbitrary frequency with the traces of the Neumann modes at omega0.
CMat capmat_reg_at(const QPAssembler& A, const Vec3& alpha, double omega, const RMat& traces, double vb);

struct BlochOptions {
    double radius = 0.0;  // <= 0 selects 3 delta ||C|| + 1e-9 around omega0
    double xtol = 1e-14;
};

/// Real Bloch eigenfrequencies near omega0: zero crossings of the eigenvalues of the Hermitian part of
/// Lambda_in(omega) - delta Lambda_ext(omega) on the Galerkin space.
nep::ResonanceSet bloch_direct(const QPAssembler& A, const Vec3& alpha, double delta, double omega0,
                               const BlochOptions& opts = {});

struct BandSweep {
    double omega0 = 0.0;
    double delta = 0.0;
    std::vector<Vec3> alphas;
    RMat lambda;  // n_alpha x m, ascending per row
    RMat omega;   // omega0 + delta lambda
    double max_hermiticity_defect = 0.0;
    std::vector<std::string> warnings;
};

BandSweep band_sweep(const QPAssembler& A, const std::vector<Vec3>& alphas, double omega0, double delta);

/// n^3 grid of the Brillouin zone, alpha = dual (i + 1/2) / n - dual / 2 per axis (centred, avoids alpha = 0
/// when n is even).
std::vector<Vec3> brillouin_grid(const Lattice3D& lattice, int n);

struct BandgapBranch {
    int ell = 0;
    int n = 0;
    double omega = 0.0;
    double c_min = 0.0;  // inf over grid of the scalar capacitance coefficient
    double c_max = 0.0;
};

struct BandgapReport {
    std::vector<BandgapBranch> branches;
    double gamma = 0.0;
    double M = 0.0;
    double threshold = 0.0;     // +inf when the leading-order bands never overlap
    double conservative = 0.0;  // gamma / (2 M)
    std::vector<double> deltas;
    std::vector<bool> separated;              // sup < inf for every consecutive pair, per delta
    std::vector<std::vector<double>> sup, inf;  // per delta, per branch
    std::vector<std::string> warnings;
};

/// Bandgap check on the first J distinct ball Neumann frequencies, each restricted to its zonal (m = 0) trace.
BandgapReport bandgap_report(const QPAssembler& A, int J, const std::vector<double>& deltas, int grid_n);

struct Case2Prediction {
    CMat Csing;
    RVec eigenvalues;
    std::vector<double> plus, minus;  // omega0 +- delta^{1/2} sqrt(lambda) for positive lambda
    int zero_count = 0;
};

Case2Prediction capmat_case2(const CMat& gamma, double omega0, double v, double vb, double delta,
                             double zero_tol = 1e-12);

struct ExteriorDirichletMode {
    double k = 0.0;
    CVec density;  // null vector of S^{alpha,k}
    CVec psi;      // normal derivative coefficients, L^2(Omega)-normalised eigenfunction
    double norm2 = 0.0;  // ||S[density]||^2 over the exterior cell before normalisation
};

/// Lowest zero crossing of an eigenvalue of S^{alpha,k} in (k_lo, k_hi), with its normalised flux.
ExteriorDirichletMode exterior_dirichlet_mode(const QPAssembler& A, const Vec3& alpha, double k_lo, double k_hi,
                                              int scan_points = 60);

struct ResidueConnection {
    CMat numerical;
    CMat formula;
    CMat gamma;
    double rel_error = 0.0;
    double k_dirichlet = 0.0;
};

/// Residue of C^reg_alpha at a Case 2 frequency (Richardson over h, h/2, h/4) against the singular matrix.
ResidueConnection qp_residue_connection(const QPAssembler& A, const Vec3& alpha, double omega0,
                                        const ExteriorDirichletMode& mode, double h = 1e-3);

/// Case 3 matrix -(v^2 / 2 omega0) <Lambda_in^{-1} psi_t, psi_s> with the ball interior DtN.
CMat capmat_case3(const CMat& psi, double omega0, const bie3d::SphereScene& cell, int L);

struct HoneycombCone {
    double c_K = 0.0;
    double v_K = 0.0;
    double degeneracy_defect = 0.0;
    double fit_r2 = 0.0;
    double fit_slope = 0.0;
    double trace_residual = 0.0;  // |tr C / 2 - c_K| at the largest offset
    std::vector<double> xi;
    std::vector<double> lambda_plus, lambda_minus;
};

/// Throws PreconditionError unless the cell holds an inversion-symmetric honeycomb dimer of equal balls.
void check_honeycomb_cell(const bie3d::SphereScene& cell, const Lattice3D& lattice);

HoneycombCone honeycomb_cone(const QPAssembler& A, double omega0, const std::vector<double>& xi_fractions,
                             const Vec3& direction = Vec3::UnitX());

/// c_inf = -(v_b / 2 sqrt(mu)) int U conj(d_nu W) for the unit-ball branch (ell, n), kappa = sqrt(mu) / r.
cplx c_infinity(int ell, int n, double r, double vb = 1.0, bool require_simple = true);
/// Same quantity from Galerkin blocks and surface quadrature.
cplx c_infinity_assembled(int ell, int n, double r, double vb = 1.0, int L = 0);

/// Leading-order Bloch mode sum_p a_p (interior S~[S~^{-1} g_p], exterior S^alpha[(S^alpha)^{-1} g_p]).
std::vector<cplx> evaluate_bloch_mode(const QPAssembler& A, const CVec& a, const capmat::NeumannModeSet& modes,
                                      const Vec3& alpha, double omega, const std::vector<Vec3>& points);

}  // namespace resona::periodic
