#pragma once

#include <string>
#include <vector>

#include "resona/bie3d.hpp"
#include "resona/types.hpp"

namespace resona::capmat {

struct NeumannMode {
    int resonator;
    int ell;
    int m;
    int n;
    double beta;
    double norm_const;   // c with u = c j_ell(beta r / R) Y_lm, unit L^2(D_j) norm
    double trace_coeff;  // coefficient of g on e_lm = Y_lm / R
};

struct NeumannModeSet {
    double omega0 = 0.0;
    int L = 0;
    std::vector<NeumannMode> modes;
    std::vector<int> resonant;  // resonators carrying at least one mode
    RMat traces;                // N L^2 x m, columns g_{j,l}

    int size() const { return int(modes.size()); }
};

/// Neumann modes of all balls at omega0 (relative match 1e-8). Requires every mode degree < L.
NeumannModeSet neumann_modes(const bie3d::SphereScene& scene, double omega0, int L);

struct FluxResult {
    CMat flux;
    double condition = 0.0;
    std::vector<std::string> warnings;
};

/// (1/2 + K^{k0,*}) (S^{k0})^{-1} applied to the columns of g.
FluxResult exterior_normal_derivative(const CMat& g, cplx k0, const bie3d::SphereScene& scene, int L,
                                      const bie3d::AssemblyOptions& opts = {});

struct CapacitanceMatrix {
    double omega0 = 0.0;
    CMat C;
    CMat scrC;
    CVec Dhat;  // delta_i v_i^2 per mode
    NeumannModeSet modes;
    std::vector<std::string> warnings;

    double symmetry_defect() const;
};

CapacitanceMatrix capacitance_matrix(double omega0, const bie3d::SphereScene& scene, int L,
                                     const bie3d::AssemblyOptions& opts = {});

struct LeadingOrderPrediction {
    double omega0 = 0.0;
    CVec eigenvalues;
    std::vector<cplx> frequencies;
    CMat eigenvectors;       // unit columns; degenerate groups orthonormalized
    std::vector<int> jordan_q;
};

LeadingOrderPrediction leading_resonances(const CapacitanceMatrix& C, double rank_tol = 1e-8);

/// Size of the largest Jordan block of lambda, from ranks of (C - lambda I)^p.
int jordan_block_size(const CMat& C, cplx lambda, double rank_tol);

/// Leading-order eigenmode sum_i a_i u_i with exterior S^{k0}[phi_i] and interior S~^{omega0}[psi_i].
std::vector<cplx> eigenmode_leading(const CVec& a, const NeumannModeSet& modes, double omega0,
                                    const bie3d::SphereScene& scene, int L, const std::vector<Vec3>& points,
                                    const bie3d::AssemblyOptions& opts = {});

struct ResidueCheck {
    double max_rel_error = 0.0;      // resonant channels
    double max_nonresonant = 0.0;    // |residue| on non-resonant channels
    std::vector<cplx> residues;      // per degree 0..L-1
    std::vector<cplx> expected;
};

/// Residue of the ball interior NtD symbol at omega0 against -Pi_{omega0}, by Richardson extrapolation.
ResidueCheck interior_ntd_residue_check(double omega0, const bie3d::SphereScene& scene, int L = 6, double h = 1e-5);

struct LogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Least-squares fit of log y against log x.
LogFit log_log_fit(const std::vector<double>& x, const std::vector<double>& y);

struct DiagnosticsRow {
    double omega0;
    int m;
    double symmetry_defect;
    double scrC_norm;
    double trace_l2;  // max over modes of ||g||_{L^2(dD)}
    double trace_h1;  // max over modes of ||g||_{H^1(dD)}
    double uniform_indicator;
};

struct DiagnosticsReport {
    std::vector<DiagnosticsRow> rows;
    double max_symmetry_defect = 0.0;
    LogFit norm_fit;      // ||SC|| vs 1 + omega/v_*
    LogFit trace_l2_fit;  // vs 1 + omega/v_i
    LogFit trace_h1_fit;
};

DiagnosticsReport diagnostics(const bie3d::SphereScene& scene, const std::vector<double>& frequencies, int L,
                              const bie3d::AssemblyOptions& opts = {});

}  // namespace resona::capmat
