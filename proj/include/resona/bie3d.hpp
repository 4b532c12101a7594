#pragma once

#include <vector>

#include "resona/specfun.hpp"
#include "resona/types.hpp"

namespace resona::bie3d {

struct Resonator {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    double speed = 1.0;
    cplx delta = 0.0;
};

struct SphereScene {
    std::vector<Resonator> resonators;
    double background_speed = 1.0;

    int size() const { return int(resonators.size()); }
    /// Throws PreconditionError on overlapping spheres or non-positive parameters.
    void validate() const;
    /// Copy with every contrast set to delta.
    SphereScene with_delta(cplx delta) const;
};

struct AssemblyOptions {
    int quad_exactness = -1;   // <= 0 selects max(2L+4, 32)
    double refine_tol = 0.0;   // > 0 enables the doubled-order refinement check on cross blocks
};

struct LayerBlocks {
    CMat single_layer;
    CMat neumann_poincare;
};

/// Single-sphere eigenvalue of the single-layer operator on degree ell with G = -e^{ikr}/(4 pi r).
cplx single_layer_eigenvalue(int ell, cplx k, double radius);
/// Single-sphere eigenvalue of the adjoint Neumann-Poincare operator.
cplx np_eigenvalue(int ell, cplx k, double radius);
/// k-derivatives of the two eigenvalues above.
cplx single_layer_eigenvalue_dk(int ell, cplx k, double radius);
cplx np_eigenvalue_dk(int ell, cplx k, double radius);

/// Reusable assembler: quadrature, projections and pair geometry are fixed at construction.
class LayerAssembler {
public:
    LayerAssembler(const SphereScene& scene, int L, const AssemblyOptions& opts = {});

    int L() const { return L_; }
    int block_size() const { return int(scene_.resonators.size()) * L_ * L_; }
    const SphereScene& scene() const { return scene_; }

    /// Galerkin matrices of S^k and K^{k,*} over all spheres. dk receives d/dk when non-null.
    LayerBlocks blocks(cplx k, LayerBlocks* dk = nullptr) const;

private:
    struct Pair {
        int i, j;     // i < j; x on sphere i (rows), y on sphere j (columns)
        RMat r;       // |x - y|, indexed (y node, x node)
        RMat nx;      // nu_x . (x - y) / |x - y|, indexed (y node, x node)
        RMat ny;      // nu_y . (y - x) / |x - y|, indexed (y node, x node)
    };

    /// M * P^T for unit radius given Mt = M^T, using the product structure of the quadrature.
    CMat project_right_t(const CMat& Mt) const;

    SphereScene scene_;
    int L_;
    int nt_ = 0, np_ = 0;
    RMat tphi_;              // (2L-1) x np: trigonometric factor times phi weight
    RMat theta_;             // L^2 x nt: associated Legendre factor times theta weight
    std::vector<int> mrow_;  // row of tphi_ for each flat index
    AssemblyOptions opts_;
    specfun::SphereQuadrature quad_;
    RMat proj_;  // L^2 x Q, unit radius
    std::vector<Pair> pairs_;
};

LayerBlocks assemble_layer_blocks(cplx k, const SphereScene& scene, int L, const AssemblyOptions& opts = {});

struct BlockOperatorMatrix {
    cplx omega;
    cplx delta_scale;
    int L = 0;
    int n_resonators = 0;
    CMat entries;
    CMat d_omega;  // empty unless requested

    int half() const { return int(entries.rows()) / 2; }
};

BlockOperatorMatrix assemble_A(cplx omega, const SphereScene& scene, int L, const AssemblyOptions& opts = {},
                               bool with_derivative = false);
BlockOperatorMatrix assemble_A(cplx omega, const LayerAssembler& assembler, bool with_derivative = false);

/// Interior blocks of A (block diagonal): S~ and K~* with k_j = omega / v_j.
void interior_blocks(cplx omega, const SphereScene& scene, int L, CMat& S, CMat& K, CMat* dS = nullptr,
                     CMat* dK = nullptr);

struct DensityPair {
    CVec psi;
    CVec phi;
};

/// Field of the layer ansatz at points off the boundary; exact per-sphere addition theorem.
std::vector<cplx> evaluate_field(const DensityPair& densities, cplx omega, const SphereScene& scene, int L,
                                 const std::vector<Vec3>& points);

/// Galerkin projection row operator for a sphere of the given radius: P(a, n) = R w_n Y_a(n).
RMat projection(const specfun::SphereQuadrature& q, int L, double radius);

}  // namespace resona::bie3d
