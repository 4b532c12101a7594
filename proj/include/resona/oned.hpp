#pragma once

#include <utility>
#include <vector>

#include "resona/nep.hpp"
#include "resona/types.hpp"

namespace resona::oned {

struct Layout1D {
    std::vector<double> left;    // x_j^-
    std::vector<double> right;   // x_j^+
    std::vector<double> speeds;  // v_j
    std::vector<double> deltas;  // delta_j
    double background_speed = 1.0;

    static Layout1D from_lengths(const std::vector<double>& lengths, const std::vector<double>& spacings,
                                 double speed, double delta, double background_speed, double x0 = 0.0);

    int size() const { return int(left.size()); }
    double length(int j) const { return right[j] - left[j]; }
    /// Spacing between resonators j and j+1.
    double spacing(int j) const { return left[j + 1] - right[j]; }
    void validate() const;
    Layout1D with_delta(double delta) const;
};

/// Exterior DtN matrix on (f_1^-, f_1^+, ..., f_N^+).
CMat dtn_1d(cplx k, const Layout1D& layout);

struct CapMat1D {
    double omega0 = 0.0;
    std::vector<int> resonant;  // indices j in J
    std::vector<int> n;         // k_{j,0} l_j = n_j pi
    CMat C;
};

/// Resonators whose interior wavenumber satisfies k_{j,0} l_j in pi N (within 1e-10).
std::pair<std::vector<int>, std::vector<int>> resonant_set(double omega0, const Layout1D& layout);

/// Nearest-neighbour capacitance matrix at omega0 over the resonant set.
CapMat1D capmat_1d(double omega0, const Layout1D& layout);

/// Same entries evaluated at an arbitrary omega for fixed resonators and mode numbers.
CMat capmat_ode(cplx omega, const Layout1D& layout, const std::vector<int>& resonant, const std::vector<int>& n);

struct Window {
    double re_min, re_max, im_min, im_max;
    bool contains(cplx z) const {
        return z.real() >= re_min && z.real() <= re_max && z.imag() >= im_min && z.imag() <= im_max;
    }
};

/// Transfer-matrix residual at the right end: u' - i k u after outgoing start (1, -i k) at x_1^-.
cplx transfer_function(cplx omega, const Layout1D& layout);

/// Roots of transfer_function inside the window, by grid-seeded Muller with deflation.
nep::ResonanceSet transfer_resonances(const Layout1D& layout, double delta, const Window& window, int seeds_re = 6,
                                      int seeds_im = 3);

struct FPBlock {
    int p = 0, q = 0;
    std::vector<int> n;  // p..q
    std::vector<int> m;  // p..q-1
    double r = 1.0;
    RMat Csym;
    RVec tau;
    std::vector<double> t;      // (r l_1, l_12, r l_2, ...)
    std::vector<double> theta;  // 1 / (t_j(k0) t_{j+1}(k0)); stored only

    RMat sigma() const { return tau.asDiagonal(); }
};

/// Fabry-Perot block for the resonant run p..q (0-based, inclusive).
FPBlock fp_block(double k0, const Layout1D& layout, int p, int q, const std::vector<int>& n,
                 const std::vector<int>& m);

/// Offsets +v sqrt(lambda / r) delta^{1/2} and its negative.
std::pair<double, double> splitting_prediction(double lambda, double delta, double v, double r);

struct ResidueExtraction {
    CMat numerical;
    RMat formula;
    double rel_error = 0.0;
};

/// lim (omega - omega0) C_*^ODE(omega) by Richardson extrapolation, against delta v v_b Sigma C_sym Sigma.
ResidueExtraction residue_extraction_1d(double omega0, const Layout1D& layout, const FPBlock& block,
                                        double h = 1e-3);

}  // namespace resona::oned
