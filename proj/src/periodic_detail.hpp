#pragma once

#include <vector>

#include "resona/periodic.hpp"

namespace resona::periodic::detail {

inline constexpr int kTerms = 40;
inline constexpr double kSeriesSwitch = 1.5;  // rE below which the small-r series is used
inline constexpr double kRealCut = 6.2;       // real-space cutoff in units of 1/E
inline constexpr int kChebDeg = 16;

/// k^{2n} coefficient of the real-space image term and of its r-derivative divided by r.
double image_coeff(int n, double r, double E);
double image_coeff_dr(int n, double r, double E);
/// k^{2n} coefficient of the small-r regular series D(r) and of D'(r) / r.
double series_coeff(int n, double r, double E);
double series_coeff_dr(int n, double r, double E);

/// Real-space image term s(r) and s'(r) / r by direct summation.
void image_direct(cplx k, double r, double E, cplx& s, cplx& t);
/// m = 0 regular part c(r) = s(r) - e^{ikr} / (4 pi r) and c'(r) / r by direct summation.
void self_direct(cplx k, double r, double E, cplx& c, cplx& u);

double real_cutoff(double E);
double spectral_cutoff(double E, cplx k);

/// Lattice vectors m = l n with |d0 - m| < radius.
std::vector<Vec3> lattice_points_near(const Lattice3D& lat, const Vec3& d0, double radius);
/// Shifted dual vectors p = q + alpha with |p| < radius.
std::vector<Vec3> dual_points_within(const Lattice3D& lat, const Vec3& alpha, double radius);

/// Piecewise Chebyshev tables of the real-space terms; k enters only through bind().
class Tables {
public:
    Tables(double E, double image_lo, double image_hi, double self_hi);

    struct Bound {
        const Tables* t = nullptr;
        cplx k;
        std::vector<cplx> img_s, img_t, self_c, self_u;  // Chebyshev coefficients per panel

        /// Image term; zero beyond the real-space cutoff.
        void image(double r, cplx& s, cplx& tt) const;
        /// m = 0 regular part for any r >= 0.
        void self(double r, cplx& c, cplx& u) const;
    };
    Bound bind(cplx k) const;

    double E() const { return E_; }
    double image_lo() const { return img_edges_.front(); }

private:
    friend struct Bound;
    double E_;
    double rcut_;
    std::vector<double> img_edges_, self_edges_;
    RMat img_s_, img_t_, self_c_, self_u_;  // kTerms x (panels * deg)
    std::vector<char> self_series_;        // per self node
    std::vector<double> self_nodes_;
    RMat dct_;                             // deg x deg node values -> coefficients
};

}  // namespace resona::periodic::detail
