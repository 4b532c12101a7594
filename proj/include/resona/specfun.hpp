#pragma once

#include <vector>

#include "resona/types.hpp"

namespace resona::specfun {

enum class BesselKind { j, y, h1 };

struct BesselValue {
    cplx value;
    cplx derivative;
};

/// Spherical Bessel/Hankel function of the given kind and its derivative.
BesselValue sph_bessel(BesselKind kind, int ell, cplx z);

/// Values and derivatives for all degrees 0..lmax; f and df are resized to lmax+1.
void sph_bessel_all(BesselKind kind, int lmax, cplx z, std::vector<cplx>& f, std::vector<cplx>& df);

/// Second derivative from the spherical Bessel equation.
cplx sph_bessel_second(int ell, cplx z, cplx f, cplx df);

/// n-th positive zero of j_ell' (n >= 1). The trivial zero of j_0' at the origin is excluded.
double jprime_zero(int ell, int n);

/// All positive zeros of j_ell' below xmax, ascending.
std::vector<double> jprime_zeros_below(int ell, double xmax);

struct NeumannFrequency {
    int ell;
    int n;
    double beta;
    double omega;
    int multiplicity;
};

/// Neumann eigenfrequencies beta_{ell,n}/R for 0 <= ell <= ell_max, 1 <= n <= n_max, sorted by omega.
std::vector<NeumannFrequency> neumann_ball_spectrum(double radius, int ell_max, int n_max);

struct HarmonicIndex {
    int ell = 0;
    int m = 0;

    int flat() const { return ell * ell + ell + m; }
    static HarmonicIndex from_flat(int k);
    bool valid() const { return ell >= 0 && m >= -ell && m <= ell; }
};

/// Real orthonormal spherical harmonic, no Condon-Shortley phase.
/// m > 0 uses cos(m phi), m < 0 uses sin(|m| phi).
double sph_harmonic(HarmonicIndex idx, double theta, double phi);

/// All L^2 harmonics with ell < L at (theta, phi), in flat order.
void sph_harmonics_all(int L, double theta, double phi, double* out);

struct SphereQuadrature {
    int exactness = 0;
    std::vector<double> theta;
    std::vector<double> phi;
    std::vector<double> weight;
    std::vector<Vec3> unit;

    std::size_t size() const { return weight.size(); }
    /// Matrix of harmonics: rows are nodes, columns flat indices with ell < L.
    RMat harmonics(int L) const;
};

/// Gauss-Legendre in cos(theta) times uniform in phi; exact for polynomials of degree <= exactness.
SphereQuadrature sphere_quadrature(int exactness_degree);

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w);

}  // namespace resona::specfun
