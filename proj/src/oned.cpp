#include "resona/oned.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "resona/errors.hpp"

namespace resona::oned {

namespace {

constexpr double kIntTol = 1e-10;

// Distance of x / pi from the nearest integer, and that integer.
std::pair<double, long> pi_multiple(double x) {
    const double y = x / pi;
    const double r = std::round(y);
    return {std::abs(y - r), long(r)};
}

bool in_pi_z(cplx x) { return std::abs(x.imag()) < kIntTol * pi && pi_multiple(x.real()).first < kIntTol; }

}  // namespace

Layout1D Layout1D::from_lengths(const std::vector<double>& lengths, const std::vector<double>& spacings, double speed,
                                double delta, double background_speed, double x0) {
    if (lengths.empty() || spacings.size() + 1 != lengths.size()) {
        throw PreconditionError("need N lengths and N-1 spacings");
    }
    Layout1D out;
    double x = x0;
    for (std::size_t j = 0; j < lengths.size(); ++j) {
        out.left.push_back(x);
        x += lengths[j];
        out.right.push_back(x);
        if (j < spacings.size()) x += spacings[j];
    }
    out.speeds.assign(lengths.size(), speed);
    out.deltas.assign(lengths.size(), delta);
    out.background_speed = background_speed;
    out.validate();
    return out;
}

void Layout1D::validate() const {
    const std::size_t n = left.size();
    if (n == 0) throw PreconditionError("layout has no resonators");
    if (right.size() != n || speeds.size() != n || deltas.size() != n) {
        throw PreconditionError("layout arrays differ in length");
    }
    if (!(background_speed > 0.0)) throw PreconditionError("background speed must be positive");
    for (std::size_t j = 0; j < n; ++j) {
        if (!(right[j] > left[j])) throw PreconditionError(fmt::format("resonator {} has non-positive length", j));
        if (j + 1 < n && !(left[j + 1] > right[j])) {
            throw PreconditionError(fmt::format("spacing {}-{} is not positive", j, j + 1));
        }
        if (!(speeds[j] > 0.0)) throw PreconditionError(fmt::format("resonator {} speed must be positive", j));
    }
}

Layout1D Layout1D::with_delta(double delta) const {
    Layout1D out = *this;
    std::fill(out.deltas.begin(), out.deltas.end(), delta);
    return out;
}

CMat dtn_1d(cplx k, const Layout1D& layout) {
    layout.validate();
    const int N = layout.size();
    CMat T = CMat::Zero(2 * N, 2 * N);
    T(0, 0) = I * k;
    T(2 * N - 1, 2 * N - 1) += I * k;
    for (int i = 0; i + 1 < N; ++i) {
        const double l = layout.spacing(i);
        if (in_pi_z(k * l)) {
            throw PreconditionError(
                fmt::format("exterior DtN singular: k * l = pi Z on spacing {}-{} (l = {})", i, i + 1, l));
        }
        const cplx cot = std::cos(k * l) / std::sin(k * l), csc = 1.0 / std::sin(k * l);
        const int a = 2 * i + 1, b = 2 * i + 2;
        T(a, a) = -k * cot;
        T(a, b) = k * csc;
        T(b, a) = k * csc;
        T(b, b) = -k * cot;
    }
    return T;
}

std::pair<std::vector<int>, std::vector<int>> resonant_set(double omega0, const Layout1D& layout) {
    layout.validate();
    std::vector<int> J, n;
    for (int j = 0; j < layout.size(); ++j) {
        auto [d, m] = pi_multiple(omega0 / layout.speeds[j] * layout.length(j));
        if (d < kIntTol && m >= 1) {
            J.push_back(j);
            n.push_back(int(m));
        }
    }
    return {J, n};
}

CMat capmat_ode(cplx omega, const Layout1D& layout, const std::vector<int>& resonant, const std::vector<int>& n) {
    const int N = layout.size();
    const double v = layout.background_speed;
    const cplx k = omega / v;
    const int m = int(resonant.size());
    auto cot = [&](int i) {
        const double l = layout.spacing(i);
        if (in_pi_z(k * l)) throw PreconditionError(fmt::format("exterior DtN singular on spacing {}-{}", i, i + 1));
        return std::cos(k * l) / std::sin(k * l);
    };
    CMat C = CMat::Zero(m, m);
    for (int a = 0; a < m; ++a) {
        const int j = resonant[a];
        const double pre = layout.deltas[j] * layout.speeds[j] * layout.speeds[j] / (v * layout.length(j));
        const cplx lt = j == 0 ? -I : cot(j - 1);
        const cplx rt = j == N - 1 ? -I : cot(j);
        C(a, a) = pre * (lt + rt);
    }
    for (int a = 0; a + 1 < m; ++a) {
        const int i = resonant[a];
        if (resonant[a + 1] != i + 1) continue;
        const double l = layout.spacing(i);
        const cplx csc = 1.0 / std::sin(k * l);
        const double s = n[a] % 2 == 0 ? 1.0 : -1.0;
        const double root = std::sqrt(layout.length(i) * layout.length(i + 1));
        C(a, a + 1) = -layout.deltas[i] * layout.speeds[i] * layout.speeds[i] / (v * root) * s * csc;
        C(a + 1, a) = -layout.deltas[i + 1] * layout.speeds[i + 1] * layout.speeds[i + 1] / (v * root) * s * csc;
    }
    return C;
}

CapMat1D capmat_1d(double omega0, const Layout1D& layout) {
    auto [J, n] = resonant_set(omega0, layout);
    if (J.empty()) throw PreconditionError(fmt::format("no resonator has a Neumann frequency at omega0 = {}", omega0));
    CapMat1D out;
    out.omega0 = omega0;
    out.resonant = J;
    out.n = n;
    out.C = capmat_ode(omega0, layout, J, n);
    return out;
}

cplx transfer_function(cplx omega, const Layout1D& layout) {
    const cplx k = omega / layout.background_speed;
    cplx u = 1.0, du = -I * k;
    auto propagate = [&](cplx kk, double l) {
        const cplx c = std::cos(kk * l), s = std::sin(kk * l);
        const cplx nu = c * u + s / kk * du;
        du = -kk * s * u + c * du;
        u = nu;
    };
    const int N = layout.size();
    for (int j = 0; j < N; ++j) {
        du *= layout.deltas[j];
        propagate(omega / layout.speeds[j], layout.length(j));
        du /= layout.deltas[j];
        if (j + 1 < N) propagate(k, layout.spacing(j));
    }
    return du - I * k * u;
}

nep::ResonanceSet transfer_resonances(const Layout1D& layout, double delta, const Window& window, int seeds_re,
                                      int seeds_im) {
    if (!(window.re_max > window.re_min) || !(window.im_max >= window.im_min)) {
        throw PreconditionError("empty search window");
    }
    if (!(delta > 0.0)) throw PreconditionError("delta must be positive");
    const Layout1D lay = layout.with_delta(delta);
    lay.validate();
    auto f = [&](cplx z) { return transfer_function(z, lay); };
    const double scale = std::max(window.re_max - window.re_min, window.im_max - window.im_min);
    const double eps = 1e-3 * scale;
    nep::MullerOptions mo{0.0, 1e-15, 100};
    nep::ResonanceSet out;
    std::vector<cplx> found;
    auto deflated = [&](cplx z) {
        cplx val = f(z);
        for (auto r : found) val /= (z - r);
        return val;
    };
    Window grown{window.re_min - 0.05 * scale, window.re_max + 0.05 * scale, window.im_min - 0.05 * scale,
                 window.im_max + 0.05 * scale};
    for (int a = 0; a < seeds_re; ++a) {
        for (int b = 0; b < seeds_im; ++b) {
            const double x = window.re_min + (a + 0.5) * (window.re_max - window.re_min) / seeds_re;
            const double y = window.im_min + (b + 0.5) * (window.im_max - window.im_min) / seeds_im;
            const cplx s(x, y);
            nep::MullerResult res;
            try {
                res = nep::muller_root(deflated, s - eps, s + eps, s + I * eps, mo);
            } catch (const Error&) {
                continue;
            }
            if (!res.converged || !grown.contains(res.root)) continue;
            const cplx z = res.root;
            // polish on the undeflated function
            nep::MullerResult pol = nep::muller_root(f, z * (1.0 - 1e-9), z * (1.0 + 1e-9), z, mo);
            const cplx root = pol.converged && std::abs(pol.root - z) < 1e-6 * scale ? pol.root : z;
            bool dup = false;
            for (auto r : found) dup = dup || std::abs(r - root) < 1e-9 * std::max(1.0, std::abs(root));
            if (dup) continue;
            found.push_back(root);
            if (!window.contains(root)) continue;
            out.values.push_back(root);
            out.multiplicity.push_back(1);
            out.residual_norms.push_back(std::abs(f(root)));
            out.iterations.push_back(res.iterations + pol.iterations);
        }
    }
    std::vector<std::size_t> idx(out.values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return out.values[a].real() < out.values[b].real(); });
    nep::ResonanceSet sorted;
    for (auto i : idx) {
        sorted.values.push_back(out.values[i]);
        sorted.multiplicity.push_back(1);
        sorted.residual_norms.push_back(out.residual_norms[i]);
        sorted.iterations.push_back(out.iterations[i]);
    }
    return sorted;
}

FPBlock fp_block(double k0, const Layout1D& layout, int p, int q, const std::vector<int>& n,
                 const std::vector<int>& m) {
    layout.validate();
    const int N = layout.size();
    if (!(0 <= p && p < q && q < N)) {
        throw PreconditionError(fmt::format("resonant run needs 0 <= p < q < N, got p = {}, q = {}", p, q));
    }
    if (int(n.size()) != q - p + 1 || int(m.size()) != q - p) {
        throw PreconditionError("run needs q-p+1 mode numbers n and q-p spacing numbers m");
    }
    const double v = layout.background_speed, vb = layout.speeds[p];
    for (int i = p; i <= q; ++i) {
        if (std::abs(layout.speeds[i] - vb) > 1e-14 * vb || layout.deltas[i] != layout.deltas[p]) {
            throw PreconditionError("resonators of a run must share speed and contrast");
        }
    }
    FPBlock B;
    B.p = p;
    B.q = q;
    B.n = n;
    B.m = m;
    B.r = v / vb;
    const double kb = k0 * B.r;
    for (int i = p; i <= q; ++i) {
        const double target = n[i - p] * pi;
        if (n[i - p] < 1 || std::abs(kb * layout.length(i) - target) > kIntTol * std::max(1.0, target)) {
            throw PreconditionError(fmt::format("resonator {} is not at Neumann mode n = {}", i, n[i - p]));
        }
    }
    for (int i = p; i < q; ++i) {
        const double target = m[i - p] * pi;
        if (std::abs(k0 * layout.spacing(i) - target) > kIntTol * std::max(1.0, std::abs(target))) {
            throw PreconditionError(fmt::format("spacing {}-{} is not at Dirichlet index m = {}", i, i + 1, m[i - p]));
        }
    }
    if (p > 0 && in_pi_z(k0 * layout.spacing(p - 1))) {
        throw PreconditionError(fmt::format("run not maximal: spacing {}-{} is also resonant", p - 1, p));
    }
    if (q < N - 1 && in_pi_z(k0 * layout.spacing(q))) {
        throw PreconditionError(fmt::format("run not maximal: spacing {}-{} is also resonant", q, q + 1));
    }
    const int s = q - p + 1;
    B.Csym = RMat::Zero(s, s);
    for (int a = 0; a + 1 < s; ++a) {
        const int i = p + a;
        const double l = layout.spacing(i), li = layout.length(i), lj = layout.length(i + 1);
        B.Csym(a, a) += 1.0 / (B.r * li * l);
        B.Csym(a + 1, a + 1) += 1.0 / (B.r * lj * l);
        B.Csym(a, a + 1) = B.Csym(a + 1, a) = -1.0 / (B.r * l * std::sqrt(li * lj));
    }
    B.tau = RVec::Ones(s);
    for (int a = 0; a + 1 < s; ++a) B.tau(a + 1) = B.tau(a) * ((n[a] + m[a]) % 2 == 0 ? 1.0 : -1.0);
    for (int j = 0; j < N; ++j) {
        B.t.push_back(B.r * layout.length(j));
        if (j + 1 < N) B.t.push_back(layout.spacing(j));
    }
    for (std::size_t j = 0; j + 1 < B.t.size(); ++j) {
        const bool a = in_pi_z(k0 * B.t[j]), b = in_pi_z(k0 * B.t[j + 1]);
        B.theta.push_back(a && b ? 1.0 / (B.t[j] * B.t[j + 1]) : 0.0);
    }
    return B;
}

std::pair<double, double> splitting_prediction(double lambda, double delta, double v, double r) {
    if (!(lambda > 0.0)) throw PreconditionError("splitting needs a positive eigenvalue");
    if (!(delta > 0.0) || !(v > 0.0) || !(r > 0.0)) throw PreconditionError("delta, v and r must be positive");
    const double s = v * std::sqrt(lambda / r) * std::sqrt(delta);
    return {s, -s};
}

ResidueExtraction residue_extraction_1d(double omega0, const Layout1D& layout, const FPBlock& block, double h) {
    std::vector<int> run;
    for (int i = block.p; i <= block.q; ++i) run.push_back(i);
    auto R = [&](double s) -> CMat { return s * capmat_ode(omega0 + s, layout, run, block.n); };
    const CMat r0 = R(h), r1 = R(h / 2), r2 = R(h / 4);
    const CMat a0 = 2.0 * r1 - r0, a1 = 2.0 * r2 - r1;
    ResidueExtraction out;
    out.numerical = (4.0 * a1 - a0) / 3.0;
    const double v = layout.background_speed, vb = layout.speeds[block.p];
    out.formula = layout.deltas[block.p] * v * vb * block.sigma() * block.Csym * block.sigma();
    const double fn = out.formula.norm();
    if (!(fn > 0.0)) throw PreconditionError("formula residue vanishes");
    out.rel_error = (out.numerical - out.formula.cast<cplx>()).norm() / fn;
    if (!std::isfinite(out.rel_error)) throw ConvergenceError("residue extrapolation produced non-finite values");
    return out;
}

}  // namespace resona::oned
