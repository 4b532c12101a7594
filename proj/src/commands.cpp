#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ranges.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

#include "resona/capmat.hpp"
#include "resona/cli.hpp"
#include "resona/errors.hpp"
#include "resona/nep.hpp"

namespace resona::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string cell_text(double x) { return fmt::format("{:.17g}", x); }
std::string cell_text(int x) { return std::to_string(x); }
std::string cell_text(std::size_t x) { return std::to_string(x); }
std::string cell_text(bool x) { return x ? "1" : "0"; }
std::string cell_text(const std::string& x) { return x; }

class Csv {
public:
    Csv(const fs::path& path, const std::string& digest, const std::string& header) : out_(path) {
        if (!out_) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
        out_ << "# config_digest=" << digest << '\n' << header << '\n';
    }

    template <class... T>
    void row(const T&... v) {
        std::string line;
        ((line += cell_text(v), line += ','), ...);
        line.pop_back();
        out_ << line << '\n';
    }

private:
    std::ofstream out_;
};

json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json fit_json(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2) return nullptr;
    const auto f = capmat::log_log_fit(x, y);
    return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
}

/// Runs f(i) for i in [0, n) on the TBB pool; callers write results into slot i only.
template <class F>
void for_each_index(std::size_t n, F&& f) {
    tbb::parallel_for(std::size_t(0), n, [&](std::size_t i) { f(i); });
}

cplx nearest(const std::vector<cplx>& values, cplx z) {
    if (values.empty()) throw ConvergenceError("oracle found no roots in the search window");
    return *std::min_element(values.begin(), values.end(),
                             [&](cplx a, cplx b) { return std::abs(a - z) < std::abs(b - z); });
}

struct Context {
    const RunConfig& cfg;
    int threads;
    std::vector<std::string> files;
    json summary;

    fs::path path(const std::string& name) {
        files.push_back(name);
        return cfg.out_dir / name;
    }
    Csv csv(const std::string& header) { return Csv(path(cfg.experiment + ".csv"), cfg.digest, header); }
};

nep::ClusterOptions cluster_options(const RunConfig& cfg) {
    nep::ClusterOptions o;
    o.radius = number(cfg, "cluster_radius", 0.0);
    if (cfg.doc.contains("tolerances")) o.nullity_tol = cfg.doc["tolerances"].value("nullity", o.nullity_tol);
    return o;
}

double rank_tol(const RunConfig& cfg) {
    return cfg.doc.contains("tolerances") ? cfg.doc["tolerances"].value("rank", 1e-8) : 1e-8;
}

void scan_det(Context& c) {
    const auto scene = scene_of(c.cfg).with_delta(number(c.cfg, "delta", 0.0));
    const int L = integer(c.cfg, "L", 0);
    const auto& w = c.cfg.doc["omega_window"];
    const int n = w["points"].get<int>();
    const double lo = w["min"].get<double>(), hi = w["max"].get<double>(), im = w.value("imag", 0.0);
    std::vector<cplx> grid(n);
    for (int i = 0; i < n; ++i) grid[i] = cplx(lo + (hi - lo) * i / (n - 1), im);

    // the second scan divides out det S^k, whose zeros at exterior Dirichlet frequencies are not resonances
    std::vector<nep::ScanPoint> pts(n), norm(n);
    const nep::MatrixBuilder build = [&](cplx z) { return bie3d::assemble_A(z, scene, L).entries; };
    const nep::MatrixBuilder single = [&](cplx z) {
        return bie3d::assemble_layer_blocks(z / scene.background_speed, scene, L).single_layer;
    };
    for_each_index(n, [&](std::size_t i) {
        pts[i] = nep::det_scan(build, {grid[i]})[0];
        norm[i] = pts[i];
        if (pts[i].ok) {
            const auto s = nep::det_scan(single, {grid[i]})[0];
            norm[i].ok = s.ok;
            norm[i].error = s.error;
            norm[i].log_abs_det = pts[i].log_abs_det - s.log_abs_det;
        }
    });

    auto csv = c.csv("omega_re,omega_im,log_abs_det,log_abs_det_normalized,ok");
    for (int i = 0; i < n; ++i) {
        csv.row(grid[i].real(), grid[i].imag(), pts[i].log_abs_det, norm[i].log_abs_det, norm[i].ok);
    }
    json minima = json::array(), raw = json::array(), failures = json::array();
    for (auto i : nep::scan_minima(norm)) {
        minima.push_back({{"omega", complex_json(grid[i])}, {"log_abs_det_normalized", norm[i].log_abs_det}});
    }
    for (auto i : nep::scan_minima(pts)) {
        raw.push_back({{"omega", complex_json(grid[i])}, {"log_abs_det", pts[i].log_abs_det}});
    }
    for (const auto& p : norm) {
        if (!p.ok) failures.push_back({{"omega", complex_json(p.omega)}, {"error", p.error}});
    }
    c.summary["raw_minima"] = raw;
    c.summary["minima"] = minima;
    c.summary["failures"] = failures;
}

void cluster(Context& c) {
    const double delta = number(c.cfg, "delta", 0.0), w0 = number(c.cfg, "omega0", 0.0);
    const auto scene = scene_of(c.cfg).with_delta(delta);
    const auto r = nep::find_resonance_cluster(w0, delta, scene, integer(c.cfg, "L", 0), cluster_options(c.cfg));
    auto csv = c.csv("omega_re,omega_im,multiplicity,residual,iterations");
    for (std::size_t i = 0; i < r.values.size(); ++i) {
        csv.row(r.values[i].real(), r.values[i].imag(), r.multiplicity[i], r.residual_norms[i], r.iterations[i]);
    }
    c.summary["total_count"] = r.total_count();
    c.summary["warnings"] = r.warnings;
}

void capmat_cmd(Context& c) {
    const double w0 = number(c.cfg, "omega0", 0.0);
    const auto scene = scene_of(c.cfg).with_delta(number(c.cfg, "delta", 0.0));
    const auto C = capmat::capacitance_matrix(w0, scene, integer(c.cfg, "L", 0));
    const auto lead = capmat::leading_resonances(C, rank_tol(c.cfg));
    auto csv = c.csv("matrix,row,col,re,im");
    for (const auto& [name, M] : {std::pair<std::string, const CMat*>{"C", &C.C}, {"SC", &C.scrC}}) {
        for (Eigen::Index i = 0; i < M->rows(); ++i) {
            for (Eigen::Index j = 0; j < M->cols(); ++j) {
                csv.row(name, int(i), int(j), (*M)(i, j).real(), (*M)(i, j).imag());
            }
        }
    }
    json modes = json::array(), eig = json::array(), freq = json::array();
    for (const auto& m : C.modes.modes) {
        modes.push_back({{"resonator", m.resonator}, {"ell", m.ell}, {"m", m.m}, {"n", m.n}});
    }
    for (Eigen::Index i = 0; i < lead.eigenvalues.size(); ++i) eig.push_back(complex_json(lead.eigenvalues(i)));
    for (auto f : lead.frequencies) freq.push_back(complex_json(f));
    c.summary["symmetry_defect"] = C.symmetry_defect();
    c.summary["modes"] = modes;
    c.summary["eigenvalues"] = eig;
    c.summary["frequencies"] = freq;
    c.summary["jordan_q"] = lead.jordan_q;
    c.summary["warnings"] = C.warnings;
}

void converge(Context& c) {
    const double w0 = number(c.cfg, "omega0", 0.0);
    const int L = integer(c.cfg, "L", 0);
    const auto scene = scene_of(c.cfg);
    const auto deltas = numbers(c.cfg, "deltas");
    const auto opts = cluster_options(c.cfg);
    const double rt = rank_tol(c.cfg);
    struct Row {
        double dist;
        int n_lead, n_exact;
    };
    std::vector<Row> rows(deltas.size());
    for_each_index(deltas.size(), [&](std::size_t i) {
        const auto s = scene.with_delta(deltas[i]);
        const auto lead = capmat::leading_resonances(capmat::capacitance_matrix(w0, s, L), rt);
        const auto exact = nep::find_resonance_cluster(w0, deltas[i], s, L, opts).expanded();
        rows[i] = {nep::hausdorff(lead.frequencies, exact), int(lead.frequencies.size()), int(exact.size())};
    });
    auto csv = c.csv("delta,hausdorff,n_predicted,n_exact");
    std::vector<double> dist;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        csv.row(deltas[i], rows[i].dist, rows[i].n_lead, rows[i].n_exact);
        dist.push_back(rows[i].dist);
    }
    c.summary["fit"] = fit_json(deltas, dist);
}

void oned_regular(Context& c) {
    const double w0 = number(c.cfg, "omega0", 0.0);
    const auto layout = layout_of(c.cfg);
    const auto deltas = numbers(c.cfg, "deltas");
    struct Row {
        cplx oracle, pred;
    };
    std::vector<std::vector<Row>> rows(deltas.size());
    for_each_index(deltas.size(), [&](std::size_t i) {
        const double d = deltas[i];
        const auto lay = layout.with_delta(d);
        const auto C = oned::capmat_1d(w0, lay);
        Eigen::ComplexEigenSolver<CMat> es(C.C);
        std::vector<cplx> pred;
        for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) pred.push_back(w0 + es.eigenvalues()(j));
        std::sort(pred.begin(), pred.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
        const double s = std::max(50.0 * d, 3.0 * C.C.norm());
        const auto roots = oned::transfer_resonances(lay, d, {w0 - s, w0 + s, -s, 0.1 * s});
        for (auto p : pred) rows[i].push_back({nearest(roots.values, p), p});
    });
    auto csv = c.csv("delta,mode,omega_oracle_re,omega_oracle_im,omega_pred_re,omega_pred_im,residual");
    std::vector<double> worst;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        double e = 0.0;
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            const auto& r = rows[i][j];
            const double res = std::abs(r.oracle - r.pred);
            e = std::max(e, res);
            csv.row(deltas[i], j, r.oracle.real(), r.oracle.imag(), r.pred.real(), r.pred.imag(), res);
        }
        worst.push_back(e);
    }
    c.summary["fit"] = fit_json(deltas, worst);
}

oned::FPBlock block_for(const RunConfig& cfg, const oned::Layout1D& lay, double w0) {
    const auto b = block_of(cfg);
    return oned::fp_block(w0 / lay.background_speed, lay, b.p, b.q, b.n, b.m);
}

void oned_singular(Context& c) {
    const double w0 = number(c.cfg, "omega0", 0.0);
    const auto layout = layout_of(c.cfg);
    const auto deltas = numbers(c.cfg, "deltas");
    const auto B = block_for(c.cfg, layout, w0);
    Eigen::SelfAdjointEigenSolver<RMat> es(B.Csym);
    std::vector<double> lams;
    for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
        if (es.eigenvalues()(j) > 1e-12 * es.eigenvalues().cwiseAbs().maxCoeff()) lams.push_back(es.eigenvalues()(j));
    }
    if (lams.empty()) throw PreconditionError("Fabry-Perot block has no positive eigenvalue");
    const double v = layout.background_speed;

    struct Row {
        double lam, sp, sm;
        cplx op, om;
    };
    std::vector<std::vector<Row>> rows(deltas.size());
    for_each_index(deltas.size(), [&](std::size_t i) {
        const double d = deltas[i];
        const auto lay = layout.with_delta(d);
        double smax = 0.0;
        for (double l : lams) smax = std::max(smax, oned::splitting_prediction(l, d, v, B.r).first);
        const auto roots = oned::transfer_resonances(lay, d, {w0 - 3 * smax, w0 + 3 * smax, -2 * smax, 0.2 * smax});
        for (double l : lams) {
            const auto [sp, sm] = oned::splitting_prediction(l, d, v, B.r);
            rows[i].push_back({l, sp, sm, nearest(roots.values, w0 + sp), nearest(roots.values, w0 + sm)});
        }
    });
    auto csv = c.csv(
        "delta,lambda,pred_plus,pred_minus,oracle_plus_re,oracle_plus_im,oracle_minus_re,oracle_minus_im,residual,"
        "relative_error");
    std::vector<double> worst;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        double e = 0.0;
        for (const auto& r : rows[i]) {
            const double res = std::abs(0.5 * (r.op - r.om) - r.sp);
            e = std::max(e, res);
            csv.row(deltas[i], r.lam, w0 + r.sp, w0 + r.sm, r.op.real(), r.op.imag(), r.om.real(), r.om.imag(), res,
                    res / r.sp);
        }
        worst.push_back(e);
    }
    c.summary["r"] = B.r;
    c.summary["lambda"] = lams;
    c.summary["fit"] = fit_json(deltas, worst);
}

void oned_residue(Context& c) {
    const double w0 = number(c.cfg, "omega0", 0.0);
    const auto lay = layout_of(c.cfg).with_delta(number(c.cfg, "delta", 0.0));
    const auto B = block_for(c.cfg, lay, w0);
    const auto r = oned::residue_extraction_1d(w0, lay, B, number(c.cfg, "h", 1e-3));
    auto csv = c.csv("row,col,numerical_re,numerical_im,formula");
    for (Eigen::Index i = 0; i < r.numerical.rows(); ++i) {
        for (Eigen::Index j = 0; j < r.numerical.cols(); ++j) {
            csv.row(int(i), int(j), r.numerical(i, j).real(), r.numerical(i, j).imag(), r.formula(i, j));
        }
    }
    c.summary["rel_error"] = r.rel_error;
}

std::vector<Vec3> alphas_of(const RunConfig& cfg, const periodic::Lattice3D& lat) {
    if (cfg.doc.contains("alpha_grid")) return periodic::brillouin_grid(lat, cfg.doc["alpha_grid"].get<int>());
    std::vector<Vec3> out;
    for (const auto& a : cfg.doc["alphas"]) out.push_back(vec3(a));
    return out;
}

void bands(Context& c) {
    const auto cell = cell_of(c.cfg);
    const int L = integer(c.cfg, "L", 0);
    const double w0 = number(c.cfg, "omega0", 0.0), delta = number(c.cfg, "delta", 0.0);
    const auto alphas = alphas_of(c.cfg, cell.ctx.lattice);
    // the assembler caches per-alpha data, so each worker owns one over a contiguous chunk
    const std::size_t chunks = std::min<std::size_t>(std::max(c.threads, 1), alphas.size());
    std::vector<periodic::BandSweep> parts(chunks);
    for_each_index(chunks, [&](std::size_t k) {
        const std::size_t b = alphas.size() * k / chunks, e = alphas.size() * (k + 1) / chunks;
        const periodic::QPAssembler A(cell.scene, L, cell.ctx);
        parts[k] = periodic::band_sweep(A, {alphas.begin() + b, alphas.begin() + e}, w0, delta);
    });
    auto csv = c.csv("alpha_x,alpha_y,alpha_z,band,lambda,omega");
    double defect = 0.0;
    std::vector<std::string> warnings;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < p.alphas.size(); ++r) {
            for (Eigen::Index j = 0; j < p.lambda.cols(); ++j) {
                csv.row(p.alphas[r](0), p.alphas[r](1), p.alphas[r](2), int(j), p.lambda(r, j), p.omega(r, j));
            }
        }
        defect = std::max(defect, p.max_hermiticity_defect);
        warnings.insert(warnings.end(), p.warnings.begin(), p.warnings.end());
    }
    c.summary["alpha_count"] = alphas.size();
    c.summary["max_hermiticity_defect"] = defect;
    c.summary["warnings"] = warnings;
}

void bandgap(Context& c) {
    const auto cell = cell_of(c.cfg);
    const periodic::QPAssembler A(cell.scene, integer(c.cfg, "L", 0), cell.ctx);
    const auto r = periodic::bandgap_report(A, integer(c.cfg, "J", 2), numbers(c.cfg, "deltas"),
                                            integer(c.cfg, "alpha_grid", 1));
    auto csv = c.csv("delta,branch,ell,n,omega,sup,inf,separated");
    for (std::size_t d = 0; d < r.deltas.size(); ++d) {
        for (std::size_t b = 0; b < r.branches.size(); ++b) {
            const auto& br = r.branches[b];
            csv.row(r.deltas[d], b, br.ell, br.n, br.omega, r.sup[d][b], r.inf[d][b], bool(r.separated[d]));
        }
    }
    json branches = json::array();
    for (const auto& b : r.branches) {
        branches.push_back({{"ell", b.ell}, {"n", b.n}, {"omega", b.omega}, {"c_min", b.c_min}, {"c_max", b.c_max}});
    }
    c.summary["branches"] = branches;
    c.summary["gamma"] = r.gamma;
    c.summary["M"] = r.M;
    c.summary["threshold"] = finite_or_null(r.threshold);
    c.summary["threshold_finite"] = bool(std::isfinite(r.threshold));
    c.summary["conservative_threshold"] = r.conservative;
    c.summary["separated"] = std::vector<bool>(r.separated.begin(), r.separated.end());
    c.summary["warnings"] = r.warnings;
}

void case2_residue(Context& c) {
    auto cell = cell_of(c.cfg);
    const int L = integer(c.cfg, "L", 0);
    const double w0 = number(c.cfg, "omega0", 0.0);
    const Vec3 alpha = c.cfg.doc.contains("alpha") ? vec3(c.cfg.doc["alpha"]) : Vec3::Zero();
    const auto kr = numbers(c.cfg, "k_range");
    const periodic::QPAssembler A(cell.scene, L, cell.ctx);
    const auto mode = periodic::exterior_dirichlet_mode(A, alpha, kr[0], kr[1], integer(c.cfg, "scan_points", 30));
    // exterior speed tuned so that the Dirichlet wavenumber sits at omega0
    cell.scene.background_speed = w0 / mode.k;
    const periodic::QPAssembler A2(cell.scene, L, cell.ctx);
    const auto r = periodic::qp_residue_connection(A2, alpha, w0, mode, number(c.cfg, "h", 1e-3));
    auto csv = c.csv("row,col,numerical_re,numerical_im,formula_re,formula_im");
    for (Eigen::Index i = 0; i < r.numerical.rows(); ++i) {
        for (Eigen::Index j = 0; j < r.numerical.cols(); ++j) {
            csv.row(int(i), int(j), r.numerical(i, j).real(), r.numerical(i, j).imag(), r.formula(i, j).real(),
                    r.formula(i, j).imag());
        }
    }
    c.summary["k_dirichlet"] = mode.k;
    c.summary["background_speed"] = cell.scene.background_speed;
    c.summary["rel_error"] = r.rel_error;
}

void honeycomb(Context& c) {
    const auto cell = cell_of(c.cfg);
    periodic::check_honeycomb_cell(cell.scene, cell.ctx.lattice);
    const Vec3 dir = c.cfg.doc.contains("direction") ? vec3(c.cfg.doc["direction"]).normalized() : Vec3::UnitX();
    const periodic::QPAssembler A(cell.scene, integer(c.cfg, "L", 0), cell.ctx);
    const auto h = periodic::honeycomb_cone(A, number(c.cfg, "omega0", 0.0), numbers(c.cfg, "xi_fractions"), dir);
    auto csv = c.csv("xi,lambda_minus,lambda_plus,splitting");
    for (std::size_t i = 0; i < h.xi.size(); ++i) {
        csv.row(h.xi[i], h.lambda_minus[i], h.lambda_plus[i], h.lambda_plus[i] - h.lambda_minus[i]);
    }
    c.summary["c_K"] = h.c_K;
    c.summary["v_K"] = h.v_K;
    c.summary["degeneracy_defect"] = h.degeneracy_defect;
    c.summary["fit_r2"] = h.fit_r2;
    c.summary["fit_slope"] = h.fit_slope;
    c.summary["trace_residual"] = h.trace_residual;
}

void c_infinity(Context& c) {
    const int ell = integer(c.cfg, "ell", 1), n = integer(c.cfg, "n", 1), L = integer(c.cfg, "L", 0);
    const double vb = number(c.cfg, "vb", 1.0);
    const bool simple = c.cfg.doc.value("require_simple", true);
    const auto radii = numbers(c.cfg, "radii");
    std::vector<cplx> a(radii.size()), b(radii.size());
    for_each_index(radii.size(), [&](std::size_t i) {
        a[i] = periodic::c_infinity(ell, n, radii[i], vb, simple);
        b[i] = periodic::c_infinity_assembled(ell, n, radii[i], vb, L);
    });
    auto csv = c.csv("r,analytic_re,analytic_im,assembled_re,assembled_im,abs_diff");
    double rel = 0.0;
    bool positive = true;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        csv.row(radii[i], a[i].real(), a[i].imag(), b[i].real(), b[i].imag(), std::abs(a[i] - b[i]));
        rel = std::max(rel, std::abs(a[i] - b[i]) / std::abs(a[i]));
        positive = positive && a[i].imag() > 0.0;
    }
    c.summary["max_rel_diff"] = rel;
    c.summary["imag_positive"] = positive;
}

const std::map<std::string, void (*)(Context&)>& handlers() {
    static const std::map<std::string, void (*)(Context&)> h{
        {"scan-det", scan_det},         {"cluster", cluster},         {"capmat", capmat_cmd},
        {"converge", converge},         {"oned-regular", oned_regular}, {"oned-singular", oned_singular},
        {"oned-residue", oned_residue}, {"bands", bands},             {"bandgap", bandgap},
        {"case2-residue", case2_residue}, {"honeycomb", honeycomb},   {"c-infinity", c_infinity},
    };
    return h;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError(fmt::format("cannot write '{}'", p.string()));
    out << text;
}

json error_json(const std::string& kind, const std::string& message, int code, const std::string& command,
                const std::string& digest) {
    json e{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}, {"command", command}};
    if (!digest.empty()) e["config_digest"] = digest;
    return e;
}

}  // namespace

void run_command(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (!fs::is_directory(cfg.out_dir)) throw ConfigError(fmt::format("cannot create '{}'", cfg.out_dir.string()));

    Context c{cfg, cfg.threads, {}, json::object()};
    handlers().at(cfg.experiment)(c);

    json summary{{"experiment", cfg.experiment}, {"config_digest", cfg.digest}, {"results", c.summary}};
    write_text(c.path(cfg.experiment + ".json"), summary.dump(2) + "\n");
    write_text(c.path("config.json"), cfg.doc.dump());
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json manifest{{"experiment", cfg.experiment}, {"config_digest", cfg.digest}, {"version", kVersion},
                  {"threads", cfg.threads},       {"seed", cfg.seed},             {"wall_clock_s", wall},
                  {"files", c.files}};
    write_text(cfg.out_dir / "manifest.json", manifest.dump(2) + "\n");
}

int main(int argc, char** argv) {
    CLI::App app{"Subwavelength and Fabry-Perot resonance experiments"};
    app.set_version_flag("--version", kVersion);
    std::string command, config, out;
    int threads = 0;
    app.add_option("command", command, "Experiment: " + fmt::format("{}", fmt::join(command_names(), ", ")))
        ->required();
    app.add_option("--config", config, "JSON config file")->required();
    app.add_option("--out", out, "Output directory");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

    std::string digest;
    fs::path out_dir = out;
    auto fail = [&](const std::string& kind, const std::string& msg, int code) {
        const json e = error_json(kind, msg, code, command, digest);
        std::cerr << e.dump() << '\n';
        if (!out_dir.empty()) {
            std::error_code ec;
            fs::create_directories(out_dir, ec);
            std::ofstream(out_dir / "error.json") << e.dump(2) << '\n';
        }
        return code;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail("config", e.what(), 2);
    }
    out_dir = out;
    try {
        auto cfg = load_config(command, config);
        digest = cfg.digest;
        if (!out.empty()) cfg.out_dir = out;
        out_dir = cfg.out_dir;
        cfg.threads = resolve_threads(threads, cfg);
        tbb::global_control gc(tbb::global_control::max_allowed_parallelism, std::size_t(cfg.threads));
        run_command(cfg);
    } catch (const Error& e) {
        return fail(e.kind(), e.what(), e.exit_code());
    } catch (const std::exception& e) {
        return fail("solver", e.what(), 3);
    }
    return 0;
}

}  // namespace resona::cli
