#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <openssl/evp.h>

#include "resona/cli.hpp"
#include "resona/errors.hpp"

namespace resona::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
    throw ConfigError(fmt::format("'{}': {}", key, what));
}

double positive(const json& j, const std::string& key) {
    if (!j.is_number()) bad(key, "expected a number");
    const double x = j.get<double>();
    if (!std::isfinite(x) || x <= 0.0) bad(key, "must be positive");
    return x;
}

double nonnegative(const json& j, const std::string& key) {
    if (!j.is_number()) bad(key, "expected a number");
    const double x = j.get<double>();
    if (!std::isfinite(x) || x < 0.0) bad(key, "must be non-negative");
    return x;
}

int int_in(const json& j, const std::string& key, int lo, int hi) {
    if (!j.is_number_integer()) bad(key, "expected an integer");
    const auto x = j.get<long long>();
    if (x < lo || x > hi) bad(key, fmt::format("must lie in [{}, {}]", lo, hi));
    return int(x);
}

std::vector<double> positive_list(const json& j, const std::string& key) {
    if (!j.is_array() || j.empty()) bad(key, "expected a non-empty array");
    std::vector<double> out;
    for (const auto& x : j) out.push_back(positive(x, key));
    return out;
}

Vec3 point3(const json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 3) bad(key, "expected an array of 3 numbers");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        if (!j[i].is_number() || !std::isfinite(j[i].get<double>())) bad(key, "expected finite numbers");
        v(i) = j[i].get<double>();
    }
    return v;
}

void check_keys(const json& j, const std::string& where, const std::set<std::string>& required,
                const std::set<std::string>& optional) {
    if (!j.is_object()) bad(where, "expected an object");
    for (const auto& k : required) {
        if (!j.contains(k)) bad(where, fmt::format("missing key '{}'", k));
    }
    for (const auto& [k, v] : j.items()) {
        if (!required.count(k) && !optional.count(k)) bad(where, fmt::format("unknown key '{}'", k));
    }
}

std::vector<bie3d::Resonator> resonators(const json& j, const std::string& key) {
    if (!j.is_array() || j.empty()) bad(key, "expected a non-empty array of resonators");
    std::vector<bie3d::Resonator> out;
    for (const auto& r : j) {
        check_keys(r, key, {"center", "radius"}, {"speed"});
        bie3d::Resonator b;
        b.center = point3(r["center"], key + ".center");
        b.radius = positive(r["radius"], key + ".radius");
        b.speed = r.contains("speed") ? positive(r["speed"], key + ".speed") : 1.0;
        out.push_back(b);
    }
    return out;
}

bie3d::SphereScene parse_scene(const json& j) {
    check_keys(j, "scene", {"resonators"}, {"background_speed"});
    bie3d::SphereScene s;
    s.resonators = resonators(j["resonators"], "scene.resonators");
    s.background_speed = j.contains("background_speed") ? positive(j["background_speed"], "scene.background_speed")
                                                        : 1.0;
    try {
        s.validate();
    } catch (const PreconditionError& e) {
        bad("scene", e.what());
    }
    return s;
}

oned::Layout1D parse_layout(const json& j) {
    check_keys(j, "layout", {"lengths"}, {"spacings", "speed", "background_speed", "x0"});
    const auto lengths = positive_list(j["lengths"], "layout.lengths");
    std::vector<double> spacings;
    if (j.contains("spacings") && !(j["spacings"].is_array() && j["spacings"].empty())) {
        spacings = positive_list(j["spacings"], "layout.spacings");
    }
    if (spacings.size() + 1 != lengths.size()) bad("layout.spacings", "needs one entry fewer than lengths");
    const double speed = j.contains("speed") ? positive(j["speed"], "layout.speed") : 1.0;
    const double bg = j.contains("background_speed") ? positive(j["background_speed"], "layout.background_speed")
                                                     : 1.0;
    double x0 = 0.0;
    if (j.contains("x0")) {
        if (!j["x0"].is_number()) bad("layout.x0", "expected a number");
        x0 = j["x0"].get<double>();
    }
    return oned::Layout1D::from_lengths(lengths, spacings, speed, 0.0, bg, x0);
}

PeriodicCell parse_cell(const json& j) {
    check_keys(j, "cell", {"lattice", "resonators"}, {"background_speed", "eta"});
    const json& l = j["lattice"];
    check_keys(l, "cell.lattice", {"type", "a"}, {"c"});
    if (!l["type"].is_string()) bad("cell.lattice.type", "expected a string");
    const auto type = l["type"].get<std::string>();
    const double a = positive(l["a"], "cell.lattice.a");
    PeriodicCell c;
    if (type == "cubic") {
        if (l.contains("c")) bad("cell.lattice.c", "only used by the hexagonal lattice");
        c.ctx.lattice = periodic::Lattice3D::cubic(a);
    } else if (type == "hexagonal") {
        if (!l.contains("c")) bad("cell.lattice", "missing key 'c'");
        c.ctx.lattice = periodic::Lattice3D::hexagonal_prism(a, positive(l["c"], "cell.lattice.c"));
    } else {
        bad("cell.lattice.type", "expected 'cubic' or 'hexagonal'");
    }
    if (j.contains("eta")) c.ctx.eta = nonnegative(j["eta"], "cell.eta");
    c.scene.resonators = resonators(j["resonators"], "cell.resonators");
    c.scene.background_speed =
        j.contains("background_speed") ? positive(j["background_speed"], "cell.background_speed") : 1.0;
    try {
        c.scene.validate();
        periodic::resonator_speed(c.scene);
    } catch (const PreconditionError& e) {
        bad("cell", e.what());
    }
    return c;
}

BlockSpec parse_block(const json& j) {
    check_keys(j, "block", {"p", "q", "n", "m"}, {});
    BlockSpec b;
    b.p = int_in(j["p"], "block.p", 0, 1000);
    b.q = int_in(j["q"], "block.q", 0, 1000);
    if (b.q <= b.p) bad("block", "needs q > p");
    for (const char* k : {"n", "m"}) {
        if (!j[k].is_array()) bad(fmt::format("block.{}", k), "expected an array of integers");
        auto& dst = k[0] == 'n' ? b.n : b.m;
        for (const auto& x : j[k]) dst.push_back(int_in(x, fmt::format("block.{}", k), 1, 1000000));
    }
    if (int(b.n.size()) != b.q - b.p + 1) bad("block.n", "needs q - p + 1 entries");
    if (int(b.m.size()) != b.q - b.p) bad("block.m", "needs q - p entries");
    return b;
}

using Validator = std::function<void(const json&)>;

const std::map<std::string, Validator>& validators() {
    static const std::map<std::string, Validator> v{
        {"experiment", [](const json& j) { if (!j.is_string()) bad("experiment", "expected a string"); }},
        {"scene", [](const json& j) { parse_scene(j); }},
        {"layout", [](const json& j) { parse_layout(j); }},
        {"cell", [](const json& j) { parse_cell(j); }},
        {"block", [](const json& j) { parse_block(j); }},
        {"L", [](const json& j) { int_in(j, "L", 1, 40); }},
        {"delta", [](const json& j) { nonnegative(j, "delta"); }},
        {"deltas", [](const json& j) { positive_list(j, "deltas"); }},
        {"omega0", [](const json& j) { positive(j, "omega0"); }},
        {"omega_window",
         [](const json& j) {
             check_keys(j, "omega_window", {"min", "max", "points"}, {"imag"});
             const double lo = nonnegative(j["min"], "omega_window.min");
             if (positive(j["max"], "omega_window.max") <= lo) bad("omega_window", "needs max > min");
             int_in(j["points"], "omega_window.points", 2, 1000000);
             if (j.contains("imag") && !j["imag"].is_number()) bad("omega_window.imag", "expected a number");
         }},
        {"cluster_radius", [](const json& j) { positive(j, "cluster_radius"); }},
        {"tolerances",
         [](const json& j) {
             check_keys(j, "tolerances", {}, {"nullity", "rank"});
             for (const auto& [k, x] : j.items()) positive(x, "tolerances." + k);
         }},
        {"h", [](const json& j) { positive(j, "h"); }},
        {"alphas",
         [](const json& j) {
             if (!j.is_array() || j.empty()) bad("alphas", "expected a non-empty array of 3-vectors");
             for (const auto& a : j) point3(a, "alphas");
         }},
        {"alpha", [](const json& j) { point3(j, "alpha"); }},
        {"alpha_grid", [](const json& j) { int_in(j, "alpha_grid", 1, 64); }},
        {"J", [](const json& j) { int_in(j, "J", 2, 32); }},
        {"k_range",
         [](const json& j) {
             const auto r = positive_list(j, "k_range");
             if (r.size() != 2 || r[1] <= r[0]) bad("k_range", "expected [lo, hi] with 0 < lo < hi");
         }},
        {"scan_points", [](const json& j) { int_in(j, "scan_points", 2, 100000); }},
        {"xi_fractions", [](const json& j) { positive_list(j, "xi_fractions"); }},
        {"direction",
         [](const json& j) {
             if (point3(j, "direction").norm() == 0.0) bad("direction", "must be nonzero");
         }},
        {"ell", [](const json& j) { int_in(j, "ell", 0, 30); }},
        {"n", [](const json& j) { int_in(j, "n", 1, 50); }},
        {"radii", [](const json& j) { positive_list(j, "radii"); }},
        {"vb", [](const json& j) { positive(j, "vb"); }},
        {"require_simple", [](const json& j) { if (!j.is_boolean()) bad("require_simple", "expected a boolean"); }},
        {"threads", [](const json& j) { int_in(j, "threads", 1, 4096); }},
        {"seed", [](const json& j) { if (!j.is_number_unsigned()) bad("seed", "expected a non-negative integer"); }},
        {"out_dir", [](const json& j) { if (!j.is_string()) bad("out_dir", "expected a string"); }},
    };
    return v;
}

struct CommandSchema {
    std::set<std::string> required, optional;
};

const std::map<std::string, CommandSchema>& schemas() {
    static const std::map<std::string, CommandSchema> s{
        {"scan-det", {{"scene", "L", "delta", "omega_window"}, {}}},
        {"cluster", {{"scene", "L", "omega0", "delta"}, {"cluster_radius", "tolerances"}}},
        {"capmat", {{"scene", "L", "omega0", "delta"}, {"tolerances"}}},
        {"converge", {{"scene", "L", "omega0", "deltas"}, {"tolerances"}}},
        {"oned-regular", {{"layout", "omega0", "deltas"}, {}}},
        {"oned-singular", {{"layout", "omega0", "deltas", "block"}, {}}},
        {"oned-residue", {{"layout", "omega0", "delta", "block"}, {"h"}}},
        {"bands", {{"cell", "L", "omega0", "delta"}, {"alphas", "alpha_grid"}}},
        {"bandgap", {{"cell", "L", "J", "deltas", "alpha_grid"}, {}}},
        {"case2-residue", {{"cell", "L", "omega0", "k_range"}, {"alpha", "scan_points", "h"}}},
        {"honeycomb", {{"cell", "L", "omega0", "xi_fractions"}, {"direction"}}},
        {"c-infinity", {{"ell", "n", "radii"}, {"vb", "L", "require_simple"}}},
    };
    return s;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& [k, v] : schemas()) n.push_back(k);
        return n;
    }();
    return names;
}

RunConfig parse_config(const std::string& command, const std::string& text) {
    const auto it = schemas().find(command);
    if (it == schemas().end()) throw ConfigError(fmt::format("unknown command '{}'", command));
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("invalid JSON: {}", e.what()));
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");

    auto optional = it->second.optional;
    optional.insert({"experiment", "threads", "seed", "out_dir"});
    check_keys(doc, "config", it->second.required, optional);
    for (const auto& [k, v] : doc.items()) validators().at(k)(v);
    if (doc.contains("experiment") && doc["experiment"].get<std::string>() != command) {
        throw ConfigError(fmt::format("config is for '{}', not '{}'", doc["experiment"].get<std::string>(), command));
    }
    if (command == "bands" && doc.contains("alphas") == doc.contains("alpha_grid")) {
        throw ConfigError("bands needs exactly one of 'alphas' and 'alpha_grid'");
    }
    if (command == "honeycomb" && parse_cell(doc["cell"]).scene.size() != 2) {
        throw ConfigError("'cell': honeycomb needs two resonators");
    }

    RunConfig cfg;
    cfg.experiment = command;
    cfg.doc = std::move(doc);
    cfg.digest = sha256_hex(cfg.doc.dump());
    cfg.threads = cfg.doc.value("threads", 1);
    cfg.seed = cfg.doc.value("seed", std::uint64_t(0));
    cfg.out_dir = cfg.doc.value("out_dir", std::string("."));
    return cfg;
}

RunConfig load_config(const std::string& command, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(command, ss.str());
}

int resolve_threads(int flag, const RunConfig& cfg) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("RESONA_THREADS"); env && *env) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (*end != '\0' || n < 1 || n > 4096) throw ConfigError(fmt::format("RESONA_THREADS='{}' is invalid", env));
        return int(n);
    }
    return cfg.threads;
}

bie3d::SphereScene scene_of(const RunConfig& cfg) { return parse_scene(cfg.doc.at("scene")); }
oned::Layout1D layout_of(const RunConfig& cfg) { return parse_layout(cfg.doc.at("layout")); }
PeriodicCell cell_of(const RunConfig& cfg) { return parse_cell(cfg.doc.at("cell")); }
BlockSpec block_of(const RunConfig& cfg) { return parse_block(cfg.doc.at("block")); }

double number(const RunConfig& cfg, const std::string& key, double fallback) {
    return cfg.doc.contains(key) ? cfg.doc[key].get<double>() : fallback;
}

int integer(const RunConfig& cfg, const std::string& key, int fallback) {
    return cfg.doc.contains(key) ? cfg.doc[key].get<int>() : fallback;
}

std::vector<double> numbers(const RunConfig& cfg, const std::string& key) {
    return cfg.doc.at(key).get<std::vector<double>>();
}

Vec3 vec3(const json& j) { return point3(j, "vector"); }

}  // namespace resona::cli
