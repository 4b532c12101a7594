#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <openssl/evp.h>

#include "resona/cli.hpp"
#include "resona/errors.hpp"
#include "resona/specfun.hpp"

using namespace resona;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    static const fs::path p = [] {
        auto d = fs::temp_directory_path() / fmt::format("resona_cli_{}", ::getpid());
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
    const auto p = scratch() / (name + ".json");
    std::ofstream(p) << text;
    return p;
}

int run(const std::string& args, const std::string& env = "") {
    const char* bin = std::getenv("RESONA_BIN");
    REQUIRE(bin != nullptr);
    const std::string cmd = fmt::format("{} {} {} 2>/dev/null", env, bin, args);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string openssl_sha256(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
    return hex;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.rfind('#', 0) == 0) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

const char* kSingular = R"({
  "layout": {"lengths": [1.0, 1.0], "spacings": [2.0], "speed": 1.0, "background_speed": 2.0},
  "omega0": 3.141592653589793,
  "block": {"p": 0, "q": 1, "n": [1, 1], "m": [1]},
  "deltas": [1e-6, 1e-4]
})";

}  // namespace

TEST_CASE("sha256 of known inputs") {
    CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(cli::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("config validation") {
    const std::string ball = R"("scene": {"resonators": [{"center": [0, 0, 0], "radius": 1.0}]})";
    CHECK_NOTHROW(cli::parse_config("cluster", "{" + ball + R"(, "L": 4, "omega0": 2.08, "delta": 1e-3})"));
    CHECK_THROWS_AS(cli::parse_config("cluster", "{" + ball + R"(, "L": 4, "omega0": 2.08})"), ConfigError);
    CHECK_THROWS_AS(cli::parse_config("cluster", "{" + ball + R"(, "L": 4, "omega0": -2.0, "delta": 1e-3})"),
                    ConfigError);
    CHECK_THROWS_AS(cli::parse_config("cluster", "{" + ball + R"(, "L": 4, "omega0": 2, "delta": 1e-3, "x": 1})"),
                    ConfigError);
    CHECK_THROWS_AS(cli::parse_config("cluster", "{" + ball + R"(, "L": 4.5, "omega0": 2, "delta": 1e-3})"),
                    ConfigError);
    CHECK_THROWS_AS(cli::parse_config("cluster", "[1, 2]"), ConfigError);
    CHECK_THROWS_AS(cli::parse_config("cluster", "{"), ConfigError);
    CHECK_THROWS_AS(cli::parse_config("nope", "{}"), ConfigError);
    CHECK_THROWS_AS(cli::parse_config("capmat", R"({"experiment": "cluster"})"), ConfigError);
    // overlapping spheres
    CHECK_THROWS_AS(cli::parse_config("capmat", R"({"scene": {"resonators": [{"center": [0, 0, 0], "radius": 1},
        {"center": [1, 0, 0], "radius": 1}]}, "L": 4, "omega0": 2.08, "delta": 1e-3})"),
                    ConfigError);
    CHECK_THROWS_AS(cli::parse_config("oned-singular", R"({"layout": {"lengths": [1, 1], "spacings": [2]},
        "omega0": 3.14, "deltas": [1e-4], "block": {"p": 0, "q": 1, "n": [1], "m": [1]}})"),
                    ConfigError);
    CHECK_THROWS_AS(cli::parse_config("bands", R"({"cell": {"lattice": {"type": "cubic", "a": 3},
        "resonators": [{"center": [1.5, 1.5, 1.5], "radius": 1}]}, "L": 3, "omega0": 2.08, "delta": 1e-3})"),
                    ConfigError);
    CHECK(cli::command_names().size() == 12);
}

TEST_CASE("digest is the hash of the canonical config") {
    const auto a = cli::parse_config("c-infinity", R"({"ell": 1, "n": 1, "radii": [2.0]})");
    const auto b = cli::parse_config("c-infinity", R"({ "radii": [2.0], "n": 1,   "ell": 1 })");
    CHECK(a.digest == b.digest);
    CHECK(a.digest == openssl_sha256(a.doc.dump()));
    const auto c = cli::parse_config("c-infinity", R"({"ell": 1, "n": 1, "radii": [3.0]})");
    CHECK(c.digest != a.digest);
}

TEST_CASE("thread count precedence") {
    auto cfg = cli::parse_config("c-infinity", R"({"ell": 1, "n": 1, "radii": [2.0], "threads": 3})");
    ::unsetenv("RESONA_THREADS");
    CHECK(cli::resolve_threads(0, cfg) == 3);
    ::setenv("RESONA_THREADS", "5", 1);
    CHECK(cli::resolve_threads(0, cfg) == 5);
    CHECK(cli::resolve_threads(2, cfg) == 2);
    ::setenv("RESONA_THREADS", "zero", 1);
    CHECK_THROWS_AS(cli::resolve_threads(0, cfg), ConfigError);
    ::unsetenv("RESONA_THREADS");
}

TEST_CASE("exit codes and structured errors") {
    const auto out = scratch() / "err";
    CHECK(run(fmt::format("cluster --config {}/missing.json --out {}", scratch().string(), out.string())) == 2);
    const auto e = nlohmann::json::parse(slurp(out / "error.json"));
    CHECK(e["error"]["kind"] == "config");
    CHECK(e["error"]["exit_code"] == 2);

    CHECK(run("cluster") == 2);
    CHECK(run("bogus --config x.json") == 2);

    // degenerate branch with a simple-branch requirement
    const auto pre = write_config("pre", R"({"ell": 1, "n": 1, "radii": [2.0], "require_simple": true})");
    const auto out4 = scratch() / "pre";
    CHECK(run(fmt::format("c-infinity --config {} --out {}", pre.string(), out4.string())) == 4);
    const auto e4 = nlohmann::json::parse(slurp(out4 / "error.json"));
    CHECK(e4["error"]["kind"] == "precondition");
    CHECK(e4["config_digest"].get<std::string>().size() == 64);
}

TEST_CASE("artifacts carry the digest and reruns are byte-identical") {
    const auto cfg = write_config("singular", kSingular);
    const auto o1 = scratch() / "s1", o2 = scratch() / "s2";
    REQUIRE(run(fmt::format("oned-singular --config {} --out {} --threads 1", cfg.string(), o1.string())) == 0);
    REQUIRE(run(fmt::format("oned-singular --config {} --out {}", cfg.string(), o2.string()), "RESONA_THREADS=2") ==
            0);
    for (const char* f : {"oned-singular.csv", "oned-singular.json", "config.json"}) {
        CHECK(slurp(o1 / f) == slurp(o2 / f));
    }
    const std::string digest = openssl_sha256(slurp(o1 / "config.json"));
    const std::string csv = slurp(o1 / "oned-singular.csv");
    CHECK(csv.rfind("# config_digest=" + digest + "\n", 0) == 0);
    const auto summary = nlohmann::json::parse(slurp(o1 / "oned-singular.json"));
    CHECK(summary["config_digest"] == digest);
    const auto manifest = nlohmann::json::parse(slurp(o1 / "manifest.json"));
    CHECK(manifest["config_digest"] == digest);
    CHECK(manifest["experiment"] == "oned-singular");
    CHECK(manifest["version"] == cli::kVersion);
    CHECK(manifest["threads"] == 1);
    CHECK(manifest["wall_clock_s"].get<double>() >= 0.0);
    CHECK(nlohmann::json::parse(slurp(o2 / "manifest.json"))["threads"] == 2);
}

TEST_CASE("oned-singular splitting pairs match the oracle columns") {
    const auto cfg = write_config("singular", kSingular);
    const auto out = scratch() / "s3";
    REQUIRE(run(fmt::format("oned-singular --config {} --out {}", cfg.string(), out.string())) == 0);
    const auto rows = csv_rows(out / "oned-singular.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0][0] == "delta");
    CHECK(rows[0][4] == "oracle_plus_re");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double d = std::stod(rows[i][0]), pp = std::stod(rows[i][2]), pm = std::stod(rows[i][3]);
        const double op = std::stod(rows[i][4]), om = std::stod(rows[i][6]);
        const double split = 0.5 * (pp - pm);
        CHECK(split > 0.0);
        CHECK(std::abs(op - pp) < 0.05 * split);
        CHECK(std::abs(om - pm) < 0.05 * split);
        CHECK(std::stod(rows[i][9]) < std::sqrt(d));
    }
    // full-precision output
    CHECK(rows[1][0] == "9.9999999999999995e-07");
}

TEST_CASE("scan-det at delta = 0 dips only at Neumann frequencies") {
    std::vector<double> neumann;
    for (const auto& f : specfun::neumann_ball_spectrum(1.0, 6, 3)) {
        if (f.omega > 0.5 && f.omega < 4.0) neumann.push_back(f.omega);
    }
    REQUIRE(neumann.size() == 2);
    const double step = 3.5 / 350.0;
    for (double v : {1.0, 3.0}) {
        const auto cfg = write_config("scan0", fmt::format(R"({{
          "scene": {{"background_speed": {}, "resonators": [{{"center": [0, 0, 0], "radius": 1.0}}]}},
          "L": 4, "delta": 0.0, "omega_window": {{"min": 0.5, "max": 4.0, "points": 351}}}})",
                                                           v));
        const auto out = scratch() / fmt::format("scan0_{}", v);
        REQUIRE(run(fmt::format("scan-det --config {} --out {}", cfg.string(), out.string())) == 0);
        const auto s = nlohmann::json::parse(slurp(out / "scan-det.json"));
        const auto& minima = s["results"]["minima"];
        REQUIRE(minima.size() == neumann.size());
        for (std::size_t i = 0; i < neumann.size(); ++i) {
            CHECK(std::abs(minima[i]["omega"][0].get<double>() - neumann[i]) <= step);
        }
        CHECK(s["results"]["failures"].empty());
        CHECK(csv_rows(out / "scan-det.csv").size() == 352);
        // with equal speeds the raw determinant also vanishes at the exterior Dirichlet frequency pi
        bool raw_pi = false;
        for (const auto& m : s["results"]["raw_minima"]) {
            raw_pi = raw_pi || std::abs(m["omega"][0].get<double>() - pi) <= step;
        }
        CHECK(raw_pi == (v == 1.0));
    }
}

TEST_CASE("converge emits delta,hausdorff rows and a second-order slope") {
    const auto cfg = write_config("conv", R"({
      "scene": {"resonators": [{"center": [0, 0, 0], "radius": 1.0}]},
      "L": 4, "omega0": 2.0815759778181, "deltas": [1e-4, 1e-3, 1e-2]})");
    const auto out = scratch() / "conv";
    REQUIRE(run(fmt::format("converge --config {} --out {}", cfg.string(), out.string())) == 0);
    const auto rows = csv_rows(out / "converge.csv");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0][0] == "delta");
    CHECK(rows[0][1] == "hausdorff");
    const auto s = nlohmann::json::parse(slurp(out / "converge.json"));
    CHECK(s["results"]["fit"]["slope"].get<double>() == doctest::Approx(2.0).epsilon(0.075));
}
