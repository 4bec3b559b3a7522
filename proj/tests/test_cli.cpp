#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "qdcav/textio.hpp"
#include "test_util.hpp"

using nlohmann::json;

#ifndef QDCAV_CLI_PATH
#error "QDCAV_CLI_PATH must point at the qdcav executable"
#endif

namespace {

// Runs the CLI with stdout and stderr discarded and returns its exit status.
int run(const std::string& args) {
    const std::string cmd = std::string("\"") + QDCAV_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quoted(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

json read_json(const std::filesystem::path& p) { return json::parse(qdcav::io::read_text_file(p)); }

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

// Small lattice and short runs so a simulate call takes about a second.
const char* kSmallSim = R"({"geometry": {"n_cols": 6, "n_rows": 3, "dx_nm": 25},
  "fdtd": {"scan_steps_after_source": 4000, "run_steps_after_source": 4000, "pml_cells": 10},
  "io": {"svg": false}})";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes for usage and input errors") {
    testutil::TempDir dir("cli");
    CHECK(run("--help") == 0);
    CHECK(run("frobnicate") == 2);
    CHECK(run("--config " + quoted(dir / "missing.json") + " design") == 2);
    write_file(dir / "bad.json", "{\"geometry\": ");
    CHECK(run("--config " + quoted(dir / "bad.json") + " --out " + quoted(dir / "o") + " design") == 2);
    write_file(dir / "unknown.json", R"({"geometry": {"radius": 70}})");
    CHECK(run("--config " + quoted(dir / "unknown.json") + " --out " + quoted(dir / "o") + " design") == 2);
    CHECK(run("--out " + quoted(dir / "o") + " anticross " + quoted(dir / "no_series")) == 2);
    CHECK(run("--out " + quoted(dir / "o") + " analyze " + quoted(dir / "no_probe.csv") + " --t-min 0") == 2);
}

TEST_CASE("design writes the lattice summary") {
    testutil::TempDir dir("cli");
    REQUIRE(run("--out " + quoted(dir / "o") + " design") == 0);
    const auto j = read_json(dir / "o" / "design.json");
    CHECK(std::abs(j["waveguide_width_nm"].get<double>() - 424.352) < 1e-3);
    CHECK(j["displaced_holes"] == 12);
    CHECK(std::filesystem::exists(dir / "o" / "design.epsmap"));
    const auto holes = qdcav::io::read_numeric_csv(dir / "o" / "holes.csv", "x_nm,y_nm,r_nm");
    CHECK(holes.size() == j["hole_count"].get<std::size_t>());
}

TEST_CASE("predict writes the report and the splitting curve") {
    testutil::TempDir dir("cli");
    REQUIRE(run("--out " + quoted(dir / "o") + " predict") == 0);
    const auto j = read_json(dir / "o" / "predict.json");
    CHECK(std::abs(j["two_hg_eV"].get<double>() * 1e6 - 207.86) < 0.01);
    const auto rows = qdcav::io::read_numeric_csv(dir / "o" / "splitting_vs_q.csv", "Q,dE_eV");
    CHECK(rows.size() == 201);
    CHECK(rows.front()[0] == doctest::Approx(1e3));
    CHECK(rows.back()[0] == doctest::Approx(1e5));
}

TEST_CASE("anticross on a synthesized series, then on the written series") {
    testutil::TempDir dir("cli");
    REQUIRE(run("--seed 3 --out " + quoted(dir / "o") + " anticross") == 0);
    const auto a = read_json(dir / "o" / "anticross.json");
    CHECK(std::abs(a["dE_eV"].get<double>() * 1e6 - 140.0) < 3.0);
    REQUIRE(run("--out " + quoted(dir / "p") + " anticross " + quoted(dir / "o" / "series")) == 0);
    const auto b = read_json(dir / "p" / "anticross.json");
    CHECK(b["hg_eV"].get<double>() == a["hg_eV"].get<double>());
    const auto rows = qdcav::io::read_numeric_csv(dir / "p" / "branches.csv", "T_K,lower_eV,upper_eV");
    CHECK(rows.size() == 25);
}

TEST_CASE("fit of a written spectrum") {
    testutil::TempDir dir("cli");
    std::ostringstream s;
    s << "energy_eV,intensity\n";
    for (int k = -400; k <= 400; ++k) {
        const double E = 1.28 + k * 2e-6;
        const double x = 2.0 * (E - 1.28) / 160e-6;
        s << qdcav::io::format_double(E) << "," << qdcav::io::format_double(1.0 / (1.0 + x * x)) << "\n";
    }
    write_file(dir / "s.csv", s.str());
    write_file(dir / "cfg.json", R"({"spectra": {"fit_resolution_fwhm_eV": 0}})");
    REQUIRE(run("--config " + quoted(dir / "cfg.json") + " --out " + quoted(dir / "o") + " fit " +
                quoted(dir / "s.csv")) == 0);
    const auto j = read_json(dir / "o" / "fit.json");
    CHECK(std::abs(j["quality_factors"][0]["Q"].get<double>() - 8000.0) / 8000.0 < 1e-3);
}

TEST_CASE("qmap of an empty directory writes only the header") {
    testutil::TempDir dir("cli");
    std::filesystem::create_directories(dir / "reports");
    REQUIRE(run("--out " + quoted(dir / "o") + " qmap " + quoted(dir / "reports")) == 0);
    CHECK(qdcav::io::read_text_file(dir / "o" / "qmap.csv") == "a_nm,r_over_a,E0_eV,Q\n");
}

TEST_CASE("simulate is deterministic and independent of the thread count") {
    testutil::TempDir dir("cli");
    write_file(dir / "cfg.json", kSmallSim);
    const std::string base = "--config " + quoted(dir / "cfg.json");
    REQUIRE(run(base + " --out " + quoted(dir / "a") + " design") == 0);
    REQUIRE(run(base + " --out " + quoted(dir / "a") + " simulate " + quoted(dir / "a" / "design.epsmap")) == 0);
    REQUIRE(run(base + " --threads 4 --out " + quoted(dir / "b") + " simulate") == 0);
    CHECK(qdcav::io::read_text_file(dir / "a" / "probe.csv") == qdcav::io::read_text_file(dir / "b" / "probe.csv"));

    // The analysis start comes from the field-map metadata.
    REQUIRE(run(base + " --out " + quoted(dir / "a") + " analyze " + quoted(dir / "a" / "probe.csv") + " --fldmap " +
                quoted(dir / "a" / "field.fldmap") + " --epsmap " + quoted(dir / "a" / "design.epsmap")) == 0);
    CHECK(read_json(dir / "a" / "analyze.json").contains("Q"));
}

TEST_CASE("simulate without a resonator fails with exit code 1") {
    testutil::TempDir dir("cli");
    write_file(dir / "cfg.json", R"({"geometry": {"n_cols": 6, "n_rows": 3, "dx_nm": 25, "eps_background": 1.0},
      "fdtd": {"scan_steps_after_source": 4000, "run_steps_after_source": 4000, "pml_cells": 10},
      "io": {"svg": false}})");
    CHECK(run("--config " + quoted(dir / "cfg.json") + " --out " + quoted(dir / "o") + " simulate") == 1);
}

}  // TEST_SUITE
