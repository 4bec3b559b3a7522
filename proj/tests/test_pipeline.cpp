#include <cmath>
#include <fstream>

#include "doctest.h"
#include "qdcav/constants.hpp"
#include "qdcav/error.hpp"
#include "qdcav/pipeline.hpp"
#include "test_util.hpp"

using namespace qdcav;
using nlohmann::json;

namespace {

void write_json(const std::filesystem::path& p, const json& j) { std::ofstream(p) << j.dump(); }

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("design summary for the default cavity") {
    const auto cfg = config::parse(json::object());
    const auto d = pipeline::design(cfg);
    CHECK(std::abs(d.summary["waveguide_width_nm"].get<double>() - 424.352) < 1e-3);
    CHECK(d.summary["displaced_holes"] == 12);
    CHECK(d.summary["total_displacement_nm"].get<double>() == doctest::Approx(48.0));
    CHECK(d.summary["mirror_symmetric"] == true);
    CHECK(d.summary["non_overlapping"] == true);
    CHECK(d.map.nx * d.map.ny == static_cast<int>(d.map.eps.size()));
}

TEST_CASE("predict with the default settings") {
    const auto p = pipeline::predict(config::parse(json::object()), std::nullopt);
    CHECK(std::abs(2e6 * p.hg_eV - 208.0) < 0.5);
    CHECK(p.Gc_eV == doctest::Approx(1.28 / 8000.0).epsilon(1e-14));
    CHECK(p.verdict.strong);
    CHECK(p.report["onset_Q"].get<double>() == doctest::Approx(1.28 / (4 * p.hg_eV + 78e-6)).epsilon(1e-12));
}

TEST_CASE("predict: measured splitting against the cavity linewidth") {
    auto cfg = config::parse(json::parse(R"({"cqed": {"hg_eV": 72.94e-6, "Gc_eV": 160e-6}})"));
    const auto p = pipeline::predict(cfg, std::nullopt);
    CHECK(std::abs(p.dE_eV * 1e6 - 140.0) < 0.1);
    CHECK(p.verdict.strong);
}

TEST_CASE("predict uses the mode characterization") {
    modal::ModeCharacterization m;
    m.E0_eV = 1.2;
    m.Q = 3000;
    m.V_lambda_n3 = 2.0;
    const auto p = pipeline::predict(config::parse(json::object()), m);
    CHECK(p.Gc_eV == doctest::Approx(1.2 / 3000).epsilon(1e-14));
    CHECK(p.report["inputs"]["V_lambda_n3"] == 2.0);
    m.V_lambda_n3 = 0.0;
    CHECK_THROWS_AS(pipeline::predict(config::parse(json::object()), m), ParameterError);
}

TEST_CASE("analyze recovers an injected Q from a probe file") {
    testutil::TempDir dir("probe");
    const double f0 = 290e12, Q = 8000.0;
    fdtd::TimeSeries s;
    s.dt_s = 1.0 / (24.0 * f0);
    const double w = 2.0 * phys::pi * f0;
    for (int k = 0; k < 120000; ++k) {
        const double t = (k + 1.0) * s.dt_s;
        s.samples.push_back(std::exp(-w * t / (2.0 * Q)) * std::sin(w * t));
    }
    pipeline::write_probe_csv(dir / "p.csv", s, fdtd::Component::Ey);
    const auto back = pipeline::read_probe_csv(dir / "p.csv");
    REQUIRE(back.samples.size() == s.samples.size());
    CHECK(back.samples == s.samples);
    CHECK(back.dt_s == doctest::Approx(s.dt_s).epsilon(1e-12));

    const auto r = pipeline::analyze(config::parse(json::object()), {back, 100, nullptr, nullptr});
    CHECK(testutil::rel_err(r.mode.Q, Q) < 0.01);
    CHECK(std::abs(r.mode.E0_eV - phys::hz_to_ev(f0)) / phys::hz_to_ev(f0) < 1e-3);
    CHECK_FALSE(r.volume.has_value());
    CHECK(r.report["V_lambda_n3"].is_null());
}

TEST_CASE("probe CSV rejects gaps in the step column") {
    testutil::TempDir dir("probe");
    { std::ofstream(dir / "p.csv") << "step,time_s,value\n0,1e-16,1\n2,3e-16,2\n"; }
    CHECK_THROWS_AS(pipeline::read_probe_csv(dir / "p.csv"), IoError);
}

TEST_CASE("qmap: sorting, duplicates and malformed files") {
    testutil::TempDir dir("qmap");
    write_json(dir / "a.json", {{"a_nm", 260}, {"r_over_a", 0.28}, {"E0_eV", 1.15}, {"Q", 2000}});
    write_json(dir / "b.json", {{"a_nm", 250}, {"r_over_a", 0.30}, {"E0_eV", 1.22}, {"Q", 2500}});
    write_json(dir / "c.json", {{"a_nm", 250}, {"r_over_a", 0.28}, {"E0_eV", 1.20}, {"Q", 3000}});
    write_json(dir / "d.json", {{"a_nm", 250}, {"r_over_a", 0.28}, {"E0_eV", 1.21}, {"Q", 3100}});
    { std::ofstream(dir / "e.json") << "{broken"; }
    write_json(dir / "f.json", {{"something", 1}});
    { std::ofstream(dir / "notes.txt") << "ignored"; }

    const auto q = pipeline::collect_qmap(dir.path());
    REQUIRE(q.rows.size() == 3);
    CHECK(q.rows[0].a_nm == 250.0);
    CHECK(q.rows[0].r_over_a == 0.28);
    CHECK(q.rows[0].Q == 3100.0);  // later file wins
    CHECK(q.rows[1].r_over_a == 0.30);
    CHECK(q.rows[2].a_nm == 260.0);
    CHECK(q.warnings.size() == 3);
}

TEST_CASE("qmap of an empty directory") {
    testutil::TempDir dir("qmap");
    const auto q = pipeline::collect_qmap(dir.path());
    CHECK(q.rows.empty());
    CHECK_THROWS_AS(pipeline::collect_qmap(dir / "missing"), IoError);
}

}  // TEST_SUITE
