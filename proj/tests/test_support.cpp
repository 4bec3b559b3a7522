#include <cmath>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "qdcav/binfile.hpp"
#include "qdcav/config.hpp"
#include "qdcav/error.hpp"
#include "qdcav/lm.hpp"
#include "qdcav/svg.hpp"
#include "qdcav/textio.hpp"
#include "test_util.hpp"

using namespace qdcav;
using nlohmann::json;

TEST_SUITE("lm") {

TEST_CASE("Rosenbrock minimum") {
    lm::Problem p;
    p.residuals = [](const lm::Vector& x) {
        lm::Vector r(2);
        r << 10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0];
        return r;
    };
    p.lower = lm::Vector::Constant(2, -10.0);
    p.upper = lm::Vector::Constant(2, 10.0);
    lm::Vector x0(2);
    x0 << -1.2, 1.0;
    const auto r = lm::minimize(p, x0, {500});
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t k = 1; k < r.accepted_costs.size(); ++k) CHECK(r.accepted_costs[k] <= r.accepted_costs[k - 1]);
}

TEST_CASE("bounds are respected") {
    lm::Problem p;
    p.residuals = [](const lm::Vector& x) { return lm::Vector::Constant(1, x[0] - 5.0); };
    p.lower = lm::Vector::Constant(1, 0.0);
    p.upper = lm::Vector::Constant(1, 2.0);
    const auto r = lm::minimize(p, lm::Vector::Constant(1, 1.0));
    CHECK(r.x[0] == doctest::Approx(2.0));
}

TEST_CASE("linear model covariance matches the normal equations") {
    // y = a + b t with fixed residual pattern.
    const int n = 20;
    std::vector<double> t(n), y(n);
    for (int k = 0; k < n; ++k) {
        t[k] = k * 0.1;
        y[k] = 1.0 + 2.0 * t[k] + ((k % 3) - 1) * 0.01;
    }
    lm::Problem p;
    p.residuals = [&](const lm::Vector& x) {
        lm::Vector r(n);
        for (int k = 0; k < n; ++k) r[k] = x[0] + x[1] * t[k] - y[k];
        return r;
    };
    p.lower = lm::Vector::Constant(2, -1e9);
    p.upper = lm::Vector::Constant(2, 1e9);
    const auto r = lm::minimize(p, lm::Vector::Zero(2));
    const auto cov = lm::covariance(r, n);

    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd Y(n);
    for (int k = 0; k < n; ++k) {
        A(k, 0) = 1.0;
        A(k, 1) = t[k];
        Y[k] = y[k];
    }
    const Eigen::VectorXd beta = (A.transpose() * A).ldlt().solve(A.transpose() * Y);
    const double s2 = (A * beta - Y).squaredNorm() / (n - 2);
    const Eigen::MatrixXd want = s2 * (A.transpose() * A).inverse();
    CHECK(r.x[0] == doctest::Approx(beta[0]).epsilon(1e-8));
    CHECK(r.x[1] == doctest::Approx(beta[1]).epsilon(1e-8));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(cov(i, j) == doctest::Approx(want(i, j)).epsilon(1e-5));
}

TEST_CASE("numeric Jacobian of a known function") {
    auto f = [](const lm::Vector& x) {
        lm::Vector r(2);
        r << std::sin(x[0]) * x[1], x[0] * x[0];
        return r;
    };
    lm::Vector x(2);
    x << 0.3, 2.0;
    const auto J = lm::numeric_jacobian(f, x);
    CHECK(J(0, 0) == doctest::Approx(std::cos(0.3) * 2.0).epsilon(1e-6));
    CHECK(J(0, 1) == doctest::Approx(std::sin(0.3)).epsilon(1e-6));
    CHECK(J(1, 0) == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(J(1, 1) == doctest::Approx(0.0));
}

}  // TEST_SUITE

TEST_SUITE("io") {

TEST_CASE("shortest round-trip formatting") {
    for (double v : {0.1, 1.0 / 3.0, 1.2e-17, -4.5e300, 1.28, 0.0})
        CHECK(std::stod(io::format_double(v)) == v);
    CHECK(io::format_double(1.28) == "1.28");
}

TEST_CASE("numeric CSV round trip and header check") {
    testutil::TempDir dir("io");
    io::write_numeric_csv(dir / "a.csv", "x,y", {{1.0, 2.5}, {1.0 / 3.0, -7e-12}});
    const auto rows = io::read_numeric_csv(dir / "a.csv", "x,y");
    REQUIRE(rows.size() == 2);
    CHECK(rows[1][0] == 1.0 / 3.0);
    CHECK(rows[1][1] == -7e-12);
    CHECK_THROWS_AS(io::read_numeric_csv(dir / "a.csv", "x,z"), IoError);
    { std::ofstream(dir / "b.csv") << "x,y\n1,abc\n"; }
    CHECK_THROWS_AS(io::read_numeric_csv(dir / "b.csv", "x,y"), IoError);
    CHECK_THROWS_AS(io::read_numeric_csv(dir / "none.csv", "x,y"), IoError);
}

TEST_CASE("binary document round trip") {
    testutil::TempDir dir("bin");
    const std::vector<double> payload{1.0, -2.0, std::numeric_limits<double>::denorm_min(), 3e300};
    io::write_binary_doc(dir / "d.bin", {{"kind", "test"}, {"n", 4}}, payload);
    const auto doc = io::read_binary_doc(dir / "d.bin");
    CHECK(doc.header["kind"] == "test");
    CHECK(doc.payload == payload);
    { std::ofstream(dir / "t.bin", std::ios::binary) << "not json\n"; }
    CHECK_THROWS_AS(io::read_binary_doc(dir / "t.bin"), IoError);
}

}  // TEST_SUITE

TEST_SUITE("config") {

TEST_CASE("defaults") {
    const auto c = config::parse(json::object());
    CHECK(c.geometry.lattice.a_nm == 250.0);
    CHECK(c.geometry.dx_nm == 12.5);
    CHECK(c.geometry.background_permittivity() == doctest::Approx(2.98949 * 2.98949).epsilon(1e-5));
    CHECK(c.cqed.f == 10.7);
    CHECK(c.spectra.temperatures().size() == 25);
    CHECK(c.io.out_dir == "out");
}

TEST_CASE("values are read and the seed reaches the synthesis") {
    const auto c = config::parse(json::parse(R"({
        "geometry": {"a_nm": 260, "shift_tiers_nm": [5, 3], "eps_background": 9.0},
        "fdtd": {"courant": 0.6, "boundary": "pec", "source_component": "Hz"},
        "cqed": {"Q": 10000, "Gc_eV": 1e-4},
        "spectra": {"amplitude_model": "equal", "n_peaks": 2},
        "io": {"seed": 99, "svg": false}
    })"));
    CHECK(c.geometry.lattice.a_nm == 260.0);
    CHECK(c.geometry.cavity.shift_tiers_nm == std::vector<double>{5.0, 3.0});
    CHECK(c.geometry.background_permittivity() == 9.0);
    CHECK(c.fdtd.sim.courant == 0.6);
    CHECK(c.fdtd.sim.boundary == fdtd::Boundary::Pec);
    CHECK(c.fdtd.source_component == fdtd::Component::Hz);
    CHECK(c.cqed.Gc_eV == 1e-4);
    CHECK(c.spectra.synthesis.amplitude_model == spectra::AmplitudeModel::Equal);
    CHECK(c.spectra.synthesis.seed == 99);
    CHECK_FALSE(c.io.svg);
}

TEST_CASE("round trip through JSON") {
    auto c = config::parse(json::parse(R"({"geometry": {"n_cols": 12}, "io": {"seed": 7}})"));
    const auto again = config::parse(config::to_json(c));
    CHECK(config::to_json(again) == config::to_json(c));
}

TEST_CASE("unknown keys, sections and wrong types are rejected") {
    CHECK_THROWS_AS(config::parse(json::parse(R"({"geometry": {"a": 250}})")), ParameterError);
    CHECK_THROWS_AS(config::parse(json::parse(R"({"plot": {}})")), ParameterError);
    CHECK_THROWS_AS(config::parse(json::parse(R"({"geometry": {"a_nm": "250"}})")), ParameterError);
    CHECK_THROWS_AS(config::parse(json::parse(R"({"io": {"seed": -1}})")), ParameterError);
    CHECK_THROWS_AS(config::parse(json::parse(R"([1, 2])")), ParameterError);
    testutil::TempDir dir("cfg");
    { std::ofstream(dir / "bad.json") << "{\"geometry\": "; }
    CHECK_THROWS_AS(config::load(dir / "bad.json"), InputError);
    CHECK_THROWS_AS(config::load(dir / "missing.json"), InputError);
}

}  // TEST_SUITE

TEST_SUITE("svg") {

TEST_CASE("plots are well-formed and escape text") {
    svg::Plot p{"a < b & c", "x", "y", true, {}};
    p.series.push_back({"line", {1, 10, 100}, {1, 2, 3}, false});
    p.series.push_back({"pts", {1, 10, std::nan("")}, {3, 2, 1}, true});
    const auto doc = svg::render(p);
    CHECK(doc.rfind("<?xml", 0) == 0);
    CHECK(doc.find("<svg") != std::string::npos);
    CHECK(doc.find("</svg>") != std::string::npos);
    CHECK(doc.find("a &lt; b &amp; c") != std::string::npos);
    CHECK(doc.find("nan") == std::string::npos);
    CHECK(doc.find("<polyline") != std::string::npos);
    CHECK(doc.find("<circle") != std::string::npos);
    CHECK(svg::escape_xml("\"'<>&") == "&quot;&apos;&lt;&gt;&amp;");

    // An empty plot still renders.
    CHECK(svg::render(svg::Plot{}).find("</svg>") != std::string::npos);
}

}  // TEST_SUITE
