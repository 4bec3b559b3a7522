#include <cmath>
#include <complex>
#include <random>

#include "doctest.h"
#include "qdcav/cqed.hpp"
#include "qdcav/error.hpp"
#include "test_util.hpp"

using namespace qdcav;
using namespace qdcav::cqed;

namespace {

// Constant folding with literal CODATA 2018 values, kept separate from the
// library's constants header.
double oracle_two_hg_ueV(double f, double n, double E0_eV, double V_lambda_n3) {
    const double e = 1.602176634e-19, h = 6.62607015e-34, c = 299792458.0;
    const double eps0 = 8.8541878128e-12, m = 9.1093837015e-31;
    const double hbar = h / (2.0 * 3.14159265358979323846);
    const double lambda = h * c / (E0_eV * e);
    const double V = V_lambda_n3 * std::pow(lambda / n, 3);
    const double g = std::sqrt(e * e * f / (4.0 * eps0 * n * n * m * V));
    return 2.0 * hbar * g / e * 1e6;
}

CoupledSystem sys_of(double hg, double Gc, double Gx, double Ex = 1.28, double Ec = 1.28) {
    CoupledSystem s;
    s.hg_eV = hg;
    s.Gc_eV = Gc;
    s.Gx_eV = Gx;
    s.Ex_eV = Ex;
    s.Ec_eV = Ec;
    return s;
}

}  // namespace

TEST_SUITE("cqed") {

TEST_CASE("coupling constant against constant folding") {
    const double n = 3.46;
    const double V = mode_volume_m3(1.3, 1.28, n);
    CHECK(V == doctest::Approx(2.850e-20).epsilon(1e-3));
    const double hg = coupling_constant(10.7, V, n * n);
    const double oracle = oracle_two_hg_ueV(10.7, n, 1.28, 1.3);
    CHECK(std::abs(2e6 * hg - oracle) / oracle < 1e-9);
    CHECK(std::abs(hg * 1e6 - 104.0) < 0.5);
    CHECK(std::abs(2e6 * hg - 200.0) / 200.0 < 0.05);
}

TEST_CASE("coupling constant scaling") {
    const double V = 2.85e-20;
    const double hg = coupling_constant(10.7, V, 11.97);
    CHECK(coupling_constant(10.7, 4.0 * V, 11.97) == doctest::Approx(hg / 2.0).epsilon(1e-14));
    for (double c : {0.1, 2.0, 17.0})
        CHECK(coupling_constant(10.7, c * V, 11.97) == doctest::Approx(hg / std::sqrt(c)).epsilon(1e-13));
    CHECK(coupling_constant(0.0, V, 11.97) == 0.0);
    CHECK_THROWS_AS(coupling_constant(10.7, -1.0, 11.97), ParameterError);
}

TEST_CASE("loss-corrected Rabi splitting") {
    CHECK(rabi_splitting(sys_of(100e-6, 90e-6, 90e-6)) == doctest::Approx(200e-6).epsilon(1e-14));
    CHECK(std::abs(rabi_splitting(sys_of(72.94e-6, 160e-6, 78e-6)) * 1e6 - 140.0) < 0.1);
    CHECK(std::abs(rabi_splitting(sys_of(104e-6, 160e-6, 78e-6)) * 1e6 - 203.9) < 0.05);
    // Exactly at and below the threshold |Gc - Gx|/4.
    CHECK(rabi_splitting(sys_of(20.5e-6, 160e-6, 78e-6)) == 0.0);
    CHECK(rabi_splitting(sys_of(10e-6, 160e-6, 78e-6)) == 0.0);
}

TEST_CASE("coupling recovered from the measured splitting by a scalar root solve") {
    // Bisection on hg for dE(hg) = 140 ueV.
    double lo = 20.5e-6, hi = 200e-6;
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        (rabi_splitting(sys_of(mid, 160e-6, 78e-6)) < 140e-6 ? lo : hi) = mid;
    }
    CHECK(std::abs(lo * 1e6 - 72.94) < 0.005);
}

TEST_CASE("eigenmodes: zero coupling and the perturbative limit") {
    auto s = sys_of(0.0, 160e-6, 78e-6, 1.2805, 1.28);
    auto m = eigenmodes(s);
    CHECK(m.lambda_plus.real() == doctest::Approx(1.2805).epsilon(1e-15));
    CHECK(m.lambda_plus.imag() == doctest::Approx(-39e-6).epsilon(1e-12));
    CHECK(m.lambda_minus.real() == doctest::Approx(1.28).epsilon(1e-15));
    CHECK(m.lambda_minus.imag() == doctest::Approx(-80e-6).epsilon(1e-12));

    const double hg = 72.94e-6;
    s = sys_of(hg, 160e-6, 78e-6, 1.28 + 50.0 * hg, 1.28);
    m = eigenmodes(s);
    CHECK(std::abs(m.E_plus - s.Ex_eV) < hg / 50.0);
    CHECK(std::abs(m.E_minus - s.Ec_eV) < hg / 50.0);
    CHECK(m.excitonic_plus > 0.999);
    CHECK(m.photonic_minus > 0.999);
}

TEST_CASE("eigenmodes: identities over random systems") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> E(1.2, 1.4), G(1e-6, 400e-6), H(0.0, 300e-6), D(-1e-3, 1e-3);
    double worst_split = 0.0, worst_trace = 0.0, worst_weights = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const double Ec = E(rng);
        auto s = sys_of(H(rng), G(rng), G(rng), Ec, Ec);
        const double dE = rabi_splitting(s);
        const auto m = eigenmodes(s);
        if (dE > 0.0) worst_split = std::max(worst_split, std::abs(m.splitting - dE) / dE);
        else worst_split = std::max(worst_split, std::abs(m.splitting) / s.hg_eV);

        s.Ex_eV = Ec + D(rng);
        const auto md = eigenmodes(s);
        const std::complex<double> trace(s.Ex_eV + s.Ec_eV, -(s.Gx_eV + s.Gc_eV) / 2.0);
        worst_trace = std::max(worst_trace, std::abs(md.lambda_plus + md.lambda_minus - trace) / std::abs(trace));
        worst_weights = std::max({worst_weights, std::abs(md.photonic_plus + md.excitonic_plus - 1.0),
                                  std::abs(md.photonic_minus + md.excitonic_minus - 1.0)});
    }
    CHECK(worst_split <= 1e-12);
    CHECK(worst_trace <= 1e-12);
    CHECK(worst_weights <= 1e-12);
}

TEST_CASE("equal linewidths at zero detuning") {
    const auto m = eigenmodes(sys_of(72.94e-6, 160e-6, 78e-6));
    CHECK(m.G_plus == doctest::Approx(119e-6).epsilon(1e-12));
    CHECK(m.G_minus == doctest::Approx(119e-6).epsilon(1e-12));
}

TEST_CASE("branch energies agree with the eigenmodes") {
    const auto s = sys_of(72.94e-6, 160e-6, 78e-6, 1.2803, 1.28);
    const auto m = eigenmodes(s);
    const auto [lo, up] = branch_energies(s.Ex_eV - 1.28, s.Ec_eV - 1.28, s.Gx_eV, s.Gc_eV, s.hg_eV);
    CHECK(lo + 1.28 == doctest::Approx(m.E_minus).epsilon(1e-15));
    CHECK(up + 1.28 == doctest::Approx(m.E_plus).epsilon(1e-15));
}

TEST_CASE("splitting is monotone in the coupling") {
    double prev = -1.0;
    for (double hg = 0.0; hg <= 300e-6; hg += 1e-6) {
        const double d = rabi_splitting(sys_of(hg, 160e-6, 78e-6));
        CHECK(d >= prev);
        prev = d;
    }
}

TEST_CASE("strong-coupling test") {
    const auto v = strong_coupling_test(140e-6, 160e-6);
    CHECK(v.strong);
    CHECK(v.margin_eV == doctest::Approx(60e-6).epsilon(1e-12));
    CHECK_FALSE(strong_coupling_test(80e-6, 160e-6).strong);
    CHECK_FALSE(strong_coupling_test(50e-6, 160e-6).strong);
}

TEST_CASE("splitting versus Q") {
    const auto grid = log_q_grid(1e3, 1e5, 201);
    const auto c = splitting_vs_q(1.28, 104e-6, 78e-6, grid);
    CHECK(std::abs(c.onset_q_closed_form - 2591.0) <= 1.0);
    CHECK(c.onset_q_closed_form == doctest::Approx(1.28 / (4 * 104e-6 + 78e-6)).epsilon(1e-14));
    REQUIRE(c.onset_q);
    CHECK(*c.onset_q >= c.onset_q_closed_form);
    // dE rises until Gc = E0/Q reaches Gx, then falls slowly as |Gc - Gx| reopens.
    const double q_peak = 1.28 / 78e-6;
    for (std::size_t k = 1; k < c.dE_eV.size(); ++k) {
        if (c.q[k] <= q_peak) CHECK(c.dE_eV[k] >= c.dE_eV[k - 1]);
        else if (c.q[k - 1] >= q_peak) CHECK(c.dE_eV[k] <= c.dE_eV[k - 1]);
    }
    const auto lossless_exciton = splitting_vs_q(1.28, 104e-6, 1e-15, grid);
    for (std::size_t k = 1; k < grid.size(); ++k) CHECK(lossless_exciton.dE_eV[k] >= lossless_exciton.dE_eV[k - 1]);
    CoupledSystem s = sys_of(104e-6, 1.28 / 1e4, 78e-6);
    const double at_1e4 = rabi_splitting(s);
    CHECK(std::abs(at_1e4 * 1e6 - 206.5) < 0.1);
    CHECK(at_1e4 / 208e-6 >= 0.99);
    s.Gc_eV = 1.28 / 1e12;
    CHECK(rabi_splitting(s) == doctest::Approx(2.0 * std::sqrt(104e-6 * 104e-6 - 19.5e-6 * 19.5e-6)).epsilon(1e-9));
    s.Gx_eV = 1e-15;
    CHECK(rabi_splitting(s) == doctest::Approx(2 * 104e-6).epsilon(1e-9));
    CHECK_THROWS_AS(log_q_grid(10, 5, 10), ParameterError);
}

TEST_CASE("temperature tuning") {
    const TuningModel t;
    CHECK(exciton_energy(0.0, t) == t.Ex0_eV);
    double prev = 1e9;
    for (double T = 0; T <= 300; T += 5) {
        const double e = exciton_energy(T, t);
        CHECK(e < prev);
        prev = e;
    }
    const double shift = exciton_energy(30, t) - exciton_energy(5, t);
    CHECK(std::abs(shift * 1e3 + 2.014) < 1e-3);
    CHECK(cavity_energy(25.0, t) == t.Ec0_eV);
    TuningModel d;
    d.drift_eV_per_K = 2e-6;
    CHECK((cavity_energy(25.0, d) - cavity_energy(0.0, d)) == doctest::Approx(50e-6).epsilon(1e-9));
    CHECK_THROWS_AS(exciton_energy(-1.0, t), ParameterError);
}

TEST_CASE("system validation") {
    auto s = sys_of(72.94e-6, -1.0, 78e-6);
    CHECK_THROWS_AS(s.validate(), ParameterError);
    s = sys_of(-1e-6, 160e-6, 78e-6);
    CHECK_THROWS_AS(s.validate(), ParameterError);
}

}  // TEST_SUITE
