#include "qdcav/cqed.hpp"

#include <cmath>

#include "qdcav/constants.hpp"
#include "qdcav/error.hpp"

namespace qdcav::cqed {

void CoupledSystem::validate() const {
    if (!(Ex_eV > 0.0 && Ec_eV > 0.0)) throw ParameterError("coupled system: energies must be > 0");
    if (!(Gx_eV > 0.0 && Gc_eV > 0.0)) throw ParameterError("coupled system: linewidths must be > 0");
    if (!(hg_eV >= 0.0)) throw ParameterError("coupled system: hg >= 0 violated");
}

void TuningModel::validate() const {
    if (!(alpha_eV_per_K >= 0.0)) throw ParameterError("tuning: alpha >= 0 violated");
    if (!(beta_K > 0.0)) throw ParameterError("tuning: beta > 0 violated");
}

double coupling_constant(double f, double V_m3, double eps_r) {
    if (!(f >= 0.0)) throw ParameterError("coupling_constant: f >= 0 violated");
    if (!(V_m3 > 0.0)) throw ParameterError("coupling_constant: V > 0 violated");
    if (!(eps_r >= 1.0)) throw ParameterError("coupling_constant: eps_r >= 1 violated");
    const double g2 = 1.0 / (4.0 * phys::pi * phys::eps0 * eps_r) * phys::pi * phys::e * phys::e * f /
                      (phys::m_e * V_m3);
    return phys::hbar * std::sqrt(g2) / phys::e;
}

double mode_volume_m3(double V_lambda_n3, double E0_eV, double n) {
    if (!(V_lambda_n3 > 0.0 && E0_eV > 0.0 && n > 0.0)) throw ParameterError("mode_volume_m3: inputs must be > 0");
    const double lambda_m = phys::ev_to_nm(E0_eV) * 1e-9;
    return V_lambda_n3 * std::pow(lambda_m / n, 3);
}

double rabi_splitting(const CoupledSystem& sys) {
    const double loss = (sys.Gc_eV - sys.Gx_eV) / 4.0;
    const double radicand = sys.hg_eV * sys.hg_eV - loss * loss;
    return radicand > 0.0 ? 2.0 * std::sqrt(radicand) : 0.0;
}

Eigenmodes eigenmodes(const CoupledSystem& sys) {
    sys.validate();
    using C = std::complex<double>;
    // Work relative to the mean energy so the splitting keeps full precision.
    const double mean = 0.5 * (sys.Ex_eV + sys.Ec_eV);
    const C a(sys.Ex_eV - mean, -sys.Gx_eV / 2.0);
    const C b(sys.Ec_eV - mean, -sys.Gc_eV / 2.0);
    const C half_sum = 0.5 * (a + b);
    const C half_diff = 0.5 * (a - b);
    C root = std::sqrt(sys.hg_eV * sys.hg_eV + half_diff * half_diff);
    if (root.real() < 0.0) root = -root;
    C up = half_sum + root;
    C down = half_sum - root;

    auto weights = [&](C lambda, double& photonic, double& excitonic) {
        // Eigenvector of [[a, g], [g, b]]: both (g, lambda - a) and
        // (lambda - b, g) are valid; take the better-conditioned one.
        C vx = sys.hg_eV, vc = lambda - a;
        const C wx = lambda - b, wc = sys.hg_eV;
        if (std::norm(wx) + std::norm(wc) > std::norm(vx) + std::norm(vc)) {
            vx = wx;
            vc = wc;
        }
        const double nrm = std::norm(vx) + std::norm(vc);
        if (nrm == 0.0) {
            // Fully degenerate and uncoupled: split evenly.
            photonic = excitonic = 0.5;
            return;
        }
        excitonic = std::norm(vx) / nrm;
        photonic = std::norm(vc) / nrm;
    };

    Eigenmodes m;
    m.splitting = 2.0 * root.real();
    m.lambda_plus = up + mean;
    m.lambda_minus = down + mean;
    m.E_plus = m.lambda_plus.real();
    m.E_minus = m.lambda_minus.real();
    m.G_plus = -2.0 * up.imag();
    m.G_minus = -2.0 * down.imag();
    weights(up, m.photonic_plus, m.excitonic_plus);
    weights(down, m.photonic_minus, m.excitonic_minus);
    return m;
}

std::pair<double, double> branch_energies(double Ex, double Ec, double Gx, double Gc, double hg) {
    using C = std::complex<double>;
    const double mean = 0.5 * (Ex + Ec);
    const C half_diff(0.5 * (Ex - Ec), (Gc - Gx) / 4.0);
    const double root = std::abs(std::sqrt(hg * hg + half_diff * half_diff).real());
    return {mean - root, mean + root};
}

StrongCouplingVerdict strong_coupling_test(double dE_eV, double Gc_eV) {
    if (!(dE_eV > 0.0) || !(Gc_eV > 0.0)) throw ParameterError("strong_coupling_test: inputs must be > 0");
    return {dE_eV > Gc_eV / 2.0, dE_eV - Gc_eV / 2.0};
}

SplittingCurve splitting_vs_q(double E0_eV, double hg_eV, double Gx_eV, const std::vector<double>& q_grid) {
    if (!(E0_eV > 0.0) || !(hg_eV >= 0.0) || !(Gx_eV > 0.0))
        throw ParameterError("splitting_vs_q: E0 > 0, hg >= 0, Gx > 0 required");
    for (std::size_t k = 0; k < q_grid.size(); ++k) {
        if (!(q_grid[k] > 0.0)) throw ParameterError("splitting_vs_q: Q grid must be positive");
        if (k > 0 && !(q_grid[k] > q_grid[k - 1])) throw ParameterError("splitting_vs_q: Q grid must be ascending");
    }
    SplittingCurve curve;
    curve.onset_q_closed_form = E0_eV / (4.0 * hg_eV + Gx_eV);
    curve.saturation_q_closed_form =
        E0_eV / (Gx_eV + 4.0 * hg_eV * std::sqrt(1.0 - kSaturationFraction * kSaturationFraction));
    const double target = kSaturationFraction * 2.0 * hg_eV;
    for (double q : q_grid) {
        CoupledSystem sys;
        sys.Gc_eV = E0_eV / q;
        sys.Gx_eV = Gx_eV;
        sys.hg_eV = hg_eV;
        const double dE = rabi_splitting(sys);
        curve.q.push_back(q);
        curve.dE_eV.push_back(dE);
        if (!curve.onset_q && dE > 0.0) curve.onset_q = q;
        if (!curve.saturation_q && hg_eV > 0.0 && dE >= target) curve.saturation_q = q;
    }
    return curve;
}

std::vector<double> log_q_grid(double q_min, double q_max, int points) {
    if (!(q_min > 0.0 && q_max > q_min) || points < 2) throw ParameterError("log_q_grid: bad range");
    std::vector<double> g(points);
    const double l0 = std::log(q_min), l1 = std::log(q_max);
    for (int k = 0; k < points; ++k) g[k] = std::exp(l0 + (l1 - l0) * k / (points - 1));
    g.front() = q_min;
    g.back() = q_max;
    return g;
}

double exciton_energy(double T, const TuningModel& model) {
    if (!(T >= 0.0)) throw ParameterError("exciton_energy: T >= 0 violated");
    model.validate();
    return model.Ex0_eV - model.alpha_eV_per_K * T * T / (T + model.beta_K);
}

double cavity_energy(double T, const TuningModel& model) {
    if (!(T >= 0.0)) throw ParameterError("cavity_energy: T >= 0 violated");
    return model.Ec0_eV + model.drift_eV_per_K * T;
}

}  // namespace qdcav::cqed
