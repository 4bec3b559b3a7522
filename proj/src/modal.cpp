#include "qdcav/modal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "qdcav/constants.hpp"
#include "qdcav/error.hpp"

namespace qdcav::modal {

namespace {

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

// One-sided power spectrum of a real sequence zero-padded to `n`.
std::vector<double> periodogram(const std::vector<double>& x, std::size_t n) {
    std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
    std::unique_ptr<fftw_complex, FftwFree> out(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1))));
    std::fill(in.get(), in.get() + n, 0.0);
    std::copy(x.begin(), x.end(), in.get());
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    std::vector<double> p(n / 2 + 1);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = out.get()[k][0] * out.get()[k][0] + out.get()[k][1] * out.get()[k][1];
    return p;
}

}  // namespace

std::vector<ResonancePeak> resonance_scan(const fdtd::TimeSeries& series, long t_min) {
    if (t_min < 0) throw ParameterError("resonance_scan: t_min must be >= 0");
    if (!(series.dt_s > 0.0)) throw ParameterError("resonance_scan: dt must be > 0");
    const long n_total = static_cast<long>(series.samples.size());
    if (n_total - t_min < kMinScanSamples)
        throw ParameterError("resonance_scan: need >= 2048 samples after t_min");

    const std::size_t len = static_cast<std::size_t>(n_total - t_min);
    std::vector<double> x(series.samples.begin() + t_min, series.samples.end());
    for (std::size_t k = 0; k < len; ++k) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * phys::pi * (k + 0.5) / len);
        x[k] *= w;
    }
    const std::size_t n = next_pow2(kPadFactor * len);
    const auto p = periodogram(x, n);

    std::vector<double> sorted(p.begin() + 1, p.end());
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double p_max = *std::max_element(p.begin() + 1, p.end());
    const double floor = std::max(10.0 * median, 1e-3 * p_max);

    std::vector<ResonancePeak> peaks;
    const double df = 1.0 / (static_cast<double>(n) * series.dt_s);
    for (std::size_t k = 1; k + 1 < p.size(); ++k) {
        if (!(p[k] > p[k - 1] && p[k] >= p[k + 1] && p[k] > floor)) continue;
        // Parabolic vertex through the three bins around the maximum.
        const double a = p[k - 1], b = p[k], c = p[k + 1];
        const double denom = a - 2.0 * b + c;
        const double delta = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
        const double peak = b - 0.25 * (a - c) * delta;
        const double f = (static_cast<double>(k) + delta) * df;
        peaks.push_back({phys::hz_to_ev(f), f, std::sqrt(std::max(peak, 0.0))});
    }
    if (peaks.empty() || !(p_max > 10.0 * median))
        throw NoResonanceError("resonance_scan: no peak above 10x the median spectral floor");
    std::sort(peaks.begin(), peaks.end(),
              [](const ResonancePeak& l, const ResonancePeak& r) { return l.amplitude > r.amplitude; });
    return peaks;
}

DecayFit q_from_decay(const fdtd::TimeSeries& series, double E0_eV, long t_min, double min_r2) {
    if (!(E0_eV > 0.0)) throw ParameterError("q_from_decay: E0 must be > 0");
    if (!(series.dt_s > 0.0)) throw ParameterError("q_from_decay: dt must be > 0");
    if (t_min < 0) throw ParameterError("q_from_decay: t_min must be >= 0");
    const double f0 = phys::ev_to_hz(E0_eV);
    const double omega0 = 2.0 * phys::pi * f0;
    const double period = 1.0 / (f0 * series.dt_s);  // samples per optical period
    if (period < 4.0) throw ParameterError("q_from_decay: fewer than 4 samples per optical period");

    // Per-period mean square on windows of exactly one period; the partial
    // sample at the window end gets fractional weight.
    std::vector<double> t, y;
    const auto& s = series.samples;
    const double n_total = static_cast<double>(s.size());
    for (double start = static_cast<double>(t_min); start + period + 1.0 <= n_total; start += period) {
        const double end = start + period;
        const auto k0 = static_cast<std::size_t>(std::ceil(start));
        const auto k1 = static_cast<std::size_t>(std::floor(end));
        double acc = 0.0;
        for (std::size_t k = k0; k < k1; ++k) acc += s[k] * s[k];
        acc += (end - static_cast<double>(k1)) * s[k1] * s[k1];
        acc += (static_cast<double>(k0) - start) * s[k0 > 0 ? k0 - 1 : 0] * s[k0 > 0 ? k0 - 1 : 0];
        const double ms = acc / period;
        if (!(ms > 0.0)) break;
        t.push_back((start + 0.5 * period) * series.dt_s);
        y.push_back(std::log(ms));
    }
    if (t.size() < 8) throw ParameterError("q_from_decay: post-source window shorter than 8 optical periods");

    // A rebound of more than 10% in envelope power over its running minimum
    // means two or more modes are beating.
    double run_min = y.front();
    for (double v : y) {
        if (v - run_min > std::log(1.1))
            throw MultimodeError(
                "q_from_decay: envelope is not monotone (multiple modes beating); "
                "narrow the source bandwidth around the target resonance");
        run_min = std::min(run_min, v);
    }

    const double n = static_cast<double>(t.size());
    const double tm = std::accumulate(t.begin(), t.end(), 0.0) / n;
    const double ym = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        sxx += (t[k] - tm) * (t[k] - tm);
        sxy += (t[k] - tm) * (y[k] - ym);
        syy += (y[k] - ym) * (y[k] - ym);
    }
    DecayFit fit;
    fit.windows = t.size();
    fit.slope_per_s = sxy / sxx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;

    const double decay = -fit.slope_per_s;
    if (!(decay > omega0 / kQCap)) {
        fit.Q = kQCap;
        fit.lower_bound = true;
        return fit;
    }
    fit.Q = omega0 / decay;
    if (fit.r2 < min_r2)
        throw NumericError("q_from_decay: log-envelope fit r^2 = " + std::to_string(fit.r2) + " below " +
                           std::to_string(min_r2));
    return fit;
}

double q_from_flux(double stored_energy, double leaked_power, double E0_eV) {
    if (!(E0_eV > 0.0)) throw ParameterError("q_from_flux: E0 must be > 0");
    if (!(stored_energy > 0.0)) throw ParameterError("q_from_flux: stored energy must be > 0");
    if (!(leaked_power > 0.0))
        throw FluxSignError("q_from_flux: outward flux is not positive (flux box too small or inside the PML)");
    return 2.0 * phys::pi * phys::ev_to_hz(E0_eV) * stored_energy / leaked_power;
}

ModeVolume mode_volume(const fdtd::FieldMap& field, const geometry::DielectricMap& eps, double height_eff_nm,
                       double E0_eV, double n, int edge_cells) {
    if (field.nx != eps.nx || field.ny != eps.ny) throw ParameterError("mode_volume: field and eps grids differ");
    if (!(height_eff_nm > 0.0) || !(E0_eV > 0.0) || !(n > 0.0))
        throw ParameterError("mode_volume: height, E0 and n must be > 0");
    double sum = 0.0, peak = -1.0;
    int pi = 0, pj = 0;
    for (int j = 0; j < field.ny; ++j)
        for (int i = 0; i < field.nx; ++i) {
            const double u = eps.at(i, j) * field.e2(i, j);
            sum += u;
            if (u > peak) {
                peak = u;
                pi = i;
                pj = j;
            }
        }
    if (!(peak > 0.0)) throw NumericError("mode_volume: field map is identically zero");

    ModeVolume v;
    const double dx = field.dx_nm;
    v.V2d_nm2 = sum / peak * dx * dx;
    v.V_nm3 = v.V2d_nm2 * height_eff_nm;
    v.V_um3 = v.V_nm3 * 1e-9;
    v.lambda0_nm = phys::ev_to_nm(E0_eV);
    v.V_lambda_n3 = v.V_nm3 / std::pow(v.lambda0_nm / n, 3);
    v.peak_i = pi;
    v.peak_j = pj;
    v.peak_x_nm = field.origin_x_nm + pi * dx;
    v.peak_y_nm = field.origin_y_nm + pj * dx;
    if (pi < edge_cells || pj < edge_cells || pi >= field.nx - edge_cells || pj >= field.ny - edge_cells)
        v.warning = "energy-density maximum lies at the grid boundary: mode not confined";
    return v;
}

nlohmann::json to_json(const ModeCharacterization& m) {
    nlohmann::json j = {{"E0_eV", m.E0_eV},
                        {"Q", m.Q},
                        {"q_method", m.q_method},
                        {"q_lower_bound", m.q_lower_bound},
                        {"q_fit_r2", m.q_fit_r2},
                        {"V_um3", m.V_um3 > 0.0 ? nlohmann::json(m.V_um3) : nlohmann::json(nullptr)},
                        {"V_lambda_n3", m.V_lambda_n3 > 0.0 ? nlohmann::json(m.V_lambda_n3) : nlohmann::json(nullptr)},
                        {"height_eff_nm", m.height_eff_nm},
                        {"n_index", m.n_index},
                        {"volume_convention", "peak-normalized energy (Purcell)"}};
    if (m.q_flux) j["Q_flux"] = *m.q_flux;
    if (m.warning) j["warning"] = *m.warning;
    return j;
}

ModeCharacterization mode_from_json(const nlohmann::json& j) {
    ModeCharacterization m;
    try {
        m.E0_eV = j.at("E0_eV").get<double>();
        m.Q = j.at("Q").get<double>();
        m.q_method = j.value("q_method", m.q_method);
        m.q_lower_bound = j.value("q_lower_bound", false);
        m.q_fit_r2 = j.value("q_fit_r2", 0.0);
        if (!j.at("V_um3").is_null()) m.V_um3 = j["V_um3"].get<double>();
        if (!j.at("V_lambda_n3").is_null()) m.V_lambda_n3 = j["V_lambda_n3"].get<double>();
        m.height_eff_nm = j.value("height_eff_nm", m.height_eff_nm);
        m.n_index = j.value("n_index", m.n_index);
        if (j.contains("Q_flux")) m.q_flux = j["Q_flux"].get<double>();
        if (j.contains("warning")) m.warning = j["warning"].get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
        throw IoError(std::string("mode characterization JSON incomplete: ") + ex.what());
    }
    return m;
}

}  // namespace qdcav::modal
