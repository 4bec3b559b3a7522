#include "qdcav/spectra.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>

#include "qdcav/error.hpp"
#include "qdcav/lm.hpp"
#include "qdcav/textio.hpp"

namespace qdcav::spectra {

void Spectrum::validate() const {
    if (energies_eV.size() != intensities.size())
        throw ParameterError("spectrum: energy and intensity arrays differ in length");
    if (energies_eV.size() < kMinSpectrumPoints)
        throw ParameterError("spectrum: at least 16 points required");
    for (std::size_t k = 0; k < energies_eV.size(); ++k) {
        if (!std::isfinite(energies_eV[k]) || !std::isfinite(intensities[k]))
            throw ParameterError("spectrum: non-finite sample");
        if (k > 0 && !(energies_eV[k] > energies_eV[k - 1]))
            throw ParameterError("spectrum: energies must be strictly ascending");
    }
}

double lorentzian(double E, double A, double E0, double G, double b) {
    if (!(G > 0.0)) throw ParameterError("lorentzian: FWHM must be > 0");
    const double h = 0.5 * G;
    const double d = E - E0;
    return b + A * h * h / (d * d + h * h);
}

// Synthesis ------------------------------------------------------------------

SpectrumSeries synthesize(const cqed::CoupledSystem& sys, const cqed::TuningModel& tuning,
                          const std::vector<double>& temperatures_K, const SynthesisOptions& opts) {
    tuning.validate();
    if (temperatures_K.empty()) throw ParameterError("synthesize: no temperatures");
    for (std::size_t k = 1; k < temperatures_K.size(); ++k)
        if (!(temperatures_K[k] > temperatures_K[k - 1]))
            throw ParameterError("synthesize: temperatures must be ascending");
    if (!(opts.step_eV > 0.0)) throw ParameterError("synthesize: step must be > 0");
    if (!(opts.noise_rms >= 0.0) || !(opts.resolution_fwhm_eV >= 0.0) || !(opts.margin_eV >= 0.0))
        throw ParameterError("synthesize: noise, resolution and margin must be >= 0");

    std::vector<cqed::Eigenmodes> modes;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, widest = 0.0;
    for (double T : temperatures_K) {
        cqed::CoupledSystem s = sys;
        s.Ex_eV = cqed::exciton_energy(T, tuning);
        s.Ec_eV = cqed::cavity_energy(T, tuning);
        modes.push_back(cqed::eigenmodes(s));
        const auto& m = modes.back();
        lo = std::min(lo, m.E_minus);
        hi = std::max(hi, m.E_plus);
        widest = std::max({widest, m.G_minus, m.G_plus});
    }
    const double margin = opts.margin_eV > 0.0 ? opts.margin_eV : 8.0 * widest;
    lo -= margin;
    hi += margin;
    const auto n = std::max<std::size_t>(kMinSpectrumPoints, static_cast<std::size_t>(std::ceil((hi - lo) / opts.step_eV)) + 1);

    // Gaussian instrument response on a grid extended by 5 sigma either side.
    const double sigma_res = opts.resolution_fwhm_eV / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const long ext = sigma_res > 0.0 ? static_cast<long>(std::ceil(5.0 * sigma_res / opts.step_eV)) : 0;
    std::vector<double> kernel(2 * ext + 1, 1.0);
    if (ext > 0) {
        for (long k = -ext; k <= ext; ++k) {
            const double u = k * opts.step_eV / sigma_res;
            kernel[k + ext] = std::exp(-0.5 * u * u);
        }
        const double s = std::accumulate(kernel.begin(), kernel.end(), 0.0);
        for (double& v : kernel) v /= s;
    }

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SpectrumSeries out;
    out.reserve(temperatures_K.size());
    std::vector<double> raw(n + 2 * ext);
    for (std::size_t t = 0; t < temperatures_K.size(); ++t) {
        const auto& m = modes[t];
        const bool equal = opts.amplitude_model == AmplitudeModel::Equal;
        const double a_minus = equal ? 0.5 : m.photonic_minus;
        const double a_plus = equal ? 0.5 : m.photonic_plus;
        for (std::size_t k = 0; k < raw.size(); ++k) {
            const double E = lo + (static_cast<double>(k) - ext) * opts.step_eV;
            raw[k] = lorentzian(E, a_minus, m.E_minus, m.G_minus, 0.0) + lorentzian(E, a_plus, m.E_plus, m.G_plus, 0.0);
        }
        Spectrum s;
        s.temperature_K = temperatures_K[t];
        s.energies_eV.resize(n);
        s.intensities.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            s.energies_eV[k] = lo + static_cast<double>(k) * opts.step_eV;
            double v = 0.0;
            for (long q = -ext; q <= ext; ++q) v += kernel[q + ext] * raw[k + ext + q];
            s.intensities[k] = v;
        }
        if (opts.noise_rms > 0.0)
            for (double& v : s.intensities) v += opts.noise_rms * gauss(rng);
        out.push_back(std::move(s));
    }
    return out;
}

// Peak fitting ---------------------------------------------------------------

namespace {

// Fit frame: u = (E - mid) / span, y = I / scale. Parameters per peak are
// (A, u0, G) followed by one baseline.
struct Frame {
    double mid = 0.0, span = 1.0, scale = 1.0;
    std::vector<double> u, y;
};

Frame make_frame(const Spectrum& spec) {
    Frame f;
    f.mid = 0.5 * (spec.energies_eV.front() + spec.energies_eV.back());
    f.span = spec.span();
    double m = 0.0;
    for (double v : spec.intensities) m = std::max(m, std::abs(v));
    f.scale = m > 0.0 ? m : 1.0;
    f.u.resize(spec.energies_eV.size());
    f.y.resize(spec.energies_eV.size());
    for (std::size_t k = 0; k < f.u.size(); ++k) {
        f.u[k] = (spec.energies_eV[k] - f.mid) / f.span;
        f.y[k] = spec.intensities[k] / f.scale;
    }
    return f;
}

double model_at(const lm::Vector& x, double u, int n_peaks) {
    double v = x[3 * n_peaks];
    for (int p = 0; p < n_peaks; ++p) {
        const double h = 0.5 * x[3 * p + 2];
        const double d = u - x[3 * p + 1];
        v += x[3 * p] * h * h / (d * d + h * h);
    }
    return v;
}

// Local maxima ranked by topographic prominence.
std::vector<std::size_t> prominent_maxima(const std::vector<double>& y) {
    const std::size_t n = y.size();
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (!(y[k] > y[k - 1] && y[k] >= y[k + 1])) continue;
        double left_min = y[k];
        std::size_t l = k;
        while (l > 0 && y[l - 1] <= y[k]) left_min = std::min(left_min, y[--l]);
        double right_min = y[k];
        std::size_t r = k;
        while (r + 1 < n && y[r + 1] <= y[k]) right_min = std::min(right_min, y[++r]);
        ranked.emplace_back(y[k] - std::max(left_min, right_min), k);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> idx;
    for (const auto& r : ranked) idx.push_back(r.second);
    return idx;
}

double percentile(std::vector<double> v, double q) {
    const auto k = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + static_cast<long>(k), v.end());
    return v[k];
}

}  // namespace

PeakFit fit_peaks(const Spectrum& spec, int n_peaks, const std::optional<std::vector<PeakInit>>& init,
                  const FitOptions& opts) {
    spec.validate();
    if (n_peaks < 1 || n_peaks > 4) throw ParameterError("fit_peaks: n_peaks must be in [1, 4]");
    if (init && static_cast<int>(init->size()) != n_peaks)
        throw ParameterError("fit_peaks: init size differs from n_peaks");

    const Frame f = make_frame(spec);
    const std::size_t n = f.u.size();
    const auto [ymin, ymax] = std::minmax_element(f.y.begin(), f.y.end());
    if (!(*ymax - *ymin > 1e-12)) throw DegenerateFitError("fit_peaks: flat spectrum");

    double min_step = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < n; ++k) min_step = std::min(min_step, f.u[k] - f.u[k - 1]);
    const double g_floor = opts.min_fwhm_eV > 0.0 ? opts.min_fwhm_eV / f.span : min_step;
    const double g_ceil = 0.5;
    if (!(g_floor < g_ceil)) throw ParameterError("fit_peaks: FWHM floor exceeds half the span");

    const int np = 3 * n_peaks + 1;
    lm::Vector lower(np), upper(np);
    const double inf = std::numeric_limits<double>::infinity();
    for (int p = 0; p < n_peaks; ++p) {
        lower.segment(3 * p, 3) << 0.0, f.u.front(), g_floor;
        upper.segment(3 * p, 3) << inf, f.u.back(), g_ceil;
    }
    lower[np - 1] = -inf;
    upper[np - 1] = inf;

    // Model samples: the data abscissae, or a uniform grid extended on both
    // sides when the instrument response is convolved in.
    std::vector<double> ue = f.u;
    std::vector<double> kernel{1.0};
    long ext = 0;
    if (opts.resolution_fwhm_eV > 0.0) {
        const double step = (f.u.back() - f.u.front()) / static_cast<double>(n - 1);
        for (std::size_t k = 1; k < n; ++k)
            if (std::abs(f.u[k] - f.u[k - 1] - step) > 1e-3 * step)
                throw ParameterError("fit_peaks: resolution deconvolution needs a uniform energy grid");
        const double sigma = opts.resolution_fwhm_eV / (2.0 * std::sqrt(2.0 * std::log(2.0))) / f.span;
        ext = static_cast<long>(std::ceil(5.0 * sigma / step));
        kernel.assign(2 * ext + 1, 0.0);
        for (long q = -ext; q <= ext; ++q) kernel[q + ext] = std::exp(-0.5 * std::pow(q * step / sigma, 2));
        const double ks = std::accumulate(kernel.begin(), kernel.end(), 0.0);
        for (double& v : kernel) v /= ks;
        ue.resize(n + 2 * ext);
        for (std::size_t m = 0; m < ue.size(); ++m) ue[m] = f.u.front() + (static_cast<double>(m) - ext) * step;
    }
    auto smear = [&](const auto& col, std::size_t k) {
        double v = 0.0;
        for (long q = -ext; q <= ext; ++q) v += kernel[q + ext] * col(k + ext + q);
        return v;
    };

    lm::Problem prob;
    prob.lower = lower;
    prob.upper = upper;
    prob.residuals = [&](const lm::Vector& x) {
        std::vector<double> mod(ue.size());
        for (std::size_t m = 0; m < ue.size(); ++m) mod[m] = model_at(x, ue[m], n_peaks);
        lm::Vector r(n);
        for (std::size_t k = 0; k < n; ++k) r[k] = smear([&](std::size_t m) { return mod[m]; }, k) - f.y[k];
        return r;
    };
    prob.jacobian = [&](const lm::Vector& x) {
        lm::Matrix Je(ue.size(), np);
        for (std::size_t m = 0; m < ue.size(); ++m) {
            for (int p = 0; p < n_peaks; ++p) {
                const double A = x[3 * p], u0 = x[3 * p + 1], G = x[3 * p + 2];
                const double h2 = 0.25 * G * G;
                const double d = ue[m] - u0;
                const double den = d * d + h2;
                Je(m, 3 * p) = h2 / den;
                Je(m, 3 * p + 1) = A * h2 * 2.0 * d / (den * den);
                Je(m, 3 * p + 2) = A * 0.5 * G * d * d / (den * den);
            }
            Je(m, np - 1) = 1.0;
        }
        if (ext == 0) return Je;
        lm::Matrix J(n, np);
        for (int c = 0; c < np; ++c)
            for (std::size_t k = 0; k < n; ++k) J(k, c) = smear([&](std::size_t m) { return Je(m, c); }, k);
        return J;
    };
    const double g0 = std::clamp(2.0 * (f.u.back() - f.u.front()) / static_cast<double>(n - 1), g_floor, g_ceil);
    const double b0 = percentile(f.y, 0.1);
    lm::Options lo;
    lo.max_iterations = opts.max_iterations;
    lm::Result res;
    if (init) {
        lm::Vector x0(np);
        for (int p = 0; p < n_peaks; ++p) {
            const auto& pi = (*init)[p];
            x0.segment(3 * p, 3) << pi.A / f.scale, (pi.E0_eV - f.mid) / f.span, pi.fwhm_eV / f.span;
        }
        x0[np - 1] = b0;
        res = lm::minimize(prob, x0, lo);
    } else {
        // Seed from the most prominent local maxima.
        lm::Vector x0(np);
        x0[np - 1] = b0;
        const auto maxima = prominent_maxima(f.y);
        for (int p = 0; p < n_peaks; ++p) {
            if (p < static_cast<int>(maxima.size())) {
                const std::size_t k = maxima[p];
                x0.segment(3 * p, 3) << std::max(f.y[k] - b0, 0.0), f.u[k], g0;
            } else {
                x0.segment(3 * p, 3) << 0.0, 0.0, g0;
            }
        }
        res = lm::minimize(prob, x0, lo);
        // Shoulders hide behind a stronger neighbour and never show up as a
        // local maximum; also try adding one peak to the best fit with one
        // fewer, placed where that fit falls shortest. Keep the cheaper result.
        if (n_peaks > 1) {
            const PeakFit fewer = fit_peaks(spec, n_peaks - 1, std::nullopt, opts);
            lm::Vector x1(np);
            for (int p = 0; p < n_peaks - 1; ++p) {
                const Peak& pk = fewer.peaks[p];
                x1.segment(3 * p, 3) << pk.A / f.scale, (pk.E0_eV - f.mid) / f.span, pk.fwhm_eV / f.span;
            }
            x1.segment(3 * (n_peaks - 1), 3) << 0.0, 0.0, g0;
            x1[np - 1] = fewer.baseline / f.scale;
            const lm::Vector r = prob.residuals(x1);
            Eigen::Index k = 0;
            const double gap = -r.minCoeff(&k);
            x1.segment(3 * (n_peaks - 1), 3) << std::max(gap, 0.0), f.u[static_cast<std::size_t>(k)], g0;
            lm::Result alt = lm::minimize(prob, x1, lo);
            if (alt.cost < res.cost) res = std::move(alt);
        }
    }
    const lm::Matrix cov_n = lm::covariance(res, static_cast<int>(n));

    lm::Vector d(np);
    for (int p = 0; p < n_peaks; ++p) d.segment(3 * p, 3) << f.scale, f.span, f.span;
    d[np - 1] = f.scale;
    const lm::Matrix cov = d.asDiagonal() * cov_n * d.asDiagonal();

    std::vector<int> order(n_peaks);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return res.x[3 * a + 1] < res.x[3 * b + 1]; });

    PeakFit fit;
    std::vector<int> perm;
    for (int p : order) {
        Peak pk;
        pk.A = res.x[3 * p] * f.scale;
        pk.E0_eV = f.mid + res.x[3 * p + 1] * f.span;
        pk.fwhm_eV = res.x[3 * p + 2] * f.span;
        pk.sigma_A = std::sqrt(std::max(0.0, cov(3 * p, 3 * p)));
        pk.sigma_E0 = std::sqrt(std::max(0.0, cov(3 * p + 1, 3 * p + 1)));
        pk.sigma_fwhm = std::sqrt(std::max(0.0, cov(3 * p + 2, 3 * p + 2)));
        fit.peaks.push_back(pk);
        for (int c = 0; c < 3; ++c) perm.push_back(3 * p + c);
    }
    perm.push_back(np - 1);
    fit.covariance.resize(np, np);
    for (int r = 0; r < np; ++r)
        for (int c = 0; c < np; ++c) fit.covariance(r, c) = cov(perm[r], perm[c]);
    fit.baseline = res.x[np - 1] * f.scale;
    fit.sigma_baseline = std::sqrt(std::max(0.0, cov(np - 1, np - 1)));
    fit.residual_norm = std::sqrt(2.0 * res.cost) * f.scale;
    for (double c : res.accepted_costs) fit.cost_history.push_back(c * f.scale * f.scale);
    fit.iterations = res.iterations;
    fit.converged = res.converged;
    return fit;
}

QEstimate extract_q(const PeakFit& fit, std::size_t idx) {
    if (idx >= fit.peaks.size()) throw ParameterError("extract_q: peak index out of range");
    const Peak& p = fit.peaks[idx];
    if (!(p.fwhm_eV > 0.0)) throw ParameterError("extract_q: FWHM must be > 0");
    QEstimate q;
    q.Q = p.E0_eV / p.fwhm_eV;
    // First-order propagation through Q = E0 / G.
    const Eigen::Index e = static_cast<Eigen::Index>(3 * idx + 1), g = e + 1;
    double var = p.sigma_E0 * p.sigma_E0 / (p.E0_eV * p.E0_eV) + p.sigma_fwhm * p.sigma_fwhm / (p.fwhm_eV * p.fwhm_eV);
    if (fit.covariance.rows() > g) var -= 2.0 * fit.covariance(e, g) / (p.E0_eV * p.fwhm_eV);
    q.sigma = q.Q * std::sqrt(std::max(0.0, var));
    return q;
}

// Branch tracking ------------------------------------------------------------

namespace {

bool peak_significant(const Peak& p) { return p.A > 0.0 && (p.sigma_A == 0.0 || p.A > 3.0 * p.sigma_A); }

struct BranchHistory {
    std::vector<std::pair<double, double>> pts;  // (T, E)
    std::optional<double> predict(double T) const {
        if (pts.empty()) return std::nullopt;
        if (pts.size() == 1 || pts.back().first == pts[pts.size() - 2].first) return pts.back().second;
        const auto& [t1, e1] = pts[pts.size() - 2];
        const auto& [t2, e2] = pts.back();
        return e2 + (e2 - e1) / (t2 - t1) * (T - t2);
    }
};

}  // namespace

std::vector<BranchPoint> assign_branches(const std::vector<double>& temperatures,
                                         const std::vector<std::vector<Peak>>& peaks) {
    if (temperatures.size() != peaks.size()) throw ParameterError("assign_branches: size mismatch");
    const std::size_t n = temperatures.size();
    std::vector<BranchPoint> out(n);
    std::vector<std::size_t> singles;
    for (std::size_t k = 0; k < n; ++k) {
        out[k].T_K = temperatures[k];
        std::vector<Peak> ps = peaks[k];
        std::sort(ps.begin(), ps.end(), [](const Peak& a, const Peak& b) { return a.E0_eV < b.E0_eV; });
        if (ps.size() >= 2) {
            out[k].lower_eV = ps.front().E0_eV;
            out[k].sigma_lower = ps.front().sigma_E0;
            out[k].upper_eV = ps.back().E0_eV;
            out[k].sigma_upper = ps.back().sigma_E0;
        } else if (ps.size() == 1) {
            singles.push_back(k);
        }
    }
    if (singles.empty()) return out;

    auto assign = [&](std::size_t k, const BranchHistory& lo, const BranchHistory& up) {
        const Peak& p = peaks[k].front();
        const auto pl = lo.predict(out[k].T_K), pu = up.predict(out[k].T_K);
        if (!pl && !pu) return false;
        const bool to_lower = pl && pu ? std::abs(p.E0_eV - *pl) <= std::abs(p.E0_eV - *pu) : pl.has_value();
        if (to_lower) out[k].lower_eV = p.E0_eV, out[k].sigma_lower = p.sigma_E0;
        else out[k].upper_eV = p.E0_eV, out[k].sigma_upper = p.sigma_E0;
        return true;
    };

    // Forward pass extrapolates from earlier temperatures; points before any
    // two-peak spectrum are resolved by a backward pass.
    BranchHistory lo, up;
    std::vector<bool> done(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        if (peaks[k].size() == 1 && !lo.pts.empty() && !up.pts.empty()) done[k] = assign(k, lo, up);
        else if (peaks[k].size() >= 2) done[k] = true;
        if (done[k]) {
            if (out[k].lower_eV) lo.pts.emplace_back(out[k].T_K, *out[k].lower_eV);
            if (out[k].upper_eV) up.pts.emplace_back(out[k].T_K, *out[k].upper_eV);
        }
    }
    BranchHistory blo, bup;
    for (std::size_t k = n; k-- > 0;) {
        if (peaks[k].size() == 1 && !done[k]) {
            if (!blo.pts.empty() && !bup.pts.empty()) {
                done[k] = assign(k, blo, bup);
            } else {
                out[k].note = "single peak without reference branches; assigned to lower";
                out[k].lower_eV = peaks[k].front().E0_eV;
                out[k].sigma_lower = peaks[k].front().sigma_E0;
                done[k] = true;
            }
        }
        if (done[k]) {
            if (out[k].lower_eV) blo.pts.emplace_back(out[k].T_K, *out[k].lower_eV);
            if (out[k].upper_eV) bup.pts.emplace_back(out[k].T_K, *out[k].upper_eV);
        }
    }
    return out;
}

std::vector<BranchPoint> track_peaks(const SpectrumSeries& series, const FitOptions& opts) {
    std::vector<double> temps;
    std::vector<std::vector<Peak>> peaks(series.size());
    std::vector<std::string> notes(series.size());
    std::vector<bool> ok(series.size(), true);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        temps.push_back(s.temperature_K.value_or(static_cast<double>(k)));
        try {
            PeakFit two = fit_peaks(s, 2, std::nullopt, opts);
            const bool both = two.converged && peak_significant(two.peaks[0]) && peak_significant(two.peaks[1]);
            if (both) {
                peaks[k] = two.peaks;
                continue;
            }
            PeakFit one = fit_peaks(s, 1, std::nullopt, opts);
            if (!one.converged) {
                ok[k] = false;
                notes[k] = "fit did not converge";
                continue;
            }
            peaks[k] = one.peaks;
            notes[k] = "single peak";
        } catch (const Error& ex) {
            ok[k] = false;
            notes[k] = ex.what();
        }
    }
    for (std::size_t k = 1; k < temps.size(); ++k)
        if (!(temps[k] > temps[k - 1])) throw ParameterError("track_peaks: temperatures must be ascending");
    auto out = assign_branches(temps, peaks);
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k].fit_ok = ok[k];
        if (!notes[k].empty()) out[k].note = out[k].note.empty() ? notes[k] : notes[k] + "; " + out[k].note;
    }
    return out;
}

// Anticrossing fit -----------------------------------------------------------

namespace {

constexpr double kMeV = 1e-3;
constexpr double kSigmaFloor_meV = 1e-4;

struct BranchDatum {
    double T = 0.0;
    bool upper = false;
    double value_meV = 0.0;  // relative to the reference energy
    double sigma_meV = 0.0;
};

// Full parameter vector: hg, Ex0 offset, alpha, Ec0 offset (meV), drift (meV/K).
struct AnticrossModel {
    double beta = 204.0, Gx = 0.0, Gc = 0.0;
    double detuning(const lm::Vector& p, double T) const {
        return (p[1] - p[2] * T * T / (T + beta)) - (p[3] + p[4] * T);
    }
    std::pair<double, double> branches(const lm::Vector& p, double T) const {
        const double ex = p[1] - p[2] * T * T / (T + beta);
        const double ec = p[3] + p[4] * T;
        return cqed::branch_energies(ex, ec, Gx, Gc, p[0]);
    }
};

}  // namespace

AnticrossFit fit_anticrossing(const std::vector<BranchPoint>& branches, double Gx_eV, double Gc_eV,
                              const FreeParams& free, const std::optional<cqed::TuningModel>& start) {
    if (!(Gx_eV > 0.0 && Gc_eV > 0.0)) throw ParameterError("fit_anticrossing: linewidths must be > 0");
    const cqed::TuningModel base = start.value_or(cqed::TuningModel{});
    base.validate();

    std::vector<BranchDatum> data;
    std::vector<double> temps;
    bool all_sigma = true;
    for (const auto& b : branches) {
        if (!b.lower_eV && !b.upper_eV) continue;
        temps.push_back(b.T_K);
        if (b.lower_eV) {
            data.push_back({b.T_K, false, *b.lower_eV, b.sigma_lower.value_or(0.0)});
            all_sigma = all_sigma && b.sigma_lower.has_value();
        }
        if (b.upper_eV) {
            data.push_back({b.T_K, true, *b.upper_eV, b.sigma_upper.value_or(0.0)});
            all_sigma = all_sigma && b.sigma_upper.has_value();
        }
    }
    if (temps.size() < 6) throw ParameterError("fit_anticrossing: at least 6 temperature points required");

    double ref = 0.0;
    for (const auto& d : data) ref += d.value_meV;
    ref /= static_cast<double>(data.size());
    for (auto& d : data) {
        d.value_meV = (d.value_meV - ref) / kMeV;
        d.sigma_meV = all_sigma ? std::max(d.sigma_meV / kMeV, kSigmaFloor_meV) : 1.0;
    }

    AnticrossModel model;
    model.beta = base.beta_K;
    model.Gx = Gx_eV / kMeV;
    model.Gc = Gc_eV / kMeV;

    // Start at the narrowest gap between the two branches.
    double best_gap = std::numeric_limits<double>::infinity(), T0 = temps.front(), mid = 0.0;
    for (const auto& b : branches) {
        if (b.lower_eV && b.upper_eV && *b.upper_eV - *b.lower_eV < best_gap) {
            best_gap = *b.upper_eV - *b.lower_eV;
            T0 = b.T_K;
            mid = 0.5 * (*b.lower_eV + *b.upper_eV);
        }
    }
    lm::Vector full(5);
    const double loss = (model.Gc - model.Gx) / 4.0;
    if (std::isfinite(best_gap)) {
        const double half = best_gap / kMeV / 2.0;
        full[0] = std::sqrt(half * half + loss * loss);
        mid = (mid - ref) / kMeV;
    } else {
        full[0] = std::abs(loss);
        mid = 0.0;
    }
    const double alpha_meV = base.alpha_eV_per_K / kMeV;
    full[2] = alpha_meV;
    full[4] = start ? base.drift_eV_per_K / kMeV : 0.0;
    full[3] = mid - full[4] * T0;
    full[1] = mid + alpha_meV * T0 * T0 / (T0 + model.beta);

    const std::array<bool, 5> is_free{free.hg, free.Ex0, free.alpha, free.Ec0, free.drift};
    std::vector<int> map;
    for (int k = 0; k < 5; ++k)
        if (is_free[k]) map.push_back(k);
    if (map.empty()) throw ParameterError("fit_anticrossing: no free parameters");
    if (map.size() >= data.size()) throw ParameterError("fit_anticrossing: more free parameters than data points");

    auto expand = [&](const lm::Vector& x) {
        lm::Vector p = full;
        for (std::size_t k = 0; k < map.size(); ++k) p[map[k]] = x[static_cast<Eigen::Index>(k)];
        return p;
    };
    const auto m = static_cast<Eigen::Index>(map.size());
    lm::Vector x0(m), lower(m), upper(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        x0[k] = full[map[k]];
        const bool nonneg = map[k] == 0 || map[k] == 2;
        lower[k] = nonneg ? 0.0 : -std::numeric_limits<double>::infinity();
        upper[k] = std::numeric_limits<double>::infinity();
    }

    std::vector<std::size_t> active(data.size());
    std::iota(active.begin(), active.end(), 0);
    auto residual_of = [&](const lm::Vector& p, std::size_t k) {
        const auto [lo, up] = model.branches(p, data[k].T);
        return ((data[k].upper ? up : lo) - data[k].value_meV) / data[k].sigma_meV;
    };
    // A misfitted spectrum (a peak locked onto noise) lies far outside the
    // scatter of the rest. The first pass uses a Cauchy loss so such points
    // cannot drag the solution; points beyond five robust standard
    // deviations of that solution are then dropped and a plain least-squares
    // fit is run on the rest.
    bool robust = true;
    constexpr double kCauchy = 3.0;
    lm::Problem prob;
    prob.lower = lower;
    prob.upper = upper;
    prob.residuals = [&](const lm::Vector& x) {
        const lm::Vector p = expand(x);
        lm::Vector r(static_cast<Eigen::Index>(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) {
            double v = residual_of(p, active[k]);
            if (robust) v = std::copysign(kCauchy * std::sqrt(std::log1p(v * v / (kCauchy * kCauchy))), v);
            r[static_cast<Eigen::Index>(k)] = v;
        }
        return r;
    };
    lm::Result res = lm::minimize(prob, x0);
    std::size_t rejected = 0;
    {
        const lm::Vector p = expand(res.x);
        std::vector<double> absr;
        for (std::size_t k : active) absr.push_back(std::abs(residual_of(p, k)));
        const double cut = 5.0 * std::max(1.4826 * percentile(absr, 0.5), 1.0);
        std::vector<std::size_t> keep;
        for (std::size_t k : active)
            if (std::abs(residual_of(p, k)) <= cut) keep.push_back(k);
        if (keep.size() > map.size() + 1) {
            rejected = active.size() - keep.size();
            active = std::move(keep);
        }
    }
    robust = false;
    res = lm::minimize(prob, res.x);
    const lm::Matrix cov = lm::covariance(res, static_cast<int>(active.size()));
    const lm::Vector p = expand(res.x);

    const double t_lo = temps.front(), t_hi = *std::max_element(temps.begin(), temps.end());
    const double d_lo = model.detuning(p, t_lo), d_hi = model.detuning(p, t_hi);
    if (!(d_lo * d_hi < 0.0))
        throw UnidentifiableError("fit_anticrossing: fitted detuning does not change sign over the temperature range");
    double a = t_lo, b = t_hi, fa = d_lo;
    for (int it = 0; it < 200 && b - a > 1e-12 * std::max(1.0, std::abs(b)); ++it) {
        const double c = 0.5 * (a + b);
        const double fc = model.detuning(p, c);
        if ((fc < 0.0) == (fa < 0.0)) a = c, fa = fc;
        else b = c;
    }

    AnticrossFit fit;
    fit.hg_eV = p[0] * kMeV;
    fit.sigma_hg_eV = 0.0;
    for (Eigen::Index k = 0; k < m; ++k)
        if (map[k] == 0) fit.sigma_hg_eV = std::sqrt(std::max(0.0, cov(k, k))) * kMeV;
    fit.tuning.Ex0_eV = ref + p[1] * kMeV;
    fit.tuning.alpha_eV_per_K = p[2] * kMeV;
    fit.tuning.beta_K = model.beta;
    fit.tuning.Ec0_eV = ref + p[3] * kMeV;
    fit.tuning.drift_eV_per_K = p[4] * kMeV;
    fit.Gx_eV = Gx_eV;
    fit.Gc_eV = Gc_eV;
    fit.zero_detuning_T_K = 0.5 * (a + b);
    cqed::CoupledSystem sys;
    sys.Gx_eV = Gx_eV;
    sys.Gc_eV = Gc_eV;
    sys.hg_eV = fit.hg_eV;
    fit.rabi_splitting_eV = cqed::rabi_splitting(sys);

    double ss = 0.0;
    for (std::size_t k : active) {
        const double r = residual_of(p, k) * data[k].sigma_meV;
        ss += r * r;
    }
    fit.rms_residual_eV = std::sqrt(ss / static_cast<double>(active.size())) * kMeV;
    fit.rejected_points = rejected;
    for (double T : temps) {
        const auto [lo, up] = model.branches(p, T);
        fit.temperatures_K.push_back(T);
        fit.predicted_lower_eV.push_back(ref + lo * kMeV);
        fit.predicted_upper_eV.push_back(ref + up * kMeV);
    }
    fit.converged = res.converged;
    fit.iterations = res.iterations;
    return fit;
}

// IO -------------------------------------------------------------------------

namespace {
constexpr const char* kSpectrumHeader = "energy_eV,intensity";
}

Spectrum read_spectrum_csv(const std::filesystem::path& path) {
    const auto rows = io::read_numeric_csv(path, kSpectrumHeader);
    Spectrum s;
    for (const auto& r : rows) {
        if (r.size() != 2) throw IoError("'" + path.string() + "': expected 2 columns");
        s.energies_eV.push_back(r[0]);
        s.intensities.push_back(r[1]);
    }
    s.validate();
    return s;
}

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s) {
    std::vector<std::vector<double>> rows;
    rows.reserve(s.energies_eV.size());
    for (std::size_t k = 0; k < s.energies_eV.size(); ++k) rows.push_back({s.energies_eV[k], s.intensities[k]});
    io::write_numeric_csv(path, kSpectrumHeader, rows);
}

SpectrumSeries read_series(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) throw IoError("missing manifest: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(io::read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& ex) {
        throw IoError("malformed manifest '" + manifest_path.string() + "': " + ex.what());
    }
    if (!manifest.is_array()) throw IoError("manifest must be a JSON array");
    SpectrumSeries series;
    for (const auto& entry : manifest) {
        if (!entry.is_object() || !entry.contains("file") || !entry.contains("temperature_K") ||
            !entry["file"].is_string() || !entry["temperature_K"].is_number())
            throw IoError("manifest entries need \"file\" (string) and \"temperature_K\" (number)");
        for (const auto& [key, value] : entry.items())
            if (key != "file" && key != "temperature_K") throw IoError("unknown manifest key '" + key + "'");
        Spectrum s = read_spectrum_csv(dir / entry["file"].get<std::string>());
        s.temperature_K = entry["temperature_K"].get<double>();
        series.push_back(std::move(s));
    }
    std::stable_sort(series.begin(), series.end(),
                     [](const Spectrum& a, const Spectrum& b) { return *a.temperature_K < *b.temperature_K; });
    for (std::size_t k = 1; k < series.size(); ++k)
        if (*series[k].temperature_K == *series[k - 1].temperature_K)
            throw ParameterError("manifest lists temperature " + io::format_double(*series[k].temperature_K) + " twice");
    return series;
}

void write_series(const std::filesystem::path& dir, const SpectrumSeries& series) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::array();
    for (std::size_t k = 0; k < series.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "spectrum_%03zu.csv", k);
        write_spectrum_csv(dir / name, series[k]);
        manifest.push_back({{"file", name}, {"temperature_K", series[k].temperature_K.value_or(0.0)}});
    }
    io::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

nlohmann::json to_json(const PeakFit& fit) {
    nlohmann::json j;
    j["peaks"] = nlohmann::json::array();
    for (const auto& p : fit.peaks) {
        j["peaks"].push_back({{"A", p.A},
                              {"E0_eV", p.E0_eV},
                              {"fwhm_eV", p.fwhm_eV},
                              {"sigma_A", p.sigma_A},
                              {"sigma_E0_eV", p.sigma_E0},
                              {"sigma_fwhm_eV", p.sigma_fwhm},
                              {"Q", p.E0_eV / p.fwhm_eV}});
    }
    j["baseline"] = fit.baseline;
    j["sigma_baseline"] = fit.sigma_baseline;
    j["residual_norm"] = fit.residual_norm;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    nlohmann::json cov = nlohmann::json::array();
    for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < fit.covariance.cols(); ++c) row.push_back(fit.covariance(r, c));
        cov.push_back(row);
    }
    j["covariance"] = cov;
    return j;
}

nlohmann::json to_json(const AnticrossFit& fit) {
    nlohmann::json j;
    j["hg_eV"] = fit.hg_eV;
    j["sigma_hg_eV"] = fit.sigma_hg_eV;
    j["Ex0_eV"] = fit.tuning.Ex0_eV;
    j["alpha_eV_per_K"] = fit.tuning.alpha_eV_per_K;
    j["beta_K"] = fit.tuning.beta_K;
    j["Ec0_eV"] = fit.tuning.Ec0_eV;
    j["drift_eV_per_K"] = fit.tuning.drift_eV_per_K;
    j["Gx_eV"] = fit.Gx_eV;
    j["Gc_eV"] = fit.Gc_eV;
    j["zero_detuning_T_K"] = fit.zero_detuning_T_K;
    j["dE_eV"] = fit.rabi_splitting_eV;
    j["rms_residual_eV"] = fit.rms_residual_eV;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["rejected_points"] = fit.rejected_points;
    j["temperature_K"] = fit.temperatures_K;
    j["predicted_lower_eV"] = fit.predicted_lower_eV;
    j["predicted_upper_eV"] = fit.predicted_upper_eV;
    return j;
}

nlohmann::json to_json(const std::vector<BranchPoint>& branches) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : branches) {
        nlohmann::json j;
        j["temperature_K"] = b.T_K;
        j["lower_eV"] = b.lower_eV ? nlohmann::json(*b.lower_eV) : nlohmann::json(nullptr);
        j["upper_eV"] = b.upper_eV ? nlohmann::json(*b.upper_eV) : nlohmann::json(nullptr);
        j["sigma_lower_eV"] = b.sigma_lower ? nlohmann::json(*b.sigma_lower) : nlohmann::json(nullptr);
        j["sigma_upper_eV"] = b.sigma_upper ? nlohmann::json(*b.sigma_upper) : nlohmann::json(nullptr);
        j["fit_ok"] = b.fit_ok;
        if (!b.note.empty()) j["note"] = b.note;
        arr.push_back(j);
    }
    return arr;
}

}  // namespace qdcav::spectra
