// qdcav: design, simulate and analyze a photonic-crystal cavity, predict
// exciton-photon coupling, and fit photoluminescence spectra.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "qdcav/binfile.hpp"
#include "qdcav/config.hpp"
#include "qdcav/error.hpp"
#include "qdcav/pipeline.hpp"
#include "qdcav/svg.hpp"
#include "qdcav/textio.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qdcav;

namespace {

struct Globals {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

config::RunConfig load_config(const Globals& g) {
    config::RunConfig cfg = g.config_path.empty() ? config::parse(json::object()) : config::load(g.config_path);
    if (!g.out_dir.empty()) cfg.io.out_dir = g.out_dir;
    if (g.seed) {
        cfg.io.seed = *g.seed;
        cfg.spectra.synthesis.seed = *g.seed;
    }
    if (g.threads) {
        cfg.fdtd.sim.threads = *g.threads;
    } else if (const char* env = std::getenv("WORKBENCH_THREADS")) {
        try {
            std::size_t used = 0;
            const int n = std::stoi(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
            cfg.fdtd.sim.threads = n;
        } catch (const std::exception&) {
            throw ParameterError(std::string("WORKBENCH_THREADS must be an integer, got '") + env + "'");
        }
    }
    if (cfg.fdtd.sim.threads < 1) throw ParameterError("threads must be >= 1");
    fs::create_directories(cfg.io.out_dir);
    return cfg;
}

void write_json(const fs::path& path, const json& j) { io::write_text_file(path, j.dump(2) + "\n"); }

void maybe_svg(const config::RunConfig& cfg, const fs::path& path, const svg::Plot& plot) {
    if (cfg.io.svg) io::write_text_file(path, svg::render(plot));
}

void report(const std::string& name, const fs::path& path) { std::cout << name << ": " << path.string() << "\n"; }

int run_design(const config::RunConfig& cfg) {
    const auto r = pipeline::design(cfg);
    const fs::path out = cfg.io.out_dir;
    geometry::write_epsmap(out / "design.epsmap", r.map);
    write_json(out / "design.json", r.summary);
    std::vector<std::vector<double>> rows;
    svg::Series holes{"holes", {}, {}, true};
    for (const auto& h : r.holes.holes) {
        rows.push_back({h.x, h.y, h.r});
        holes.x.push_back(h.x);
        holes.y.push_back(h.y);
    }
    io::write_numeric_csv(out / "holes.csv", "x_nm,y_nm,r_nm", rows);
    maybe_svg(cfg, out / "holes.svg", {"Hole positions", "x (nm)", "y (nm)", false, {holes}});

    std::cout << "holes: " << r.summary["hole_count"] << "\n"
              << "W_nm: " << io::format_double(r.summary["waveguide_width_nm"].get<double>()) << "\n"
              << "displaced_holes: " << r.audit.displaced << "\n"
              << "total_displacement_nm: " << io::format_double(r.audit.total_displacement_nm) << "\n"
              << "grid: " << r.map.nx << " x " << r.map.ny << " at " << io::format_double(r.map.dx_nm) << " nm\n";
    report("epsmap", out / "design.epsmap");
    return 0;
}

int run_simulate(const config::RunConfig& cfg, const std::string& epsmap_path) {
    const fs::path out = cfg.io.out_dir;
    const geometry::DielectricMap map =
        epsmap_path.empty() ? pipeline::design(cfg).map : geometry::read_epsmap(epsmap_path);
    const auto r = pipeline::simulate(cfg, map);
    pipeline::write_probe_csv(out / "probe.csv", r.probe, r.probe_component);
    fdtd::write_fldmap(out / "field.fldmap", r.field);
    write_json(out / "simulate.json", r.summary);

    svg::Series s{"probe " + fdtd::to_string(r.probe_component), {}, {}, false};
    const std::size_t stride = std::max<std::size_t>(1, r.probe.samples.size() / 4000);
    for (std::size_t k = 0; k < r.probe.samples.size(); k += stride) {
        s.x.push_back(static_cast<double>(k) * r.probe.dt_s);
        s.y.push_back(r.probe.samples[k]);
    }
    maybe_svg(cfg, out / "probe.svg", {"Probe field", "time (s)", "field (a.u.)", false, {s}});

    std::cout << "resonance_eV: " << io::format_double(r.scan_E0_eV) << "\n"
              << "source_off_step: " << r.source_off_step << "\n";
    report("probe", out / "probe.csv");
    report("field", out / "field.fldmap");
    return 0;
}

int run_analyze(const config::RunConfig& cfg, const std::string& probe_path, const std::string& fld_path,
                const std::string& eps_path, std::optional<long> t_min) {
    const fs::path out = cfg.io.out_dir;
    pipeline::AnalysisInput in;
    in.probe = pipeline::read_probe_csv(probe_path);
    std::optional<fdtd::FieldMap> field;
    std::optional<geometry::DielectricMap> eps;
    if (!fld_path.empty()) {
        if (eps_path.empty()) throw ParameterError("analyze: --fldmap needs --epsmap");
        field = fdtd::read_fldmap(fld_path);
        eps = geometry::read_epsmap(eps_path);
        in.field = &*field;
        in.eps = &*eps;
    }
    if (t_min) in.t_min_steps = *t_min;
    else if (field) in.t_min_steps = pipeline::analysis_start(*field, cfg);
    else throw ParameterError("analyze: without a field map the first sample must be given with --t-min");

    const auto r = pipeline::analyze(cfg, in);
    write_json(out / "analyze.json", r.report);
    std::cout << "E0_eV: " << io::format_double(r.mode.E0_eV) << "\n"
              << "Q: " << io::format_double(r.mode.Q) << (r.mode.q_lower_bound ? " (lower bound)" : "") << "\n"
              << "r2: " << io::format_double(r.mode.q_fit_r2) << "\n";
    if (r.mode.q_flux) std::cout << "Q_flux: " << io::format_double(*r.mode.q_flux) << "\n";
    if (r.volume) std::cout << "V_lambda_n3: " << io::format_double(r.mode.V_lambda_n3) << "\n";
    if (r.mode.warning) std::cerr << "warning: " << *r.mode.warning << "\n";
    report("report", out / "analyze.json");
    return 0;
}

int run_predict(const config::RunConfig& cfg, const std::string& mode_path) {
    const fs::path out = cfg.io.out_dir;
    std::optional<modal::ModeCharacterization> mode;
    if (!mode_path.empty()) {
        try {
            mode = modal::mode_from_json(json::parse(io::read_text_file(mode_path)));
        } catch (const json::exception& e) {
            throw ParameterError("predict: '" + mode_path + "' is not a mode characterization: " + e.what());
        }
    }
    const auto p = pipeline::predict(cfg, mode);
    write_json(out / "predict.json", p.report);
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < p.curve.q.size(); ++k) rows.push_back({p.curve.q[k], p.curve.dE_eV[k]});
    io::write_numeric_csv(out / "splitting_vs_q.csv", "Q,dE_eV", rows);
    svg::Series s{"splitting", p.curve.q, {}, false};
    for (double d : p.curve.dE_eV) s.y.push_back(d * 1e6);
    maybe_svg(cfg, out / "splitting_vs_q.svg", {"Vacuum Rabi splitting vs Q", "Q", "splitting (ueV)", true, {s}});

    std::cout << "hg_ueV: " << io::format_double(p.hg_eV * 1e6) << "\n"
              << "2hg_ueV: " << io::format_double(2e6 * p.hg_eV) << "\n"
              << "dE_ueV: " << io::format_double(p.dE_eV * 1e6) << "\n"
              << "strong_coupling: " << (p.verdict.strong ? "true" : "false") << "\n"
              << "onset_Q: " << io::format_double(p.curve.onset_q_closed_form) << "\n";
    report("report", out / "predict.json");
    return 0;
}

svg::Series model_curve(const spectra::Spectrum& s, const spectra::PeakFit& fit) {
    svg::Series m{"fit (intrinsic)", s.energies_eV, {}, false};
    for (double E : s.energies_eV) {
        double v = fit.baseline;
        for (const auto& p : fit.peaks) v += spectra::lorentzian(E, p.A, p.E0_eV, p.fwhm_eV, 0.0);
        m.y.push_back(v);
    }
    return m;
}

int run_fit(const config::RunConfig& cfg, const std::string& path, std::optional<int> n_peaks) {
    const fs::path out = cfg.io.out_dir;
    const auto spec = spectra::read_spectrum_csv(path);
    const int n = n_peaks ? *n_peaks : cfg.spectra.n_peaks;
    const auto fit = spectra::fit_peaks(spec, n, std::nullopt, cfg.spectra.fit);
    json j = spectra::to_json(fit);
    json qs = json::array();
    for (std::size_t k = 0; k < fit.peaks.size(); ++k) {
        const auto q = spectra::extract_q(fit, k);
        qs.push_back({{"Q", q.Q}, {"sigma_Q", q.sigma}});
        std::cout << "peak " << k << ": E0_eV " << io::format_double(fit.peaks[k].E0_eV) << ", fwhm_ueV "
                  << io::format_double(fit.peaks[k].fwhm_eV * 1e6) << ", Q " << io::format_double(q.Q) << "\n";
    }
    j["quality_factors"] = qs;
    j["resolution_fwhm_eV"] = cfg.spectra.fit.resolution_fwhm_eV;
    write_json(out / "fit.json", j);
    svg::Series data{"data", spec.energies_eV, spec.intensities, true};
    maybe_svg(cfg, out / "fit.svg", {"Lorentzian fit", "energy (eV)", "intensity", false, {data, model_curve(spec, fit)}});
    report("report", out / "fit.json");
    return fit.converged ? 0 : 1;
}

int run_anticross(const config::RunConfig& cfg, const std::string& dir) {
    const fs::path out = cfg.io.out_dir;
    spectra::SpectrumSeries series;
    if (dir.empty()) {
        const auto& sp = cfg.spectra;
        cqed::CoupledSystem sys;
        sys.hg_eV = sp.hg_eV;
        sys.Gx_eV = sp.Gx_eV;
        sys.Gc_eV = sp.Gc_eV;
        series = spectra::synthesize(sys, sp.tuning, sp.temperatures(), sp.synthesis);
        spectra::write_series(out / "series", series);
        report("synthesized", out / "series");
    } else {
        series = spectra::read_series(dir);
    }
    const auto branches = spectra::track_peaks(series, cfg.spectra.fit);
    const auto fit = spectra::fit_anticrossing(branches, cfg.spectra.Gx_eV, cfg.spectra.Gc_eV, cfg.spectra.free,
                                               cfg.spectra.tuning);
    json j = spectra::to_json(fit);
    j["branches"] = spectra::to_json(branches);
    write_json(out / "anticross.json", j);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> rows;
    svg::Series lo{"lower (data)", {}, {}, true}, up{"upper (data)", {}, {}, true};
    for (const auto& b : branches) {
        rows.push_back({b.T_K, b.lower_eV.value_or(nan), b.upper_eV.value_or(nan)});
        if (b.lower_eV) lo.x.push_back(b.T_K), lo.y.push_back(*b.lower_eV);
        if (b.upper_eV) up.x.push_back(b.T_K), up.y.push_back(*b.upper_eV);
    }
    io::write_numeric_csv(out / "branches.csv", "T_K,lower_eV,upper_eV", rows);
    svg::Series flo{"lower (fit)", fit.temperatures_K, fit.predicted_lower_eV, false};
    svg::Series fup{"upper (fit)", fit.temperatures_K, fit.predicted_upper_eV, false};
    maybe_svg(cfg, out / "anticross.svg", {"Anticrossing", "temperature (K)", "energy (eV)", false, {lo, up, flo, fup}});

    std::cout << "hg_ueV: " << io::format_double(fit.hg_eV * 1e6) << " +- " << io::format_double(fit.sigma_hg_eV * 1e6)
              << "\n"
              << "dE_ueV: " << io::format_double(fit.rabi_splitting_eV * 1e6) << "\n"
              << "zero_detuning_T_K: " << io::format_double(fit.zero_detuning_T_K) << "\n"
              << "rejected_points: " << fit.rejected_points << "\n";
    report("report", out / "anticross.json");
    return 0;
}

int run_qmap(const config::RunConfig& cfg, const std::string& dir) {
    const fs::path out = cfg.io.out_dir;
    const auto q = pipeline::collect_qmap(dir);
    for (const auto& w : q.warnings) std::cerr << "warning: " << w << "\n";
    std::vector<std::vector<double>> rows;
    svg::Series s{"Q", {}, {}, true};
    for (const auto& r : q.rows) {
        rows.push_back({r.a_nm, r.r_over_a, r.E0_eV, r.Q});
        s.x.push_back(r.E0_eV);
        s.y.push_back(r.Q);
    }
    io::write_numeric_csv(out / "qmap.csv", "a_nm,r_over_a,E0_eV,Q", rows);
    maybe_svg(cfg, out / "qmap.svg", {"Q map", "E0 (eV)", "Q", false, {s}});
    std::cout << "rows: " << q.rows.size() << "\n";
    report("table", out / "qmap.csv");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Photonic-crystal cavity QED workbench"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--out", g.out_dir, "output directory (overrides io.out_dir)");
    app.add_option("--seed", g.seed, "random seed (overrides io.seed)");
    app.add_option("--threads", g.threads, "FDTD worker threads (fallback: WORKBENCH_THREADS)");

    auto* design = app.add_subcommand("design", "build the hole lattice and rasterize it");

    std::string sim_eps;
    auto* simulate = app.add_subcommand("simulate", "run the FDTD scan and narrowband run");
    simulate->add_option("epsmap", sim_eps, "dielectric map (default: rebuilt from the config)");

    std::string probe_path, fld_path, an_eps;
    std::optional<long> t_min;
    auto* analyze = app.add_subcommand("analyze", "extract E0, Q and V from a probe series");
    analyze->add_option("probe", probe_path, "probe CSV")->required();
    analyze->add_option("--fldmap", fld_path, "DFT field map");
    analyze->add_option("--epsmap", an_eps, "dielectric map matching the field map");
    analyze->add_option("--t-min", t_min, "first probe sample used (default: from field-map metadata)");

    std::string mode_path;
    auto* predict = app.add_subcommand("predict", "coupling constant, splitting and splitting vs Q");
    predict->add_option("--mode", mode_path, "analyze report to take E0, Q and V from");

    std::string spec_path;
    std::optional<int> n_peaks;
    auto* fit = app.add_subcommand("fit", "fit Lorentzian peaks to one spectrum");
    fit->add_option("spectrum", spec_path, "spectrum CSV")->required();
    fit->add_option("--n-peaks", n_peaks, "number of peaks (default: spectra.n_peaks)");

    std::string series_dir;
    auto* anticross = app.add_subcommand("anticross", "track branches and fit the anticrossing");
    anticross->add_option("series", series_dir, "spectrum series directory (default: synthesize from the config)");

    std::string qmap_dir;
    auto* qmap = app.add_subcommand("qmap", "tabulate analyze reports");
    qmap->add_option("dir", qmap_dir, "directory of analyze JSON reports")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const auto cfg = load_config(g);
        if (*design) return run_design(cfg);
        if (*simulate) return run_simulate(cfg, sim_eps);
        if (*analyze) return run_analyze(cfg, probe_path, fld_path, an_eps, t_min);
        if (*predict) return run_predict(cfg, mode_path);
        if (*fit) return run_fit(cfg, spec_path, n_peaks);
        if (*anticross) return run_anticross(cfg, series_dir);
        if (*qmap) return run_qmap(cfg, qmap_dir);
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
