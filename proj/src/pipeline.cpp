#include "qdcav/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "qdcav/constants.hpp"
#include "qdcav/error.hpp"
#include "qdcav/textio.hpp"

namespace qdcav::pipeline {

using nlohmann::json;

DesignResult design(const config::RunConfig& cfg) {
    const auto& g = cfg.geometry;
    DesignResult r;
    const geometry::HoleSet base = geometry::build_lattice(g.lattice);
    r.holes = geometry::apply_cavity_shifts(base, g.cavity);
    r.audit = geometry::audit_shifts(base, r.holes);
    const double eps_bg = g.background_permittivity();
    r.map = geometry::rasterize(r.holes, g.dx_nm, eps_bg, g.pad_nm, g.lattice.a_nm);
    r.summary = {{"hole_count", r.holes.size()},
                 {"waveguide_width_nm", g.lattice.waveguide_width_nm()},
                 {"innermost_row_y_nm", g.lattice.waveguide_width_nm() / 2.0},
                 {"a_nm", g.lattice.a_nm},
                 {"r_nm", g.lattice.r_nm},
                 {"r_over_a", g.lattice.r_nm / g.lattice.a_nm},
                 {"shift_tiers_nm", g.cavity.shift_tiers_nm},
                 {"tier_columns", g.cavity.tier_columns},
                 {"displaced_holes", r.audit.displaced},
                 {"total_displacement_nm", r.audit.total_displacement_nm},
                 {"mirror_symmetric", r.holes.is_mirror_symmetric()},
                 {"non_overlapping", r.holes.is_non_overlapping()},
                 {"eps_background", eps_bg},
                 {"n_eff", std::sqrt(eps_bg)},
                 {"nx", r.map.nx},
                 {"ny", r.map.ny},
                 {"dx_nm", r.map.dx_nm}};
    return r;
}

namespace {

struct Placement {
    int si = 0, sj = 0, pi = 0, pj = 0;
};

Placement place(const config::RunConfig& cfg, const geometry::DielectricMap& map) {
    const auto& f = cfg.fdtd;
    Placement p{map.nx / 2 + f.source_offset_x_cells, map.ny / 2 + f.source_offset_y_cells,
                map.nx / 2 + f.probe_offset_x_cells, map.ny / 2 + f.probe_offset_y_cells};
    auto inside = [&](int i, int j) { return i >= 0 && i < map.nx && j >= 0 && j < map.ny; };
    if (!inside(p.si, p.sj)) throw ParameterError("simulate: source offset leaves the grid");
    if (!inside(p.pi, p.pj)) throw ParameterError("simulate: probe offset leaves the grid");
    return p;
}

fdtd::SourceSpec pulse(const Placement& p, fdtd::Component c, double E_eV, double dE_eV) {
    if (!(E_eV > 0.0) || !(dE_eV > 0.0)) throw ParameterError("simulate: source energy and bandwidth must be > 0");
    fdtd::SourceSpec s;
    s.i = p.si;
    s.j = p.sj;
    s.component = c;
    s.f0_hz = phys::ev_to_hz(E_eV);
    s.df_hz = phys::ev_to_hz(dE_eV);
    return s;
}

}  // namespace

SimulationResult simulate(const config::RunConfig& cfg, const geometry::DielectricMap& map) {
    const auto& f = cfg.fdtd;
    if (f.scan_steps_after_source < modal::kMinScanSamples + cfg.modal.settle_steps ||
        f.run_steps_after_source < modal::kMinScanSamples + cfg.modal.settle_steps)
        throw ParameterError("simulate: step counts after the source must leave >= 2048 samples for analysis");
    const Placement where = place(cfg, map);
    SimulationResult r;
    r.probe_component = f.source_component;

    // Broadband scan.
    {
        fdtd::Simulation sim(map, f.sim);
        const auto src = pulse(where, f.source_component, f.scan_center_eV, f.scan_bandwidth_eV);
        sim.add_source(src);
        const auto pr = sim.add_probe(where.pi, where.pj, r.probe_component);
        const long off = src.off_step(sim.dt_s());
        sim.run(off + f.scan_steps_after_source);
        const auto& s = sim.probe(pr).samples;
        const long t_min = off + cfg.modal.settle_steps;
        double all = 0.0, tail = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) {
            all = std::max(all, std::abs(s[k]));
            if (static_cast<long>(k) >= t_min) tail = std::max(tail, std::abs(s[k]));
        }
        if (!(tail > 1e-6 * all))
            throw NoResonanceError("simulate: the field leaves the probe once the source stops (peak ratio " +
                                   io::format_double(all > 0.0 ? tail / all : 0.0) + "); no confined resonance");
        r.scan_peaks = modal::resonance_scan(sim.probe(pr), t_min);
        r.scan_E0_eV = r.scan_peaks.front().E_eV;
    }

    // Narrowband run at the detected resonance.
    fdtd::Simulation sim(map, f.sim);
    const auto src = pulse(where, f.source_component, r.scan_E0_eV, f.run_bandwidth_eV);
    sim.add_source(src);
    const auto pr = sim.add_probe(where.pi, where.pj, r.probe_component);
    r.source_off_step = src.off_step(sim.dt_s());
    const double omega = 2.0 * phys::pi * phys::ev_to_hz(r.scan_E0_eV);
    sim.enable_dft(omega, r.source_off_step);
    sim.run(r.source_off_step + f.run_steps_after_source);
    r.probe = sim.probe(pr);

    const int inset = (f.sim.boundary == fdtd::Boundary::Pml ? f.sim.pml_cells : 0) + f.flux_margin_cells;
    const fdtd::Box box{inset, map.nx - inset, inset, map.ny - inset};
    if (box.i1 - box.i0 < 2 || box.j1 - box.j0 < 2) throw ParameterError("simulate: flux box does not fit inside the PML");
    r.stored_energy_J_per_m = sim.dft_energy(box);
    r.leaked_power_W_per_m = sim.box_flux(box);

    r.field = sim.field_map();
    r.field.run = {{"E_dft_eV", r.scan_E0_eV},
                   {"source_off_step", r.source_off_step},
                   {"dt_s", sim.dt_s()},
                   {"probe_component", fdtd::to_string(r.probe_component)},
                   {"probe_cell", {where.pi, where.pj}},
                   {"source_cell", {where.si, where.sj}},
                   {"run_bandwidth_eV", f.run_bandwidth_eV},
                   {"flux_box_cells", {box.i0, box.i1, box.j0, box.j1}},
                   {"stored_energy_J_per_m", r.stored_energy_J_per_m},
                   {"leaked_power_W_per_m", r.leaked_power_W_per_m}};

    json peaks = json::array();
    for (const auto& p : r.scan_peaks) peaks.push_back({{"E_eV", p.E_eV}, {"amplitude", p.amplitude}});
    r.summary = {{"scan_peaks", peaks},
                 {"E_dft_eV", r.scan_E0_eV},
                 {"grid", {map.nx, map.ny}},
                 {"dt_s", sim.dt_s()},
                 {"steps", sim.time_step()},
                 {"source_off_step", r.source_off_step},
                 {"stored_energy_J_per_m", r.stored_energy_J_per_m},
                 {"leaked_power_W_per_m", r.leaked_power_W_per_m}};
    return r;
}

long analysis_start(const fdtd::FieldMap& field, const config::RunConfig& cfg) {
    if (!field.run.contains("source_off_step"))
        throw IoError("field map carries no run metadata (source_off_step); pass the start step explicitly");
    return field.run["source_off_step"].get<long>() + cfg.modal.settle_steps;
}

AnalysisResult analyze(const config::RunConfig& cfg, const AnalysisInput& in) {
    AnalysisResult r;
    r.peaks = modal::resonance_scan(in.probe, in.t_min_steps);
    const double E0 = r.peaks.front().E_eV;
    r.decay = modal::q_from_decay(in.probe, E0, in.t_min_steps, cfg.modal.min_r2);

    auto& m = r.mode;
    m.E0_eV = E0;
    m.Q = r.decay.Q;
    m.q_method = "decay";
    m.q_lower_bound = r.decay.lower_bound;
    m.q_fit_r2 = r.decay.r2;
    m.height_eff_nm = cfg.modal.height_eff_nm;
    m.n_index = cfg.modal.n_index;

    std::optional<std::string> flux_note;
    if (in.field) {
        if (!in.eps) throw ParameterError("analyze: a field map needs its dielectric map");
        r.volume = modal::mode_volume(*in.field, *in.eps, cfg.modal.height_eff_nm, E0, cfg.modal.n_index,
                                      cfg.modal.edge_cells);
        m.V_um3 = r.volume->V_um3;
        m.V_lambda_n3 = r.volume->V_lambda_n3;
        if (r.volume->warning) m.warning = r.volume->warning;
        const auto& run = in.field->run;
        if (run.contains("stored_energy_J_per_m") && run.contains("leaked_power_W_per_m")) {
            const double E_dft = phys::hz_to_ev(in.field->omega_rad_s / (2.0 * phys::pi));
            try {
                m.q_flux = modal::q_from_flux(run["stored_energy_J_per_m"].get<double>(),
                                              run["leaked_power_W_per_m"].get<double>(), E_dft);
            } catch (const FluxSignError& ex) {
                flux_note = ex.what();
            }
        }
    }

    r.report = modal::to_json(m);
    r.report["a_nm"] = cfg.geometry.lattice.a_nm;
    r.report["r_over_a"] = cfg.geometry.lattice.r_nm / cfg.geometry.lattice.a_nm;
    r.report["decay_windows"] = r.decay.windows;
    r.report["t_min_steps"] = in.t_min_steps;
    json peaks = json::array();
    for (const auto& p : r.peaks) peaks.push_back({{"E_eV", p.E_eV}, {"amplitude", p.amplitude}});
    r.report["resonances"] = peaks;
    if (r.volume) {
        r.report["V2d_nm2"] = r.volume->V2d_nm2;
        r.report["energy_peak_nm"] = {r.volume->peak_x_nm, r.volume->peak_y_nm};
    }
    if (flux_note) r.report["flux_warning"] = *flux_note;
    return r;
}

Prediction predict(const config::RunConfig& cfg, const std::optional<modal::ModeCharacterization>& mode) {
    const auto& c = cfg.cqed;
    double E0 = c.E0_eV, Q = c.Q, V_ln3 = c.V_lambda_n3, n = c.n_index;
    if (mode) {
        E0 = mode->E0_eV;
        Q = mode->Q;
        if (!(mode->V_lambda_n3 > 0.0)) throw ParameterError("predict: mode characterization has no mode volume");
        V_ln3 = mode->V_lambda_n3;
        n = mode->n_index;
    }
    if (!(E0 > 0.0 && Q > 0.0 && V_ln3 > 0.0 && n >= 1.0)) throw ParameterError("predict: E0, Q, V must be > 0 and n >= 1");
    const double eps_r = n * n;
    const double V_m3 = cqed::mode_volume_m3(V_ln3, E0, n);

    Prediction p;
    p.hg_eV = c.hg_eV ? *c.hg_eV : cqed::coupling_constant(c.f, V_m3, eps_r);
    p.Gc_eV = c.Gc_eV ? *c.Gc_eV : E0 / Q;
    cqed::CoupledSystem sys;
    sys.Ex_eV = sys.Ec_eV = E0;
    sys.Gx_eV = c.Gx_eV;
    sys.Gc_eV = p.Gc_eV;
    sys.hg_eV = p.hg_eV;
    sys.f = c.f;
    sys.eps_r = eps_r;
    sys.validate();
    p.dE_eV = cqed::rabi_splitting(sys);
    if (p.dE_eV > 0.0) p.verdict = cqed::strong_coupling_test(p.dE_eV, p.Gc_eV);
    else p.verdict = {false, -p.Gc_eV / 2.0};
    p.curve = cqed::splitting_vs_q(E0, p.hg_eV, c.Gx_eV, cqed::log_q_grid(c.q_min, c.q_max, c.q_points));

    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    p.report = {{"inputs",
                 {{"f", c.f},
                  {"n_index", n},
                  {"eps_r", eps_r},
                  {"E0_eV", E0},
                  {"Q", Q},
                  {"V_lambda_n3", V_ln3},
                  {"V_m3", V_m3},
                  {"Gx_eV", c.Gx_eV},
                  {"Gc_eV", p.Gc_eV},
                  {"source", mode ? "mode characterization" : "config"}}},
                {"hg_eV", p.hg_eV},
                {"two_hg_eV", 2.0 * p.hg_eV},
                {"dE_eV", p.dE_eV},
                {"strong_coupling", p.verdict.strong},
                {"margin_eV", p.verdict.margin_eV},
                {"onset_Q", p.curve.onset_q_closed_form},
                {"onset_Q_grid", opt(p.curve.onset_q)},
                {"saturation_Q", opt(p.curve.saturation_q)},
                {"saturation_Q_closed_form", p.curve.saturation_q_closed_form},
                {"saturation_fraction", cqed::kSaturationFraction}};
    return p;
}

namespace {
constexpr const char* kProbeHeader = "step,time_s,value";
}

void write_probe_csv(const std::filesystem::path& path, const fdtd::TimeSeries& series, fdtd::Component c) {
    // Hz is sampled at half steps, E components at whole steps.
    const double shift = c == fdtd::Component::Hz ? 0.5 : 1.0;
    std::string text = std::string(kProbeHeader) + "\n";
    for (std::size_t k = 0; k < series.samples.size(); ++k) {
        text += std::to_string(k);
        text += ',';
        text += io::format_double((static_cast<double>(k) + shift) * series.dt_s);
        text += ',';
        text += io::format_double(series.samples[k]);
        text += '\n';
    }
    io::write_text_file(path, text);
}

fdtd::TimeSeries read_probe_csv(const std::filesystem::path& path) {
    const auto rows = io::read_numeric_csv(path, kProbeHeader);
    if (rows.size() < 2) throw IoError("'" + path.string() + "': need at least two samples");
    fdtd::TimeSeries s;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].size() != 3) throw IoError("'" + path.string() + "': expected 3 columns");
        if (rows[k][0] != static_cast<double>(k))
            throw IoError("'" + path.string() + "': steps must run 0, 1, 2, ... without gaps");
        s.samples.push_back(rows[k][2]);
    }
    s.dt_s = (rows.back()[1] - rows.front()[1]) / static_cast<double>(rows.size() - 1);
    if (!(s.dt_s > 0.0)) throw IoError("'" + path.string() + "': time must increase");
    return s;
}

QmapResult collect_qmap(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("qmap: '" + dir.string() + "' is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    QmapResult out;
    for (const auto& f : files) {
        json j;
        try {
            j = json::parse(io::read_text_file(f));
        } catch (const json::parse_error&) {
            out.warnings.push_back("skipped " + f.filename().string() + ": not valid JSON");
            continue;
        }
        const bool ok = j.is_object() && j.contains("a_nm") && j.contains("r_over_a") && j.contains("E0_eV") &&
                        j.contains("Q") && j["a_nm"].is_number() && j["r_over_a"].is_number() &&
                        j["E0_eV"].is_number() && j["Q"].is_number();
        if (!ok) {
            out.warnings.push_back("skipped " + f.filename().string() + ": not an analyze report");
            continue;
        }
        QmapRow row{j["a_nm"].get<double>(), j["r_over_a"].get<double>(), j["E0_eV"].get<double>(), j["Q"].get<double>()};
        auto same = [&](const QmapRow& o) {
            return std::abs(o.a_nm - row.a_nm) <= 1e-9 * std::max(1.0, std::abs(row.a_nm)) &&
                   std::abs(o.r_over_a - row.r_over_a) <= 1e-9;
        };
        auto it = std::find_if(out.rows.begin(), out.rows.end(), same);
        if (it != out.rows.end()) {
            out.warnings.push_back("duplicate (a_nm=" + io::format_double(row.a_nm) +
                                   ", r_over_a=" + io::format_double(row.r_over_a) + "): " + f.filename().string() +
                                   " replaces an earlier report");
            *it = row;
        } else {
            out.rows.push_back(row);
        }
    }
    std::stable_sort(out.rows.begin(), out.rows.end(), [](const QmapRow& a, const QmapRow& b) {
        return a.a_nm != b.a_nm ? a.a_nm < b.a_nm : a.r_over_a < b.r_over_a;
    });
    return out;
}

}  // namespace qdcav::pipeline
