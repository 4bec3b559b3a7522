#include "qdcav/config.hpp"

#include <cmath>
#include <set>
#include <type_traits>

#include "qdcav/error.hpp"
#include "qdcav/textio.hpp"

namespace qdcav::config {

using nlohmann::json;

double GeometryConfig::background_permittivity() const {
    if (eps_background) return *eps_background;
    const double n = geometry::effective_index(n_core, n_clad, slab_thickness_nm, design_wavelength_nm);
    return n * n;
}

std::vector<double> SpectraConfig::temperatures() const {
    if (!(T_step_K > 0.0) || !(T_max_K >= T_min_K) || !(T_min_K >= 0.0))
        throw ParameterError("spectra: need 0 <= T_min_K <= T_max_K and T_step_K > 0");
    std::vector<double> t;
    const auto n = static_cast<long>(std::floor((T_max_K - T_min_K) / T_step_K + 1e-9));
    for (long k = 0; k <= n; ++k) t.push_back(T_min_K + static_cast<double>(k) * T_step_K);
    return t;
}

cqed::TuningModel SpectraConfig::default_tuning() {
    cqed::TuningModel m;
    m.Ec0_eV = 1.28;
    const double T0 = 11.0;
    m.Ex0_eV = m.Ec0_eV + m.alpha_eV_per_K * T0 * T0 / (T0 + m.beta_K);
    m.drift_eV_per_K = 0.0;
    return m;
}

spectra::SynthesisOptions SpectraConfig::default_synthesis() {
    spectra::SynthesisOptions o;
    o.noise_rms = 0.01;
    return o;
}

spectra::FitOptions SpectraConfig::default_fit() {
    spectra::FitOptions o;
    o.resolution_fwhm_eV = default_synthesis().resolution_fwhm_eV;
    return o;
}

namespace {

// Reads keys from one JSON object and reports any that were never consumed.
class Section {
public:
    Section(const json& doc, std::string name) : name_(std::move(name)) {
        if (!doc.contains(name_)) return;
        obj_ = &doc.at(name_);
        if (!obj_->is_object()) throw ParameterError("config: section '" + name_ + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key)) return;
        const json& v = obj_->at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ParameterError("");
            } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
                if (!v.is_number_unsigned()) throw ParameterError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ParameterError("");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ParameterError("");
            }
            out = v.get<T>();
        } catch (const std::exception&) {
            throw ParameterError("config: " + name_ + "." + key + " has the wrong type");
        }
    }

    template <class T>
    void get(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key) || obj_->at(key).is_null()) return;
        T v{};
        get(key, v);
        out = v;
    }

    std::optional<std::string> get_string(const char* key) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key)) return std::nullopt;
        if (!obj_->at(key).is_string()) throw ParameterError("config: " + name_ + "." + key + " must be a string");
        return obj_->at(key).get<std::string>();
    }

    void finish() const {
        if (!obj_) return;
        for (const auto& [key, value] : obj_->items())
            if (!seen_.count(key)) throw ParameterError("config: unknown key '" + name_ + "." + key + "'");
    }

private:
    std::string name_;
    const json* obj_ = nullptr;
    std::set<std::string> seen_;
};

fdtd::Boundary boundary_from(const std::string& s) {
    if (s == "pml") return fdtd::Boundary::Pml;
    if (s == "pec") return fdtd::Boundary::Pec;
    throw ParameterError("config: fdtd.boundary must be \"pml\" or \"pec\"");
}

}  // namespace

RunConfig parse(const json& doc) {
    if (!doc.is_object()) throw ParameterError("config: top level must be an object");
    static const std::set<std::string> sections{"geometry", "fdtd", "modal", "cqed", "spectra", "io"};
    for (const auto& [key, value] : doc.items())
        if (!sections.count(key)) throw ParameterError("config: unknown section '" + key + "'");

    RunConfig c;
    {
        Section s(doc, "geometry");
        auto& g = c.geometry;
        s.get("a_nm", g.lattice.a_nm);
        s.get("r_nm", g.lattice.r_nm);
        s.get("n_rows", g.lattice.n_rows);
        s.get("n_cols", g.lattice.n_cols);
        s.get("w_factor", g.lattice.w_factor);
        s.get("shift_tiers_nm", g.cavity.shift_tiers_nm);
        s.get("tier_columns", g.cavity.tier_columns);
        s.get("dx_nm", g.dx_nm);
        s.get("pad_nm", g.pad_nm);
        s.get("n_core", g.n_core);
        s.get("n_clad", g.n_clad);
        s.get("slab_thickness_nm", g.slab_thickness_nm);
        s.get("design_wavelength_nm", g.design_wavelength_nm);
        s.get("eps_background", g.eps_background);
        s.finish();
    }
    {
        Section s(doc, "fdtd");
        auto& f = c.fdtd;
        s.get("courant", f.sim.courant);
        s.get("pml_cells", f.sim.pml_cells);
        s.get("pml_order", f.sim.pml_order);
        s.get("pml_reflection", f.sim.pml_reflection);
        if (auto b = s.get_string("boundary")) f.sim.boundary = boundary_from(*b);
        s.get("threads", f.sim.threads);
        if (auto comp = s.get_string("source_component")) {
            try {
                f.source_component = fdtd::component_from_string(*comp);
            } catch (const Error&) {
                throw ParameterError("config: fdtd.source_component must be Hz, Ex or Ey");
            }
        }
        s.get("source_offset_x_cells", f.source_offset_x_cells);
        s.get("source_offset_y_cells", f.source_offset_y_cells);
        s.get("probe_offset_x_cells", f.probe_offset_x_cells);
        s.get("probe_offset_y_cells", f.probe_offset_y_cells);
        s.get("scan_center_eV", f.scan_center_eV);
        s.get("scan_bandwidth_eV", f.scan_bandwidth_eV);
        s.get("scan_steps_after_source", f.scan_steps_after_source);
        s.get("run_bandwidth_eV", f.run_bandwidth_eV);
        s.get("run_steps_after_source", f.run_steps_after_source);
        s.get("flux_margin_cells", f.flux_margin_cells);
        s.finish();
    }
    {
        Section s(doc, "modal");
        auto& m = c.modal;
        s.get("height_eff_nm", m.height_eff_nm);
        s.get("n_index", m.n_index);
        s.get("min_r2", m.min_r2);
        s.get("settle_steps", m.settle_steps);
        s.get("edge_cells", m.edge_cells);
        s.finish();
    }
    {
        Section s(doc, "cqed");
        auto& q = c.cqed;
        s.get("f", q.f);
        s.get("n_index", q.n_index);
        s.get("E0_eV", q.E0_eV);
        s.get("V_lambda_n3", q.V_lambda_n3);
        s.get("Q", q.Q);
        s.get("Gx_eV", q.Gx_eV);
        s.get("Gc_eV", q.Gc_eV);
        s.get("hg_eV", q.hg_eV);
        s.get("q_min", q.q_min);
        s.get("q_max", q.q_max);
        s.get("q_points", q.q_points);
        s.finish();
    }
    {
        Section s(doc, "spectra");
        auto& p = c.spectra;
        s.get("hg_eV", p.hg_eV);
        s.get("Gx_eV", p.Gx_eV);
        s.get("Gc_eV", p.Gc_eV);
        s.get("Ex0_eV", p.tuning.Ex0_eV);
        s.get("alpha_eV_per_K", p.tuning.alpha_eV_per_K);
        s.get("beta_K", p.tuning.beta_K);
        s.get("Ec0_eV", p.tuning.Ec0_eV);
        s.get("drift_eV_per_K", p.tuning.drift_eV_per_K);
        s.get("T_min_K", p.T_min_K);
        s.get("T_max_K", p.T_max_K);
        s.get("T_step_K", p.T_step_K);
        s.get("noise_rms", p.synthesis.noise_rms);
        s.get("resolution_fwhm_eV", p.synthesis.resolution_fwhm_eV);
        s.get("step_eV", p.synthesis.step_eV);
        s.get("margin_eV", p.synthesis.margin_eV);
        if (auto am = s.get_string("amplitude_model")) {
            if (*am == "photonic") p.synthesis.amplitude_model = spectra::AmplitudeModel::Photonic;
            else if (*am == "equal") p.synthesis.amplitude_model = spectra::AmplitudeModel::Equal;
            else throw ParameterError("config: spectra.amplitude_model must be \"photonic\" or \"equal\"");
        }
        s.get("n_peaks", p.n_peaks);
        s.get("fit_resolution_fwhm_eV", p.fit.resolution_fwhm_eV);
        s.get("min_fwhm_eV", p.fit.min_fwhm_eV);
        s.get("max_iterations", p.fit.max_iterations);
        s.get("free_hg", p.free.hg);
        s.get("free_Ex0", p.free.Ex0);
        s.get("free_alpha", p.free.alpha);
        s.get("free_Ec0", p.free.Ec0);
        s.get("free_drift", p.free.drift);
        s.finish();
    }
    {
        Section s(doc, "io");
        if (auto dir = s.get_string("out_dir")) c.io.out_dir = *dir;
        s.get("seed", c.io.seed);
        s.get("svg", c.io.svg);
        s.finish();
    }
    c.spectra.synthesis.seed = c.io.seed;
    return c;
}

RunConfig load(const std::filesystem::path& path) {
    const std::string text = io::read_text_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw ParameterError("config '" + path.string() + "' is not valid JSON: " + ex.what());
    }
    return parse(doc);
}

json to_json(const RunConfig& c) {
    const auto& g = c.geometry;
    const auto& f = c.fdtd;
    const auto& m = c.modal;
    const auto& q = c.cqed;
    const auto& p = c.spectra;
    json j;
    j["geometry"] = {{"a_nm", g.lattice.a_nm},
                     {"r_nm", g.lattice.r_nm},
                     {"n_rows", g.lattice.n_rows},
                     {"n_cols", g.lattice.n_cols},
                     {"w_factor", g.lattice.w_factor},
                     {"shift_tiers_nm", g.cavity.shift_tiers_nm},
                     {"tier_columns", g.cavity.tier_columns},
                     {"dx_nm", g.dx_nm},
                     {"pad_nm", g.pad_nm},
                     {"n_core", g.n_core},
                     {"n_clad", g.n_clad},
                     {"slab_thickness_nm", g.slab_thickness_nm},
                     {"design_wavelength_nm", g.design_wavelength_nm},
                     {"eps_background", g.eps_background ? json(*g.eps_background) : json(nullptr)}};
    j["fdtd"] = {{"courant", f.sim.courant},
                 {"pml_cells", f.sim.pml_cells},
                 {"pml_order", f.sim.pml_order},
                 {"pml_reflection", f.sim.pml_reflection},
                 {"boundary", f.sim.boundary == fdtd::Boundary::Pml ? "pml" : "pec"},
                 {"threads", f.sim.threads},
                 {"source_component", fdtd::to_string(f.source_component)},
                 {"source_offset_x_cells", f.source_offset_x_cells},
                 {"source_offset_y_cells", f.source_offset_y_cells},
                 {"probe_offset_x_cells", f.probe_offset_x_cells},
                 {"probe_offset_y_cells", f.probe_offset_y_cells},
                 {"scan_center_eV", f.scan_center_eV},
                 {"scan_bandwidth_eV", f.scan_bandwidth_eV},
                 {"scan_steps_after_source", f.scan_steps_after_source},
                 {"run_bandwidth_eV", f.run_bandwidth_eV},
                 {"run_steps_after_source", f.run_steps_after_source},
                 {"flux_margin_cells", f.flux_margin_cells}};
    j["modal"] = {{"height_eff_nm", m.height_eff_nm},
                  {"n_index", m.n_index},
                  {"min_r2", m.min_r2},
                  {"settle_steps", m.settle_steps},
                  {"edge_cells", m.edge_cells}};
    j["cqed"] = {{"f", q.f},
                 {"n_index", q.n_index},
                 {"E0_eV", q.E0_eV},
                 {"V_lambda_n3", q.V_lambda_n3},
                 {"Q", q.Q},
                 {"Gx_eV", q.Gx_eV},
                 {"Gc_eV", q.Gc_eV ? json(*q.Gc_eV) : json(nullptr)},
                 {"hg_eV", q.hg_eV ? json(*q.hg_eV) : json(nullptr)},
                 {"q_min", q.q_min},
                 {"q_max", q.q_max},
                 {"q_points", q.q_points}};
    j["spectra"] = {{"hg_eV", p.hg_eV},
                    {"Gx_eV", p.Gx_eV},
                    {"Gc_eV", p.Gc_eV},
                    {"Ex0_eV", p.tuning.Ex0_eV},
                    {"alpha_eV_per_K", p.tuning.alpha_eV_per_K},
                    {"beta_K", p.tuning.beta_K},
                    {"Ec0_eV", p.tuning.Ec0_eV},
                    {"drift_eV_per_K", p.tuning.drift_eV_per_K},
                    {"T_min_K", p.T_min_K},
                    {"T_max_K", p.T_max_K},
                    {"T_step_K", p.T_step_K},
                    {"noise_rms", p.synthesis.noise_rms},
                    {"resolution_fwhm_eV", p.synthesis.resolution_fwhm_eV},
                    {"step_eV", p.synthesis.step_eV},
                    {"margin_eV", p.synthesis.margin_eV},
                    {"amplitude_model",
                     p.synthesis.amplitude_model == spectra::AmplitudeModel::Photonic ? "photonic" : "equal"},
                    {"n_peaks", p.n_peaks},
                    {"fit_resolution_fwhm_eV", p.fit.resolution_fwhm_eV},
                    {"min_fwhm_eV", p.fit.min_fwhm_eV},
                    {"max_iterations", p.fit.max_iterations},
                    {"free_hg", p.free.hg},
                    {"free_Ex0", p.free.Ex0},
                    {"free_alpha", p.free.alpha},
                    {"free_Ec0", p.free.Ec0},
                    {"free_drift", p.free.drift}};
    j["io"] = {{"out_dir", c.io.out_dir.string()}, {"seed", c.io.seed}, {"svg", c.io.svg}};
    return j;
}

}  // namespace qdcav::config
