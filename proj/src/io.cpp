#include "plesim/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "plesim/errors.hpp"

namespace plesim::io {

namespace {

namespace fs = std::filesystem;

void check_known_keys(const json& j, std::initializer_list<const char*> known,
                      const std::string& what) {
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(known.begin(), known.end(),
                         [&](const char* k) { return key == k; })) {
            throw ParseError("io: unknown key '" + key + "' in " + what);
        }
    }
}

std::vector<std::array<std::string, 2>> read_two_column_csv(const std::string& path,
                                                            const std::string& header) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("io: cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("io: '" + path + "' is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != header) {
        throw ParseError("io: '" + path + "' has header '" + line + "', expected '" + header + "'");
    }
    std::vector<std::array<std::string, 2>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw ParseError("io: '" + path + "' row " + std::to_string(rows.size() + 1) +
                             " is missing a comma");
        }
        rows.push_back({line.substr(0, comma), line.substr(comma + 1)});
    }
    return rows;
}

double parse_number(const std::string& field, const std::string& path, std::size_t row) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError("io: '" + path + "' row " + std::to_string(row) + ": bad number '" +
                         field + "'");
    }
    return v;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void atomic_write(const std::string& path, const std::string& content) {
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ParseError("io: cannot write '" + tmp.string() + "'");
        }
        out << content;
        if (!out.good()) {
            throw ParseError("io: short write to '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, target);
}

json to_json(const ScanProtocol& p) {
    return json{{"start_wavelength_nm", p.start_wavelength_nm},
                {"stop_wavelength_nm", p.stop_wavelength_nm},
                {"step_hz", p.step_hz},
                {"fm_broadening_hz", p.fm_broadening_hz},
                {"pulse_duration_s", p.pulse_duration_s},
                {"window_start_s", p.window_start_s},
                {"window_end_s", p.window_end_s},
                {"repetitions", p.repetitions}};
}

ScanProtocol protocol_from_json(const json& j) {
    check_known_keys(j,
                     {"start_wavelength_nm", "stop_wavelength_nm", "step_hz", "fm_broadening_hz",
                      "pulse_duration_s", "window_start_s", "window_end_s", "repetitions"},
                     "scan protocol");
    ScanProtocol p;
    p.start_wavelength_nm = j.value("start_wavelength_nm", p.start_wavelength_nm);
    p.stop_wavelength_nm = j.value("stop_wavelength_nm", p.stop_wavelength_nm);
    p.step_hz = j.value("step_hz", p.step_hz);
    p.fm_broadening_hz = j.value("fm_broadening_hz", p.fm_broadening_hz);
    p.pulse_duration_s = j.value("pulse_duration_s", p.pulse_duration_s);
    p.window_start_s = j.value("window_start_s", p.window_start_s);
    p.window_end_s = j.value("window_end_s", p.window_end_s);
    p.repetitions = j.value("repetitions", p.repetitions);
    p.validate();
    return p;
}

json to_json(const DetectorModel& d) {
    return json{{"system_detection_efficiency", d.system_detection_efficiency},
                {"dark_count_rate_hz", d.dark_count_rate_hz},
                {"background_fast_cpp", d.background_fast_cpp},
                {"background_fast_tau_s", d.background_fast_tau_s},
                {"background_slow_cpp", d.background_slow_cpp},
                {"background_slow_tau_s", d.background_slow_tau_s}};
}

DetectorModel detector_from_json(const json& j) {
    check_known_keys(j,
                     {"system_detection_efficiency", "dark_count_rate_hz", "background_fast_cpp",
                      "background_fast_tau_s", "background_slow_cpp", "background_slow_tau_s"},
                     "detector model");
    DetectorModel d;
    d.system_detection_efficiency = j.value("system_detection_efficiency", d.system_detection_efficiency);
    d.dark_count_rate_hz = j.value("dark_count_rate_hz", d.dark_count_rate_hz);
    d.background_fast_cpp = j.value("background_fast_cpp", d.background_fast_cpp);
    d.background_fast_tau_s = j.value("background_fast_tau_s", d.background_fast_tau_s);
    d.background_slow_cpp = j.value("background_slow_cpp", d.background_slow_cpp);
    d.background_slow_tau_s = j.value("background_slow_tau_s", d.background_slow_tau_s);
    d.validate();
    return d;
}

json to_json(const HoleBurnConfig& c) {
    return json{{"pump_duration_s", c.pump_duration_s},
                {"probe_duration_s", c.probe_duration_s},
                {"pump_probe_delay_s", c.pump_probe_delay_s},
                {"detunings_hz", c.detunings_hz},
                {"repetition_period_s", c.repetition_period_s},
                {"sideband_separation_hz", c.sideband_separation_hz},
                {"pump_rate_hz", c.pump_rate_hz},
                {"homogeneous_fwhm_hz", c.homogeneous_fwhm_hz},
                {"lifetime_s", c.lifetime_s},
                {"detection_window_s", c.detection_window_s}};
}

HoleBurnConfig holeburn_from_json(const json& j) {
    check_known_keys(j,
                     {"pump_duration_s", "probe_duration_s", "pump_probe_delay_s", "detunings_hz",
                      "repetition_period_s", "sideband_separation_hz", "pump_rate_hz",
                      "homogeneous_fwhm_hz", "lifetime_s", "detection_window_s"},
                     "hole-burn config");
    HoleBurnConfig c;
    c.pump_duration_s = j.value("pump_duration_s", c.pump_duration_s);
    c.probe_duration_s = j.value("probe_duration_s", c.probe_duration_s);
    c.pump_probe_delay_s = j.value("pump_probe_delay_s", c.pump_probe_delay_s);
    if (j.contains("detunings_hz")) {
        c.detunings_hz = j.at("detunings_hz").get<std::vector<double>>();
    }
    c.repetition_period_s = j.value("repetition_period_s", c.repetition_period_s);
    c.sideband_separation_hz = j.value("sideband_separation_hz", c.sideband_separation_hz);
    c.pump_rate_hz = j.value("pump_rate_hz", c.pump_rate_hz);
    c.homogeneous_fwhm_hz = j.value("homogeneous_fwhm_hz", c.homogeneous_fwhm_hz);
    c.lifetime_s = j.value("lifetime_s", c.lifetime_s);
    c.detection_window_s = j.value("detection_window_s", c.detection_window_s);
    c.validate();
    return c;
}

json to_json(const ZeemanSite& site) {
    json subsites = json::array();
    for (const auto& s : site.subsites) {
        json weights = json::array();
        for (const auto& w : s.weights) {
            weights.push_back(json{{"base", w.base},
                                   {"modulation", w.modulation},
                                   {"phase_rad", w.phase_rad}});
        }
        subsites.push_back(
            json{{"g_ground", s.g_ground}, {"g_excited", s.g_excited}, {"weights", weights}});
    }
    return json{{"center_frequency_hz", site.center_frequency_hz}, {"subsites", subsites}};
}

ZeemanSite zeeman_from_json(const json& j) {
    check_known_keys(j, {"center_frequency_hz", "subsites"}, "Zeeman site");
    ZeemanSite site;
    site.center_frequency_hz = j.value("center_frequency_hz", 0.0);
    for (const auto& js : j.at("subsites")) {
        check_known_keys(js, {"g_ground", "g_excited", "weights"}, "Zeeman subsite");
        ZeemanSubsite s;
        s.g_ground = js.value("g_ground", 0.0);
        s.g_excited = js.value("g_excited", 0.0);
        const auto& weights = js.at("weights");
        if (weights.size() != 4) {
            throw ParseError("io: Zeeman subsite needs exactly 4 branch weights");
        }
        for (std::size_t b = 0; b < 4; ++b) {
            check_known_keys(weights[b], {"base", "modulation", "phase_rad"}, "branch weight");
            s.weights[b].base = weights[b].value("base", 1.0);
            s.weights[b].modulation = weights[b].value("modulation", 0.0);
            s.weights[b].phase_rad = weights[b].value("phase_rad", 0.0);
        }
        site.subsites.push_back(s);
    }
    site.validate();
    return site;
}

json to_json(const FitResult& fit) {
    json params = json::object();
    for (const auto& p : fit.parameters) {
        params[p.name] = json{{"value", p.value}, {"std_error", p.std_error}, {"unit", p.unit}};
    }
    return json{{"parameters", params},
                {"residual_sum_of_squares", fit.residual_sum_of_squares},
                {"aicc", fit.aicc},
                {"converged", fit.converged},
                {"iterations", fit.iterations},
                {"gradient_norm", fit.gradient_norm},
                {"convergence_reason", fit.convergence_reason}};
}

json to_json(const analysis::MatchReport& report) {
    json pairs = json::array();
    for (const auto& p : report.pairs) {
        pairs.push_back(json{{"optical_hz", p.optical_hz},
                             {"electrical_hz", p.electrical_hz},
                             {"separation_hz", p.separation_hz}});
    }
    return json{{"pairs", pairs},
                {"matched_fraction", report.matched_fraction},
                {"tolerance_hz", report.tolerance_hz}};
}

json to_json(const analysis::BackgroundStudy& study) {
    json entries = json::array();
    for (const auto& e : study.entries) {
        json entry{{"offset_hz", e.offset_hz}, {"included", e.included}};
        if (!e.note.empty()) {
            entry["note"] = e.note;
        }
        if (e.included) {
            entry["lifetime_s"] = e.result.lifetime_s();
            entry["lifetime_error_s"] = e.result.lifetime_error_s();
            entry["model"] = e.result.selection.model == fit::DecayModel::biexponential
                                 ? "biexponential"
                                 : "single";
        }
        entries.push_back(std::move(entry));
    }
    return json{{"entries", entries},
                {"mean_fit_error_s", study.mean_fit_error_s},
                {"lifetime_spread_s", study.lifetime_spread_s},
                {"spread_to_error_ratio", study.spread_to_error_ratio}};
}

json to_json(const cavity::CavityDesign& d) {
    return json{{"wavelength_nm", d.wavelength_nm},
                {"refractive_index", d.refractive_index},
                {"bulk_rate_hz", d.bulk_rate_hz},
                {"purcell_factor", d.purcell_factor},
                {"coupling_hz", d.coupling_hz},
                {"damping_hz", d.damping_hz},
                {"quality_factor", d.quality_factor},
                {"mode_volume_m3", d.mode_volume_m3},
                {"mode_volume_rel", d.mode_volume_rel}};
}

json to_json(const HoleEndpoints& e) {
    return json{{"resonant_occupation", e.resonant_occupation},
                {"reference_resonant", e.reference_resonant},
                {"far_occupation_sum", e.far_occupation_sum},
                {"reference_far", e.reference_far},
                {"far_discrepancy", e.far_discrepancy}};
}

void save_spectrum(const Spectrum& spectrum, const std::string& csv_path) {
    std::ostringstream csv;
    csv << "frequency_hz,counts\n";
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        csv << format_double(spectrum.frequency_at(i)) << ',' << format_double(spectrum.counts[i])
            << '\n';
    }
    atomic_write(csv_path, csv.str());

    json sidecar{{"protocol", to_json(spectrum.protocol)},
                 {"detector", to_json(spectrum.detector)},
                 {"sampled", spectrum.sampled}};
    if (spectrum.seed) {
        sidecar["seed"] = *spectrum.seed;
    }
    atomic_write(csv_path + ".json", sidecar.dump(2) + "\n");
}

Spectrum load_spectrum(const std::string& csv_path) {
    Spectrum spectrum;
    const auto rows = read_two_column_csv(csv_path, "frequency_hz,counts");
    spectrum.counts.reserve(rows.size());
    std::vector<double> freqs;
    freqs.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        freqs.push_back(parse_number(rows[i][0], csv_path, i + 1));
        spectrum.counts.push_back(parse_number(rows[i][1], csv_path, i + 1));
    }
    if (freqs.size() >= 2) {
        spectrum.f0_hz = freqs.front();
        spectrum.step_hz = (freqs.back() - freqs.front()) / static_cast<double>(freqs.size() - 1);
        for (std::size_t i = 0; i < freqs.size(); ++i) {
            if (std::abs(freqs[i] - spectrum.frequency_at(i)) > 1.0) {
                throw ParseError("io: spectrum grid is not uniform to within 1 Hz");
            }
        }
    } else if (freqs.size() == 1) {
        spectrum.f0_hz = freqs.front();
        spectrum.step_hz = 1.0;
    }

    const std::string sidecar_path = csv_path + ".json";
    if (fs::exists(sidecar_path)) {
        std::ifstream in(sidecar_path);
        json sidecar = json::parse(in, nullptr, true, true);
        if (sidecar.contains("protocol")) {
            spectrum.protocol = protocol_from_json(sidecar.at("protocol"));
        }
        if (sidecar.contains("detector")) {
            spectrum.detector = detector_from_json(sidecar.at("detector"));
        }
        spectrum.sampled = sidecar.value("sampled", false);
        if (sidecar.contains("seed")) {
            spectrum.seed = sidecar.at("seed").get<std::uint64_t>();
        }
    }
    return spectrum;
}

void save_trace(const TimeTrace& trace, const std::string& csv_path) {
    std::ostringstream csv;
    csv << "t_us,counts\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        csv << format_double(trace.bin_start_s(i) * 1e6) << ',' << format_double(trace.counts[i])
            << '\n';
    }
    atomic_write(csv_path, csv.str());
    json sidecar{{"protocol", to_json(trace.protocol)},
                 {"bin_width_s", trace.bin_width_s}};
    atomic_write(csv_path + ".json", sidecar.dump(2) + "\n");
}

TimeTrace load_trace(const std::string& csv_path) {
    TimeTrace trace;
    const auto rows = read_two_column_csv(csv_path, "t_us,counts");
    if (rows.size() < 2) {
        throw ParseError("io: trace '" + csv_path + "' needs at least 2 bins");
    }
    std::vector<double> t_us;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        t_us.push_back(parse_number(rows[i][0], csv_path, i + 1));
        trace.counts.push_back(parse_number(rows[i][1], csv_path, i + 1));
    }
    trace.bin_width_s = (t_us[1] - t_us[0]) * 1e-6;

    const std::string sidecar_path = csv_path + ".json";
    if (fs::exists(sidecar_path)) {
        std::ifstream in(sidecar_path);
        json sidecar = json::parse(in, nullptr, true, true);
        if (sidecar.contains("protocol")) {
            trace.protocol = protocol_from_json(sidecar.at("protocol"));
        }
        trace.bin_width_s = sidecar.value("bin_width_s", trace.bin_width_s);
    }
    trace.validate();
    return trace;
}

void save_hole_profile(const HoleProfile& profile, const HoleBurnConfig& config,
                       const std::string& csv_path) {
    save_hole_profile(profile.detunings_hz, profile.signal, csv_path);
    json sidecar{{"config", to_json(config)},
                 {"endpoints", to_json(profile.endpoints)},
                 {"plateau_raw", profile.plateau_raw},
                 {"repetition_warning", profile.repetition_warning}};
    atomic_write(csv_path + ".json", sidecar.dump(2) + "\n");
}

void save_hole_profile(const std::vector<double>& detunings_hz, const std::vector<double>& signal,
                       const std::string& csv_path) {
    std::ostringstream csv;
    csv << "detuning_hz,signal_norm\n";
    for (std::size_t i = 0; i < detunings_hz.size(); ++i) {
        csv << format_double(detunings_hz[i]) << ',' << format_double(signal[i]) << '\n';
    }
    atomic_write(csv_path, csv.str());
}

std::pair<std::vector<double>, std::vector<double>> load_hole_profile(const std::string& csv_path) {
    const auto rows = read_two_column_csv(csv_path, "detuning_hz,signal_norm");
    std::vector<double> detunings, signal;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        detunings.push_back(parse_number(rows[i][0], csv_path, i + 1));
        signal.push_back(parse_number(rows[i][1], csv_path, i + 1));
    }
    return {std::move(detunings), std::move(signal)};
}

std::vector<double> load_frequency_list(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) {
        throw ParseError("io: cannot open '" + csv_path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("io: '" + csv_path + "' is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "frequency_hz") {
        throw ParseError("io: '" + csv_path + "' has header '" + line + "', expected 'frequency_hz'");
    }
    std::vector<double> frequencies;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        frequencies.push_back(parse_number(line, csv_path, row));
    }
    return frequencies;
}

void save_frequency_list(const std::vector<double>& frequencies_hz, const std::string& csv_path) {
    std::ostringstream csv;
    csv << "frequency_hz\n";
    for (double f : frequencies_hz) {
        csv << format_double(f) << '\n';
    }
    atomic_write(csv_path, csv.str());
}

}  // namespace plesim::io
