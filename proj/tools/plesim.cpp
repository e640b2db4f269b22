#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "plesim/analysis.hpp"
#include "plesim/cavity.hpp"
#include "plesim/dynamics.hpp"
#include "plesim/errors.hpp"
#include "plesim/io.hpp"
#include "plesim/model.hpp"
#include "plesim/reproduce.hpp"
#include "plesim/synth.hpp"

namespace {

using plesim::io::json;

int thread_count_from_env() {
    const char* env = std::getenv("PLESIM_THREADS");
    if (env == nullptr) {
        return 1;
    }
    const int n = std::atoi(env);
    return n > 0 ? n : 1;
}

struct ProtocolFlags {
    double start_nm = 1516.0;
    double stop_nm = 1550.0;
    double step_mhz = 50.0;
    double fm_mhz = 60.0;
    double pulse_us = 100.0;
    double window_start_us = 10.0;
    double window_end_us = 1000.0;
    long reps = 1000;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--start-nm", start_nm, "Scan start wavelength (vacuum nm)");
        cmd->add_option("--stop-nm", stop_nm, "Scan stop wavelength (vacuum nm)");
        cmd->add_option("--step-mhz", step_mhz, "Laser step (MHz)");
        cmd->add_option("--fm-mhz", fm_mhz, "FM broadening full width (MHz)");
        cmd->add_option("--pulse-us", pulse_us, "Excitation pulse duration (us)");
        cmd->add_option("--window-start-us", window_start_us, "Counting window start after pulse (us)");
        cmd->add_option("--window-end-us", window_end_us, "Counting window end after pulse (us)");
        cmd->add_option("--reps", reps, "Pulses per frequency step");
    }

    plesim::ScanProtocol build() const {
        plesim::ScanProtocol p;
        p.start_wavelength_nm = start_nm;
        p.stop_wavelength_nm = stop_nm;
        p.step_hz = step_mhz * 1e6;
        p.fm_broadening_hz = fm_mhz * 1e6;
        p.pulse_duration_s = pulse_us * 1e-6;
        p.window_start_s = window_start_us * 1e-6;
        p.window_end_s = window_end_us * 1e-6;
        p.repetitions = reps;
        p.validate();
        return p;
    }
};

struct DetectorFlags {
    double efficiency = 0.6627;
    double dark_hz = 10.0;
    double bg_fast_cpp = 0.05;
    double bg_fast_tau_us = 200.0;
    double bg_slow_cpp = 0.05;
    double bg_slow_tau_us = 800.0;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--efficiency", efficiency, "System detection efficiency (0,1]");
        cmd->add_option("--dark-hz", dark_hz, "Dark count rate (Hz)");
        cmd->add_option("--bg-fast-cpp", bg_fast_cpp, "Fast background counts/pulse");
        cmd->add_option("--bg-fast-tau-us", bg_fast_tau_us, "Fast background time constant (us)");
        cmd->add_option("--bg-slow-cpp", bg_slow_cpp, "Slow background counts/pulse");
        cmd->add_option("--bg-slow-tau-us", bg_slow_tau_us, "Slow background time constant (us)");
    }

    plesim::DetectorModel build() const {
        plesim::DetectorModel d;
        d.system_detection_efficiency = efficiency;
        d.dark_count_rate_hz = dark_hz;
        d.background_fast_cpp = bg_fast_cpp;
        d.background_fast_tau_s = bg_fast_tau_us * 1e-6;
        d.background_slow_cpp = bg_slow_cpp;
        d.background_slow_tau_s = bg_slow_tau_us * 1e-6;
        d.validate();
        return d;
    }
};

void write_effective_config(const std::string& out_path, const json& config) {
    plesim::io::atomic_write(out_path + ".config.json", config.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pulsed resonant PLE spectroscopy simulator and analysis toolkit"};
    app.require_subcommand(1);
    // One top-level config option; file keys live in a section named
    // after the subcommand. Flags given on the command line win.
    app.fallthrough(true);
    app.set_config("--config", "", "Read options from an INI/TOML file (one [subcommand] section)");
    app.allow_config_extras(CLI::config_extras_mode::error);
    const int threads = thread_count_from_env();

    // ---- simulate-spectrum ----
    auto* sim_spec = app.add_subcommand("simulate-spectrum", "Synthesize a survey spectrum");
    ProtocolFlags spec_protocol;
    DetectorFlags spec_detector;
    std::string spec_catalog;
    std::string spec_out;
    std::uint64_t spec_seed = 0;
    bool spec_expected_only = false;
    sim_spec->add_option("--catalog", spec_catalog, "Input catalog CSV")->required();
    sim_spec->add_option("--out", spec_out, "Output spectrum CSV")->required();
    auto* spec_seed_opt = sim_spec->add_option("--seed", spec_seed, "Poisson sampling seed");
    sim_spec->add_flag("--expected-only", spec_expected_only, "Skip Poisson sampling");
    spec_protocol.add_to(sim_spec);
    spec_detector.add_to(sim_spec);

    // ---- simulate-decay ----
    auto* sim_decay = app.add_subcommand("simulate-decay", "Synthesize a fluorescence decay trace");
    ProtocolFlags decay_protocol;
    DetectorFlags decay_detector;
    std::string decay_catalog;
    std::string decay_out;
    std::string decay_off_out;
    double decay_line_nm = 0.0;
    double decay_duration_ms = 5.0;
    double decay_bin_us = 10.0;
    std::uint64_t decay_seed = 0;
    bool decay_expected_only = false;
    bool decay_background_only = false;
    sim_decay->add_option("--catalog", decay_catalog, "Input catalog CSV");
    auto* line_opt = sim_decay->add_option("--line-nm", decay_line_nm,
                                           "Catalog line to excite (vacuum nm, nearest entry)");
    sim_decay->add_option("--out", decay_out, "Output trace CSV")->required();
    sim_decay->add_option("--off-out", decay_off_out, "Also write the off-resonant trace here");
    sim_decay->add_option("--duration-ms", decay_duration_ms, "Trace duration (ms)");
    sim_decay->add_option("--bin-us", decay_bin_us, "Bin width (us)");
    auto* decay_seed_opt = sim_decay->add_option("--seed", decay_seed, "Poisson sampling seed");
    sim_decay->add_flag("--expected-only", decay_expected_only, "Skip Poisson sampling");
    sim_decay->add_flag("--background-only", decay_background_only,
                        "Emit the background trace instead of a line");
    decay_protocol.add_to(sim_decay);
    decay_detector.add_to(sim_decay);

    // ---- simulate-hole ----
    auto* sim_hole = app.add_subcommand("simulate-hole", "Simulate a transient spectral hole");
    std::string hole_out;
    std::string hole_config_json;
    double hole_gamma_mhz = 0.75;
    double hole_tau_ms = 0.764;
    double hole_r0_hz = 1000.0;
    double hole_pump_us = 20.0;
    double hole_probe_us = -1.0;
    double hole_delay_us = 0.0;
    double hole_rep_ms = 3.0;
    double hole_window_ms = 1.0;
    double hole_span_gammas = 15.0;
    std::size_t hole_points = 161;
    sim_hole->add_option("--out", hole_out, "Output profile CSV")->required();
    sim_hole->add_option("--config-json", hole_config_json, "Full burn configuration (JSON)");
    sim_hole->add_option("--gamma-d-mhz", hole_gamma_mhz, "Homogeneous FWHM (MHz)");
    sim_hole->add_option("--tau-ms", hole_tau_ms, "Optical lifetime (ms)");
    sim_hole->add_option("--r0-hz", hole_r0_hz, "Peak pump rate (Hz)");
    sim_hole->add_option("--pump-us", hole_pump_us, "Pump duration (us)");
    sim_hole->add_option("--probe-us", hole_probe_us, "Probe duration (us, default = pump)");
    sim_hole->add_option("--delay-us", hole_delay_us, "Pump-probe delay (us)");
    sim_hole->add_option("--rep-ms", hole_rep_ms, "Repetition period (ms)");
    sim_hole->add_option("--window-ms", hole_window_ms, "Detection window (ms)");
    sim_hole->add_option("--span-gammas", hole_span_gammas, "Detuning grid half-span (homogeneous widths)");
    sim_hole->add_option("--points", hole_points, "Detuning grid points");

    // ---- zeeman ----
    auto* zeeman_cmd = app.add_subcommand("zeeman", "Zeeman pattern of a configured site");
    std::string zeeman_site_json;
    std::string zeeman_out;
    double zeeman_field_mt = 50.0;
    double zeeman_pol_deg = 0.0;
    double zeeman_max_field_mt = 60.0;
    bool zeeman_reverse = false;
    zeeman_cmd->add_option("--site-json", zeeman_site_json, "Site configuration (JSON)")->required();
    zeeman_cmd->add_option("--out", zeeman_out, "Output JSON")->required();
    zeeman_cmd->add_option("--field-mt", zeeman_field_mt, "Applied field (mT)");
    zeeman_cmd->add_option("--pol-deg", zeeman_pol_deg, "Polarization angle (deg)");
    zeeman_cmd->add_option("--max-field-mt", zeeman_max_field_mt, "Configured field limit (mT)");
    zeeman_cmd->add_flag("--reverse", zeeman_reverse, "Also emit the reversed-field pattern");

    // ---- analyze-spectrum ----
    auto* an_spec = app.add_subcommand("analyze-spectrum", "Detect and fit survey peaks");
    std::string an_spec_in;
    std::string an_spec_out;
    std::string an_spec_report;
    double an_spec_prominence = 0.15;
    int an_spec_smoothing = 7;
    double an_spec_separation_ghz = 2.0;
    an_spec->add_option("--in", an_spec_in, "Input spectrum CSV (sidecar JSON expected)")->required();
    an_spec->add_option("--out", an_spec_out, "Output catalog CSV")->required();
    an_spec->add_option("--report", an_spec_report, "Optional per-line fit report (JSON)");
    an_spec->add_option("--min-prominence", an_spec_prominence, "Prominence threshold (counts/pulse)");
    an_spec->add_option("--smoothing-bins", an_spec_smoothing, "Detection boxcar width (bins)");
    an_spec->add_option("--min-separation-ghz", an_spec_separation_ghz,
                        "Minimum peak separation (GHz)");

    // ---- analyze-lifetime ----
    auto* an_life = app.add_subcommand("analyze-lifetime", "Background-subtracted lifetime fit");
    std::string an_life_on;
    std::string an_life_off;
    std::string an_life_out;
    an_life->add_option("--on", an_life_on, "On-resonant trace CSV")->required();
    an_life->add_option("--off", an_life_off, "Off-resonant trace CSV")->required();
    an_life->add_option("--out", an_life_out, "Output fit JSON")->required();

    // ---- analyze-hole ----
    auto* an_hole = app.add_subcommand("analyze-hole", "Hole width and homogeneous bound");
    std::string an_hole_in;
    std::string an_hole_out;
    an_hole->add_option("--in", an_hole_in, "Input hole profile CSV")->required();
    an_hole->add_option("--out", an_hole_out, "Output fit JSON")->required();

    // ---- match ----
    auto* match_cmd = app.add_subcommand("match", "Match optical lines against an electrical list");
    std::string match_optical;
    std::string match_electrical;
    std::string match_out;
    std::string match_format = "json";
    double match_tolerance_ghz = 1.0;
    match_cmd->add_option("--optical", match_optical, "Optical catalog CSV")->required();
    match_cmd->add_option("--electrical", match_electrical, "Electrical line list CSV")->required();
    match_cmd->add_option("--out", match_out, "Output report")->required();
    match_cmd->add_option("--tolerance-ghz", match_tolerance_ghz, "Match tolerance (GHz)");
    match_cmd->add_option("--format", match_format, "Report format: json or csv")
        ->check(CLI::IsMember({"json", "csv"}));

    // ---- purcell ----
    auto* purcell_cmd = app.add_subcommand("purcell", "Cavity design for a target Purcell factor");
    double purcell_f = 1e6;
    double purcell_gamma_bulk = 1e3;
    double purcell_lambda_nm = 1540.0;
    double purcell_n = 3.48;
    std::string purcell_out;
    purcell_cmd->add_option("--F", purcell_f, "Target Purcell factor");
    purcell_cmd->add_option("--gamma-bulk", purcell_gamma_bulk, "Bulk emission rate (Hz)");
    purcell_cmd->add_option("--lambda-nm", purcell_lambda_nm, "Vacuum wavelength (nm)");
    purcell_cmd->add_option("--n", purcell_n, "Refractive index");
    purcell_cmd->add_option("--out", purcell_out, "Optional output JSON");

    // ---- reproduce ----
    auto* repro_cmd = app.add_subcommand("reproduce", "Full synthetic round-trip self-check");
    std::string repro_data = "data";
    std::uint64_t repro_seed = 20260809;
    std::string repro_out;
    repro_cmd->add_option("--data", repro_data, "Directory with the bundled catalog files");
    repro_cmd->add_option("--seed", repro_seed, "Round-trip sampling seed");
    repro_cmd->add_option("--out", repro_out, "Optional report JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sim_spec->parsed()) {
            if (!spec_expected_only && spec_seed_opt->count() == 0) {
                throw std::invalid_argument("simulate-spectrum: --seed is required when sampling");
            }
            const auto catalog = plesim::load_catalog_file(spec_catalog);
            const auto protocol = spec_protocol.build();
            const auto detector = spec_detector.build();
            plesim::Spectrum spectrum = expected_spectrum(catalog, protocol, detector, threads);
            if (!spec_expected_only) {
                spectrum = sample_spectrum(spectrum, spec_seed, threads);
            }
            plesim::io::save_spectrum(spectrum, spec_out);
            json config{{"command", "simulate-spectrum"},
                        {"catalog", spec_catalog},
                        {"protocol", plesim::io::to_json(protocol)},
                        {"detector", plesim::io::to_json(detector)},
                        {"expected_only", spec_expected_only}};
            if (!spec_expected_only) {
                config["seed"] = spec_seed;
            }
            write_effective_config(spec_out, config);
            std::cout << "wrote " << spec_out << " (" << spectrum.size() << " points)\n";
        } else if (sim_decay->parsed()) {
            if (!decay_expected_only && decay_seed_opt->count() == 0) {
                throw std::invalid_argument("simulate-decay: --seed is required when sampling");
            }
            const auto protocol = decay_protocol.build();
            const auto detector = decay_detector.build();
            const double duration = decay_duration_ms * 1e-3;
            const double bin = decay_bin_us * 1e-6;

            plesim::TimeTrace trace;
            json config{{"command", "simulate-decay"},
                        {"protocol", plesim::io::to_json(protocol)},
                        {"detector", plesim::io::to_json(detector)},
                        {"duration_ms", decay_duration_ms},
                        {"bin_us", decay_bin_us},
                        {"expected_only", decay_expected_only}};
            if (decay_background_only) {
                trace = plesim::background_trace(detector, protocol, duration, bin);
                config["background_only"] = true;
            } else {
                if (decay_catalog.empty() || line_opt->count() == 0) {
                    throw std::invalid_argument(
                        "simulate-decay: --catalog and --line-nm are required unless "
                        "--background-only is set");
                }
                const auto catalog = plesim::load_catalog_file(decay_catalog);
                const auto idx = catalog.nearest(decay_line_nm, 0.01);
                if (!idx) {
                    throw std::invalid_argument("simulate-decay: no catalog line within 10 pm of " +
                                                std::to_string(decay_line_nm) + " nm");
                }
                trace = plesim::decay_trace(catalog.resonances[*idx], detector, protocol, duration,
                                            bin);
                config["catalog"] = decay_catalog;
                config["line_nm"] = catalog.resonances[*idx].center_wavelength_nm;
            }
            if (!decay_expected_only) {
                trace = plesim::sample_trace(trace, decay_seed);
                config["seed"] = decay_seed;
            }
            plesim::io::save_trace(trace, decay_out);
            write_effective_config(decay_out, config);
            std::cout << "wrote " << decay_out << " (" << trace.size() << " bins)\n";

            if (!decay_off_out.empty()) {
                plesim::TimeTrace off = plesim::background_trace(detector, protocol, duration, bin);
                if (!decay_expected_only) {
                    off = plesim::sample_trace(off, decay_seed + 1);
                }
                plesim::io::save_trace(off, decay_off_out);
                std::cout << "wrote " << decay_off_out << " (" << off.size() << " bins)\n";
            }
        } else if (sim_hole->parsed()) {
            plesim::HoleBurnConfig cfg;
            if (!hole_config_json.empty()) {
                std::ifstream in(hole_config_json);
                if (!in) {
                    throw plesim::ParseError("simulate-hole: cannot open '" + hole_config_json + "'");
                }
                cfg = plesim::io::holeburn_from_json(json::parse(in, nullptr, true, true));
            } else {
                cfg.homogeneous_fwhm_hz = hole_gamma_mhz * 1e6;
                cfg.lifetime_s = hole_tau_ms * 1e-3;
                cfg.pump_rate_hz = hole_r0_hz;
                cfg.pump_duration_s = hole_pump_us * 1e-6;
                cfg.probe_duration_s = (hole_probe_us > 0.0 ? hole_probe_us : hole_pump_us) * 1e-6;
                cfg.pump_probe_delay_s = hole_delay_us * 1e-6;
                cfg.repetition_period_s = hole_rep_ms * 1e-3;
                cfg.detection_window_s = hole_window_ms * 1e-3;
                cfg.detunings_hz = plesim::HoleBurnConfig::symmetric_grid(
                    hole_span_gammas * cfg.homogeneous_fwhm_hz, hole_points);
            }
            const auto profile = plesim::simulate_hole(cfg, threads);
            if (profile.repetition_warning) {
                std::cerr << "warning: repetition period is below twice the lifetime\n";
            }
            plesim::io::save_hole_profile(profile, cfg, hole_out);
            json config{{"command", "simulate-hole"}, {"config", plesim::io::to_json(cfg)}};
            write_effective_config(hole_out, config);
            std::cout << "wrote " << hole_out << " (" << profile.signal.size() << " points)\n";
        } else if (zeeman_cmd->parsed()) {
            std::ifstream in(zeeman_site_json);
            if (!in) {
                throw plesim::ParseError("zeeman: cannot open '" + zeeman_site_json + "'");
            }
            const auto site = plesim::io::zeeman_from_json(json::parse(in, nullptr, true, true));
            const double field = zeeman_field_mt * 1e-3;
            const double pol = zeeman_pol_deg * M_PI / 180.0;
            const double max_field = zeeman_max_field_mt * 1e-3;

            const auto to_array = [](const std::vector<plesim::ZeemanLine>& lines) {
                json arr = json::array();
                for (const auto& l : lines) {
                    arr.push_back(json{{"offset_hz", l.offset_hz}, {"intensity", l.intensity}});
                }
                return arr;
            };
            json out{{"center_frequency_hz", site.center_frequency_hz},
                     {"field_t", field},
                     {"polarization_rad", pol},
                     {"lines", to_array(plesim::zeeman_lines(site, field, pol, max_field))}};
            if (zeeman_reverse) {
                out["lines_reversed_field"] =
                    to_array(plesim::zeeman_lines(site, -field, pol, max_field));
            }
            plesim::io::atomic_write(zeeman_out, out.dump(2) + "\n");
            json config{{"command", "zeeman"},
                        {"site_json", zeeman_site_json},
                        {"field_mt", zeeman_field_mt},
                        {"pol_deg", zeeman_pol_deg},
                        {"max_field_mt", zeeman_max_field_mt}};
            write_effective_config(zeeman_out, config);
            std::cout << "wrote " << zeeman_out << "\n";
        } else if (an_spec->parsed()) {
            const auto spectrum = plesim::io::load_spectrum(an_spec_in);
            plesim::fit::PeakDetectOptions options;
            options.min_prominence_cpp = an_spec_prominence;
            options.smoothing_bins = an_spec_smoothing;
            options.min_separation_hz = an_spec_separation_ghz * 1e9;
            const auto survey = plesim::analysis::survey_pipeline(spectrum, options);
            plesim::save_catalog_file(survey.catalog, an_spec_out);
            if (!an_spec_report.empty()) {
                json lines = json::array();
                for (const auto& line : survey.lines) {
                    lines.push_back(json{{"center_hz", line.candidate.center_hz},
                                         {"prominence_cpp", line.candidate.prominence_cpp},
                                         {"status", line.status},
                                         {"fit", plesim::io::to_json(line.fit)}});
                }
                plesim::io::atomic_write(an_spec_report, lines.dump(2) + "\n");
            }
            json config{{"command", "analyze-spectrum"},
                        {"in", an_spec_in},
                        {"min_prominence", an_spec_prominence},
                        {"smoothing_bins", an_spec_smoothing},
                        {"min_separation_ghz", an_spec_separation_ghz}};
            write_effective_config(an_spec_out, config);
            std::cout << "found " << survey.catalog.size() << " lines -> " << an_spec_out << "\n";
        } else if (an_life->parsed()) {
            const auto on = plesim::io::load_trace(an_life_on);
            const auto off = plesim::io::load_trace(an_life_off);
            const auto result = plesim::analysis::extract_lifetime(on, off);
            json out{{"model", result.selection.model == plesim::fit::DecayModel::biexponential
                                   ? "biexponential"
                                   : "single"},
                     {"lifetime_s", result.lifetime_s()},
                     {"lifetime_error_s", result.lifetime_error_s()},
                     {"no_signal", result.no_signal},
                     {"background_mismatch", result.background_mismatch},
                     {"fit", plesim::io::to_json(result.selection.fit)},
                     {"single_fit", plesim::io::to_json(result.selection.single_fit)}};
            if (result.selection.biexp_usable) {
                out["biexponential_fit"] = plesim::io::to_json(result.selection.biexp_fit);
            }
            plesim::io::atomic_write(an_life_out, out.dump(2) + "\n");
            json config{{"command", "analyze-lifetime"}, {"on", an_life_on}, {"off", an_life_off}};
            write_effective_config(an_life_out, config);
            std::cout << "lifetime " << result.lifetime_s() * 1e3 << " ms +- "
                      << result.lifetime_error_s() * 1e3 << " ms -> " << an_life_out << "\n";
        } else if (an_hole->parsed()) {
            const auto [detunings, signal] = plesim::io::load_hole_profile(an_hole_in);
            const auto result = plesim::analysis::hole_to_homogeneous(detunings, signal);
            json out{{"hole_fwhm_hz", result.hole_fwhm_hz},
                     {"homogeneous_bound_hz", result.homogeneous_bound_hz},
                     {"fit", plesim::io::to_json(result.fit)}};
            plesim::io::atomic_write(an_hole_out, out.dump(2) + "\n");
            json config{{"command", "analyze-hole"}, {"in", an_hole_in}};
            write_effective_config(an_hole_out, config);
            std::cout << "hole FWHM " << result.hole_fwhm_hz / 1e6
                      << " MHz, homogeneous bound " << result.homogeneous_bound_hz / 1e6
                      << " MHz -> " << an_hole_out << "\n";
        } else if (match_cmd->parsed()) {
            const auto optical = plesim::load_catalog_file(match_optical);
            const auto electrical = plesim::io::load_frequency_list(match_electrical);
            const auto report =
                plesim::analysis::match_resonances(optical, electrical, match_tolerance_ghz * 1e9);
            if (match_format == "json") {
                plesim::io::atomic_write(match_out,
                                         plesim::io::to_json(report).dump(2) + "\n");
            } else {
                std::ostringstream csv;
                csv << "optical_hz,electrical_hz,separation_hz\n";
                for (const auto& p : report.pairs) {
                    csv << plesim::io::format_double(p.optical_hz) << ','
                        << plesim::io::format_double(p.electrical_hz) << ','
                        << plesim::io::format_double(p.separation_hz) << '\n';
                }
                plesim::io::atomic_write(match_out, csv.str());
            }
            json config{{"command", "match"},
                        {"optical", match_optical},
                        {"electrical", match_electrical},
                        {"tolerance_ghz", match_tolerance_ghz},
                        {"format", match_format}};
            write_effective_config(match_out, config);
            std::cout << "matched fraction " << report.matched_fraction << " ("
                      << report.pairs.size() << " pairs) -> " << match_out << "\n";
        } else if (purcell_cmd->parsed()) {
            const auto design = plesim::cavity::design_for_purcell(purcell_lambda_nm, purcell_n,
                                                                   purcell_f, purcell_gamma_bulk);
            const json out = plesim::io::to_json(design);
            if (!purcell_out.empty()) {
                plesim::io::atomic_write(purcell_out, out.dump(2) + "\n");
                write_effective_config(purcell_out, json{{"command", "purcell"},
                                                         {"F", purcell_f},
                                                         {"gamma_bulk", purcell_gamma_bulk},
                                                         {"lambda_nm", purcell_lambda_nm},
                                                         {"n", purcell_n}});
            }
            std::cout << "V_m = " << design.mode_volume_rel << " (lambda/n)^3 ("
                      << design.mode_volume_m3 << " m^3), kappa = " << design.damping_hz / 1e9
                      << " GHz, Q = " << design.quality_factor << "\n";
        } else if (repro_cmd->parsed()) {
            plesim::reproduce::Options options;
            options.data_dir = repro_data;
            options.seed = repro_seed;
            options.threads = threads;
            const auto results = plesim::reproduce::run_acceptance(options);
            bool all_ok = true;
            json out = json::array();
            for (const auto& r : results) {
                all_ok = all_ok && r.passed;
                std::cout << (r.passed ? "PASS" : "FAIL") << " criterion " << r.id << ": " << r.name
                          << " -- " << r.detail << "\n";
                out.push_back(json{{"id", r.id},
                                   {"name", r.name},
                                   {"passed", r.passed},
                                   {"detail", r.detail}});
            }
            if (!repro_out.empty()) {
                plesim::io::atomic_write(repro_out, out.dump(2) + "\n");
            }
            if (!all_ok) {
                return 2;
            }
        }
    } catch (const plesim::AnalysisError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
