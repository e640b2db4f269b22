#include "plesim/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "plesim/errors.hpp"

namespace plesim {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw std::invalid_argument("model: " + what);
    }
}

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double parse_double(std::string_view field, std::size_t row, const std::string& column) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError("catalog row " + std::to_string(row) + ": bad " + column + " '" +
                         std::string(field) + "'");
    }
    return value;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    std::istringstream ss(line);
    while (std::getline(ss, current, ',')) {
        fields.push_back(current);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

}  // namespace

void SiteResonance::validate() const {
    require(std::isfinite(center_wavelength_nm) && center_wavelength_nm > 0.0,
            "resonance wavelength must be positive");
    require(inhomogeneous_fwhm_hz > 0.0, "inhomogeneous width must be positive");
    require(amplitude_cpp > 0.0, "amplitude must be positive");
    if (lifetime_s) {
        require(*lifetime_s > 0.0, "lifetime must be positive");
    }
    if (second_lifetime_s) {
        require(*second_lifetime_s > 0.0, "second lifetime must be positive");
        require(second_fraction > 0.0 && second_fraction < 1.0,
                "second-component fraction must be in (0,1)");
    }
    if (homogeneous_fwhm_hz) {
        require(*homogeneous_fwhm_hz > 0.0, "homogeneous width must be positive");
        require(*homogeneous_fwhm_hz < inhomogeneous_fwhm_hz,
                "homogeneous width must be below the inhomogeneous width");
    }
}

Catalog Catalog::from_rows(std::vector<SiteResonance> rows, std::string provenance) {
    std::sort(rows.begin(), rows.end(), [](const SiteResonance& a, const SiteResonance& b) {
        return a.center_wavelength_nm > b.center_wavelength_nm;
    });
    Catalog catalog{std::move(rows), std::move(provenance)};
    catalog.validate();
    return catalog;
}

void Catalog::validate() const {
    for (const auto& r : resonances) {
        r.validate();
    }
    for (std::size_t i = 1; i < resonances.size(); ++i) {
        require(resonances[i - 1].center_wavelength_nm >= resonances[i].center_wavelength_nm,
                "catalog must be sorted descending by wavelength");
        const double df = std::abs(resonances[i - 1].center_frequency_hz() -
                                   resonances[i].center_frequency_hz());
        require(df > 1e6, "catalog centers must be unique to within 1 MHz");
    }
}

std::optional<std::size_t> Catalog::nearest(double wavelength_nm, double tolerance_nm) const {
    std::optional<std::size_t> best;
    double best_distance = tolerance_nm;
    for (std::size_t i = 0; i < resonances.size(); ++i) {
        const double d = std::abs(resonances[i].center_wavelength_nm - wavelength_nm);
        if (d <= best_distance) {
            best_distance = d;
            best = i;
        }
    }
    return best;
}

void ScanProtocol::validate() const {
    require(start_wavelength_nm > 0.0 && stop_wavelength_nm > start_wavelength_nm,
            "scan range must satisfy 0 < start < stop");
    require(step_hz > 0.0, "frequency step must be positive");
    require(fm_broadening_hz >= 0.0, "FM broadening must be nonnegative");
    require(pulse_duration_s > 0.0, "pulse duration must be positive");
    require(window_start_s >= 0.0 && window_end_s > window_start_s,
            "counting window must satisfy 0 <= start < end");
    require(repetitions >= 1, "repetitions must be at least 1");
}

void DetectorModel::validate() const {
    require(system_detection_efficiency > 0.0 && system_detection_efficiency <= 1.0,
            "detection efficiency must be in (0,1]");
    require(dark_count_rate_hz >= 0.0, "dark count rate must be nonnegative");
    require(background_fast_cpp >= 0.0 && background_slow_cpp >= 0.0,
            "background amplitudes must be nonnegative");
    require(background_fast_tau_s > 0.0 && background_slow_tau_s > 0.0,
            "background time constants must be positive");
    require(background_fast_tau_s < background_slow_tau_s,
            "fast background constant must be below the slow one");
}

double DetectorModel::background_window_cpp(double t0_s, double t1_s) const {
    require(t0_s >= 0.0 && t1_s > t0_s, "background window must satisfy 0 <= t0 < t1");
    const auto window = [&](double amp, double tau) {
        return amp * (std::exp(-t0_s / tau) - std::exp(-t1_s / tau));
    };
    return window(background_fast_cpp, background_fast_tau_s) +
           window(background_slow_cpp, background_slow_tau_s) +
           dark_count_rate_hz * (t1_s - t0_s);
}

double FitResult::value(std::string_view name) const {
    for (const auto& p : parameters) {
        if (p.name == name) {
            return p.value;
        }
    }
    throw std::invalid_argument("model: unknown fit parameter '" + std::string(name) + "'");
}

double FitResult::error(std::string_view name) const {
    for (const auto& p : parameters) {
        if (p.name == name) {
            return p.std_error;
        }
    }
    throw std::invalid_argument("model: unknown fit parameter '" + std::string(name) + "'");
}

bool FitResult::has(std::string_view name) const {
    return std::any_of(parameters.begin(), parameters.end(),
                       [&](const FitParameter& p) { return p.name == name; });
}

Catalog load_catalog(std::istream& in, std::string provenance) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("catalog: empty input, expected header");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "wavelength_nm,fwhm_ghz,lifetime_ms,amplitude,flags") {
        throw ParseError("catalog: unexpected header '" + line + "'");
    }

    std::vector<SiteResonance> rows;
    std::size_t row_index = 0;
    while (std::getline(in, line)) {
        ++row_index;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_csv(line);
        if (fields.size() != 5) {
            throw ParseError("catalog row " + std::to_string(row_index) + ": expected 5 fields, got " +
                             std::to_string(fields.size()));
        }
        SiteResonance r;
        r.center_wavelength_nm = parse_double(fields[0], row_index, "wavelength_nm");
        r.inhomogeneous_fwhm_hz = parse_double(fields[1], row_index, "fwhm_ghz") * 1e9;
        if (!fields[2].empty()) {
            r.lifetime_s = parse_double(fields[2], row_index, "lifetime_ms") * 1e-3;
        }
        r.amplitude_cpp = parse_double(fields[3], row_index, "amplitude");
        const std::string& flags = fields[4];
        if (!flags.empty() && flags != "biexp" && flags != "weiss" && flags != "biexp|weiss") {
            throw ParseError("catalog row " + std::to_string(row_index) + ": unknown flags '" +
                             flags + "'");
        }
        r.biexp_flag = flags.find("biexp") != std::string::npos;
        r.weiss_flag = flags.find("weiss") != std::string::npos;
        try {
            r.validate();
        } catch (const std::invalid_argument& e) {
            throw ParseError("catalog row " + std::to_string(row_index) + ": " + e.what());
        }
        rows.push_back(r);
    }

    try {
        return Catalog::from_rows(std::move(rows), std::move(provenance));
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("catalog: ") + e.what());
    }
}

Catalog load_catalog_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("catalog: cannot open '" + path + "'");
    }
    return load_catalog(in, path);
}

void save_catalog(const Catalog& catalog, std::ostream& out) {
    out << "wavelength_nm,fwhm_ghz,lifetime_ms,amplitude,flags\n";
    for (const auto& r : catalog.resonances) {
        out << format_double(r.center_wavelength_nm) << ','
            << format_double(r.inhomogeneous_fwhm_hz / 1e9) << ',';
        if (r.lifetime_s) {
            out << format_double(*r.lifetime_s * 1e3);
        }
        out << ',' << format_double(r.amplitude_cpp) << ',';
        if (r.biexp_flag && r.weiss_flag) {
            out << "biexp|weiss";
        } else if (r.biexp_flag) {
            out << "biexp";
        } else if (r.weiss_flag) {
            out << "weiss";
        }
        out << '\n';
    }
}

void save_catalog_file(const Catalog& catalog, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw ParseError("catalog: cannot write '" + path + "'");
    }
    save_catalog(catalog, out);
}

}  // namespace plesim
