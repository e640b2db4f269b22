#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "plesim/analysis.hpp"
#include "plesim/cavity.hpp"
#include "plesim/dynamics.hpp"
#include "plesim/model.hpp"
#include "plesim/synth.hpp"

namespace plesim::io {

using nlohmann::json;

/// Writes `content` to `path` atomically (temp file + rename).
void atomic_write(const std::string& path, const std::string& content);

// JSON views of the configuration types. Parsers reject unknown keys.
json to_json(const ScanProtocol& protocol);
json to_json(const DetectorModel& detector);
json to_json(const HoleBurnConfig& config);
json to_json(const ZeemanSite& site);
json to_json(const FitResult& fit);
json to_json(const analysis::MatchReport& report);
json to_json(const analysis::BackgroundStudy& study);
json to_json(const cavity::CavityDesign& design);
json to_json(const HoleEndpoints& endpoints);

ScanProtocol protocol_from_json(const json& j);
DetectorModel detector_from_json(const json& j);
HoleBurnConfig holeburn_from_json(const json& j);
ZeemanSite zeeman_from_json(const json& j);

/// Spectrum CSV (`frequency_hz,counts`) plus a JSON sidecar holding the
/// protocol, detector and sampling seed. The sidecar path is the CSV
/// path with ".json" appended.
void save_spectrum(const Spectrum& spectrum, const std::string& csv_path);
Spectrum load_spectrum(const std::string& csv_path);

/// TimeTrace CSV (`t_us,counts`); bin starts in microseconds. A sidecar
/// (csv_path + ".json") carries the protocol snapshot.
void save_trace(const TimeTrace& trace, const std::string& csv_path);
TimeTrace load_trace(const std::string& csv_path);

/// Hole profile CSV (`detuning_hz,signal_norm`); the sidecar carries the
/// burn configuration and endpoint metadata when available.
void save_hole_profile(const HoleProfile& profile, const HoleBurnConfig& config,
                       const std::string& csv_path);
void save_hole_profile(const std::vector<double>& detunings_hz, const std::vector<double>& signal,
                       const std::string& csv_path);
std::pair<std::vector<double>, std::vector<double>> load_hole_profile(const std::string& csv_path);

/// Single-column electrical line list (`frequency_hz`).
std::vector<double> load_frequency_list(const std::string& csv_path);
void save_frequency_list(const std::vector<double>& frequencies_hz, const std::string& csv_path);

std::string format_double(double v);  // shortest round-trip representation

}  // namespace plesim::io
