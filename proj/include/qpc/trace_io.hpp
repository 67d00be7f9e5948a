#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qpc/analysis.hpp"
#include "qpc/statistics.hpp"
#include "qpc/synthesis.hpp"
#include "qpc/vanhove.hpp"

namespace qpc::io {

using nlohmann::json;

// Trace CSV: '#'-prefixed metadata header rows, then a column header and two
// columns (gate_voltage_V, g_sd_GQ). Values round-trip bit-exactly (%.17g).
void write_trace_csv(const std::filesystem::path& path, const synthesis::ConductanceTrace& trace);
synthesis::ConductanceTrace read_trace_csv(const std::filesystem::path& path);

// Plot-ready dumps of the tight-binding intermediates.
void write_ldos_csv(const std::filesystem::path& path, const vanhove::LdosCurve& curve);
void write_hartree_csv(const std::filesystem::path& path, const vanhove::HartreeMap& map);

std::string sweep_name(synthesis::SweepDirection d);
synthesis::SweepDirection sweep_from_name(const std::string& name);

// JSON bindings.
json to_json(const synthesis::DeviceId& id);
void from_json_into(const json& j, synthesis::DeviceId& id);
json to_json(const synthesis::SaddleDevice& dev);
void from_json_into(const json& j, synthesis::SaddleDevice& dev);
json to_json(const synthesis::CohortConfig& cfg);
void from_json_into(const json& j, synthesis::CohortConfig& cfg);
json to_json(const analysis::AnalysisResult& result);
void from_json_into(const json& j, analysis::AnalysisResult& result);
json to_json(const statistics::DeviceSummary& row);
void from_json_into(const json& j, statistics::DeviceSummary& row);
json to_json(const statistics::CohortReport& report);

// Whole-file helpers with IoError on failure.
void write_json_file(const std::filesystem::path& path, const json& j);
json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace qpc::io
