#pragma once

// JSON shapes shared by the HTTP API, the manifest, and the C API.

#include <json.hpp>

#include "audio.hpp"
#include "script.hpp"

namespace vocorpus::json {

using nlohmann::json;

json to_json(const audio::ValidationReport& report);
audio::ValidationReport report_from_json(const json& j);

json to_json(const audio::RecordingConstraints& constraints);
/// Fields absent from `j` keep the value they have in `base`. Throws
/// Error(InvalidArgument) on wrong types or violated invariants.
audio::RecordingConstraints constraints_from_json(
    const json& j, const audio::RecordingConstraints& base = {});

json to_json(const std::vector<script::RowError>& errors);
json to_json(const std::vector<script::Segment>& segments);
json to_json(const script::CorpusManifest& manifest);

json to_json(const audio::WaveformOutline& outline);

/// UTC "YYYY-MM-DDTHH:MM:SSZ".
std::string iso8601(std::int64_t unix_seconds);

}  // namespace vocorpus::json
