#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace csd::data {

// Cybersickness severity classes, in index order.
enum class Severity : int { None = 0, Low = 1, Medium = 2, High = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<Severity, kNumClasses> kAllSeverities{Severity::None, Severity::Low, Severity::Medium,
                                                                  Severity::High};

std::string_view to_string(Severity s);
// Accepts none|low|medium|high and the alternate vocabulary
// slight|moderate|severe (mapped to low|medium|high). Case-insensitive.
std::optional<Severity> parse_severity(std::string_view text);
inline int index_of(Severity s) { return static_cast<int>(s); }
Severity severity_from_index(int i);

// Multivariate sensor recording with per-frame severity labels.
struct SensorTrace {
    std::string id;
    double sample_rate = 0.0;  // frames per second
    std::vector<std::string> feature_names;
    std::vector<float> frames;  // frame-major, frame_count() x feature_count()
    std::vector<Severity> labels;
    std::vector<double> timestamps;  // seconds

    std::size_t frame_count() const noexcept { return labels.size(); }
    std::size_t feature_count() const noexcept { return feature_names.size(); }
    float value(std::size_t frame, std::size_t feature) const { return frames[frame * feature_count() + feature]; }
    float& value(std::size_t frame, std::size_t feature) { return frames[frame * feature_count() + feature]; }

    // Throws ContractViolation / OrderingError when an invariant is broken.
    void validate() const;
};

struct TraceSchema {
    std::string timestamp_column = "timestamp";
    std::string label_column = "label";
    // Feature columns to read, in order. Empty: every other column in file order.
    std::vector<std::string> feature_columns;
    // Frames per second. Unset: inferred from the median timestamp spacing.
    std::optional<double> sample_rate;
    std::string trace_id = "trace";
};

// Parses the trace CSV format. Lines starting with '#' are comments.
// Errors: SchemaError (missing column), ParseError (bad cell, with row),
// OrderingError (timestamps not strictly increasing or irregular).
SensorTrace load_trace(std::istream& in, const TraceSchema& schema = {});
SensorTrace load_trace_file(const std::string& path, const TraceSchema& schema = {});

// Writes the same format; `header_comment` (if non-empty) becomes a leading '#' line.
void write_trace(std::ostream& out, const SensorTrace& trace, const std::string& header_comment = {});
void write_trace_file(const std::string& path, const SensorTrace& trace, const std::string& header_comment = {});

}  // namespace csd::data
