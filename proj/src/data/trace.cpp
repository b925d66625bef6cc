#include "csd/data/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <sstream>

#include "csd/data/csv.hpp"
#include "csd/error.hpp"

namespace csd::data {

std::string_view to_string(Severity s)
{
    switch (s) {
    case Severity::None: return "none";
    case Severity::Low: return "low";
    case Severity::Medium: return "medium";
    case Severity::High: return "high";
    }
    return "unknown";
}

std::optional<Severity> parse_severity(std::string_view text)
{
    std::string t(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "none") return Severity::None;
    if (t == "low" || t == "slight") return Severity::Low;
    if (t == "medium" || t == "moderate") return Severity::Medium;
    if (t == "high" || t == "severe") return Severity::High;
    return std::nullopt;
}

Severity severity_from_index(int i)
{
    if (i < 0 || i >= static_cast<int>(kNumClasses))
        throw ContractViolation("severity index out of range: " + std::to_string(i));
    return static_cast<Severity>(i);
}

void SensorTrace::validate() const
{
    const std::size_t n = feature_count();
    if (n == 0) throw ContractViolation("trace '" + id + "' has no features");
    if (timestamps.size() != labels.size() || frames.size() != labels.size() * n)
        throw ContractViolation("trace '" + id + "': frames, labels and timestamps disagree in length");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
        if (!(timestamps[i] > timestamps[i - 1]))
            throw OrderingError("trace '" + id + "': timestamp at frame " + std::to_string(i) +
                                " is not strictly increasing");
    if (sample_rate > 0.0 && timestamps.size() > 1) {
        const double expected = 1.0 / sample_rate;
        for (std::size_t i = 1; i < timestamps.size(); ++i) {
            const double dt = timestamps[i] - timestamps[i - 1];
            if (std::abs(dt - expected) > 0.01 * expected)
                throw OrderingError("trace '" + id + "': spacing " + std::to_string(dt) + "s at frame " +
                                    std::to_string(i) + " inconsistent with " + std::to_string(sample_rate) + " fps");
        }
    }
}

SensorTrace load_trace(std::istream& in, const TraceSchema& schema)
{
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::is_blank_or_comment(line)) continue;
        header = csv::split(line);
        break;
    }
    if (header.empty()) throw SchemaError("trace CSV has no header row");

    auto find_col = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("trace CSV is missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ts_col = find_col(schema.timestamp_column);
    const std::size_t label_col = find_col(schema.label_column);
    std::vector<std::size_t> feature_cols;
    SensorTrace trace;
    trace.id = schema.trace_id;
    if (schema.feature_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (c != ts_col && c != label_col) {
                feature_cols.push_back(c);
                trace.feature_names.push_back(header[c]);
            }
    } else {
        for (const auto& name : schema.feature_columns) {
            feature_cols.push_back(find_col(name));
            trace.feature_names.push_back(name);
        }
    }
    if (feature_cols.empty()) throw SchemaError("trace CSV has no feature columns");

    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::is_blank_or_comment(line)) continue;
        auto cells = csv::split(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + " (line " + std::to_string(line_no) + ") has " +
                                 std::to_string(cells.size()) + " cells, expected " + std::to_string(header.size()),
                             row);
        const auto ts = csv::parse_double(cells[ts_col]);
        if (!ts) throw ParseError("row " + std::to_string(row) + ": bad timestamp '" + cells[ts_col] + "'", row);
        const auto label = parse_severity(csv::trim(cells[label_col]));
        if (!label) throw ParseError("row " + std::to_string(row) + ": unknown label '" + cells[label_col] + "'", row);
        trace.timestamps.push_back(*ts);
        trace.labels.push_back(*label);
        for (std::size_t c : feature_cols) {
            const auto v = csv::parse_double(cells[c]);
            if (!v)
                throw ParseError("row " + std::to_string(row) + ": column '" + header[c] + "' value '" + cells[c] +
                                     "' is not a finite number",
                                 row);
            trace.frames.push_back(static_cast<float>(*v));
        }
        ++row;
    }

    for (std::size_t i = 1; i < trace.timestamps.size(); ++i)
        if (!(trace.timestamps[i] > trace.timestamps[i - 1]))
            throw OrderingError("timestamps not strictly increasing at row " + std::to_string(i));

    if (schema.sample_rate) {
        trace.sample_rate = *schema.sample_rate;
    } else if (trace.timestamps.size() > 1) {
        std::vector<double> gaps;
        for (std::size_t i = 1; i < trace.timestamps.size(); ++i)
            gaps.push_back(trace.timestamps[i] - trace.timestamps[i - 1]);
        std::nth_element(gaps.begin(), gaps.begin() + static_cast<long>(gaps.size() / 2), gaps.end());
        trace.sample_rate = 1.0 / gaps[gaps.size() / 2];
    }
    trace.validate();
    return trace;
}

SensorTrace load_trace_file(const std::string& path, const TraceSchema& schema)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trace file '" + path + "'");
    return load_trace(in, schema);
}

void write_trace(std::ostream& out, const SensorTrace& trace, const std::string& header_comment)
{
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "timestamp,label";
    for (const auto& name : trace.feature_names) out << "," << name;
    out << "\n";
    const std::size_t n = trace.feature_count();
    for (std::size_t t = 0; t < trace.frame_count(); ++t) {
        out << csv::format_double(trace.timestamps[t]) << "," << to_string(trace.labels[t]);
        for (std::size_t i = 0; i < n; ++i) out << "," << csv::format_float(trace.value(t, i));
        out << "\n";
    }
}

void write_trace_file(const std::string& path, const SensorTrace& trace, const std::string& header_comment)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write trace file '" + path + "'");
    write_trace(out, trace, header_comment);
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace csd::data
