#include "csd/data/window.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>

#include "csd/data/csv.hpp"
#include "csd/error.hpp"

namespace csd::data {

TimeSeriesWindow window_at(const SensorTrace& trace, std::size_t timestep, std::size_t end_frame)
{
    if (timestep == 0) throw ContractViolation("window: timestep must be positive");
    if (end_frame + 1 < timestep || end_frame >= trace.frame_count())
        throw ContractViolation("window: end frame " + std::to_string(end_frame) + " out of range");
    const std::size_t n = trace.feature_count();
    const std::size_t first = end_frame + 1 - timestep;
    TimeSeriesWindow w;
    w.values = num::Tensor(num::Shape{timestep, n},
                           std::vector<float>(trace.frames.begin() + static_cast<long>(first * n),
                                              trace.frames.begin() + static_cast<long>((end_frame + 1) * n)));
    w.label = trace.labels[end_frame];
    w.source = trace.id;
    w.end_frame = end_frame;
    return w;
}

std::vector<TimeSeriesWindow> window(const SensorTrace& trace, std::size_t timestep, std::size_t stride)
{
    if (stride == 0) throw ContractViolation("window: stride must be positive");
    if (trace.frame_count() < timestep)
        throw InsufficientDataError("window: trace '" + trace.id + "' has " + std::to_string(trace.frame_count()) +
                                    " frames, fewer than the timestep " + std::to_string(timestep));
    std::vector<TimeSeriesWindow> out;
    out.reserve((trace.frame_count() - timestep) / stride + 1);
    for (std::size_t end = timestep - 1; end < trace.frame_count(); end += stride)
        out.push_back(window_at(trace, timestep, end));
    return out;
}

num::Tensor stack(std::span<const TimeSeriesWindow> windows)
{
    std::vector<std::size_t> idx(windows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return stack(windows, idx);
}

num::Tensor stack(std::span<const TimeSeriesWindow> windows, std::span<const std::size_t> indices)
{
    if (indices.empty()) throw ContractViolation("stack: no windows");
    const auto& shape = windows[indices[0]].values.shape();
    num::Tensor batch(num::Shape{indices.size(), shape[0], shape[1]});
    const std::size_t per = shape[0] * shape[1];
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& w = windows[indices[b]].values;
        if (w.shape() != shape) throw ContractViolation("stack: windows differ in shape");
        std::copy(w.data().begin(), w.data().end(), batch.data().begin() + static_cast<long>(b * per));
    }
    return batch;
}

std::vector<int> labels_of(std::span<const TimeSeriesWindow> windows)
{
    std::vector<int> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(index_of(w.label));
    return out;
}

void write_windows(std::ostream& out, std::span<const TimeSeriesWindow> windows,
                   const std::vector<std::string>& feature_names, const std::string& header_comment)
{
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "window,source,end_frame,label,step";
    for (const auto& f : feature_names) out << "," << f;
    out << "\n";
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const auto& win = windows[w];
        if (win.feature_count() != feature_names.size())
            throw ContractViolation("write_windows: feature name count does not match windows");
        for (std::size_t t = 0; t < win.timestep(); ++t) {
            out << w << "," << win.source << "," << win.end_frame << "," << to_string(win.label) << "," << t;
            for (std::size_t i = 0; i < win.feature_count(); ++i) out << "," << csv::format_float(win.values.at(t, i));
            out << "\n";
        }
    }
}

std::vector<TimeSeriesWindow> read_windows(std::istream& in, std::vector<std::string>* feature_names)
{
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (csv::is_blank_or_comment(line)) continue;
        header = csv::split(line);
        break;
    }
    const std::vector<std::string> fixed{"window", "source", "end_frame", "label", "step"};
    if (header.size() <= fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin()))
        throw SchemaError("window CSV header must start with window,source,end_frame,label,step and name features");
    const std::size_t n = header.size() - fixed.size();
    if (feature_names) feature_names->assign(header.begin() + static_cast<long>(fixed.size()), header.end());

    struct Partial {
        std::string source;
        std::size_t end_frame = 0;
        Severity label = Severity::None;
        std::vector<float> values;
        std::size_t steps = 0;
    };
    std::map<std::size_t, Partial> partial;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (csv::is_blank_or_comment(line)) continue;
        auto cells = csv::split(line);
        if (cells.size() != header.size()) throw ParseError("window CSV row " + std::to_string(row) + " has wrong width", row);
        auto id = csv::parse_double(cells[0]);
        auto end = csv::parse_double(cells[2]);
        auto label = parse_severity(cells[3]);
        auto step = csv::parse_double(cells[4]);
        if (!id || !end || !label || !step) throw ParseError("window CSV row " + std::to_string(row) + " is malformed", row);
        auto& p = partial[static_cast<std::size_t>(*id)];
        if (static_cast<std::size_t>(*step) != p.steps)
            throw ParseError("window CSV row " + std::to_string(row) + ": steps out of order", row);
        p.source = cells[1];
        p.end_frame = static_cast<std::size_t>(*end);
        p.label = *label;
        for (std::size_t i = 0; i < n; ++i) {
            auto v = csv::parse_double(cells[fixed.size() + i]);
            if (!v) throw ParseError("window CSV row " + std::to_string(row) + ": non-numeric value", row);
            p.values.push_back(static_cast<float>(*v));
        }
        ++p.steps;
        ++row;
    }
    std::vector<TimeSeriesWindow> out;
    for (auto& [id, p] : partial) {
        TimeSeriesWindow w;
        w.values = num::Tensor(num::Shape{p.steps, n}, std::move(p.values));
        w.label = p.label;
        w.source = p.source;
        w.end_frame = p.end_frame;
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace csd::data
