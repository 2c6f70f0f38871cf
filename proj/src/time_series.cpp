#include "dmpead/time_series.hpp"

#include "dmpead/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dmpead {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(pos)));
            break;
        }
        cells.push_back(trim(line.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return cells;
}

std::string row_error(std::size_t row, const std::string& what) {
    return "parse error at row " + std::to_string(row) + ": " + what;
}

double parse_real(std::string_view cell, std::size_t row) {
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) {
        throw ParseError(row_error(row, "non-numeric cell '" + std::string(cell) + "'"));
    }
    if (!std::isfinite(value)) {
        throw ParseError(row_error(row, "non-finite value '" + std::string(cell) + "'"));
    }
    return value;
}

std::int64_t parse_int(std::string_view cell, std::size_t row) {
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    std::int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) {
        throw ParseError(row_error(row, "timestamp '" + std::string(cell) + "' is not an integer"));
    }
    return value;
}

bool is_timestamp_header(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return lower == "t" || lower == "time" || lower == "timestamp";
}

std::string format_real(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

double population_std(std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

void TimeSeries::validate() const {
    if (values.rows() < 1 || values.cols() < 1) throw DataError("time series must have m >= 1 and n >= 1");
    for (double v : values.data()) {
        if (!std::isfinite(v)) throw DataError("time series contains a non-finite value");
    }
    if (timestamps) {
        if (timestamps->size() != values.rows()) throw DataError("timestamp count differs from row count");
        for (std::size_t i = 1; i < timestamps->size(); ++i) {
            if ((*timestamps)[i] <= (*timestamps)[i - 1]) throw DataError("timestamps are not strictly increasing");
        }
    }
    if (labels) {
        if (labels->size() != values.rows()) throw DataError("label count differs from row count");
        for (auto l : *labels) {
            if (l > 1) throw DataError("labels must be 0 or 1");
        }
    }
}

TimeSeries make_series(Matrix values) {
    TimeSeries ts;
    ts.values = std::move(values);
    ts.validate();
    return ts;
}

TimeSeries parse_csv(std::string_view text, bool has_labels) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = trim(text.substr(pos, nl - pos));
        if (!line.empty()) lines.push_back(line);
        pos = nl + 1;
    }
    if (lines.empty()) throw ParseError("parse error: missing header row");

    const auto header = split_commas(lines.front());
    const bool has_time = is_timestamp_header(header.front());
    const std::size_t width = header.size();
    const std::size_t reserved = (has_time ? 1 : 0) + (has_labels ? 1 : 0);
    if (width <= reserved) throw ParseError("parse error: header has no value columns");
    const std::size_t n = width - reserved;
    const std::size_t m = lines.size() - 1;
    if (m == 0) throw ParseError("parse error: no data rows");

    TimeSeries ts;
    ts.values = Matrix(m, n);
    if (has_time) ts.timestamps.emplace(m);
    if (has_labels) ts.labels.emplace(m);

    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t row = r + 1;
        const auto cells = split_commas(lines[r + 1]);
        if (cells.size() != width) {
            throw ParseError(row_error(row, "expected " + std::to_string(width) + " columns, found " +
                                                std::to_string(cells.size())));
        }
        std::size_t c = 0;
        if (has_time) {
            (*ts.timestamps)[r] = parse_int(cells[c++], row);
            if (r > 0 && (*ts.timestamps)[r] <= (*ts.timestamps)[r - 1]) {
                throw ParseError(row_error(row, "timestamp not increasing"));
            }
        }
        for (std::size_t d = 0; d < n; ++d) ts.values(r, d) = parse_real(cells[c++], row);
        if (has_labels) {
            const double l = parse_real(cells[c], row);
            if (l != 0.0 && l != 1.0) throw ParseError(row_error(row, "label must be 0 or 1"));
            (*ts.labels)[r] = static_cast<std::uint8_t>(l);
        }
    }
    return ts;
}

TimeSeries load_csv(const std::filesystem::path& path, bool has_labels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_csv(buf.str(), has_labels);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

bool csv_header_has_label(std::string_view text) {
    const std::size_t nl = text.find('\n');
    const auto header = split_commas(trim(text.substr(0, nl)));
    std::string last(header.back());
    std::transform(last.begin(), last.end(), last.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return header.size() > 1 && last == "label";
}

TimeSeries load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    try {
        return parse_csv(text, csv_header_has_label(text));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string format_csv(const TimeSeries& ts) {
    std::string out;
    if (ts.timestamps) out += "t,";
    for (std::size_t d = 0; d < ts.dims(); ++d) {
        if (d > 0) out += ',';
        out += "v" + std::to_string(d);
    }
    if (ts.labels) out += ",label";
    out += '\n';
    for (std::size_t r = 0; r < ts.length(); ++r) {
        if (ts.timestamps) out += std::to_string((*ts.timestamps)[r]) + ',';
        for (std::size_t d = 0; d < ts.dims(); ++d) {
            if (d > 0) out += ',';
            out += format_real(ts.values(r, d));
        }
        if (ts.labels) out += (*ts.labels)[r] ? ",1" : ",0";
        out += '\n';
    }
    return out;
}

void save_csv(const TimeSeries& ts, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << format_csv(ts);
    if (!out) throw DataError("write failed for " + path.string());
}

Normalized normalize(const TimeSeries& ts) {
    if (ts.length() < 2) throw DataError("normalize requires at least 2 rows");
    Normalized result{ts, {}};
    const std::size_t m = ts.length();
    for (std::size_t d = 0; d < ts.dims(); ++d) {
        double mean = 0.0;
        for (std::size_t r = 0; r < m; ++r) mean += ts.values(r, d);
        mean /= static_cast<double>(m);
        double acc = 0.0;
        for (std::size_t r = 0; r < m; ++r) acc += (ts.values(r, d) - mean) * (ts.values(r, d) - mean);
        const double sd = std::sqrt(acc / static_cast<double>(m - 1));
        ColumnStats stats{mean, sd, false};
        if (sd < kConstantColumnStd) {
            stats.std = 1.0;
            stats.constant = true;
        }
        for (std::size_t r = 0; r < m; ++r) {
            result.series.values(r, d) = (ts.values(r, d) - mean) / stats.std;
        }
        result.record.columns.push_back(stats);
    }
    return result;
}

TimeSeries denormalize(const TimeSeries& ts, const NormalizationRecord& record) {
    if (record.columns.size() != ts.dims()) throw ShapeError("normalization record width differs from series");
    TimeSeries out = ts;
    for (std::size_t d = 0; d < ts.dims(); ++d) {
        const auto& s = record.columns[d];
        for (std::size_t r = 0; r < ts.length(); ++r) out.values(r, d) = ts.values(r, d) * s.std + s.mean;
    }
    return out;
}

std::size_t SegmentedView::covered_rows() const noexcept {
    std::size_t covered = 0;
    for (const auto& o : origins) covered = std::max(covered, o.start + segment_length);
    return covered;
}

SegmentedView segment(const TimeSeries& ts, std::size_t length, std::size_t stride, TailPolicy tail) {
    const std::size_t m = ts.length();
    if (length < 1 || stride < 1) throw ShapeError("segment length and stride must be positive");
    if (length > m) {
        throw ShapeError("segment length " + std::to_string(length) + " exceeds series length " + std::to_string(m));
    }
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + length <= m; s += stride) starts.push_back(s);
    if (tail == TailPolicy::align_end && starts.back() + length < m) starts.push_back(m - length);

    SegmentedView view;
    view.segment_length = length;
    view.stride = stride;
    view.rows = m;
    view.dims = ts.dims();
    view.data.reserve(starts.size() * ts.dims() * length);
    for (std::size_t d = 0; d < ts.dims(); ++d) {
        for (std::size_t s : starts) {
            for (std::size_t k = 0; k < length; ++k) view.data.push_back(ts.values(s + k, d));
            view.origins.push_back({d, s});
        }
    }
    return view;
}

Matrix reassemble(const SegmentedView& layout, std::span<const double> windows) {
    const std::size_t rows = layout.covered_rows();
    const std::size_t len = layout.segment_length;
    // Running mean, so identical overlapping values come back bit-exact.
    Matrix mean(rows, layout.dims);
    Matrix hits(rows, layout.dims);
    for (std::size_t i = 0; i < layout.count(); ++i) {
        const auto& o = layout.origins[i];
        for (std::size_t k = 0; k < len; ++k) {
            double& h = hits(o.start + k, o.dim);
            double& m = mean(o.start + k, o.dim);
            h += 1.0;
            m += (windows[i * len + k] - m) / h;
        }
    }
    return mean;
}

std::string_view to_string(AnomalyKind kind) {
    switch (kind) {
        case AnomalyKind::spike: return "spike";
        case AnomalyKind::contextual: return "contextual";
        case AnomalyKind::flip: return "flip";
        case AnomalyKind::speedup: return "speedup";
        case AnomalyKind::scale: return "scale";
    }
    return "unknown";
}

AnomalyKind parse_anomaly_kind(std::string_view name) {
    for (auto kind : kAllAnomalyKinds) {
        if (to_string(kind) == name) return kind;
    }
    throw UsageError("unknown anomaly kind '" + std::string(name) + "'");
}

TimeSeries inject_anomaly(const TimeSeries& ts, const AnomalySpec& spec) {
    const std::size_t m = ts.length();
    if (spec.length < 1 || spec.start + spec.length > m) throw DataError("anomaly window exceeds series");
    if (!(spec.magnitude > 0.0)) throw DataError("anomaly magnitude must be positive");
    if (spec.dims.empty()) throw DataError("anomaly needs at least one dimension");
    for (auto d : spec.dims) {
        if (d >= ts.dims()) throw DataError("anomaly dimension out of range");
    }

    TimeSeries out = ts;
    const std::size_t begin = spec.start;
    const std::size_t end = spec.start + spec.length;
    for (std::size_t d : spec.dims) {
        const auto column = ts.values.column(d);
        double sd = population_std(column);
        if (sd < kConstantColumnStd) sd = 1.0;
        switch (spec.kind) {
            case AnomalyKind::spike:
                for (std::size_t r = begin; r < end; ++r) out.values(r, d) += spec.magnitude * sd;
                break;
            case AnomalyKind::contextual: {
                double mean = 0.0;
                for (double v : column) mean += v;
                mean /= static_cast<double>(m);
                for (std::size_t r = begin; r < end; ++r) out.values(r, d) = mean + spec.magnitude * sd;
                break;
            }
            case AnomalyKind::flip:
                for (std::size_t r = begin; r < end; ++r) out.values(r, d) = column[end - 1 - (r - begin)];
                break;
            case AnomalyKind::speedup:
                // Twice the rate: sample k reads source offset 2k, clamped to the window tail.
                for (std::size_t k = 0; k < spec.length; ++k) {
                    out.values(begin + k, d) = column[begin + std::min(2 * k, spec.length - 1)];
                }
                break;
            case AnomalyKind::scale:
                for (std::size_t r = begin; r < end; ++r) out.values(r, d) = column[r] * (1.0 + spec.magnitude);
                break;
        }
    }
    if (!out.labels) out.labels.emplace(m, std::uint8_t{0});
    for (std::size_t r = begin; r < end; ++r) (*out.labels)[r] = 1;
    return out;
}

}  // namespace dmpead
