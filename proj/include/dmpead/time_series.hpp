#pragma once

#include "dmpead/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dmpead {

// m x n block of observations with optional timestamps and 0/1 labels.
struct TimeSeries {
    Matrix values;
    std::optional<std::vector<std::int64_t>> timestamps;
    std::optional<std::vector<std::uint8_t>> labels;

    std::size_t length() const noexcept { return values.rows(); }
    std::size_t dims() const noexcept { return values.cols(); }

    // Throws DataError when an invariant is broken.
    void validate() const;
};

TimeSeries make_series(Matrix values);

// CSV layout: header row; first column is a timestamp when its header is
// "t", "time" or "timestamp"; last column is a label when has_labels.
TimeSeries load_csv(const std::filesystem::path& path, bool has_labels);
TimeSeries parse_csv(std::string_view text, bool has_labels);
// Label column detected from a last header cell named "label".
TimeSeries load_csv(const std::filesystem::path& path);
bool csv_header_has_label(std::string_view text);
std::string format_csv(const TimeSeries& ts);
void save_csv(const TimeSeries& ts, const std::filesystem::path& path);

struct ColumnStats {
    double mean = 0.0;
    double std = 1.0;  // 1 when the column was constant (guarded)
    bool constant = false;
};

struct NormalizationRecord {
    std::vector<ColumnStats> columns;
};

inline constexpr double kConstantColumnStd = 1e-8;

struct Normalized {
    TimeSeries series;
    NormalizationRecord record;
};

// Per-column z-score with sample std. Constant columns are only centred.
Normalized normalize(const TimeSeries& ts);
TimeSeries denormalize(const TimeSeries& ts, const NormalizationRecord& record);

struct SegmentOrigin {
    std::size_t dim = 0;
    std::size_t start = 0;
};

enum class TailPolicy {
    drop,       // trailing partial window is discarded
    align_end,  // one extra window ending at the last row covers the tail
};

// Univariate length-L windows over every column, column-major ordering.
struct SegmentedView {
    std::size_t segment_length = 0;
    std::size_t stride = 0;
    std::size_t rows = 0;  // m of the source
    std::size_t dims = 0;  // n of the source
    std::vector<double> data;  // count() x segment_length
    std::vector<SegmentOrigin> origins;

    std::size_t count() const noexcept { return origins.size(); }
    std::size_t per_dim() const noexcept { return dims == 0 ? 0 : origins.size() / dims; }
    std::span<const double> segment(std::size_t i) const {
        return {data.data() + i * segment_length, segment_length};
    }
    // Rows [0, covered_rows()) are inside at least one window.
    std::size_t covered_rows() const noexcept;
};

SegmentedView segment(const TimeSeries& ts, std::size_t length, std::size_t stride,
                      TailPolicy tail = TailPolicy::drop);

// Inverse of segment() for a window matrix of the same layout. Overlapping
// entries are averaged. Returns covered_rows() x dims.
Matrix reassemble(const SegmentedView& layout, std::span<const double> windows);

enum class AnomalyKind { spike, contextual, flip, speedup, scale };

inline constexpr AnomalyKind kAllAnomalyKinds[] = {AnomalyKind::spike, AnomalyKind::contextual,
                                                   AnomalyKind::flip, AnomalyKind::speedup,
                                                   AnomalyKind::scale};

std::string_view to_string(AnomalyKind kind);
AnomalyKind parse_anomaly_kind(std::string_view name);

struct AnomalySpec {
    AnomalyKind kind = AnomalyKind::spike;
    std::size_t start = 0;
    std::size_t length = 1;
    double magnitude = 1.0;
    std::vector<std::size_t> dims;
};

// Returns a modified copy; labels are set to 1 on [start, start + length).
TimeSeries inject_anomaly(const TimeSeries& ts, const AnomalySpec& spec);

}  // namespace dmpead
