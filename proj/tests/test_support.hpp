#pragma once

#include "dmpead/matrix.hpp"
#include "dmpead/recon_model.hpp"
#include "dmpead/time_series.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <unistd.h>

namespace dmpead::testing {

inline TimeSeries series_from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = rows.begin()->size();
    Matrix values(m, n);
    std::size_t r = 0;
    for (const auto& row : rows) {
        std::size_t c = 0;
        for (double v : row) values(r, c++) = v;
        ++r;
    }
    return make_series(std::move(values));
}

inline TimeSeries column_series(const std::vector<double>& column) {
    Matrix values(column.size(), 1);
    values.set_column(0, column);
    return make_series(std::move(values));
}

// Single affine layer L -> L with identity weights and zero bias.
inline ReconModel identity_model(std::size_t L, std::string id = "identity") {
    ReconModel m;
    m.id = std::move(id);
    m.layout = MlpLayout({L, L});
    m.theta.assign(m.layout.param_count(), 0.0f);
    for (std::size_t i = 0; i < L; ++i) m.theta[i * L + i] = 1.0f;
    m.frozen.assign(m.theta.size(), 0);
    return m;
}

inline ReconModel zero_model(std::size_t L, std::string id = "zero") {
    ReconModel m = identity_model(L, std::move(id));
    std::fill(m.theta.begin(), m.theta.end(), 0.0f);
    return m;
}

class TempDir {
public:
    TempDir() {
        std::string pattern = (std::filesystem::temp_directory_path() / "dmpead-test-XXXXXX").string();
        path_ = ::mkdtemp(pattern.data());
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Every regular file under dir, relative path -> contents.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = slurp(e.path());
    }
    return out;
}

}  // namespace dmpead::testing
