#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace rmlab {

inline constexpr const char* kVersion = "0.1.0";

/// Locale-independent formatting: '.' decimal separator, 17 significant
/// digits, round-trippable.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Plain CSV with a '#'-prefixed metadata header. The body (column row plus
/// data rows) is what the determinism contract covers; the header carries the
/// wall clock and may differ between runs.
class CsvWriter {
  public:
    void set_columns(std::vector<std::string> cols) { columns_ = std::move(cols); }

    void add_row(const std::vector<std::string>& cells) {
        std::string row;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) row += ',';
            row += cells[i];
        }
        rows_.push_back(std::move(row));
    }

    void add_numeric_row(const std::vector<double>& cells) {
        std::vector<std::string> s;
        s.reserve(cells.size());
        for (double v : cells) s.push_back(format_double(v));
        add_row(s);
    }

    std::string body() const {
        std::string out;
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (i) out += ',';
            out += columns_[i];
        }
        out += '\n';
        for (const auto& r : rows_) {
            out += r;
            out += '\n';
        }
        return out;
    }

    /// Header + body. The input hash covers the resolved configuration.
    std::string document(const std::string& resolved_config_json, std::uint64_t seed) const {
        const auto now = std::chrono::system_clock::now();
        const std::time_t t = std::chrono::system_clock::to_time_t(now);
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
        std::string out;
        out += std::string("# rmlab ") + kVersion + "\n";
        out += "# config " + resolved_config_json + "\n";
        out += "# seed " + std::to_string(seed) + "\n";
        out += std::string("# wallclock ") + stamp + "\n";
        out += "# input_hash " + hex64(fnv1a(resolved_config_json)) + "\n";
        out += body();
        return out;
    }

  private:
    std::vector<std::string> columns_;
    std::vector<std::string> rows_;
};

/// Strip the '#'-prefixed header, keeping the byte-comparable body.
inline std::string csv_body_of(const std::string& document) {
    std::string out;
    std::size_t pos = 0;
    while (pos < document.size()) {
        std::size_t end = document.find('\n', pos);
        if (end == std::string::npos) end = document.size();
        if (pos >= document.size()) break;
        if (document[pos] != '#') out += document.substr(pos, end - pos) + "\n";
        pos = end + 1;
    }
    return out;
}

} // namespace rmlab
