#pragma once

// File helpers and the key/value text manifest shared by the processed-set
// cache and model checkpoints.

#include "fedloc/common.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace fedloc::io {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

inline void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '"')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
        s.remove_suffix(1);
    }
    return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end && !s.empty();
}

/// Shortest round-trippable decimal form of a double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void) ec;
    return std::string(buf, ptr);
}

/// Ordered key/value text file: one `key=value` per line, `#` comments.
/// Keys may repeat (e.g. one `tensor=` line per tensor), so entries keep
/// their file order.
class Manifest {
public:
    void set(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }

    [[nodiscard]] bool contains(std::string_view key) const {
        for (const auto& [k, v] : entries_) {
            if (k == key) {
                return true;
            }
        }
        return false;
    }

    [[nodiscard]] const std::string& get(std::string_view key) const {
        for (const auto& [k, v] : entries_) {
            if (k == key) {
                return v;
            }
        }
        throw DataError("manifest is missing key '" + std::string(key) + "'");
    }

    [[nodiscard]] std::vector<std::string> get_all(std::string_view key) const {
        std::vector<std::string> out;
        for (const auto& [k, v] : entries_) {
            if (k == key) {
                out.push_back(v);
            }
        }
        return out;
    }

    template <typename T>
    [[nodiscard]] T get_number(std::string_view key) const {
        T out{};
        if (!parse_number(get(key), out)) {
            throw DataError("manifest key '" + std::string(key) + "' is not a number");
        }
        return out;
    }

    [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    [[nodiscard]] std::string to_string() const {
        std::string out;
        for (const auto& [k, v] : entries_) {
            out += k;
            out += '=';
            out += v;
            out += '\n';
        }
        return out;
    }

    static Manifest parse(std::string_view text) {
        Manifest m;
        std::size_t line_no = 0;
        for (auto line : split(text, '\n')) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') {
                line.remove_suffix(1);
            }
            if (line.empty() || line.front() == '#') {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw ParseError("manifest", line_no, "expected key=value");
            }
            m.set(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
        }
        return m;
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace fedloc::io
