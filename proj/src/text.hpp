#pragma once

#include <charconv>
#include <cstddef>
#include <ostream>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "psr/data_model.hpp"

namespace psr::text {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

template <class T>
T parse_number(std::string_view token, std::size_t line_no) {
    T value{};
    const auto* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ParseError(fmt::format("line {}: cannot parse '{}'", line_no, token));
    }
    return value;
}

/// Emits each line of `text` as a '#' comment.
inline void write_comment(std::ostream& out, std::string_view text) {
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto line = text.substr(0, nl);
        if (line.empty()) {
            out << "#\n";
        } else {
            out << "# " << line << '\n';
        }
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    }
}

} // namespace psr::text
