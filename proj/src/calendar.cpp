#include "debias/calendar.hpp"

#include <cstdio>

#include "debias/error.hpp"
#include "debias/util.hpp"

namespace debias {

YearMonth YearMonth::parse(std::string_view s) {
    const std::string t = trim(s);
    if (t.size() != 7 || t[4] != '-') {
        throw DataError("bad month '" + t + "', expected YYYY-MM");
    }
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u}) {
        if (t[i] < '0' || t[i] > '9') {
            throw DataError("bad month '" + t + "', expected YYYY-MM");
        }
    }
    YearMonth m{std::stoi(t.substr(0, 4)), std::stoi(t.substr(5, 2))};
    if (m.month < 1 || m.month > 12) {
        throw DataError("bad month '" + t + "': month out of range");
    }
    return m;
}

std::string YearMonth::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
    return buf;
}

}  // namespace debias
