#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace debias {

struct YearMonth {
    int year = 2000;
    int month = 1;  // 1..12

    // Months since year 0; consecutive months differ by one.
    int index() const { return year * 12 + (month - 1); }
    static YearMonth from_index(int idx) { return {idx / 12, idx % 12 + 1}; }
    YearMonth next() const { return from_index(index() + 1); }
    YearMonth plus(int months) const { return from_index(index() + months); }

    // "YYYY-MM"; throws DataError on malformed or out-of-range input.
    static YearMonth parse(std::string_view s);
    std::string str() const;

    auto operator<=>(const YearMonth& o) const { return index() <=> o.index(); }
    bool operator==(const YearMonth& o) const { return index() == o.index(); }
};

// Inclusive month range.
struct MonthRange {
    YearMonth first;
    YearMonth last;

    bool contains(YearMonth m) const { return first <= m && m <= last; }
    bool overlaps(const MonthRange& o) const { return first <= o.last && o.first <= last; }
    std::string str() const { return first.str() + ".." + last.str(); }
};

}  // namespace debias
