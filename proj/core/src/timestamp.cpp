#include "celltrail/timestamp.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>

namespace celltrail {

namespace {

// Civil <-> day-count conversions on the proleptic Gregorian calendar.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

int to_int(std::string_view s) {
    int v = 0;
    for (char c : s) v = v * 10 + (c - '0');
    return v;
}

}  // namespace

std::string render_timestamp(Timestamp t) {
    std::int64_t days = t.seconds / 86400;
    std::int64_t sod = t.seconds % 86400;
    if (sod < 0) {
        sod += 86400;
        days -= 1;
    }
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02lld:%02lld:%02lldZ", y, m, d,
                  static_cast<long long>(sod / 3600), static_cast<long long>(sod / 60 % 60),
                  static_cast<long long>(sod % 60));
    return buf;
}

std::optional<Timestamp> parse_timestamp(std::string_view s) {
    // YYYY-MM-DDTHH:MM:SSZ, fixed width.
    if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' ||
        s[16] != ':' || s[19] != 'Z')
        return std::nullopt;
    const auto year = s.substr(0, 4), mon = s.substr(5, 2), day = s.substr(8, 2);
    const auto hh = s.substr(11, 2), mm = s.substr(14, 2), ss = s.substr(17, 2);
    if (!all_digits(year) || !all_digits(mon) || !all_digits(day) || !all_digits(hh) ||
        !all_digits(mm) || !all_digits(ss))
        return std::nullopt;
    const int y = to_int(year), m = to_int(mon), d = to_int(day);
    const int h = to_int(hh), mi = to_int(mm), sec = to_int(ss);
    if (m < 1 || m > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 59) return std::nullopt;
    // Reject nonexistent dates (e.g. Feb 30) by round-tripping.
    int ry, rm, rd;
    const std::int64_t days = days_from_civil(y, m, d);
    civil_from_days(days, ry, rm, rd);
    if (ry != y || rm != m || rd != d) return std::nullopt;
    return Timestamp{days * 86400 + h * 3600 + mi * 60 + sec};
}

Timestamp now_utc() {
    const auto now = std::chrono::system_clock::now();
    return Timestamp{std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()};
}

}  // namespace celltrail
