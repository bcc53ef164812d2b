#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmf/calendar.hpp"
#include "mmf/error.hpp"

namespace mmf {

struct Candle {
    Date date;
    double open = 0;
    double high = 0;
    double low = 0;
    double close = 0;

    friend bool operator==(const Candle&, const Candle&) = default;
};

enum class PriceField { Close, Open, High, Low };

inline constexpr PriceField kPriceFields[] = {PriceField::Close, PriceField::Open, PriceField::High, PriceField::Low};

inline const char* to_string(PriceField f) {
    switch (f) {
    case PriceField::Close: return "close";
    case PriceField::Open: return "open";
    case PriceField::High: return "high";
    case PriceField::Low: return "low";
    }
    return "?";
}

inline double field_value(const Candle& c, PriceField f) {
    switch (f) {
    case PriceField::Close: return c.close;
    case PriceField::Open: return c.open;
    case PriceField::High: return c.high;
    case PriceField::Low: return c.low;
    }
    return 0;
}

inline void validate_candle(const Candle& c) {
    for (double v : {c.open, c.high, c.low, c.close})
        if (!std::isfinite(v) || v <= 0) throw Error("non-positive or non-finite price on " + format_date(c.date));
    if (c.low > std::min(c.open, c.close) || c.high < std::max(c.open, c.close))
        throw Error("inconsistent OHLC bar on " + format_date(c.date));
}

// Per-ticker bars, non-empty and strictly increasing by date.
class CandleSeries {
public:
    CandleSeries(std::string ticker, std::vector<Candle> bars) : ticker_(std::move(ticker)), bars_(std::move(bars)) {
        if (bars_.empty()) throw Error("empty candle series for '" + ticker_ + "'");
        for (std::size_t i = 0; i < bars_.size(); ++i) {
            validate_candle(bars_[i]);
            if (i > 0 && bars_[i].date <= bars_[i - 1].date)
                throw Error("candle dates not strictly increasing at " + format_date(bars_[i].date));
        }
    }

    const std::string& ticker() const noexcept { return ticker_; }
    std::span<const Candle> bars() const noexcept { return bars_; }
    std::size_t size() const noexcept { return bars_.size(); }
    const Candle& operator[](std::size_t i) const { return bars_[i]; }

    std::vector<Date> dates() const {
        std::vector<Date> out;
        out.reserve(bars_.size());
        for (const auto& b : bars_) out.push_back(b.date);
        return out;
    }

    std::vector<double> values(PriceField f) const {
        std::vector<double> out;
        out.reserve(bars_.size());
        for (const auto& b : bars_) out.push_back(field_value(b, f));
        return out;
    }

private:
    std::string ticker_;
    std::vector<Candle> bars_;
};

// values[i] is the relative change into dates[i] from the previous session.
struct ReturnSeries {
    std::string ticker;
    PriceField field = PriceField::Close;
    std::vector<Date> dates;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
};

struct SeriesStats {
    double mean = 0, std = 0, min = 0, max = 0, q25 = 0, q50 = 0, q75 = 0;
    std::size_t count = 0;
};

enum class CandleFormat { Csv, JsonLines };

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_price(std::string_view s, std::size_t line) {
    s = trim(s);
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
        throw ParseError("malformed number '" + std::string(s) + "'", line);
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline Candle checked_candle(Candle c, std::size_t line) {
    try {
        validate_candle(c);
    } catch (const Error& e) {
        throw ParseError(e.what(), line);
    }
    return c;
}

} // namespace detail

// Reads `date,open,high,low,close` CSV (header required) or JSON lines with
// the same keys. Rows may arrive in any order; the result is sorted.
inline CandleSeries parse_candles(std::istream& in, CandleFormat format, std::string ticker) {
    std::vector<Candle> bars;
    std::string raw;
    std::size_t line = 0;
    bool header_seen = false;
    while (std::getline(in, raw)) {
        ++line;
        auto row = detail::trim(raw);
        if (row.empty()) continue;
        if (format == CandleFormat::Csv) {
            auto cols = detail::split(row, ',');
            if (!header_seen) {
                header_seen = true;
                if (cols.size() != 5 || detail::trim(cols[0]) != "date" || detail::trim(cols[1]) != "open" ||
                    detail::trim(cols[2]) != "high" || detail::trim(cols[3]) != "low" ||
                    detail::trim(cols[4]) != "close")
                    throw ParseError("expected header 'date,open,high,low,close'", line);
                continue;
            }
            if (cols.size() != 5) throw ParseError("expected 5 columns, got " + std::to_string(cols.size()), line);
            Candle c;
            try {
                c.date = parse_date(detail::trim(cols[0]));
            } catch (const Error& e) {
                throw ParseError(e.what(), line);
            }
            c.open = detail::parse_price(cols[1], line);
            c.high = detail::parse_price(cols[2], line);
            c.low = detail::parse_price(cols[3], line);
            c.close = detail::parse_price(cols[4], line);
            bars.push_back(detail::checked_candle(c, line));
        } else {
            Candle c;
            try {
                auto j = nlohmann::json::parse(row);
                c.date = parse_date(j.at("date").get<std::string>());
                c.open = j.at("open").get<double>();
                c.high = j.at("high").get<double>();
                c.low = j.at("low").get<double>();
                c.close = j.at("close").get<double>();
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(std::string("malformed record: ") + e.what(), line);
            } catch (const Error& e) {
                throw ParseError(e.what(), line);
            }
            bars.push_back(detail::checked_candle(c, line));
        }
    }
    if (bars.empty()) throw Error("empty candle series for '" + ticker + "'");
    std::stable_sort(bars.begin(), bars.end(), [](const Candle& a, const Candle& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < bars.size(); ++i)
        if (bars[i].date == bars[i - 1].date) throw Error("duplicate date " + format_date(bars[i].date) + " in '" + ticker + "'");
    return CandleSeries(std::move(ticker), std::move(bars));
}

inline CandleSeries load_candles(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string());
    auto format = file.extension() == ".jsonl" ? CandleFormat::JsonLines : CandleFormat::Csv;
    try {
        return parse_candles(in, format, file.stem().string());
    } catch (const Error& e) {
        throw Error(file.filename().string() + ": " + e.what());
    }
}

// One `<TICKER>.csv` (or `.jsonl`) per ticker; result ordered by ticker.
inline std::vector<CandleSeries> load_candles_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && (e.path().extension() == ".csv" || e.path().extension() == ".jsonl"))
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<CandleSeries> out;
    for (const auto& f : files) out.push_back(load_candles(f));
    return out;
}

inline ReturnSeries compute_returns(const CandleSeries& series, PriceField field) {
    if (series.size() < 2) throw Error("need at least 2 bars to compute returns for '" + series.ticker() + "'");
    ReturnSeries r{series.ticker(), field, {}, {}};
    r.dates.reserve(series.size() - 1);
    r.values.reserve(series.size() - 1);
    for (std::size_t i = 1; i < series.size(); ++i) {
        r.dates.push_back(series[i].date);
        r.values.push_back(field_value(series[i], field) / field_value(series[i - 1], field) - 1.0);
    }
    return r;
}

// Compounds returns forward from an anchor price.
inline std::vector<double> reconstruct_prices(std::span<const double> returns, double anchor) {
    if (!(anchor > 0) || !std::isfinite(anchor)) throw Error("anchor price must be positive");
    std::vector<double> prices;
    prices.reserve(returns.size());
    double prev = anchor;
    for (double r : returns) {
        prev = (r + 1.0) * prev;
        prices.push_back(prev);
    }
    return prices;
}

inline std::vector<double> reconstruct_prices(const ReturnSeries& returns, double anchor) {
    return reconstruct_prices(std::span<const double>(returns.values), anchor);
}

// Linear-interpolated quantile of sorted data (inclusive method).
inline double quantile_sorted(std::span<const double> sorted, double q) {
    double pos = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Sample standard deviation (n-1); zero for a single value.
inline SeriesStats describe(std::span<const double> values) {
    if (values.empty()) throw Error("describe: empty input");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    SeriesStats s;
    s.count = sorted.size();
    double sum = 0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.count);
    if (s.count > 1) {
        double ss = 0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.count - 1));
    }
    s.min = sorted.front();
    s.max = sorted.back();
    s.q25 = quantile_sorted(sorted, 0.25);
    s.q50 = quantile_sorted(sorted, 0.50);
    s.q75 = quantile_sorted(sorted, 0.75);
    return s;
}

} // namespace mmf
