#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mmf/csv.hpp"
#include "mmf/synthetic.hpp"

namespace mmf::fixture {

// Writes <dir>/candles/<TICKER>.csv, <dir>/news.jsonl and <dir>/registry.csv.
inline synthetic::PlantedSignalDataset write_planted(const std::filesystem::path& dir, std::size_t sessions = 300) {
    std::filesystem::create_directories(dir / "candles");
    synthetic::PlantedSignalConfig pc;
    pc.sessions = sessions;
    auto ds = synthetic::planted_signal_dataset(pc);
    char buf[160];
    for (const auto& s : ds.candles) {
        std::ofstream f(dir / "candles" / (s.ticker() + ".csv"));
        f << "date,open,high,low,close\n";
        for (const auto& c : s.bars()) {
            std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g\n", c.open, c.high, c.low, c.close);
            f << format_date(c.date) << buf;
        }
    }
    std::ofstream news(dir / "news.jsonl");
    write_news(news, ds.articles);
    std::ofstream reg(dir / "registry.csv");
    reg << "ticker,name,description\n";
    for (const auto& r : ds.registry)
        reg << csv::quote(r.ticker) << ',' << csv::quote(r.name) << ',' << csv::quote(r.description) << '\n';
    return ds;
}

} // namespace mmf::fixture
