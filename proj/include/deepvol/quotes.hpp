#pragma once

// Market implied-volatility quotes: CSV ingestion, the bid-ask liquidity
// filter, calibration weights, and noise scales derived from spreads.

#include <cctype>
#include <cstddef>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include <deepvol/bs.hpp>
#include <deepvol/errors.hpp>

namespace deepvol {

struct IVQuote {
    OptionCoord coord;
    double bid_iv = 0.0;
    double ask_iv = 0.0;

    double mid() const { return 0.5 * (bid_iv + ask_iv); }
    double spread() const { return ask_iv - bid_iv; }
    // Calibration weight: mid over half... mid/(ask - mid) = 2*mid/spread.
    double weight() const { return mid() / (ask_iv - mid()); }
    // Observation noise scale for the Bayesian likelihood: half the spread.
    double noise_sigma() const { return 0.5 * spread(); }
    // Liquidity proxy used to weight the (m, T) density: inverse spread.
    double liquidity() const { return 1.0 / spread(); }

    void validate() const {
        coord.validate();
        if (!(std::isfinite(bid_iv) && bid_iv > 0.0) || !(std::isfinite(ask_iv) && ask_iv > 0.0))
            throw std::invalid_argument("IVQuote: bid and ask IVs must be positive");
        if (bid_iv > ask_iv) throw std::invalid_argument("IVQuote: bid_iv must not exceed ask_iv");
    }
};

struct QuoteSet {
    std::vector<IVQuote> quotes;
    std::size_t n_filtered = 0;  // rows removed by the relative-spread rule
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    for (auto& c : cells) {
        const auto b = c.find_first_not_of(" \t");
        const auto e = c.find_last_not_of(" \t");
        c = (b == std::string::npos) ? std::string() : c.substr(b, e - b + 1);
    }
    return cells;
}

inline double parse_double(const std::string& cell, std::size_t line_no, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse " + what + " from '" +
                         cell + "'");
    }
}

inline std::ptrdiff_t find_column(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        std::string h = header[i];
        for (auto& ch : h) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (h == name) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
}

}  // namespace detail

// Reads quotes from CSV with a mandatory header. Columns: either `moneyness`
// or the pair `strike`,`spot`; plus `maturity_years`, `bid_iv`, `ask_iv`.
// Rows whose relative spread (ask-bid)/mid is at least 5% are dropped as
// illiquid and counted in the result.
inline QuoteSet ingest_quotes(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("line 1: missing header row");
    const auto header = detail::split_csv_line(line);
    const auto c_mny = detail::find_column(header, "moneyness");
    const auto c_strike = detail::find_column(header, "strike");
    const auto c_spot = detail::find_column(header, "spot");
    const auto c_mat = detail::find_column(header, "maturity_years");
    const auto c_bid = detail::find_column(header, "bid_iv");
    const auto c_ask = detail::find_column(header, "ask_iv");
    if (c_mat < 0 || c_bid < 0 || c_ask < 0 || (c_mny < 0 && (c_strike < 0 || c_spot < 0)))
        throw ParseError(
            "line 1: header must name maturity_years, bid_iv, ask_iv and either moneyness or "
            "strike+spot");

    QuoteSet out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        auto cell = [&](std::ptrdiff_t idx, const char* what) -> const std::string& {
            if (idx < 0 || static_cast<std::size_t>(idx) >= cells.size())
                throw ParseError("line " + std::to_string(line_no) + ": missing column " + what);
            return cells[static_cast<std::size_t>(idx)];
        };
        IVQuote q;
        if (c_mny >= 0) {
            q.coord.M = detail::parse_double(cell(c_mny, "moneyness"), line_no, "moneyness");
        } else {
            const double strike = detail::parse_double(cell(c_strike, "strike"), line_no, "strike");
            const double spot = detail::parse_double(cell(c_spot, "spot"), line_no, "spot");
            if (!(spot > 0.0))
                throw ParseError("line " + std::to_string(line_no) + ": spot must be positive");
            q.coord.M = strike / spot;
        }
        q.coord.T = detail::parse_double(cell(c_mat, "maturity_years"), line_no, "maturity_years");
        q.bid_iv = detail::parse_double(cell(c_bid, "bid_iv"), line_no, "bid_iv");
        q.ask_iv = detail::parse_double(cell(c_ask, "ask_iv"), line_no, "ask_iv");
        try {
            q.validate();
        } catch (const std::invalid_argument& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        // drop at a relative spread of 5% or more; the small slack keeps
        // boundary cases that exact decimal arithmetic would land on the
        // threshold (e.g. 0.195/0.205) on the dropped side
        if (q.spread() / q.mid() >= 0.05 - 1e-12) {
            ++out.n_filtered;
            continue;
        }
        out.quotes.push_back(q);
    }
    if (out.quotes.empty())
        throw EmptyAfterFilter("ingest_quotes: no quotes survive the liquidity filter");
    return out;
}

inline QuoteSet ingest_quotes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open quote file: " + path);
    return ingest_quotes(in);
}

}  // namespace deepvol
