// Tests for quote ingestion: CSV parsing, the relative-spread liquidity
// filter, and the derived calibration weights and noise scales.
#include <gtest/gtest.h>

#include <sstream>

#include <deepvol/quotes.hpp>

namespace dv = deepvol;

TEST(Quotes, FilterDropsWideSpreads) {
    std::istringstream in(
        "moneyness,maturity_years,bid_iv,ask_iv\n"
        "1.0,0.25,0.18,0.22\n"      // s/m = 0.04/0.20 = 0.2 -> dropped
        "1.0,0.25,0.195,0.205\n"    // s/m = 0.05 exactly -> dropped (>= rule)
        "1.0,0.25,0.198,0.202\n");  // s/m = 0.02 -> kept
    const auto qs = dv::ingest_quotes(in);
    EXPECT_EQ(qs.n_filtered, 2u);
    ASSERT_EQ(qs.quotes.size(), 1u);
    const auto& q = qs.quotes[0];
    EXPECT_DOUBLE_EQ(q.mid(), 0.2);
    EXPECT_NEAR(q.weight(), 100.0, 1e-9);  // mid / (ask - mid) = 0.2 / 0.002
    EXPECT_NEAR(q.noise_sigma(), 0.002, 1e-15);
    EXPECT_NEAR(q.liquidity(), 250.0, 1e-9);
}

TEST(Quotes, AcceptsStrikeSpotColumns) {
    std::istringstream in(
        "strike,spot,maturity_years,bid_iv,ask_iv\n"
        "110,100,0.5,0.199,0.201\n");
    const auto qs = dv::ingest_quotes(in);
    ASSERT_EQ(qs.quotes.size(), 1u);
    EXPECT_DOUBLE_EQ(qs.quotes[0].coord.M, 1.1);
    EXPECT_DOUBLE_EQ(qs.quotes[0].coord.T, 0.5);
}

TEST(Quotes, IgnoresExtraColumnsAndWhitespace) {
    std::istringstream in(
        "symbol,moneyness, maturity_years ,bid_iv,ask_iv\n"
        "SPX, 0.95 ,0.25,0.199,0.201\n"
        "\n"
        "SPX,1.05,0.5,0.21,0.211\n");
    const auto qs = dv::ingest_quotes(in);
    EXPECT_EQ(qs.quotes.size(), 2u);
}

TEST(Quotes, ParseErrorsCarryLineNumbers) {
    {
        std::istringstream in(
            "moneyness,maturity_years,bid_iv,ask_iv\n"
            "1.0,0.25,0.199,0.201\n"
            "1.0,abc,0.199,0.201\n");
        try {
            dv::ingest_quotes(in);
            FAIL() << "expected ParseError";
        } catch (const dv::ParseError& e) {
            EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
        }
    }
    {
        std::istringstream in("moneyness,maturity_years,bid_iv\n1.0,0.25,0.2\n");
        EXPECT_THROW(dv::ingest_quotes(in), dv::ParseError);
    }
    {
        // crossed market violates the bid <= ask invariant
        std::istringstream in(
            "moneyness,maturity_years,bid_iv,ask_iv\n"
            "1.0,0.25,0.202,0.198\n");
        EXPECT_THROW(dv::ingest_quotes(in), dv::ParseError);
    }
    {
        std::istringstream in(
            "moneyness,maturity_years,bid_iv,ask_iv\n"
            "1.0,0.25,0.18,0.22\n");
        EXPECT_THROW(dv::ingest_quotes(in), dv::EmptyAfterFilter);
    }
}
