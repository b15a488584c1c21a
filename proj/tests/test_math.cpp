#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "deepvol/math.hpp"

using namespace deepvol;

TEST(NormCdf, ReferenceValues) {
    EXPECT_DOUBLE_EQ(norm_cdf(0.0), 0.5);
    EXPECT_NEAR(norm_cdf(1.0), 0.8413447460685429, 1e-15);
    EXPECT_NEAR(norm_cdf(0.1), 0.5398278372770290, 1e-15);
    EXPECT_NEAR(norm_cdf(-3.0) / 1.3498980316300946e-3, 1.0, 1e-13);
    EXPECT_NEAR(norm_cdf(-8.0) / 6.220960574271784e-16, 1.0, 1e-13);
    // Deep tail keeps full relative accuracy (no cancellation).
    EXPECT_NEAR(norm_cdf(-20.0) / 2.7536241186062337e-89, 1.0, 1e-13);
    EXPECT_NEAR(norm_cdf(-37.0) / 5.725571222524577e-300, 1.0, 1e-13);
    EXPECT_NEAR(2.0 * norm_cdf(0.1) - 1.0, 0.07965567455405796, 1e-15);
}

TEST(NormCdf, UpperTailComplement) {
    for (double x : {-5.0, -1.0, 0.0, 0.3, 2.0, 9.0})
        EXPECT_NEAR(norm_cdf_upper(x), norm_cdf(-x), 1e-300);
    EXPECT_GT(norm_cdf_upper(20.0), 0.0);
    EXPECT_LT(norm_cdf_upper(20.0), 1e-80);
}

TEST(InvNormCdf, ReferenceValues) {
    EXPECT_DOUBLE_EQ(inv_norm_cdf(0.5), 0.0);
    EXPECT_NEAR(inv_norm_cdf(0.975), 1.959963984540054, 1e-14);
    EXPECT_NEAR(inv_norm_cdf(0.3), -0.5244005127080407, 1e-14);
    EXPECT_NEAR(inv_norm_cdf(0.6), 0.2533471031357998, 1e-14);
    EXPECT_NEAR(inv_norm_cdf(1e-10), -6.361340902404056, 1e-13);
    EXPECT_NEAR(inv_norm_cdf(1e-30), -11.464024688443616, 1e-12);
    EXPECT_NEAR(inv_norm_cdf(1e-100), -21.273453560965324, 1e-12);
    EXPECT_NEAR(inv_norm_cdf(1e-300), -37.047096299361199, 1e-11);
}

TEST(InvNormCdf, RoundTripAgainstCdf) {
    // Central region, both signs. The attainable accuracy on the positive side
    // is limited by the spacing of doubles near p = 1 (ulp(1) / pdf(x)), so
    // the positive sweep stops at 5.
    for (double x = -5.0; x <= 5.0; x += 0.0625) {
        const double p = norm_cdf(x);
        EXPECT_NEAR(inv_norm_cdf(p), x, 2e-9) << "x=" << x;
    }
    // Left tail round trip at full relative precision of the CDF.
    for (double x = -37.0; x < -5.0; x += 0.5)
        EXPECT_NEAR(inv_norm_cdf(norm_cdf(x)), x, 1e-9) << "x=" << x;
}

TEST(InvNormCdf, Symmetry) {
    // p small enough that 1 - p is still exactly representable to ~ulp.
    for (double p : {0.01, 0.2, 0.4, 0.49})
        EXPECT_NEAR(inv_norm_cdf(p), -inv_norm_cdf(1.0 - p), 1e-12);
}

TEST(InvNormCdf, RejectsOutOfDomain) {
    EXPECT_THROW(inv_norm_cdf(0.0), std::domain_error);
    EXPECT_THROW(inv_norm_cdf(1.0), std::domain_error);
    EXPECT_THROW(inv_norm_cdf(-0.2), std::domain_error);
    EXPECT_THROW(inv_norm_cdf(std::nan("")), std::domain_error);
}

TEST(Crc32, KnownVectors) {
    const char* s = "123456789";
    EXPECT_EQ(crc32(s, std::strlen(s)), 0xCBF43926u);
    EXPECT_EQ(crc32("", 0), 0x00000000u);
    const char* a = "The quick brown fox jumps over the lazy dog";
    EXPECT_EQ(crc32(a, std::strlen(a)), 0x414FA339u);
}

TEST(Crc32, StreamingMatchesOneShot) {
    const char* s = "deterministic volatility surfaces";
    const std::size_t n = std::strlen(s);
    Crc32 c;
    c.update(s, 10);
    c.update(s + 10, n - 10);
    EXPECT_EQ(c.value(), crc32(s, n));
}

TEST(Lobatto, SmoothIntegrals) {
    auto r1 = integrate_lobatto([](double x) { return x * x; }, 0.0, 1.0, 1e-12);
    EXPECT_TRUE(r1.converged);
    EXPECT_NEAR(r1.value, 1.0 / 3.0, 1e-12);

    auto r2 = integrate_lobatto([](double x) { return std::exp(x); }, 0.0, 1.0, 1e-12);
    EXPECT_NEAR(r2.value, std::exp(1.0) - 1.0, 1e-12);

    auto r3 = integrate_lobatto([](double x) { return std::sin(x); }, 0.0, pi, 1e-12);
    EXPECT_NEAR(r3.value, 2.0, 1e-11);
}

TEST(Lobatto, OscillatoryAndDamped) {
    auto r = integrate_lobatto([](double x) { return std::cos(x); }, 0.0, 6.0 * pi, 1e-10);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.value, 0.0, 1e-9);

    auto r2 = integrate_lobatto([](double x) { return std::sin(10.0 * x) * std::exp(-x); },
                                0.0, 10.0, 1e-10);
    EXPECT_NEAR(r2.value, 0.09900625244358607, 1e-9);
}

TEST(Lobatto, SteepLocalFeature) {
    // sqrt has an unbounded derivative at 0; adaptivity has to concentrate there.
    auto r = integrate_lobatto([](double x) { return std::sqrt(x); }, 0.0, 1.0, 1e-10);
    EXPECT_NEAR(r.value, 2.0 / 3.0, 1e-9);

    auto r2 = integrate_lobatto([](double x) { return 1.0 / std::sqrt(x); }, 1e-12, 1.0, 1e-8);
    EXPECT_NEAR(r2.value, 1.999998, 1e-5);
}

TEST(Lobatto, ReversedAndDegenerateIntervals) {
    auto fwd = integrate_lobatto([](double x) { return x; }, 0.0, 2.0, 1e-12);
    auto rev = integrate_lobatto([](double x) { return x; }, 2.0, 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(fwd.value, -rev.value);
    EXPECT_DOUBLE_EQ(integrate_lobatto([](double x) { return x; }, 1.0, 1.0, 1e-12).value, 0.0);
}

TEST(GaussKronrod, MatchesLobatto) {
    auto f = [](double x) { return std::exp(-x * x) * std::cos(3.0 * x); };
    auto a = integrate_lobatto(f, -4.0, 4.0, 1e-12);
    auto b = integrate_gk15(f, -4.0, 4.0, 1e-12);
    EXPECT_TRUE(a.converged);
    EXPECT_TRUE(b.converged);
    EXPECT_NEAR(a.value, b.value, 1e-10);
}

TEST(GaussKronrod, SingleApplicationErrorEstimate) {
    auto [v, e] = gauss_kronrod_15([](double x) { return x * x * x + x; }, -1.0, 3.0);
    EXPECT_NEAR(v, 24.0, 1e-10);
    EXPECT_LT(e, 1e-10);
}
