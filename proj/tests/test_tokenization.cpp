#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "loadcast/tokenization.hpp"

using namespace loadcast;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Codec with edges 0, 1, ..., 10.
QuantizationCodec unit_codec() {
    std::vector<double> edges;
    for (int i = 0; i <= 10; ++i) edges.push_back(i);
    return QuantizationCodec(5.0, edges);
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected loadcast::Error");
    return ErrorKind::InvalidArgument;
}

} // namespace

TEST_CASE("fit_quantization_codec scales by the mean and spans twice the max", "[tokenization]") {
    const std::vector<double> fives(12, 5.0);
    const auto codec = fit_quantization_codec(fives, 10);
    CHECK(codec.scale() == 5.0);
    CHECK(codec.num_bins() == 10);
    CHECK(codec.upper_edge() == 10.0);
    CHECK(codec.scaled_range() == 2.0);
    for (int i = 0; i <= 10; ++i) CHECK_THAT(codec.bin_edges()[static_cast<std::size_t>(i)], WithinAbs(i, 1e-12));

    const std::vector<double> zeros(3, 0.0);
    const auto z = fit_quantization_codec(zeros, 4);
    CHECK(z.scale() == 1.0);
    CHECK(z.upper_edge() == 1.0);

    const std::vector<double> mixed{1.0, 3.0, 8.0};
    const auto m = fit_quantization_codec(mixed);
    CHECK(m.num_bins() == kDefaultNumBins);
    CHECK_THAT(m.scale(), WithinRel(4.0, 1e-15));
    CHECK(m.upper_edge() == 16.0);
    for (const double v : mixed) CHECK(v < m.upper_edge());

    CHECK(kind_of([] { fit_quantization_codec(std::vector<double>{1.0, -2.0}); }) == ErrorKind::NegativeValue);
    CHECK(kind_of([] { fit_quantization_codec(std::vector<double>{1.0, INFINITY}); }) == ErrorKind::NonFiniteInput);
    CHECK(kind_of([] { fit_quantization_codec(std::vector<double>{}); }) == ErrorKind::EmptyContext);
}

TEST_CASE("tokenize uses left-closed bins and clamps", "[tokenization]") {
    const auto codec = unit_codec();
    const std::vector<double> values{2.5, 3.0, 0.0, 99.0, -1.0, 10.0, 9.999};
    const auto tokens = tokenize(codec, values);
    CHECK(tokens.tokens == std::vector<int>{2, 3, 0, 9, 0, 9, 9});
    CHECK(tokens.codec_fingerprint == codec.fingerprint());
    for (int k = 0; k < 10; ++k) CHECK(codec.token_of(k) == k);
    CHECK(kind_of([&] { tokenize(codec, std::vector<double>{NAN}); }) == ErrorKind::NonFiniteInput);
}

TEST_CASE("detokenize maps tokens to bin centres", "[tokenization]") {
    const auto codec = unit_codec();
    const auto out = detokenize(codec, TokenSequence{{2, 0, 9}, codec.fingerprint()});
    CHECK(out == std::vector<double>{2.5, 0.5, 9.5});
    CHECK(kind_of([&] { detokenize(codec, TokenSequence{{10}, codec.fingerprint()}); }) == ErrorKind::TokenOutOfRange);
    CHECK(kind_of([&] { detokenize(codec, TokenSequence{{-1}, codec.fingerprint()}); }) == ErrorKind::TokenOutOfRange);

    const auto other = fit_quantization_codec(std::vector<double>{1.0, 2.0}, 10);
    CHECK(kind_of([&] { detokenize(other, TokenSequence{{1}, codec.fingerprint()}); }) == ErrorKind::CodecMismatch);
}

TEST_CASE("quantization round trip stays within half a bin", "[tokenization][property]") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ctx(0.0, 50.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> context(96);
        for (double& v : context) v = ctx(rng);
        const auto codec = fit_quantization_codec(context, 16 + 8 * trial);
        std::uniform_real_distribution<double> in_range(0.0, codec.upper_edge());
        std::vector<double> x(500);
        for (double& v : x) v = in_range(rng);
        const auto tokens = tokenize(codec, x);
        const auto back = detokenize(codec, tokens);
        for (std::size_t i = 0; i < x.size(); ++i) {
            REQUIRE(std::abs(back[i] - x[i]) <= codec.bin_width(tokens.tokens[i]) / 2.0 + 1e-12);
            REQUIRE(back[i] >= 0.0);
        }
    }
}

TEST_CASE("tokenize is monotone", "[tokenization][property]") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5.0, 120.0);
    const auto codec = fit_quantization_codec(std::vector<double>{3.0, 40.0, 12.0, 7.5}, 37);
    for (int i = 0; i < 10000; ++i) {
        double a = u(rng);
        double b = u(rng);
        if (a > b) std::swap(a, b);
        REQUIRE(codec.token_of(a) <= codec.token_of(b));
    }
}

TEST_CASE("codec serialization round trips exactly", "[tokenization]") {
    const auto codec = fit_quantization_codec(std::vector<double>{0.1, 0.7, 1.3, 2.9}, 7);
    std::stringstream buf;
    write_codec(buf, codec);
    const auto back = read_codec(buf);
    CHECK(back == codec);
    CHECK(back.fingerprint() == codec.fingerprint());

    std::istringstream truncated("num_bins 3\nscale 1\nedges 0 1 2\n");
    CHECK(kind_of([&] { read_codec(truncated); }) == ErrorKind::MalformedRow);
}

TEST_CASE("segment slices equal contiguous blocks", "[tokenization]") {
    const std::vector<double> v{1, 2, 3, 4, 5, 6};
    const auto parts = segment(SegmentCodec(3), v);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0] == std::vector<double>{1, 2, 3});
    CHECK(parts[1] == std::vector<double>{4, 5, 6});

    const auto whole = segment(SegmentCodec(6), v);
    REQUIRE(whole.size() == 1);
    CHECK(whole[0] == v);

    CHECK(kind_of([] { segment(SegmentCodec(3), std::vector<double>{1, 2, 3, 4, 5}); }) == ErrorKind::IndivisibleLength);
    CHECK(SegmentCodec::hourly(60).segment_length() == 1);
    CHECK(SegmentCodec::hourly(30).segment_length() == 2);
    CHECK(SegmentCodec::hourly(15).segment_length() == 4);
}

TEST_CASE("segmentation is lossless", "[tokenization][property]") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n(0.0, 1e3);
    std::uniform_int_distribution<std::size_t> len(1, 12);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t b = len(rng);
        std::vector<double> v(b * len(rng));
        for (double& x : v) x = n(rng);
        std::vector<double> joined;
        for (const auto& s : segment(SegmentCodec(b), v)) {
            REQUIRE(s.size() == b);
            joined.insert(joined.end(), s.begin(), s.end());
        }
        REQUIRE(std::memcmp(joined.data(), v.data(), v.size() * sizeof(double)) == 0);
    }
}
