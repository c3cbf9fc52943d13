#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "loadcast/detail/text.hpp"
#include "loadcast/error.hpp"

namespace loadcast {

inline constexpr int kDefaultNumBins = 128;

/// Value quantizer: uniform bins over [0, 2 * max(context)], addressed in
/// mean-scaled units. Bins are left-closed; out-of-range values clamp.
class QuantizationCodec {
public:
    /// Rebuilds a codec from its serialized parameters.
    QuantizationCodec(double scale, std::vector<double> edges) : scale_(scale), edges_(std::move(edges)) {
        if (!(scale_ > 0.0) || !std::isfinite(scale_)) fail(ErrorKind::InvalidArgument, "codec scale must be positive");
        if (edges_.size() < 2) fail(ErrorKind::InvalidArgument, "codec needs at least one bin");
        if (edges_.front() != 0.0) fail(ErrorKind::InvalidArgument, "first bin edge must be 0");
        for (std::size_t i = 1; i < edges_.size(); ++i) {
            if (!(edges_[i] > edges_[i - 1]) || !std::isfinite(edges_[i])) {
                fail(ErrorKind::InvalidArgument, "bin edges must be finite and strictly increasing");
            }
        }
        centers_.resize(edges_.size() - 1);
        for (std::size_t i = 0; i < centers_.size(); ++i) centers_[i] = (edges_[i] + edges_[i + 1]) / 2.0;
        fingerprint_ = compute_fingerprint();
    }

    int num_bins() const noexcept { return static_cast<int>(centers_.size()); }
    double scale() const noexcept { return scale_; }
    const std::vector<double>& bin_edges() const noexcept { return edges_; }
    const std::vector<double>& bin_centers() const noexcept { return centers_; }
    double upper_edge() const noexcept { return edges_.back(); }
    double bin_width(int token) const { return edges_.at(static_cast<std::size_t>(token) + 1) - edges_.at(static_cast<std::size_t>(token)); }
    /// Upper end of the binned range in scaled units (r_max).
    double scaled_range() const noexcept { return edges_.back() / scale_; }
    std::uint64_t fingerprint() const noexcept { return fingerprint_; }

    int token_of(double value) const {
        if (!std::isfinite(value)) fail(ErrorKind::NonFiniteInput, "cannot tokenize a non-finite value");
        const auto it = std::upper_bound(edges_.begin(), edges_.end(), value);
        const auto idx = static_cast<int>(it - edges_.begin()) - 1;
        return std::clamp(idx, 0, num_bins() - 1);
    }

    double value_of(int token) const {
        if (token < 0 || token >= num_bins()) {
            fail(ErrorKind::TokenOutOfRange,
                 "token " + std::to_string(token) + " outside [0, " + std::to_string(num_bins()) + ")");
        }
        return centers_[static_cast<std::size_t>(token)];
    }

    friend bool operator==(const QuantizationCodec& a, const QuantizationCodec& b) {
        return a.scale_ == b.scale_ && a.edges_ == b.edges_;
    }

private:
    std::uint64_t compute_fingerprint() const noexcept {
        std::uint64_t h = detail::splitmix64(std::bit_cast<std::uint64_t>(scale_));
        for (const double e : edges_) h = detail::hash_combine(h, std::bit_cast<std::uint64_t>(e));
        return h;
    }

    double scale_;
    std::vector<double> edges_;
    std::vector<double> centers_;
    std::uint64_t fingerprint_ = 0;
};

struct TokenSequence {
    std::vector<int> tokens;
    std::uint64_t codec_fingerprint = 0;

    std::size_t size() const noexcept { return tokens.size(); }
};

inline QuantizationCodec fit_quantization_codec(std::span<const double> context, int num_bins = kDefaultNumBins) {
    if (context.empty()) fail(ErrorKind::EmptyContext, "cannot fit a codec on an empty context");
    if (num_bins < 1) fail(ErrorKind::InvalidArgument, "num_bins must be positive");
    double sum = 0.0;
    double max = 0.0;
    for (const double v : context) {
        if (!std::isfinite(v)) fail(ErrorKind::NonFiniteInput, "context holds a non-finite value");
        if (v < 0.0) fail(ErrorKind::NegativeValue, "context holds negative value " + detail::format_shortest(v));
        sum += v;
        max = std::max(max, v);
    }
    const double mean = sum / static_cast<double>(context.size());
    const double scale = mean > 0.0 ? mean : 1.0;
    const double scaled_range = max > 0.0 ? 2.0 * max / scale : 1.0;
    const double upper = scaled_range * scale;
    std::vector<double> edges(static_cast<std::size_t>(num_bins) + 1);
    for (int i = 0; i <= num_bins; ++i) edges[static_cast<std::size_t>(i)] = upper * i / num_bins;
    edges.back() = upper;
    return QuantizationCodec(scale, std::move(edges));
}

inline TokenSequence tokenize(const QuantizationCodec& codec, std::span<const double> values) {
    TokenSequence out{{}, codec.fingerprint()};
    out.tokens.reserve(values.size());
    for (const double v : values) out.tokens.push_back(codec.token_of(v));
    return out;
}

inline std::vector<double> detokenize(const QuantizationCodec& codec, const TokenSequence& tokens) {
    if (tokens.codec_fingerprint != codec.fingerprint()) {
        fail(ErrorKind::CodecMismatch, "token sequence was produced by a different codec");
    }
    std::vector<double> out;
    out.reserve(tokens.size());
    for (const int t : tokens.tokens) out.push_back(codec.value_of(t));
    return out;
}

// Plain-text form: one `key value...` line per field.
inline void write_codec(std::ostream& out, const QuantizationCodec& codec) {
    out << "num_bins " << codec.num_bins() << '\n';
    out << "scale " << detail::format_shortest(codec.scale()) << '\n';
    out << "edges";
    for (const double e : codec.bin_edges()) out << ' ' << detail::format_shortest(e);
    out << '\n';
}

inline QuantizationCodec read_codec(std::istream& in) {
    std::string key;
    int num_bins = -1;
    double scale = 0.0;
    std::vector<double> edges;
    std::string line;
    while (std::getline(in, line)) {
        const auto fields = detail::split_fields(detail::trim(line), ' ');
        if (fields.empty() || fields[0].empty()) continue;
        if (fields[0] == "num_bins" && fields.size() == 2) {
            num_bins = detail::parse_int<int>(fields[1]).value_or(-1);
        } else if (fields[0] == "scale" && fields.size() == 2) {
            scale = detail::parse_double(fields[1]).value_or(0.0);
        } else if (fields[0] == "edges") {
            for (std::size_t i = 1; i < fields.size(); ++i) {
                const auto v = detail::parse_double(fields[i]);
                if (!v) fail(ErrorKind::MalformedRow, "bad edge '" + std::string(fields[i]) + "'");
                edges.push_back(*v);
            }
        } else {
            fail(ErrorKind::MalformedRow, "unexpected codec line '" + line + "'");
        }
    }
    if (num_bins < 1 || edges.size() != static_cast<std::size_t>(num_bins) + 1) {
        fail(ErrorKind::MalformedRow, "codec edge count does not match num_bins");
    }
    return QuantizationCodec(scale, std::move(edges));
}

// ---------------------------------------------------------------------------

/// Cuts a series into equal, non-overlapping blocks of `segment_length`.
class SegmentCodec {
public:
    explicit SegmentCodec(std::size_t segment_length) : length_(segment_length) {
        if (length_ == 0) fail(ErrorKind::InvalidArgument, "segment length must be positive");
    }

    /// One segment per hour at the given resolution.
    static SegmentCodec hourly(int resolution_minutes) {
        return SegmentCodec(static_cast<std::size_t>(60 / resolution_minutes));
    }

    std::size_t segment_length() const noexcept { return length_; }

private:
    std::size_t length_;
};

inline std::vector<std::vector<double>> segment(const SegmentCodec& codec, std::span<const double> values) {
    const std::size_t b = codec.segment_length();
    if (values.size() % b != 0) {
        fail(ErrorKind::IndivisibleLength,
             "length " + std::to_string(values.size()) + " is not divisible by " + std::to_string(b));
    }
    std::vector<std::vector<double>> out;
    out.reserve(values.size() / b);
    for (std::size_t i = 0; i < values.size(); i += b) out.emplace_back(values.begin() + i, values.begin() + i + b);
    return out;
}

} // namespace loadcast
