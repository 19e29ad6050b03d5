#pragma once

// Shared primitives: error types, tensors, deterministic random streams and
// checksums used by every other fedloc header.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedloc {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Failure categories; the CLI maps them onto its exit codes.
enum class ErrorKind {
    usage,    // bad arguments or configuration
    data,     // unreadable / malformed / degenerate input data
    numeric,  // NaN divergence, singular systems, shape mismatches
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct UsageError : Error {
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::usage, "config error: " + what) {}
};
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};
struct ParseError : DataError {
    ParseError(const std::string& source, std::size_t row, const std::string& what)
        : DataError(source + ": row " + std::to_string(row) + ": " + what), row_(row) {}
    [[nodiscard]] std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};
struct SchemaError : DataError {
    explicit SchemaError(const std::string& what) : DataError("schema error: " + what) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(ErrorKind::numeric, "shape mismatch: " + what) {}
};

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

using WarningSink = void (*)(std::string_view);

inline void stderr_warning_sink(std::string_view msg) {
    std::fputs("warning: ", stderr);
    std::fwrite(msg.data(), 1, msg.size(), stderr);
    std::fputc('\n', stderr);
}

inline WarningSink& warning_sink() {
    static WarningSink sink = &stderr_warning_sink;
    return sink;
}

/// Non-fatal diagnostics (small strata, empty cells, ...). Tests swap the sink.
inline void warn(std::string_view msg) {
    if (auto sink = warning_sink()) {
        sink(msg);
    }
}

// ---------------------------------------------------------------------------
// Tensors
// ---------------------------------------------------------------------------

/// Dense row-major matrix; biases and per-feature vectors are stored as 1 x n.
template <typename T>
using Tensor2 = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
[[nodiscard]] bool all_finite(const Tensor2<T>& t) {
    return t.allFinite();
}

template <typename T>
void require_finite(const Tensor2<T>& t, std::string_view where) {
#ifndef NDEBUG
    if (!t.allFinite()) {
        throw NumericError("non-finite value produced by " + std::string(where));
    }
#else
    (void) t;
    (void) where;
#endif
}

template <typename T>
void require_shape(const Tensor2<T>& t, Eigen::Index rows, Eigen::Index cols, std::string_view what) {
    if (t.rows() != rows || t.cols() != cols) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    }
}

// ---------------------------------------------------------------------------
// Deterministic randomness
// ---------------------------------------------------------------------------

/// splitmix64 finalizer, used to derive independent seeds.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of the stream owned by (client, round) under a base seed. Central
/// training uses stream (0, 0), so a one-client one-round federation sees the
/// exact same shuffles and dropout masks as a central run.
[[nodiscard]] constexpr std::uint64_t stream_seed(std::uint64_t base, std::uint64_t client, std::uint64_t round) noexcept {
    return mix64(mix64(mix64(base) ^ (client + 1)) ^ ((round + 1) << 20));
}

/// Seed used for weight initialization under a base seed.
[[nodiscard]] constexpr std::uint64_t init_seed(std::uint64_t base) noexcept {
    return mix64(base ^ 0x5eed5eed5eed5eedULL);
}

/// xoshiro256** generator. The sampling helpers below are hand-rolled so
/// that sequences do not depend on the standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

    void reseed(std::uint64_t seed) noexcept {
        std::uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            s = mix64(x);
        }
    }

    std::uint64_t next() noexcept {
        const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = std::rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), Lemire's unbiased method.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n == 0) {
            return 0;
        }
        __uint128_t m = static_cast<__uint128_t>(next()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<__uint128_t>(next()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Box-Muller.
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Exponential with the given mean.
    double exponential(double mean) noexcept {
        double u = uniform();
        while (u <= 0.0) {
            u = uniform();
        }
        return -mean * std::log(u);
    }

    template <typename It>
    void shuffle(It first, It last) noexcept {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const std::uint64_t j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::uint64_t state_[4]{};
};

// ---------------------------------------------------------------------------
// Checksums and byte order
// ---------------------------------------------------------------------------

class Fnv1a {
public:
    void update(const void* data, std::size_t size) noexcept {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            hash_ ^= p[i];
            hash_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) noexcept { update(s.data(), s.size()); }

    template <typename T>
    void update_value(const T& v) noexcept {
        update(&v, sizeof(T));
    }

    [[nodiscard]] std::uint64_t digest() const noexcept { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

[[nodiscard]] inline std::uint64_t fnv1a(std::string_view s) noexcept {
    Fnv1a h;
    h.update(s);
    return h.digest();
}

[[nodiscard]] inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

/// Appends the little-endian bytes of each float to `out`.
inline void append_le_f32(std::span<const float> values, std::string& out) {
    const std::size_t offset = out.size();
    out.resize(offset + values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(values[i]);
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap32(bits);
        }
        std::memcpy(out.data() + offset + i * 4, &bits, 4);
    }
}

inline std::vector<float> read_le_f32(std::string_view bytes) {
    if (bytes.size() % 4 != 0) {
        throw DataError("float blob size is not a multiple of 4");
    }
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, bytes.data() + i * 4, 4);
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap32(bits);
        }
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

}  // namespace fedloc
