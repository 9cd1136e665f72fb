#include "rare/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rare/binary_io.hpp"
#include "rare/bm25.hpp"
#include "rare/error.hpp"
#include "rare/rng.hpp"

namespace rare {

double SparseFeatures::sum() const noexcept
{
    double s = 0.0;
    for (auto const& [_, w] : entries) {
        s += w;
    }
    return s;
}

std::vector<double> SparseFeatures::dense(std::size_t dim) const
{
    std::vector<double> out(dim, 0.0);
    for (auto const& [bucket, w] : entries) {
        out.at(bucket) += w;
    }
    return out;
}

bool Embedding::is_zero() const noexcept
{
    return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

namespace {

void validate(EmbedderConfig const& config)
{
    if (config.hash_dim == 0 || config.embed_dim == 0) {
        raise(errc::invalid_argument, "hash_dim and embed_dim must be >= 1");
    }
    if (config.ngram_orders.empty()) {
        raise(errc::invalid_argument, "at least one n-gram order is required");
    }
    for (auto order : config.ngram_orders) {
        if (order == 0) {
            raise(errc::invalid_argument, "n-gram orders must be >= 1");
        }
    }
}

std::vector<std::uint32_t> normalized_orders(std::vector<std::uint32_t> orders)
{
    std::sort(orders.begin(), orders.end());
    orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
    return orders;
}

}  // namespace

EmbedderParams EmbedderParams::zeros(EmbedderConfig const& config)
{
    validate(config);
    EmbedderParams p;
    p.m_hash_dim = config.hash_dim;
    p.m_embed_dim = config.embed_dim;
    p.m_orders = normalized_orders(config.ngram_orders);
    p.m_hash_seed = config.seed;
    p.m_max_tokens = config.max_tokens;
    p.m_weights.assign(static_cast<std::size_t>(config.hash_dim) * config.embed_dim, 0.0);
    return p;
}

EmbedderParams EmbedderParams::random(EmbedderConfig const& config)
{
    auto p = zeros(config);
    double const bound = 1.0 / std::sqrt(static_cast<double>(config.hash_dim));
    rng gen(mix64(config.seed ^ 0x5241524549AULL));
    for (auto& w : p.m_weights) {
        w = gen.uniform(-bound, bound);
    }
    return p;
}

EmbedderConfig EmbedderParams::config() const
{
    return {m_hash_dim, m_embed_dim, m_orders, m_hash_seed, m_max_tokens};
}

std::span<double const> EmbedderParams::column(std::uint32_t bucket) const
{
    return {m_weights.data() + static_cast<std::size_t>(bucket) * m_embed_dim, m_embed_dim};
}

std::span<double> EmbedderParams::column(std::uint32_t bucket)
{
    return {m_weights.data() + static_cast<std::size_t>(bucket) * m_embed_dim, m_embed_dim};
}

bool EmbedderParams::all_finite() const noexcept
{
    return std::all_of(m_weights.begin(), m_weights.end(), [](double w) { return std::isfinite(w); });
}

std::uint32_t hash_ngram(std::span<std::string const> tokens, std::uint64_t seed,
                         std::uint32_t hash_dim)
{
    // Seeded FNV-1a over the token bytes, 0x1F between tokens, then a final mix.
    std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
    auto const feed = [&h](unsigned char byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            feed(0x1F);
        }
        for (char c : tokens[i]) {
            feed(static_cast<unsigned char>(c));
        }
    }
    h = mix64(h ^ tokens.size());
    return static_cast<std::uint32_t>(h % hash_dim);
}

SparseFeatures featurize(EmbedderParams const& params, std::string_view text)
{
    auto tokens = tokenize(text);
    if (auto limit = params.max_tokens(); limit && tokens.size() > *limit) {
        tokens.resize(*limit);
    }
    std::vector<std::uint32_t> buckets;
    for (auto order : params.ngram_orders()) {
        if (tokens.size() < order) {
            continue;
        }
        for (std::size_t start = 0; start + order <= tokens.size(); ++start) {
            buckets.push_back(hash_ngram(std::span<std::string const>(tokens).subspan(start, order),
                                         params.hash_seed(), params.hash_dim()));
        }
    }
    SparseFeatures features;
    if (buckets.empty()) {
        return features;
    }
    double const total = static_cast<double>(buckets.size());
    std::sort(buckets.begin(), buckets.end());
    for (std::size_t i = 0; i < buckets.size();) {
        std::size_t j = i;
        while (j < buckets.size() && buckets[j] == buckets[i]) {
            ++j;
        }
        features.entries.emplace_back(buckets[i], static_cast<double>(j - i) / total);
        i = j;
    }
    return features;
}

Encoding encode(EmbedderParams const& params, std::string_view text)
{
    Encoding enc;
    enc.features = featurize(params, text);
    std::size_t const dim = params.embed_dim();
    enc.projected.assign(dim, 0.0);
    for (auto const& [bucket, w] : enc.features.entries) {
        auto col = params.column(bucket);
        for (std::size_t r = 0; r < dim; ++r) {
            enc.projected[r] += w * col[r];
        }
    }
    double sq = 0.0;
    for (double v : enc.projected) {
        sq += v * v;
    }
    enc.norm = std::sqrt(sq);
    if (!std::isfinite(enc.norm)) {
        raise(errc::non_finite_params, "projection produced a non-finite value");
    }
    enc.embedding.values.assign(dim, 0.0);
    if (enc.norm > 0.0) {
        for (std::size_t r = 0; r < dim; ++r) {
            enc.embedding.values[r] = enc.projected[r] / enc.norm;
        }
    }
    return enc;
}

Embedding embed(EmbedderParams const& params, std::string_view text)
{
    return encode(params, text).embedding;
}

double cosine(Embedding const& a, Embedding const& b)
{
    if (a.dim() != b.dim()) {
        raise(errc::dim_mismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a.values[i] * b.values[i];
    }
    return std::clamp(dot, -1.0, 1.0);
}

// RARE1 layout (little-endian):
//   "RARE1" | u32 version | u32 V | u32 D | u32 n_orders | u32 order[n_orders]
//   | u64 hash_seed | u8 has_max_tokens | u32 max_tokens | u64 n_weights
//   | f64 weights[n_weights]   (column-major D x V, n_weights = V * D)
namespace {
constexpr std::string_view model_magic = "RARE1";
constexpr std::uint32_t model_version = 1;
}  // namespace

void EmbedderParams::save(std::filesystem::path const& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(errc::io, "cannot write " + path.string());
    }
    out.write(model_magic.data(), static_cast<std::streamsize>(model_magic.size()));
    binary::put_u32(out, model_version);
    binary::put_u32(out, m_hash_dim);
    binary::put_u32(out, m_embed_dim);
    binary::put_u32(out, static_cast<std::uint32_t>(m_orders.size()));
    for (auto o : m_orders) {
        binary::put_u32(out, o);
    }
    binary::put_u64(out, m_hash_seed);
    binary::put_u8(out, m_max_tokens ? 1 : 0);
    binary::put_u32(out, m_max_tokens.value_or(0));
    binary::put_u64(out, m_weights.size());
    for (double w : m_weights) {
        binary::put_f64(out, w);
    }
    if (!out) {
        raise(errc::io, "write failed: " + path.string());
    }
}

EmbedderParams EmbedderParams::load(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(errc::io, "cannot open " + path.string());
    }
    binary::reader r(in, path.string());
    r.expect_magic(model_magic);
    r.expect_version(model_version);
    EmbedderConfig config;
    config.hash_dim = r.u32();
    config.embed_dim = r.u32();
    std::uint32_t const n_orders = r.u32();
    if (n_orders > 64) {
        raise(errc::malformed_line, path.string() + ": implausible n-gram order count");
    }
    config.ngram_orders.clear();
    for (std::uint32_t i = 0; i < n_orders; ++i) {
        config.ngram_orders.push_back(r.u32());
    }
    config.seed = r.u64();
    bool const has_max = r.u8() != 0;
    std::uint32_t const max_tokens = r.u32();
    if (has_max) {
        config.max_tokens = max_tokens;
    }
    validate(config);
    std::uint64_t const n = r.u64();
    if (n != static_cast<std::uint64_t>(config.hash_dim) * config.embed_dim) {
        raise(errc::malformed_line, path.string() + ": weight count does not match V x D");
    }
    auto const pos = static_cast<std::uint64_t>(in.tellg());
    if (std::filesystem::file_size(path) < pos + n * sizeof(double)) {
        raise(errc::truncated, path.string());
    }
    auto params = zeros(config);
    for (auto& w : params.m_weights) {
        w = r.f64();
    }
    if (!params.all_finite()) {
        raise(errc::non_finite_params, path.string());
    }
    return params;
}

}  // namespace rare
