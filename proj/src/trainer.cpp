#include "rare/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "rare/error.hpp"
#include "rare/parallel.hpp"

namespace rare {

std::string_view to_string(Selection s) noexcept
{
    return s == Selection::retrieved ? "retrieved" : "random";
}

Selection parse_selection(std::string_view name)
{
    if (name == "retrieved") {
        return Selection::retrieved;
    }
    if (name == "random") {
        return Selection::random;
    }
    raise(errc::invalid_argument, "unknown selection policy '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// ColumnGradient

std::span<double> ColumnGradient::column(std::uint32_t bucket)
{
    auto [it, _] = m_columns.try_emplace(bucket, m_embed_dim, 0.0);
    return it->second;
}

double ColumnGradient::at(std::uint32_t row, std::uint32_t bucket) const
{
    auto it = m_columns.find(bucket);
    return it == m_columns.end() ? 0.0 : it->second[row];
}

bool ColumnGradient::all_finite() const noexcept
{
    return std::all_of(m_columns.begin(), m_columns.end(), [](auto const& kv) {
        return std::all_of(kv.second.begin(), kv.second.end(), [](double v) { return std::isfinite(v); });
    });
}

bool ColumnGradient::all_zero() const noexcept
{
    return std::all_of(m_columns.begin(), m_columns.end(), [](auto const& kv) {
        return std::all_of(kv.second.begin(), kv.second.end(), [](double v) { return v == 0.0; });
    });
}

void ColumnGradient::apply(EmbedderParams& params, double learning_rate) const
{
    if (params.embed_dim() != m_embed_dim || params.hash_dim() != m_hash_dim) {
        raise(errc::dim_mismatch, "gradient shape does not match parameters");
    }
    for (auto const& [bucket, g] : m_columns) {
        auto col = params.column(bucket);
        for (std::size_t r = 0; r < g.size(); ++r) {
            col[r] -= learning_rate * g[r];
        }
    }
}

// ---------------------------------------------------------------------------
// Loss

namespace {

double dot(std::span<double const> a, std::span<double const> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

void check_temperature(double t)
{
    if (!(t > 0.0)) {
        raise(errc::non_positive_temperature, std::to_string(t));
    }
}

/// Softmax cross-entropy with the positive at index 0. Fills `probs`.
double softmax_nll(std::span<double const> logits, std::vector<double>& probs)
{
    double const m = *std::max_element(logits.begin(), logits.end());
    probs.resize(logits.size());
    double z = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        probs[c] = std::exp(logits[c] - m);
        z += probs[c];
    }
    for (auto& p : probs) {
        p /= z;
    }
    return -(logits[0] - m) + std::log(z);
}

}  // namespace

double contrastive_loss(Embedding const& query, Embedding const& positive,
                        std::optional<Embedding> const& hard_negative,
                        std::span<Embedding const> in_batch, double temperature)
{
    check_temperature(temperature);
    std::vector<double> logits;
    logits.push_back(cosine(query, positive) / temperature);
    if (hard_negative) {
        logits.push_back(cosine(query, *hard_negative) / temperature);
    }
    for (auto const& n : in_batch) {
        logits.push_back(cosine(query, n) / temperature);
    }
    std::vector<double> probs;
    return softmax_nll(logits, probs);
}

std::vector<std::string const*> candidate_texts(std::span<BatchItem const> batch, std::size_t i,
                                                LossOptions const& options)
{
    auto const& self = batch[i];
    std::vector<std::string const*> out{&self.positive};
    auto const seen = [&](std::string const& text) {
        return std::any_of(out.begin(), out.end(), [&](auto* p) { return *p == text; });
    };
    auto const add = [&](std::string const& text) {
        if (text.empty()) {
            return;
        }
        if (options.distinct_in_batch && seen(text)) {
            return;
        }
        out.push_back(&text);
    };
    if (options.use_hard_negative && !self.negative.empty()) {
        out.push_back(&self.negative);
    }
    for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j == i) {
            continue;
        }
        add(batch[j].positive);
        if (options.include_other_hard_negatives) {
            add(batch[j].negative);
        }
    }
    return out;
}

BatchLoss batch_grads(std::span<BatchItem const> batch, EmbedderParams const& params,
                      LossOptions const& options)
{
    check_temperature(options.temperature);
    if (batch.empty()) {
        raise(errc::invalid_argument, "empty batch");
    }
    double const tau = options.temperature;
    double const inv_b = 1.0 / static_cast<double>(batch.size());

    // Encode every distinct text once.
    std::unordered_map<std::string_view, std::size_t> slot_of;
    std::vector<std::string_view> texts;
    auto const slot = [&](std::string const& t) {
        auto [it, inserted] = slot_of.try_emplace(t, texts.size());
        if (inserted) {
            texts.push_back(t);
        }
        return it->second;
    };
    std::vector<std::vector<std::size_t>> candidate_slots(batch.size());
    std::vector<std::size_t> query_slot(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        query_slot[i] = slot(batch[i].query);
        for (auto const* text : candidate_texts(batch, i, options)) {
            candidate_slots[i].push_back(slot(*text));
        }
    }
    std::vector<Encoding> enc(texts.size());
    parallel_for(texts.size(), options.threads, [&](std::size_t s) { enc[s] = encode(params, texts[s]); });

    std::size_t const dim = params.embed_dim();
    std::vector<std::vector<double>> grad_e(texts.size(), std::vector<double>(dim, 0.0));

    double total = 0.0;
    std::vector<double> logits;
    std::vector<double> probs;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto const& eq = enc[query_slot[i]].embedding.values;
        auto const& cands = candidate_slots[i];
        logits.clear();
        for (auto c : cands) {
            logits.push_back(dot(eq, enc[c].embedding.values) / tau);
        }
        total += softmax_nll(logits, probs);
        // d loss_i / d s_c = (p_c - [c is positive]) / tau, scaled by 1/B for the mean.
        auto& gq = grad_e[query_slot[i]];
        for (std::size_t c = 0; c < cands.size(); ++c) {
            double const g = (probs[c] - (c == 0 ? 1.0 : 0.0)) / tau * inv_b;
            if (g == 0.0) {
                continue;
            }
            auto const& ec = enc[cands[c]].embedding.values;
            auto& gc = grad_e[cands[c]];
            for (std::size_t r = 0; r < dim; ++r) {
                gq[r] += g * ec[r];
                gc[r] += g * eq[r];
            }
        }
    }
    double const value = total * inv_b;
    if (!std::isfinite(value)) {
        raise(errc::non_finite_loss, "batch loss is not finite");
    }

    // Back through normalization e = u/|u| and projection u = W f:
    // dL/du = (g - e (e.g)) / |u|, dL/dW[:, j] += f_j * dL/du.
    BatchLoss out{value, ColumnGradient(params.embed_dim(), params.hash_dim())};
    std::vector<double> gu(dim);
    for (std::size_t s = 0; s < texts.size(); ++s) {
        auto const& e = enc[s];
        if (e.norm == 0.0) {
            continue;
        }
        auto const& g = grad_e[s];
        double const eg = dot(e.embedding.values, g);
        for (std::size_t r = 0; r < dim; ++r) {
            gu[r] = (g[r] - e.embedding.values[r] * eg) / e.norm;
        }
        for (auto const& [bucket, f] : e.features.entries) {
            auto col = out.grads.column(bucket);
            for (std::size_t r = 0; r < dim; ++r) {
                col[r] += f * gu[r];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Example selection

std::vector<ICExample> select_examples(ExamplePool const& pool, Bm25Index const& bm25,
                                       std::string_view query, std::size_t k, Selection policy,
                                       rng& gen, std::optional<std::size_t> exclude)
{
    if (k == 0) {
        return {};
    }
    if (pool.examples.empty()) {
        raise(errc::empty_pool, "task '" + pool.task_id + "'");
    }
    std::size_t const available =
        pool.examples.size() - (exclude && *exclude < pool.examples.size() ? 1 : 0);
    if (available < k) {
        raise(errc::pool_too_small, "task '" + pool.task_id + "': " + std::to_string(available)
                                        + " candidates for k=" + std::to_string(k));
    }
    std::vector<ICExample> out;
    out.reserve(k);
    if (policy == Selection::retrieved) {
        if (bm25.size() != pool.examples.size()) {
            raise(errc::dim_mismatch, "BM25 index does not cover the pool");
        }
        for (auto const& hit : bm25.top_k(query, k, exclude)) {
            out.push_back(pool.examples[hit.ordinal]);
        }
        return out;
    }
    std::vector<std::size_t> idx;
    idx.reserve(pool.examples.size());
    for (std::size_t i = 0; i < pool.examples.size(); ++i) {
        if (!(exclude && *exclude == i)) {
            idx.push_back(i);
        }
    }
    // Partial Fisher-Yates: the first k slots are a uniform sample.
    for (std::size_t j = 0; j < k; ++j) {
        std::size_t const pick = j + gen.below(idx.size() - j);
        std::swap(idx[j], idx[pick]);
        out.push_back(pool.examples[idx[j]]);
    }
    return out;
}

IndexedPool IndexedPool::build(ExamplePool pool, Bm25Params params)
{
    std::vector<std::string> queries;
    queries.reserve(pool.examples.size());
    for (auto const& ex : pool.examples) {
        queries.push_back(ex.query);
    }
    IndexedPool ip{std::move(pool), Bm25Index::build(queries, params), {}};
    for (std::size_t i = 0; i < queries.size(); ++i) {
        ip.ordinal_of_query.try_emplace(queries[i], i);
    }
    return ip;
}

std::optional<std::size_t> IndexedPool::find(std::string const& query) const
{
    auto it = ordinal_of_query.find(query);
    if (it == ordinal_of_query.end()) {
        return std::nullopt;
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// Training

namespace {

bool needs_examples(TrainConfig const& config)
{
    return config.k > 0 && config.ic_mixture > 0.0 && config.format.kind != FormatKind::inst;
}

std::map<std::string, IndexedPool> index_pools(std::span<TrainExample const> train_set,
                                               std::map<std::string, ExamplePool> const& pools,
                                               TrainConfig const& config)
{
    std::map<std::string, IndexedPool> out;
    if (!needs_examples(config)) {
        return out;
    }
    for (auto const& ex : train_set) {
        if (out.contains(ex.task_id)) {
            continue;
        }
        auto it = pools.find(ex.task_id);
        if (it == pools.end() || it->second.examples.empty()) {
            raise(errc::empty_pool, "no example pool for task '" + ex.task_id + "'");
        }
        out.emplace(ex.task_id, IndexedPool::build(it->second, config.bm25));
    }
    return out;
}

void validate(TrainConfig const& config)
{
    check_temperature(config.temperature);
    if (!(config.ic_mixture >= 0.0 && config.ic_mixture <= 1.0)) {
        raise(errc::invalid_argument, "ic_mixture must be in [0, 1]");
    }
    if (config.batch_size == 0) {
        raise(errc::invalid_argument, "batch_size must be >= 1");
    }
    if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
        raise(errc::invalid_argument, "learning_rate must be finite and >= 0");
    }
}

}  // namespace

std::vector<BatchItem> render_training_items(std::span<TrainExample const> train,
                                             std::span<std::size_t const> order,
                                             std::map<std::string, IndexedPool> const& pools,
                                             TrainConfig const& config, rng& gen,
                                             TrainHooks const& hooks)
{
    PromptFormat plain = config.format;
    plain.kind = FormatKind::inst;
    std::vector<BatchItem> items;
    items.reserve(order.size());
    for (auto idx : order) {
        auto const& ex = train[idx];
        // Drawn for every example so the stream does not depend on the outcome.
        bool const with_examples = gen.bernoulli(config.ic_mixture) && needs_examples(config);
        AugmentedQuery aq;
        if (with_examples) {
            auto const& ip = pools.at(ex.task_id);
            auto examples = select_examples(ip.pool, ip.bm25, ex.query, config.k, config.selection,
                                            gen, ip.find(ex.query));
            aq = render_inst_ic(ex.instruction, examples, ex.query, config.format);
        } else {
            aq = render_inst(ex.instruction, ex.query, plain);
        }
        if (hooks.on_render) {
            hooks.on_render(aq);
        }
        items.push_back({std::move(aq.text), ex.positive, config.use_hard_negative ? ex.negative : ""});
    }
    return items;
}

TrainResult train(std::span<TrainExample const> train_set, std::map<std::string, ExamplePool> const& pools,
                  TrainConfig const& config, EmbedderParams initial, TrainHooks const& hooks)
{
    validate(config);
    if (train_set.empty()) {
        raise(errc::empty_collection, "training set is empty");
    }
    if (!initial.all_finite()) {
        raise(errc::non_finite_params, "initial parameters");
    }
    auto const indexed = index_pools(train_set, pools, config);
    auto const options = config.loss_options();

    TrainResult result{std::move(initial), {}};
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng gen(mix64(config.seed ^ (0x9E37ULL * epoch)));
        std::iota(order.begin(), order.end(), std::size_t{0});
        gen.shuffle(order);
        auto const items = render_training_items(train_set, order, indexed, config, gen, hooks);

        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < items.size(); start += config.batch_size) {
            std::size_t const len = std::min(config.batch_size, items.size() - start);
            auto const batch = std::span<BatchItem const>(items).subspan(start, len);
            auto const loss = batch_grads(batch, result.params, options);
            if (!loss.grads.all_finite()) {
                raise(errc::non_finite_loss, "non-finite gradient in epoch " + std::to_string(epoch));
            }
            loss.grads.apply(result.params, config.learning_rate);
            loss_sum += loss.value;
            ++n_batches;
        }
        result.log.push_back({epoch, loss_sum / static_cast<double>(n_batches)});
    }
    if (!result.params.all_finite()) {
        raise(errc::non_finite_params, "parameters diverged during training");
    }
    return result;
}

double dataset_loss(std::span<TrainExample const> train_set, std::map<std::string, ExamplePool> const& pools,
                    TrainConfig const& config, EmbedderParams const& params, std::uint64_t render_seed)
{
    validate(config);
    if (train_set.empty()) {
        raise(errc::empty_collection, "training set is empty");
    }
    auto const indexed = index_pools(train_set, pools, config);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng gen(render_seed);
    auto const items = render_training_items(train_set, order, indexed, config, gen);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t start = 0; start < items.size(); start += config.batch_size) {
        std::size_t const len = std::min(config.batch_size, items.size() - start);
        sum += batch_grads(std::span<BatchItem const>(items).subspan(start, len), params,
                           config.loss_options())
                   .value;
        ++n;
    }
    return sum / static_cast<double>(n);
}

}  // namespace rare
