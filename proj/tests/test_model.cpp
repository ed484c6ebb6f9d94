#include <catch2/catch_amalgamated.hpp>

#include "addlens/model.hpp"

#include <cstdio>
#include <filesystem>
#include <random>

using namespace addlens;

namespace {

ModelConfig tiny_config(bool layer_norm = true) {
    ModelConfig cfg;
    cfg.n_digits = 2;
    cfg.n_heads = 2;
    cfg.d_model = 8;
    cfg.d_mlp = 16;
    cfg.layer_norm = layer_norm;
    cfg.seed = 5;
    return cfg;
}

double answer_loss(const TransformerModel& model, Tape& tape, const std::vector<TokenSeq>& batch,
                   Tensor* out = nullptr) {
    const TokenLayout layout = model.config().layout();
    Tensor logits = model.forward(tape, batch);
    std::vector<int> rows, targets;
    for (size_t b = 0; b < batch.size(); ++b)
        for (int r : layout.answer_rows()) {
            rows.push_back(static_cast<int>(b) * layout.length() + r);
            targets.push_back(batch[b][r + 1]);
        }
    Tensor loss = tape.mean_all(tape.cross_entropy_rows(tape.gather_rows(logits, rows), targets));
    if (out) *out = loss;
    return loss.item();
}

} // namespace

TEST_CASE("forward shapes for the paper-scale config") {
    TransformerModel model({});
    const TokenSeq tokens = tokenize(Question::parse("54321+77779"));
    REQUIRE(tokens.size() == 18);
    ActivationCache cache;
    Tensor logits = model.forward_one(tokens, &cache);
    CHECK(logits.shape() == Shape{18, 12});
    REQUIRE(cache.patterns.size() == 3);
    for (const auto& p : cache.patterns) CHECK(p.shape() == Shape{18, 18});
    CHECK(cache.resid_post.shape() == Shape{18, 192});
    CHECK(cache.head_z.shape() == Shape{18, 192});
    CHECK(cache.mlp_post.shape() == Shape{18, 768});
}

TEST_CASE("causality: future tokens cannot reach earlier logits") {
    TransformerModel model({});
    TokenSeq tokens = tokenize(Question::parse("54321+77779"));
    const Tensor base = model.forward_one(tokens);
    TokenSeq perturbed = tokens;
    perturbed[15] = (perturbed[15] + 3) % 10;
    const Tensor changed = model.forward_one(perturbed);
    for (int t = 0; t < 15; ++t)
        for (int v = 0; v < 12; ++v) CHECK(base.at(t, v) == changed.at(t, v));
    bool any_diff = false;
    for (int v = 0; v < 12; ++v) any_diff = any_diff || base.at(15, v) != changed.at(15, v);
    CHECK(any_diff);
}

TEST_CASE("attention patterns are causal softmax rows") {
    TransformerModel model({});
    const auto pats = model.attention_patterns(tokenize(Question::parse("12345+67890")));
    REQUIRE(pats.size() == 3);
    for (const auto& p : pats)
        for (int q = 0; q < 18; ++q) {
            double sum = 0.0, mx = 0.0, mn = 1.0;
            for (int k = 0; k < 18; ++k) {
                if (k > q) {
                    CHECK(p.at(q, k) == 0.0);
                    continue;
                }
                sum += p.at(q, k);
                mx = std::max(mx, p.at(q, k));
                mn = std::min(mn, p.at(q, k));
            }
            CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
            // Untrained weights are near zero, so rows are near uniform.
            CHECK(mx - mn < 0.2);
        }
}

TEST_CASE("whole-model gradients match finite differences") {
    ModelConfig cfg = tiny_config();
    SECTION("with layer norm") {}
    SECTION("without layer norm") { cfg.layer_norm = false; }

    TransformerModel model(cfg);
    QuestionGenerator gen({2, 11, 0.3, false});
    std::vector<TokenSeq> batch;
    for (const auto& q : gen.batch(3)) batch.push_back(tokenize(q));

    Tape tape;
    Tensor loss;
    answer_loss(model, tape, batch, &loss);
    tape.backward(loss);

    std::mt19937_64 pick(99);
    const double h = 1e-5;
    double worst = 0.0;
    for (auto& p : model.params()) {
        const auto& g = p.tensor.grad();
        // Probe a handful of coordinates per parameter.
        for (int probe = 0; probe < 6; ++probe) {
            const size_t i = pick() % p.tensor.values().size();
            const double saved = p.tensor.values()[i];
            Tape t1(false), t2(false);
            p.tensor.values()[i] = saved + h;
            const double hi = answer_loss(model, t1, batch);
            p.tensor.values()[i] = saved - h;
            const double lo = answer_loss(model, t2, batch);
            p.tensor.values()[i] = saved;
            const double numeric = (hi - lo) / (2 * h);
            const double rel =
                std::abs(g[i] - numeric) / std::max(1e-3, std::abs(g[i]) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("empty zero intervention is a bit-exact no-op") {
    TransformerModel model({});
    std::vector<TokenSeq> batch = {tokenize(Question::parse("54321+77779"))};
    Tape t1(false), t2(false), t3(false);
    const Tensor plain = model.forward(t1, batch);

    InterventionSpec none;
    none.site = Site::resid_post;
    const Tensor ablated = model.forward(t2, batch, &none);
    CHECK(plain.values() == ablated.values());

    InterventionSpec no_heads;
    no_heads.site = Site::head_out;
    const Tensor ablated2 = model.forward(t3, batch, &no_heads);
    CHECK(plain.values() == ablated2.values());
}

TEST_CASE("zero-ablating resid_post rows zeroes exactly those logit rows") {
    TransformerModel model({});
    std::vector<TokenSeq> batch = {tokenize(Question::parse("54321+77779")),
                                   tokenize(Question::parse("11111+22222"))};
    Tape t1(false), t2(false);
    const Tensor plain = model.forward(t1, batch);
    InterventionSpec iv;
    iv.site = Site::resid_post;
    iv.positions = {13, 16};
    const Tensor ablated = model.forward(t2, batch, &iv);
    for (int b = 0; b < 2; ++b)
        for (int t = 0; t < 18; ++t)
            for (int v = 0; v < 12; ++v) {
                const double got = ablated.at(b * 18 + t, v);
                if (t == 13 || t == 16) CHECK(got == 0.0);
                else CHECK(got == plain.at(b * 18 + t, v));
            }
}

TEST_CASE("intervention validation") {
    TransformerModel model({});
    std::vector<TokenSeq> batch = {tokenize(Question::parse("54321+77779"))};

    Tape rec(true);
    InterventionSpec iv;
    iv.positions = {3};
    CHECK_THROWS_AS(model.forward(rec, batch, &iv), std::logic_error);

    Tape t(false);
    InterventionSpec bad_heads;
    bad_heads.site = Site::resid_post;
    bad_heads.heads = {0};
    CHECK_THROWS_WITH(model.forward(t, batch, &bad_heads),
                      Catch::Matchers::ContainsSubstring("resid_post"));

    InterventionSpec bad_pos;
    bad_pos.positions = {18};
    CHECK_THROWS_AS(model.forward(t, batch, &bad_pos), std::invalid_argument);

    InterventionSpec no_mean;
    no_mean.mode = AblationMode::mean;
    no_mean.positions = {1};
    CHECK_THROWS_WITH(model.forward(t, batch, &no_mean),
                      Catch::Matchers::ContainsSubstring("mean_source"));

    InterventionSpec bad_head_id;
    bad_head_id.site = Site::head_out;
    bad_head_id.heads = {3};
    CHECK_THROWS_AS(model.forward(t, batch, &bad_head_id), std::invalid_argument);
}

TEST_CASE("mean statistics") {
    TransformerModel model({});
    QuestionGenerator gen({5, 23, 0.2, false});
    std::vector<TokenSeq> seqs;
    for (const auto& q : gen.batch(8)) seqs.push_back(tokenize(q));

    SECTION("single question means equal its own activations") {
        ActivationCache cache;
        model.forward_one(seqs[0], &cache);
        const auto stats = collect_mean_activations(model, {seqs[0]});
        CHECK(stats.resid_post_mean.values() == cache.resid_post.values());
        CHECK(stats.head_z_mean.values() == cache.head_z.values());
    }

    SECTION("means are permutation invariant") {
        auto shuffled = seqs;
        std::reverse(shuffled.begin(), shuffled.end());
        const auto a = collect_mean_activations(model, seqs);
        const auto b = collect_mean_activations(model, shuffled);
        for (size_t i = 0; i < a.resid_post_mean.values().size(); ++i)
            CHECK_THAT(a.resid_post_mean.values()[i],
                       Catch::Matchers::WithinAbs(b.resid_post_mean.values()[i], 1e-9));
    }

    SECTION("mean mode substitutes the stored rows") {
        const auto stats = collect_mean_activations(model, seqs);
        InterventionSpec iv;
        iv.site = Site::resid_post;
        iv.mode = AblationMode::mean;
        iv.mean_source = &stats;
        for (int p = 0; p < 18; ++p) iv.positions.push_back(p);
        Tape t(false);
        ActivationCache cache;
        model.forward(t, {seqs[0]}, &iv, &cache);
        CHECK(cache.resid_post.values() == stats.resid_post_mean.values());
    }

    SECTION("mixed lengths are rejected") {
        std::vector<TokenSeq> mixed = {seqs[0], TokenSeq(seqs[0].begin(), seqs[0].end() - 1)};
        CHECK_THROWS_AS(collect_mean_activations(model, mixed), std::invalid_argument);
    }
}

TEST_CASE("cache fidelity: logits are exactly unembedded resid_post") {
    TransformerModel model({});
    std::vector<TokenSeq> batch = {tokenize(Question::parse("90817+12345"))};
    Tape tape(false);
    ActivationCache cache;
    const Tensor logits = model.forward(tape, batch, nullptr, &cache);
    Tensor wu;
    for (const auto& p : model.params())
        if (p.name == "unembed.W_U") wu = p.tensor;
    const Tensor redone = tape.matmul(cache.resid_post, wu);
    CHECK(redone.values() == logits.values());
}

TEST_CASE("seeded initialization is reproducible") {
    ModelConfig cfg;
    cfg.seed = 31;
    TransformerModel m1(cfg), m2(cfg);
    for (size_t i = 0; i < m1.params().size(); ++i)
        CHECK(m1.params()[i].tensor.values() == m2.params()[i].tensor.values());
    cfg.seed = 32;
    TransformerModel m3(cfg);
    CHECK(m1.params()[0].tensor.values() != m3.params()[0].tensor.values());
}

TEST_CASE("checkpoint round-trip is bit-identical") {
    const std::string path = (std::filesystem::temp_directory_path() / "addlens_ckpt_test.bin").string();
    ModelConfig cfg = tiny_config();
    TransformerModel model(cfg);
    model.set_trained_steps(123);
    // Make the weights distinctive.
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> dist(-1, 1);
    for (auto& p : model.params())
        for (double& v : p.tensor.values()) v = dist(rng);
    model.save(path);

    const TransformerModel loaded = TransformerModel::load(path);
    CHECK(loaded.config() == cfg);
    CHECK(loaded.trained_steps() == 123);
    REQUIRE(loaded.params().size() == model.params().size());
    for (size_t i = 0; i < model.params().size(); ++i) {
        CHECK(loaded.params()[i].name == model.params()[i].name);
        CHECK(loaded.params()[i].tensor.values() == model.params()[i].tensor.values());
    }

    const TokenSeq tokens = tokenize(Question::parse("12+34"));
    CHECK(model.forward_one(tokens).values() == loaded.forward_one(tokens).values());
    std::filesystem::remove(path);

    CHECK_THROWS_AS(TransformerModel::load("/nonexistent/checkpoint.bin"), std::runtime_error);
}

TEST_CASE("config validation") {
    ModelConfig cfg;
    cfg.n_heads = 5;
    CHECK_THROWS_AS(TransformerModel(cfg), std::invalid_argument);
    cfg = {};
    cfg.d_model = 190;   // not divisible by 3
    CHECK_THROWS_AS(TransformerModel(cfg), std::invalid_argument);
    cfg = {};
    cfg.n_digits = 1;
    CHECK_THROWS_AS(TransformerModel(cfg), std::invalid_argument);

    TransformerModel model({});
    std::vector<TokenSeq> overlong = {TokenSeq(19, 0)};
    CHECK_THROWS_AS(model.forward_one(overlong[0]), std::invalid_argument);
    std::vector<TokenSeq> bad_id = {TokenSeq(18, 12)};
    CHECK_THROWS_AS(model.forward_one(bad_id[0]), std::invalid_argument);
}
