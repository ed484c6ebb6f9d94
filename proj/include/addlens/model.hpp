#pragma once

// The 1-layer decoder-only transformer: token + learned positional
// embeddings, multi-head causal self-attention, a ReLU MLP, both on a
// residual stream, and a linear unembedding.  Four activation sites are
// cached and two of them accept interventions, which is all the ablation
// experiments need.

#include "addlens/datagen.hpp"
#include "addlens/tensor.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace addlens {

struct ModelConfig {
    int n_digits = 5;
    int n_heads = 3;
    int d_model = 192;
    int d_mlp = 768;
    int vocab_size = kVocabSize;
    bool plus_prefix = false;
    bool layer_norm = true;
    uint64_t seed = 0;

    int d_head() const { return d_model / n_heads; }
    int n_ctx() const { return layout().length(); }
    TokenLayout layout() const { return TokenLayout(n_digits, plus_prefix); }

    void validate() const {
        if (n_digits < 2) throw std::invalid_argument("n_digits must be at least 2");
        if (n_heads < 2 || n_heads > 4) throw std::invalid_argument("n_heads must be 2, 3, or 4");
        if (d_model < n_heads || d_model % n_heads != 0)
            throw std::invalid_argument("d_model must be a positive multiple of n_heads");
        if (d_mlp < 1) throw std::invalid_argument("d_mlp must be positive");
        if (vocab_size < kVocabSize)
            throw std::invalid_argument("vocab_size must cover digits plus separators");
    }

    bool operator==(const ModelConfig&) const = default;
};

struct ActivationCache {
    int batch = 0;
    int seq_len = 0;
    int n_heads = 0;
    int d_head = 0;
    Tensor resid_post;              // [batch*seq_len x d_model]
    Tensor head_z;                  // [batch*seq_len x d_model], head h in its column block
    std::vector<Tensor> patterns;   // index batch*n_heads + head, each [seq_len x seq_len]
    Tensor mlp_post;                // [batch*seq_len x d_mlp]
    Tensor logits;                  // [batch*seq_len x vocab]

    const Tensor& pattern(int b, int h) const { return patterns.at(static_cast<size_t>(b) * n_heads + h); }
};

enum class Site { resid_post, head_out };
enum class AblationMode { zero, mean };

inline const char* site_name(Site s) { return s == Site::resid_post ? "resid_post" : "head_out"; }

// Per-position (and per-head) activation means gathered over a question set,
// the substitute values for mean-mode interventions.
struct MeanStats {
    int seq_len = 0;
    int d_model = 0;
    int d_head = 0;
    long question_count = 0;
    Tensor resid_post_mean;   // [seq_len x d_model]
    Tensor head_z_mean;       // [seq_len x d_model]
};

// What to overwrite during a forward pass.  resid_post acts on exactly
// `positions` (empty set = no-op).  head_out acts on the given heads, at
// `positions` when non-empty and at every position otherwise.
struct InterventionSpec {
    Site site = Site::resid_post;
    std::vector<int> positions;
    std::vector<int> heads;
    AblationMode mode = AblationMode::zero;
    const MeanStats* mean_source = nullptr;

    void validate(const ModelConfig& cfg, int seq_len) const {
        for (int p : positions)
            if (p < 0 || p >= seq_len)
                throw std::invalid_argument("intervention position " + std::to_string(p) +
                                            " outside sequence of length " + std::to_string(seq_len));
        if (site == Site::resid_post && !heads.empty())
            throw std::invalid_argument("head set is meaningless for the resid_post site");
        if (site == Site::head_out)
            for (int h : heads)
                if (h < 0 || h >= cfg.n_heads)
                    throw std::invalid_argument("head " + std::to_string(h) + " outside model with " +
                                                std::to_string(cfg.n_heads) + " heads");
        if (mode == AblationMode::mean) {
            if (!mean_source) throw std::invalid_argument("mean mode needs a mean_source");
            if (mean_source->seq_len != seq_len || mean_source->d_model != cfg.d_model)
                throw std::invalid_argument("mean_source shape does not match this model/sequence");
        }
    }
};

class TransformerModel {
public:
    explicit TransformerModel(ModelConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        init_params();
    }

    const ModelConfig& config() const { return cfg_; }
    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }
    long trained_steps() const { return trained_steps_; }
    void set_trained_steps(long s) { trained_steps_ = s; }

    void zero_grads() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    // Batched forward over same-length sequences.  Returns logits
    // [batch*seq_len x vocab]; row b*L+t predicts the token at position t+1
    // of sequence b.  Interventions require a non-recording tape because they
    // patch forward values in place.
    Tensor forward(Tape& tape, const std::vector<TokenSeq>& batch,
                   const InterventionSpec* intervention = nullptr,
                   ActivationCache* cache = nullptr) const {
        if (batch.empty()) throw std::invalid_argument("forward needs at least one sequence");
        const int L = static_cast<int>(batch.front().size());
        const int B = static_cast<int>(batch.size());
        if (L < 1 || L > cfg_.n_ctx())
            throw std::invalid_argument("sequence length " + std::to_string(L) + " outside 1.." +
                                        std::to_string(cfg_.n_ctx()));
        std::vector<int> tok_ids, pos_ids;
        tok_ids.reserve(static_cast<size_t>(B) * L);
        pos_ids.reserve(static_cast<size_t>(B) * L);
        for (const auto& seq : batch) {
            if (static_cast<int>(seq.size()) != L)
                throw std::invalid_argument("all sequences in a batch must share one length");
            for (int id : seq) {
                if (id < 0 || id >= cfg_.vocab_size)
                    throw std::invalid_argument("token id " + std::to_string(id) + " outside vocab");
                tok_ids.push_back(id);
            }
            for (int p = 0; p < L; ++p) pos_ids.push_back(p);
        }
        if (intervention) {
            if (tape.recording())
                throw std::logic_error("interventions patch values in place; use a non-recording tape");
            intervention->validate(cfg_, L);
        }

        const int R = B * L, H = cfg_.n_heads, dh = cfg_.d_head();
        Tensor resid = tape.add(tape.gather_rows(t("embed.W_E"), tok_ids),
                                tape.gather_rows(t("pos.W_pos"), pos_ids));

        Tensor x = cfg_.layer_norm ? tape.layer_norm(resid, t("ln1.w"), t("ln1.b")) : resid;
        Tensor q = tape.add_rowvec(tape.matmul(x, t("attn.W_Q")), t("attn.b_Q"));
        Tensor k = tape.add_rowvec(tape.matmul(x, t("attn.W_K")), t("attn.b_K"));
        Tensor v = tape.add_rowvec(tape.matmul(x, t("attn.W_V")), t("attn.b_V"));

        std::vector<BlockPlacement> blocks;
        blocks.reserve(static_cast<size_t>(B) * H);
        std::vector<Tensor> patterns;
        if (cache) patterns.reserve(static_cast<size_t>(B) * H);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h) {
                Tensor qs = tape.submatrix(q, b * L, (b + 1) * L, h * dh, (h + 1) * dh);
                Tensor ks = tape.submatrix(k, b * L, (b + 1) * L, h * dh, (h + 1) * dh);
                Tensor vs = tape.submatrix(v, b * L, (b + 1) * L, h * dh, (h + 1) * dh);
                Tensor pat = tape.softmax_causal(tape.scale(tape.matmul(qs, tape.transpose(ks)), scale));
                if (cache) patterns.push_back(pat);
                blocks.push_back({tape.matmul(pat, vs), b * L, h * dh});
            }
        Tensor z = tape.assemble_blocks(R, cfg_.d_model, blocks);
        if (intervention && intervention->site == Site::head_out)
            apply_head_out(z, *intervention, B, L, dh);

        Tensor attn_out = tape.add_rowvec(tape.matmul(z, t("attn.W_O")), t("attn.b_O"));
        Tensor resid_mid = tape.add(resid, attn_out);

        Tensor x2 = cfg_.layer_norm ? tape.layer_norm(resid_mid, t("ln2.w"), t("ln2.b")) : resid_mid;
        Tensor hidden = tape.relu(tape.add_rowvec(tape.matmul(x2, t("mlp.W_in")), t("mlp.b_in")));
        Tensor mlp_out = tape.add_rowvec(tape.matmul(hidden, t("mlp.W_out")), t("mlp.b_out"));
        Tensor resid_post = tape.add(resid_mid, mlp_out);
        if (intervention && intervention->site == Site::resid_post)
            apply_resid_post(resid_post, *intervention, B, L);

        Tensor logits = tape.matmul(resid_post, t("unembed.W_U"));

        if (cache) {
            cache->batch = B;
            cache->seq_len = L;
            cache->n_heads = H;
            cache->d_head = dh;
            cache->resid_post = resid_post;
            cache->head_z = z;
            cache->patterns = std::move(patterns);
            cache->mlp_post = hidden;
            cache->logits = logits;
        }
        return logits;
    }

    // Single-sequence convenience; no recording.
    Tensor forward_one(const TokenSeq& tokens, ActivationCache* cache = nullptr) const {
        Tape tape(false);
        return forward(tape, {tokens}, nullptr, cache);
    }

    // Per-head attention patterns for one sequence.
    std::vector<Tensor> attention_patterns(const TokenSeq& tokens) const {
        ActivationCache cache;
        forward_one(tokens, &cache);
        return cache.patterns;
    }

    // ----- checkpoints: JSON header plus named little-endian f64 blobs -----

    void save(const std::string& path) const {
        nlohmann::json header;
        header["format"] = "addlens-checkpoint";
        header["version"] = 1;
        header["config"] = {{"n_digits", cfg_.n_digits},   {"n_heads", cfg_.n_heads},
                            {"d_model", cfg_.d_model},     {"d_mlp", cfg_.d_mlp},
                            {"vocab_size", cfg_.vocab_size}, {"plus_prefix", cfg_.plus_prefix},
                            {"layer_norm", cfg_.layer_norm}, {"seed", cfg_.seed}};
        header["trained_steps"] = trained_steps_;
        for (const auto& p : params_)
            header["params"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
        const std::string head = header.dump();

        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write checkpoint " + path);
        os.write(kMagic, 8);
        const uint64_t len = head.size();
        os.write(reinterpret_cast<const char*>(&len), sizeof(len));
        os.write(head.data(), static_cast<std::streamsize>(head.size()));
        for (const auto& p : params_) {
            const auto& v = p.tensor.values();
            os.write(reinterpret_cast<const char*>(v.data()),
                     static_cast<std::streamsize>(v.size() * sizeof(double)));
        }
        if (!os) throw std::runtime_error("short write on checkpoint " + path);
    }

    static TransformerModel load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("cannot read checkpoint " + path);
        char magic[8];
        is.read(magic, 8);
        if (!is || std::memcmp(magic, kMagic, 8) != 0)
            throw std::runtime_error(path + " is not a checkpoint file");
        uint64_t len = 0;
        is.read(reinterpret_cast<char*>(&len), sizeof(len));
        std::string head(len, '\0');
        is.read(head.data(), static_cast<std::streamsize>(len));
        if (!is) throw std::runtime_error("truncated checkpoint header in " + path);
        const auto header = nlohmann::json::parse(head);

        ModelConfig cfg;
        const auto& jc = header.at("config");
        cfg.n_digits = jc.at("n_digits");
        cfg.n_heads = jc.at("n_heads");
        cfg.d_model = jc.at("d_model");
        cfg.d_mlp = jc.at("d_mlp");
        cfg.vocab_size = jc.at("vocab_size");
        cfg.plus_prefix = jc.at("plus_prefix");
        cfg.layer_norm = jc.at("layer_norm");
        cfg.seed = jc.at("seed");

        TransformerModel model(cfg);
        model.trained_steps_ = header.at("trained_steps");
        const auto& jp = header.at("params");
        if (jp.size() != model.params_.size())
            throw std::runtime_error("checkpoint parameter list does not match architecture");
        for (size_t i = 0; i < model.params_.size(); ++i) {
            auto& p = model.params_[i];
            if (jp[i].at("name") != p.name || jp[i].at("shape").get<Shape>() != p.tensor.shape())
                throw std::runtime_error("checkpoint parameter " + std::string(jp[i].at("name")) +
                                         " does not match expected " + p.name);
            auto& v = p.tensor.values();
            is.read(reinterpret_cast<char*>(v.data()),
                    static_cast<std::streamsize>(v.size() * sizeof(double)));
        }
        if (!is) throw std::runtime_error("truncated checkpoint blobs in " + path);
        return model;
    }

private:
    inline static const char kMagic[9] = "ADDLENS\x01";

    void init_params() {
        std::mt19937_64 rng(cfg_.seed);
        const int d = cfg_.d_model, V = cfg_.vocab_size, L = cfg_.n_ctx(), m = cfg_.d_mlp;
        // Width-scaled normal init: stddev 0.02 at fan-in d_model, shrinking
        // as 1/sqrt(fan_in) beyond it.
        auto sigma = [&](int fan_in) { return 0.02 * std::sqrt(static_cast<double>(d) / fan_in); };
        auto weight = [&](const std::string& name, int rows, int cols, int fan_in) {
            params_.push_back({name, Tensor::randn({rows, cols}, sigma(fan_in), rng, true)});
        };
        auto bias = [&](const std::string& name, int size, double fill = 0.0) {
            Tensor t = Tensor::zeros({size}, true);
            if (fill != 0.0)
                for (double& x : t.values()) x = fill;
            params_.push_back({name, t});
        };
        weight("embed.W_E", V, d, d);
        weight("pos.W_pos", L, d, d);
        if (cfg_.layer_norm) {
            bias("ln1.w", d, 1.0);
            bias("ln1.b", d);
        }
        weight("attn.W_Q", d, d, d);
        bias("attn.b_Q", d);
        weight("attn.W_K", d, d, d);
        bias("attn.b_K", d);
        weight("attn.W_V", d, d, d);
        bias("attn.b_V", d);
        weight("attn.W_O", d, d, d);
        bias("attn.b_O", d);
        if (cfg_.layer_norm) {
            bias("ln2.w", d, 1.0);
            bias("ln2.b", d);
        }
        weight("mlp.W_in", d, m, d);
        bias("mlp.b_in", m);
        weight("mlp.W_out", m, d, m);
        bias("mlp.b_out", d);
        weight("unembed.W_U", d, V, d);
        for (const auto& p : params_) index_[p.name] = p.tensor;
    }

    Tensor t(const std::string& name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) throw std::logic_error("no parameter named " + name);
        return it->second;
    }

    void apply_resid_post(Tensor& resid, const InterventionSpec& iv, int B, int L) const {
        const int d = cfg_.d_model;
        auto& v = resid.values();
        for (int b = 0; b < B; ++b)
            for (int p : iv.positions) {
                double* row = v.data() + (static_cast<size_t>(b) * L + p) * d;
                if (iv.mode == AblationMode::zero) {
                    std::fill(row, row + d, 0.0);
                } else {
                    const double* mean =
                        iv.mean_source->resid_post_mean.values().data() + static_cast<size_t>(p) * d;
                    std::copy(mean, mean + d, row);
                }
            }
    }

    void apply_head_out(Tensor& z, const InterventionSpec& iv, int B, int L, int dh) const {
        const int d = cfg_.d_model;
        std::vector<int> positions = iv.positions;
        if (positions.empty())
            for (int p = 0; p < L; ++p) positions.push_back(p);
        auto& v = z.values();
        for (int b = 0; b < B; ++b)
            for (int p : positions)
                for (int h : iv.heads) {
                    double* cell = v.data() + (static_cast<size_t>(b) * L + p) * d + h * dh;
                    if (iv.mode == AblationMode::zero) {
                        std::fill(cell, cell + dh, 0.0);
                    } else {
                        const double* mean = iv.mean_source->head_z_mean.values().data() +
                                             static_cast<size_t>(p) * d + h * dh;
                        std::copy(mean, mean + dh, cell);
                    }
                }
    }

    ModelConfig cfg_;
    std::vector<NamedParam> params_;
    std::map<std::string, Tensor> index_;
    long trained_steps_ = 0;
};

// Mean activations over a question set, all sequences the same length.
inline MeanStats collect_mean_activations(const TransformerModel& model,
                                          const std::vector<TokenSeq>& seqs, int batch_size = 64) {
    if (seqs.empty()) throw std::invalid_argument("collect_mean_activations needs questions");
    const int L = static_cast<int>(seqs.front().size());
    for (const auto& s : seqs)
        if (static_cast<int>(s.size()) != L)
            throw std::invalid_argument("mixed sequence lengths in mean collection");
    const int d = model.config().d_model;
    MeanStats stats;
    stats.seq_len = L;
    stats.d_model = d;
    stats.d_head = model.config().d_head();
    stats.question_count = static_cast<long>(seqs.size());
    stats.resid_post_mean = Tensor::zeros({L, d});
    stats.head_z_mean = Tensor::zeros({L, d});
    auto& rp = stats.resid_post_mean.values();
    auto& hz = stats.head_z_mean.values();
    for (size_t start = 0; start < seqs.size(); start += batch_size) {
        const size_t end = std::min(seqs.size(), start + batch_size);
        std::vector<TokenSeq> chunk(seqs.begin() + start, seqs.begin() + end);
        Tape tape(false);
        ActivationCache cache;
        model.forward(tape, chunk, nullptr, &cache);
        const auto& crp = cache.resid_post.values();
        const auto& chz = cache.head_z.values();
        const size_t rows = chunk.size() * static_cast<size_t>(L);
        for (size_t r = 0; r < rows; ++r) {
            const size_t p = r % L;
            for (int c = 0; c < d; ++c) {
                rp[p * d + c] += crp[r * d + c];
                hz[p * d + c] += chz[r * d + c];
            }
        }
    }
    for (auto& x : rp) x /= static_cast<double>(seqs.size());
    for (auto& x : hz) x /= static_cast<double>(seqs.size());
    return stats;
}

} // namespace addlens
