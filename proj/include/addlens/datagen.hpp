#pragma once

// Tokenization, question sampling with carry-chain enrichment, the curated
// evaluation suite, and question-list file IO.
//
// Token layout for n digits: D_{n-1}..D_0 '+' D'_{n-1}..D'_0 '=' A_n..A_0,
// which is 3n+3 tokens.  In plus-prefix mode a literal '+' is emitted between
// '=' and A_n, giving 3n+4.  Vocabulary: digits map to ids 0-9, '+' to 10,
// '=' to 11.

#include "addlens/framework.hpp"
#include "addlens/question.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace addlens {

inline constexpr int kPlusToken = 10;
inline constexpr int kEqualsToken = 11;
inline constexpr int kVocabSize = 12;

using TokenSeq = std::vector<int>;

// Position arithmetic for one layout.  Digit indices k count from the units
// column (k = 0) upward, matching Question storage.
struct TokenLayout {
    int n = 0;
    bool plus_prefix = false;

    TokenLayout() = default;
    TokenLayout(int n_digits, bool prefix) : n(n_digits), plus_prefix(prefix) {
        if (n < 1) throw std::invalid_argument("layout needs at least 1 digit");
    }

    int length() const { return 3 * n + 3 + (plus_prefix ? 1 : 0); }
    int plus_pos() const { return n; }
    int eq_pos() const { return 2 * n + 1; }
    int answer_len() const { return n + 1 + (plus_prefix ? 1 : 0); }
    int pos_of_d(int k) const { return n - 1 - k; }
    int pos_of_dp(int k) const { return 2 * n - k; }
    int pos_of_answer_digit(int k) const { return eq_pos() + (plus_prefix ? 1 : 0) + (n + 1 - k); }

    // Logit rows that predict the token one position later; these are the
    // only supervised positions.
    int first_answer_row() const { return eq_pos(); }
    int last_answer_row() const { return length() - 2; }
    std::vector<int> answer_rows() const {
        std::vector<int> rows;
        for (int r = first_answer_row(); r <= last_answer_row(); ++r) rows.push_back(r);
        return rows;
    }
};

inline char token_char(int id) {
    if (id >= 0 && id <= 9) return static_cast<char>('0' + id);
    if (id == kPlusToken) return '+';
    if (id == kEqualsToken) return '=';
    throw std::invalid_argument("token id " + std::to_string(id) + " outside vocabulary");
}

inline TokenSeq tokenize(const Question& q, bool plus_prefix = false) {
    const TokenLayout layout(q.n(), plus_prefix);
    TokenSeq t;
    t.reserve(layout.length());
    for (int i = q.n() - 1; i >= 0; --i) t.push_back(q.a[i]);
    t.push_back(kPlusToken);
    for (int i = q.n() - 1; i >= 0; --i) t.push_back(q.b[i]);
    t.push_back(kEqualsToken);
    if (plus_prefix) t.push_back(kPlusToken);
    const auto answer = true_sum(q);
    for (int i = q.n(); i >= 0; --i) t.push_back(answer[i]);
    if (static_cast<int>(t.size()) != layout.length())
        throw std::logic_error("tokenize produced wrong length");
    return t;
}

// Recovers the question and checks the separator and answer segments are the
// ones tokenize would have written.
inline Question detokenize(const TokenSeq& tokens, int n, bool plus_prefix = false) {
    const TokenLayout layout(n, plus_prefix);
    if (static_cast<int>(tokens.size()) != layout.length())
        throw std::invalid_argument("token sequence length " + std::to_string(tokens.size()) +
                                    " does not match layout length " + std::to_string(layout.length()));
    auto digit_at = [&](int pos) {
        const int id = tokens[pos];
        if (id < 0 || id > 9)
            throw std::invalid_argument("expected digit token at position " + std::to_string(pos));
        return id;
    };
    if (tokens[layout.plus_pos()] != kPlusToken || tokens[layout.eq_pos()] != kEqualsToken)
        throw std::invalid_argument("separator tokens misplaced");
    if (plus_prefix && tokens[layout.eq_pos() + 1] != kPlusToken)
        throw std::invalid_argument("plus-prefix token missing after '='");
    std::vector<int> a(n), b(n);
    for (int k = 0; k < n; ++k) {
        a[k] = digit_at(layout.pos_of_d(k));
        b[k] = digit_at(layout.pos_of_dp(k));
    }
    Question q(std::move(a), std::move(b));
    const auto answer = true_sum(q);
    for (int k = 0; k <= n; ++k)
        if (digit_at(layout.pos_of_answer_digit(k)) != answer[k])
            throw std::invalid_argument("answer segment disagrees with column addition");
    return q;
}

struct GeneratorConfig {
    int n_digits = 5;
    uint64_t seed = 0;
    // Probability of constructing a carry-chain question instead of sampling
    // uniform digits.  The default is calibrated so the per-digit task mix
    // lands near BA 61% / UC1 33% / US9 6%.
    double enrichment_prob = 0.044;
    bool plus_prefix = false;

    void validate() const {
        if (n_digits < 1) throw std::invalid_argument("n_digits must be at least 1");
        if (enrichment_prob < 0.0 || enrichment_prob > 1.0)
            throw std::invalid_argument("enrichment_prob must lie in [0,1]");
    }
};

// Owns its RNG; identical seeds give identical streams.
class QuestionGenerator {
public:
    explicit QuestionGenerator(GeneratorConfig cfg) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

    const GeneratorConfig& config() const { return cfg_; }

    Question next() {
        const int n = cfg_.n_digits;
        if (n >= 2 && chance_(rng_) < cfg_.enrichment_prob) return chain_question();
        return uniform_question();
    }

    std::vector<Question> batch(int size) {
        if (size < 1) throw std::invalid_argument("batch size must be at least 1");
        std::vector<Question> out;
        out.reserve(size);
        for (int i = 0; i < size; ++i) out.push_back(next());
        return out;
    }

private:
    Question uniform_question() {
        const int n = cfg_.n_digits;
        std::vector<int> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = static_cast<int>(digit_(rng_));
            b[i] = static_cast<int>(digit_(rng_));
        }
        return Question(std::move(a), std::move(b));
    }

    // Forces a chain: a carry source column followed by consecutive sum-9
    // columns.  Chain length is uniform over 1..4 (clipped to what fits),
    // start offset uniform over the valid range, all other digits uniform.
    Question chain_question() {
        const int n = cfg_.n_digits;
        Question q = uniform_question();
        const int max_len = std::min(4, n - 1);
        const int len = 1 + static_cast<int>(rng_() % static_cast<uint64_t>(max_len));
        const int start = 1 + static_cast<int>(rng_() % static_cast<uint64_t>(n - len));
        set_pair(q, start - 1, true);
        for (int i = start; i < start + len; ++i) set_pair(q, i, false);
        return q;
    }

    // Overwrites column i with a pair drawn uniformly from those summing
    // >= 10 (want_carry) or exactly 9.
    void set_pair(Question& q, int i, bool want_carry) {
        if (want_carry) {
            int a, b;
            do {
                a = static_cast<int>(digit_(rng_));
                b = static_cast<int>(digit_(rng_));
            } while (a + b < 10);
            q.a[i] = a;
            q.b[i] = b;
        } else {
            q.a[i] = static_cast<int>(digit_(rng_));
            q.b[i] = 9 - q.a[i];
        }
    }

    GeneratorConfig cfg_;
    std::mt19937_64 rng_;
    std::uniform_int_distribution<int> digit_{0, 9};
    std::uniform_real_distribution<double> chance_{0.0, 1.0};
};

// Empirical category mix of a question list: question-level fractions plus
// the per-digit task-instance fractions the enrichment default is tuned by.
struct CategoryMix {
    std::array<double, 4> question_level{};   // indexed by QuestionCategory
    std::array<double, 3> digit_task{};       // indexed by DigitTask
};

inline CategoryMix measure_mix(const std::vector<Question>& questions) {
    if (questions.empty()) throw std::invalid_argument("cannot measure an empty question list");
    CategoryMix mix;
    long slots = 0;
    for (const auto& q : questions) {
        ++mix.question_level[static_cast<int>(classify_question(q))];
        for (int i = 0; i < q.n(); ++i) {
            ++mix.digit_task[static_cast<int>(classify_digit(q, i))];
            ++slots;
        }
    }
    for (auto& v : mix.question_level) v /= static_cast<double>(questions.size());
    for (auto& v : mix.digit_task) v /= static_cast<double>(slots);
    return mix;
}

struct LabeledQuestion {
    Question q;
    QuestionCategory label;
};

// Deterministic curated suite: the hand-picked cases (for 5 digits, the ones
// used throughout the original analysis), systematic coverage of every task
// at every digit position, every feasible chain length and offset, and
// seeded random padding up to at least 100 distinct questions.
inline std::vector<LabeledQuestion> make_test_suite(int n_digits) {
    if (n_digits < 2) throw std::invalid_argument("test suite needs n_digits >= 2");
    const int n = n_digits;
    std::vector<Question> picked;
    std::set<std::string> seen;
    auto add = [&](const Question& q) {
        if (seen.insert(q.str()).second) picked.push_back(q);
    };

    if (n == 5) {
        for (const char* s : {"00888+11111", "35000+35000", "15020+45091", "00025+00079",
                              "41127+10880", "00123+00877", "81818+18182"})
            add(Question::parse(s));
    }

    // An all-BA question and one direct carry per column.
    {
        std::vector<int> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = (i % 2) ? 1 : 2;
            b[i] = (i % 2) ? 3 : 1;
        }
        add(Question(a, b));
        for (int c = 0; c + 1 < n; ++c) {
            std::vector<int> ca(n, 1), cb(n, 2);
            ca[c] = 7;
            cb[c] = 8;
            add(Question(ca, cb));
        }
    }

    // Every feasible chain start and length, including cascades.
    for (int start = 1; start < n; ++start)
        for (int len = 1; len <= std::min(4, n - start); ++len) {
            std::vector<int> a(n, 1), b(n, 1);
            a[start - 1] = 6;
            b[start - 1] = 5;
            for (int i = start; i < start + len; ++i) {
                a[i] = 4;
                b[i] = 5;
            }
            add(Question(a, b));
        }

    // Seeded random fill.
    QuestionGenerator gen({n, 20240817ULL, 0.25, false});
    while (picked.size() < 100) add(gen.next());

    std::vector<LabeledQuestion> suite;
    suite.reserve(picked.size());
    for (const auto& q : picked) suite.push_back({q, classify_question(q)});
    return suite;
}

inline std::vector<Question> strip_labels(const std::vector<LabeledQuestion>& suite) {
    std::vector<Question> out;
    out.reserve(suite.size());
    for (const auto& lq : suite) out.push_back(lq.q);
    return out;
}

// ----- question-list files: "DDDDD+DDDDD #CATEGORY" per line -----

inline void save_questions(std::ostream& os, const std::vector<LabeledQuestion>& list) {
    for (const auto& lq : list) os << lq.q.str() << " #" << category_name(lq.label) << '\n';
}

inline void save_questions(const std::string& path, const std::vector<LabeledQuestion>& list) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    save_questions(os, list);
}

inline std::vector<LabeledQuestion> load_questions(std::istream& is, const std::string& origin) {
    std::vector<LabeledQuestion> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string body = line;
        QuestionCategory declared{};
        bool has_label = false;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            body = line.substr(0, hash);
            std::string label = line.substr(hash + 1);
            label.erase(0, label.find_first_not_of(" \t"));
            label.erase(label.find_last_not_of(" \t\r") + 1);
            declared = category_from_name(label);
            has_label = true;
        }
        body.erase(0, body.find_first_not_of(" \t"));
        body.erase(body.find_last_not_of(" \t\r") + 1);
        if (body.empty()) continue;
        Question q = Question::parse(body);
        const auto actual = classify_question(q);
        if (has_label && declared != actual)
            throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": " + body +
                                     " is " + category_name(actual) + ", file says " +
                                     category_name(declared));
        if (!out.empty() && out.front().q.n() != q.n())
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": mixed digit counts in one file");
        out.push_back({q, actual});
    }
    if (out.empty()) throw std::runtime_error(origin + ": no questions found");
    return out;
}

inline std::vector<LabeledQuestion> load_questions(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return load_questions(is, path);
}

} // namespace addlens
