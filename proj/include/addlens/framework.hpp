#pragma once

// The column-level math behind n-digit addition: the base digit functions, a
// reference adder, the symbolic per-digit algorithm recovered from trained
// models, carry-chain accounting, and exact category frequencies.
//
// Terminology used throughout: column i has pair sum s_i = a_i + b_i and
// incoming carry c_i.  A column is a "chain member" when s_i == 9 and it
// receives a carry, so the carry passes straight through it.  A carry chain
// is a maximal run of consecutive members.

#include "addlens/question.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace addlens {

struct DigitPair {
    int a = 0;
    int b = 0;
};

inline void check_pair(DigitPair p) {
    if (p.a < 0 || p.a > 9 || p.b < 0 || p.b > 9)
        throw std::invalid_argument("digit pair (" + std::to_string(p.a) + "," + std::to_string(p.b) +
                                    ") outside [0,9]");
}

// Base digit functions.
inline int ba(DigitPair p) {
    check_pair(p);
    return (p.a + p.b) % 10;
}
inline bool mc1(DigitPair p) {
    check_pair(p);
    return p.a + p.b >= 10;
}
inline bool ms9(DigitPair p) {
    check_pair(p);
    return p.a + p.b == 9;
}
inline int uc1(DigitPair p, int carry_in) {
    check_pair(p);
    if (carry_in != 0 && carry_in != 1) throw std::invalid_argument("carry_in must be 0 or 1");
    return (p.a + p.b + carry_in) % 10;
}

// Incoming carries c_0..c_n under exact column addition; c_0 = 0.
inline std::vector<int> carries(const Question& q) {
    const int n = q.n();
    std::vector<int> c(n + 1, 0);
    for (int i = 0; i < n; ++i) c[i + 1] = (q.a[i] + q.b[i] + c[i] >= 10) ? 1 : 0;
    return c;
}

// Exact column addition.  Returns n+1 digits least significant first; the
// leading digit is 0 or 1.
inline std::vector<int> true_sum(const Question& q) {
    const int n = q.n();
    std::vector<int> out(n + 1, 0);
    int carry = 0;
    for (int i = 0; i < n; ++i) {
        const int s = q.a[i] + q.b[i] + carry;
        out[i] = s % 10;
        carry = s / 10;
    }
    out[n] = carry;
    return out;
}

// The symbolic per-digit algorithm a trained 1-layer model implements.  Each
// digit is produced independently from a three-column window: its own pair,
// one column of direct carry, and one further column of lookback that covers
// a single sum-9 propagation.  No state crosses digit iterations, so carry
// chains longer than one column fall outside the window and come out wrong.
inline std::vector<int> model_algorithm(const Question& q) {
    const int n = q.n();
    auto pair_at = [&](int i) { return DigitPair{q.a[i], q.b[i]}; };
    auto mc1_at = [&](int i) { return i >= 0 && mc1(pair_at(i)); };
    auto ms9_at = [&](int i) { return i >= 0 && ms9(pair_at(i)); };
    std::vector<int> out(n + 1, 0);
    for (int i = 0; i < n; ++i) {
        const int prev = mc1_at(i - 1) ? 1 : 0;
        const int prev_prev = (!mc1_at(i - 1) && ms9_at(i - 1) && mc1_at(i - 2)) ? 1 : 0;
        out[i] = (q.a[i] + q.b[i] + prev + prev_prev) % 10;
    }
    // Leading digit by the same one-step-lookback clause pattern at column n.
    out[n] = (mc1_at(n - 1) || (ms9_at(n - 1) && mc1_at(n - 2))) ? 1 : 0;
    return out;
}

inline bool is_chain_member(const Question& q, int column, const std::vector<int>& c) {
    return q.a[column] + q.b[column] == 9 && c[column] == 1;
}

// Length of the chain run starting at `column` and extending upward; 0 when
// the column is not a member.
inline int carry_chain_length(const Question& q, int column) {
    if (column < 0 || column >= q.n())
        throw std::invalid_argument("column " + std::to_string(column) + " outside question");
    const auto c = carries(q);
    if (!is_chain_member(q, column, c)) return 0;
    int len = 0;
    for (int i = column; i < q.n() && is_chain_member(q, i, c); ++i) ++len;
    return len;
}

// Longest maximal chain anywhere in the question.
inline int max_carry_chain(const Question& q) {
    const auto c = carries(q);
    int best = 0, run = 0;
    for (int i = 0; i < q.n(); ++i) {
        run = is_chain_member(q, i, c) ? run + 1 : 0;
        best = std::max(best, run);
    }
    return best;
}

// Question-level categories, ordered by the hardest calculation required.
enum class QuestionCategory { BA, MC1, US9Simple, US9Cascade };

inline const char* category_name(QuestionCategory c) {
    switch (c) {
        case QuestionCategory::BA: return "BA";
        case QuestionCategory::MC1: return "MC1";
        case QuestionCategory::US9Simple: return "US9_SIMPLE";
        case QuestionCategory::US9Cascade: return "US9_CASCADE";
    }
    throw std::logic_error("bad category");
}

inline QuestionCategory category_from_name(const std::string& s) {
    if (s == "BA" || s == "BASE_ADD" || s == "BASE_ADD_CASE") return QuestionCategory::BA;
    if (s == "MC1" || s == "MAKE_CARRY" || s == "CARRY_CASE") return QuestionCategory::MC1;
    if (s == "US9_SIMPLE" || s == "SIMPLE_US9") return QuestionCategory::US9Simple;
    if (s == "US9_CASCADE" || s == "CASCADE_US9") return QuestionCategory::US9Cascade;
    throw std::invalid_argument("unknown category \"" + s + "\"");
}

inline QuestionCategory classify_question(const Question& q) {
    const auto c = carries(q);
    bool any_carry = false, any_member = false, run2 = false, prev_member = false;
    for (int i = 0; i < q.n(); ++i) {
        any_carry = any_carry || c[i + 1] == 1;
        const bool member = is_chain_member(q, i, c);
        run2 = run2 || (member && prev_member);
        any_member = any_member || member;
        prev_member = member;
    }
    if (run2) return QuestionCategory::US9Cascade;
    if (any_member) return QuestionCategory::US9Simple;
    if (any_carry) return QuestionCategory::MC1;
    return QuestionCategory::BA;
}

// Per-digit task: which calculation produces answer digit i.
enum class DigitTask { BA, UC1, US9 };

inline const char* task_name(DigitTask t) {
    switch (t) {
        case DigitTask::BA: return "BA";
        case DigitTask::UC1: return "UC1";
        case DigitTask::US9: return "US9";
    }
    throw std::logic_error("bad task");
}

inline DigitTask classify_digit(const Question& q, int i) {
    if (i < 0 || i >= q.n()) throw std::invalid_argument("digit index " + std::to_string(i) + " outside question");
    const auto c = carries(q);
    if (is_chain_member(q, i, c)) return DigitTask::US9;
    if (c[i] == 1) return DigitTask::UC1;
    return DigitTask::BA;
}

// ----- divergence between the symbolic algorithm and exact addition -----

struct DivergenceEntry {
    Question q;
    int first_diff_digit = -1;   // index into the n+1 answer digits, lsd first
    int chain_length = 0;        // longest chain in the question
};

// Exhaustively enumerates all 10^(2n) questions and keeps those where
// model_algorithm disagrees with true_sum.  Bounded to n <= 3.
inline std::vector<DivergenceEntry> divergence_set(int n) {
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    if (n > 3)
        throw std::invalid_argument("divergence_set enumerates 10^(2n) questions; for n > 3 use "
                                    "sampled mode (divergence_sample)");
    uint64_t limit = 1;
    for (int i = 0; i < n; ++i) limit *= 10;
    std::vector<DivergenceEntry> out;
    for (uint64_t x = 0; x < limit; ++x)
        for (uint64_t y = 0; y < limit; ++y) {
            Question q = Question::from_operands(x, y, n);
            const auto truth = true_sum(q);
            const auto algo = model_algorithm(q);
            for (int i = 0; i <= n; ++i)
                if (truth[i] != algo[i]) {
                    out.push_back({q, i, max_carry_chain(q)});
                    break;
                }
        }
    return out;
}

// Random-sampling fallback for digit counts beyond enumeration reach.
inline std::vector<DivergenceEntry> divergence_sample(int n, int samples, uint64_t seed) {
    if (n < 1 || samples < 1) throw std::invalid_argument("divergence_sample needs n >= 1, samples >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> digit(0, 9);
    std::vector<DivergenceEntry> out;
    for (int s = 0; s < samples; ++s) {
        std::vector<int> da(n), db(n);
        for (int i = 0; i < n; ++i) {
            da[i] = digit(rng);
            db[i] = digit(rng);
        }
        Question q(std::move(da), std::move(db));
        const auto truth = true_sum(q);
        const auto algo = model_algorithm(q);
        for (int i = 0; i <= n; ++i)
            if (truth[i] != algo[i]) {
                out.push_back({q, i, max_carry_chain(q)});
                break;
            }
    }
    return out;
}

inline void write_divergence_csv(std::ostream& os, const std::vector<DivergenceEntry>& entries,
                                 int n) {
    os << "question_a,question_b,true_answer,algorithm_answer,chain_length\n";
    for (const auto& e : entries) {
        std::string qa, qb;
        for (int i = n - 1; i >= 0; --i) {
            qa += static_cast<char>('0' + e.q.a[i]);
            qb += static_cast<char>('0' + e.q.b[i]);
        }
        os << qa << ',' << qb << ',' << digits_str(true_sum(e.q)) << ','
           << digits_str(model_algorithm(e.q)) << ',' << e.chain_length << '\n';
    }
}

// ----- exact frequencies under uniform digit sampling -----

struct TaskFrequencies {
    double p_mc1_column = 0.0;   // P(a+b >= 10) for one uniform pair
    double p_ms9_column = 0.0;   // P(a+b == 9)
    // Question-level category probabilities, summing to 1.
    double q_ba = 0.0, q_mc1 = 0.0, q_us9_simple = 0.0, q_us9_cascade = 0.0;
    // Per answer digit i in 0..n-1: probability digit i is a {BA, UC1, US9} task.
    std::vector<std::array<double, 3>> digit_task;

    double question_level(QuestionCategory c) const {
        switch (c) {
            case QuestionCategory::BA: return q_ba;
            case QuestionCategory::MC1: return q_mc1;
            case QuestionCategory::US9Simple: return q_us9_simple;
            case QuestionCategory::US9Cascade: return q_us9_cascade;
        }
        throw std::logic_error("bad category");
    }
};

// Exact probabilities by dynamic programming over columns.  The chain state
// per column is (incoming carry, previous column was a member) plus three
// sticky flags (saw any carry, saw any member, saw two members in a row).
inline TaskFrequencies task_frequencies(int n) {
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    TaskFrequencies f;

    std::array<double, 19> psum{};
    int mc1_count = 0, ms9_count = 0;
    for (int a = 0; a <= 9; ++a)
        for (int b = 0; b <= 9; ++b) {
            psum[a + b] += 0.01;
            if (a + b >= 10) ++mc1_count;
            if (a + b == 9) ++ms9_count;
        }
    f.p_mc1_column = mc1_count / 100.0;
    f.p_ms9_column = ms9_count / 100.0;

    // State index: carry + 2*prev_member + 4*any_carry + 8*any_member + 16*run2.
    std::array<double, 32> state{};
    state[0] = 1.0;
    double p_carry = 0.0;   // P(c_i = 1), updated column by column
    f.digit_task.resize(n);
    for (int i = 0; i < n; ++i) {
        const double p_member = f.p_ms9_column * p_carry;
        f.digit_task[i] = {1.0 - p_carry, p_carry - p_member, p_member};
        p_carry = f.p_mc1_column + f.p_ms9_column * p_carry;

        std::array<double, 32> next{};
        for (int st = 0; st < 32; ++st) {
            if (state[st] == 0.0) continue;
            const int carry = st & 1, prev_member = (st >> 1) & 1;
            const int any_carry = (st >> 2) & 1, any_member = (st >> 3) & 1, run2 = (st >> 4) & 1;
            for (int s = 0; s <= 18; ++s) {
                if (psum[s] == 0.0) continue;
                const int member = (s == 9 && carry == 1) ? 1 : 0;
                const int carry_out = (s + carry >= 10) ? 1 : 0;
                const int nst = carry_out | (member << 1) | ((any_carry | carry_out) << 2) |
                                ((any_member | member) << 3) | ((run2 | (member & prev_member)) << 4);
                next[nst] += state[st] * psum[s];
            }
        }
        state = next;
    }
    for (int st = 0; st < 32; ++st) {
        if (state[st] == 0.0) continue;
        const int any_carry = (st >> 2) & 1, any_member = (st >> 3) & 1, run2 = (st >> 4) & 1;
        if (run2) f.q_us9_cascade += state[st];
        else if (any_member) f.q_us9_simple += state[st];
        else if (any_carry) f.q_mc1 += state[st];
        else f.q_ba += state[st];
    }
    return f;
}

} // namespace addlens
