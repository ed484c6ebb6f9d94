#include <catch2/catch_amalgamated.hpp>

#include "addlens/framework.hpp"

#include <random>
#include <set>
#include <sstream>

using namespace addlens;

namespace {

std::vector<int> sum_digits_u64(uint64_t a, uint64_t b, int len) {
    uint64_t s = a + b;
    std::vector<int> out(len);
    for (int i = 0; i < len; ++i) {
        out[i] = static_cast<int>(s % 10);
        s /= 10;
    }
    return out;
}

Question random_question(int n, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> digit(0, 9);
    std::vector<int> a(n), b(n);
    for (int i = 0; i < n; ++i) {
        a[i] = digit(rng);
        b[i] = digit(rng);
    }
    return Question(std::move(a), std::move(b));
}

} // namespace

TEST_CASE("base digit functions match full enumeration") {
    int mc1_count = 0, ms9_count = 0;
    for (int a = 0; a <= 9; ++a)
        for (int b = 0; b <= 9; ++b) {
            DigitPair p{a, b};
            CHECK(ba(p) == (a + b) % 10);
            CHECK(mc1(p) == (a + b >= 10));
            CHECK(ms9(p) == (a + b == 9));
            if (mc1(p)) ++mc1_count;
            if (ms9(p)) ++ms9_count;
            CHECK_FALSE((mc1(p) && ms9(p)));
            for (int carry = 0; carry <= 1; ++carry)
                CHECK(uc1(p, carry) == (a + b + carry) % 10);
        }
    CHECK(mc1_count == 45);
    CHECK(ms9_count == 10);
    CHECK(ba({0, 0}) == 0);
    CHECK(ba({5, 7}) == 2);
    CHECK(mc1({9, 9}));
    CHECK_FALSE(mc1({4, 5}));
    CHECK(ms9({4, 5}));
    CHECK_FALSE(ms9({9, 9}));
    CHECK(uc1({4, 5}, 1) == 0);
    CHECK(uc1({0, 0}, 0) == 0);
}

TEST_CASE("true_sum is exact column addition") {
    CHECK(digits_str(true_sum(Question::parse("54321+77779"))) == "132100");
    CHECK(digits_str(true_sum(Question::parse("99999+00001"))) == "100000");
    CHECK(digits_str(true_sum(Question::parse("00000+00000"))) == "000000");

    // Machine-integer addition as the independent oracle.
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 1000000; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 15);
        uint64_t limit = 1;
        for (int i = 0; i < n; ++i) limit *= 10;
        const uint64_t a = rng() % limit, b = rng() % limit;
        const Question q = Question::from_operands(a, b, n);
        if (true_sum(q) != sum_digits_u64(a, b, n + 1)) {
            FAIL("true_sum mismatch on " << q.str());
        }
    }
}

TEST_CASE("model_algorithm reproduces the symbolic per-digit procedure") {
    CHECK(digits_str(model_algorithm(Question::parse("45+55"))) == "100");
    CHECK(digits_str(model_algorithm(Question::parse("11111+22222"))) == "033333");
    // Cascades fall outside the three-column window and come out wrong.
    CHECK(digits_str(model_algorithm(Question::parse("445+555"))) == "0000");
    CHECK(digits_str(true_sum(Question::parse("445+555"))) == "1000");
    CHECK(digits_str(model_algorithm(Question::parse("4445+5555"))) == "09000");
    CHECK(digits_str(true_sum(Question::parse("4445+5555"))) == "10000");
}

TEST_CASE("model_algorithm digit i depends only on columns i, i-1, i-2") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> digit(0, 9);
    for (int trial = 0; trial < 2000; ++trial) {
        const int n = 4 + static_cast<int>(rng() % 4);
        Question q = random_question(n, rng);
        const int i = static_cast<int>(rng() % static_cast<uint64_t>(n));
        const int before = model_algorithm(q)[i];
        Question mutated = q;
        for (int j = 0; j < n; ++j) {
            if (j <= i && j >= i - 2) continue;
            mutated.a[j] = digit(rng);
            mutated.b[j] = digit(rng);
        }
        CHECK(model_algorithm(mutated)[i] == before);
    }
}

TEST_CASE("exhaustive oracle fidelity for n = 1, 2, 3", "[oracle]") {
    for (int n = 1; n <= 3; ++n) {
        uint64_t limit = 1;
        for (int i = 0; i < n; ++i) limit *= 10;
        long divergent = 0;
        for (uint64_t x = 0; x < limit; ++x)
            for (uint64_t y = 0; y < limit; ++y) {
                const Question q = Question::from_operands(x, y, n);
                const bool differs = model_algorithm(q) != true_sum(q);
                const bool cascade = max_carry_chain(q) >= 2;
                if (differs != cascade) {
                    FAIL("fidelity broken on " << q.str() << " (differs=" << differs
                                               << ", max chain=" << max_carry_chain(q) << ")");
                }
                if (differs) ++divergent;
            }
        if (n < 3) CHECK(divergent == 0);   // no room for a length-2 chain
        else CHECK(divergent > 0);
    }
}

TEST_CASE("divergence_set enumeration", "[oracle]") {
    CHECK(divergence_set(1).empty());
    CHECK(divergence_set(2).empty());

    const auto set3 = divergence_set(3);
    REQUIRE_FALSE(set3.empty());
    bool found_445 = false;
    for (const auto& e : set3) {
        const auto cat = classify_question(e.q);
        CHECK(cat != QuestionCategory::BA);
        CHECK(cat != QuestionCategory::MC1);
        CHECK(e.chain_length >= 2);
        if (e.q == Question::parse("445+555")) found_445 = true;
    }
    CHECK(found_445);

    CHECK_THROWS_WITH(divergence_set(4), Catch::Matchers::ContainsSubstring("sampled mode"));

    std::ostringstream csv;
    write_divergence_csv(csv, {set3.front()}, 3);
    CHECK_THAT(csv.str(), Catch::Matchers::StartsWith(
                              "question_a,question_b,true_answer,algorithm_answer,chain_length\n"));
}

TEST_CASE("carry chain accounting") {
    const Question q445 = Question::parse("445+555");
    CHECK(carry_chain_length(q445, 1) == 2);
    CHECK(carry_chain_length(q445, 2) == 1);
    CHECK(carry_chain_length(q445, 0) == 0);
    CHECK(max_carry_chain(q445) == 2);

    const Question q45 = Question::parse("45+55");
    CHECK(carry_chain_length(q45, 1) == 1);
    CHECK(max_carry_chain(q45) == 1);

    const Question plain = Question::parse("11111+22222");
    for (int i = 0; i < 5; ++i) CHECK(carry_chain_length(plain, i) == 0);
    CHECK(max_carry_chain(plain) == 0);
}

TEST_CASE("question classification matches the worked examples") {
    CHECK(classify_question(Question::parse("11111+22222")) == QuestionCategory::BA);
    CHECK(classify_question(Question::parse("11811+22222")) == QuestionCategory::MC1);
    CHECK(classify_question(Question::parse("45+55")) == QuestionCategory::US9Simple);
    CHECK(classify_question(Question::parse("445+555")) == QuestionCategory::US9Cascade);

    CHECK(classify_digit(Question::parse("11111+22222"), 3) == DigitTask::BA);
    CHECK(classify_digit(Question::parse("45+55"), 1) == DigitTask::US9);
    CHECK(classify_digit(Question::parse("11811+22222"), 3) == DigitTask::UC1);
}

TEST_CASE("category frequencies: DP equals exhaustive count for n = 2") {
    const auto f = task_frequencies(2);
    CHECK(f.p_mc1_column == 0.45);
    CHECK(f.p_ms9_column == 0.10);

    std::map<QuestionCategory, long> counts;
    for (int x = 0; x < 100; ++x)
        for (int y = 0; y < 100; ++y)
            ++counts[classify_question(Question::from_operands(x, y, 2))];
    const double total = 10000.0;
    CHECK_THAT(f.q_ba, Catch::Matchers::WithinAbs(counts[QuestionCategory::BA] / total, 1e-12));
    CHECK_THAT(f.q_mc1, Catch::Matchers::WithinAbs(counts[QuestionCategory::MC1] / total, 1e-12));
    CHECK_THAT(f.q_us9_simple,
               Catch::Matchers::WithinAbs(counts[QuestionCategory::US9Simple] / total, 1e-12));
    CHECK_THAT(f.q_us9_cascade,
               Catch::Matchers::WithinAbs(counts[QuestionCategory::US9Cascade] / total, 1e-12));
}

TEST_CASE("category frequencies: DP matches Monte Carlo for n = 5") {
    const auto f = task_frequencies(5);
    CHECK_THAT(f.q_ba + f.q_mc1 + f.q_us9_simple + f.q_us9_cascade,
               Catch::Matchers::WithinAbs(1.0, 1e-12));

    std::mt19937_64 rng(99);
    const int samples = 1000000;
    std::map<QuestionCategory, long> counts;
    std::vector<std::array<long, 3>> digit_counts(5, {0, 0, 0});
    for (int s = 0; s < samples; ++s) {
        const Question q = random_question(5, rng);
        ++counts[classify_question(q)];
        for (int i = 0; i < 5; ++i) ++digit_counts[i][static_cast<int>(classify_digit(q, i))];
    }
    CHECK_THAT(f.q_ba, Catch::Matchers::WithinAbs(counts[QuestionCategory::BA] / double(samples), 5e-3));
    CHECK_THAT(f.q_mc1, Catch::Matchers::WithinAbs(counts[QuestionCategory::MC1] / double(samples), 5e-3));
    CHECK_THAT(f.q_us9_simple,
               Catch::Matchers::WithinAbs(counts[QuestionCategory::US9Simple] / double(samples), 5e-3));
    CHECK_THAT(f.q_us9_cascade,
               Catch::Matchers::WithinAbs(counts[QuestionCategory::US9Cascade] / double(samples), 5e-3));
    for (int i = 0; i < 5; ++i)
        for (int t = 0; t < 3; ++t)
            CHECK_THAT(f.digit_task[i][t],
                       Catch::Matchers::WithinAbs(digit_counts[i][t] / double(samples), 5e-3));
}

TEST_CASE("question parsing and validation") {
    const Question q = Question::parse("054+195");
    CHECK(q.n() == 3);
    CHECK(q.a == std::vector<int>{4, 5, 0});
    CHECK(q.b == std::vector<int>{5, 9, 1});
    CHECK(q.str() == "054+195");
    CHECK(Question::from_operands(54, 195, 3) == q);

    CHECK_THROWS_AS(Question::parse("123+45"), std::invalid_argument);
    CHECK_THROWS_AS(Question::parse("12345"), std::invalid_argument);
    CHECK_THROWS_AS(Question::parse("12a+456"), std::invalid_argument);
    CHECK_THROWS_AS(Question::from_operands(1234, 0, 3), std::invalid_argument);
}
