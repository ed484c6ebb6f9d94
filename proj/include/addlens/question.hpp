#pragma once

// An n-digit addition question.  Digits are stored least significant first,
// so index i is the 10^i column; strings render most significant first.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace addlens {

struct Question {
    std::vector<int> a;   // a[i] is the 10^i digit of the first operand
    std::vector<int> b;
    int n() const { return static_cast<int>(a.size()); }

    Question() = default;
    Question(std::vector<int> a_digits, std::vector<int> b_digits)
        : a(std::move(a_digits)), b(std::move(b_digits)) {
        validate();
    }

    static Question from_operands(uint64_t x, uint64_t y, int n_digits) {
        if (n_digits < 1) throw std::invalid_argument("question needs at least 1 digit");
        std::vector<int> da(n_digits), db(n_digits);
        for (int i = 0; i < n_digits; ++i) {
            da[i] = static_cast<int>(x % 10);
            db[i] = static_cast<int>(y % 10);
            x /= 10;
            y /= 10;
        }
        if (x || y)
            throw std::invalid_argument("operand does not fit in " + std::to_string(n_digits) + " digits");
        return Question(std::move(da), std::move(db));
    }

    // Parses "45+55"; operands must have equal digit counts.
    static Question parse(const std::string& text) {
        const auto plus = text.find('+');
        if (plus == std::string::npos || plus == 0 || plus + 1 >= text.size())
            throw std::invalid_argument("question must look like DDDDD+DDDDD, got \"" + text + "\"");
        const std::string lhs = text.substr(0, plus), rhs = text.substr(plus + 1);
        if (lhs.size() != rhs.size())
            throw std::invalid_argument("operand lengths differ in \"" + text + "\"");
        const int n = static_cast<int>(lhs.size());
        std::vector<int> da(n), db(n);
        for (int i = 0; i < n; ++i) {
            const char ca = lhs[n - 1 - i], cb = rhs[n - 1 - i];
            if (ca < '0' || ca > '9' || cb < '0' || cb > '9')
                throw std::invalid_argument("non-digit character in \"" + text + "\"");
            da[i] = ca - '0';
            db[i] = cb - '0';
        }
        return Question(std::move(da), std::move(db));
    }

    std::string str() const {
        std::string s;
        for (int i = n() - 1; i >= 0; --i) s += static_cast<char>('0' + a[i]);
        s += '+';
        for (int i = n() - 1; i >= 0; --i) s += static_cast<char>('0' + b[i]);
        return s;
    }

    bool operator==(const Question& o) const { return a == o.a && b == o.b; }

    void validate() const {
        if (a.size() != b.size() || a.empty())
            throw std::invalid_argument("operands must share a positive digit count");
        for (size_t i = 0; i < a.size(); ++i)
            if (a[i] < 0 || a[i] > 9 || b[i] < 0 || b[i] > 9)
                throw std::invalid_argument("digit outside [0,9] in question");
    }
};

// Renders an answer digit vector (least significant first) most significant
// first, e.g. {0,0,1,1} -> "1100".
inline std::string digits_str(const std::vector<int>& digits) {
    std::string s;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) s += static_cast<char>('0' + *it);
    return s;
}

} // namespace addlens
