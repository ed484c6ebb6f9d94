#pragma once

// Training loop with fresh data every step, loss decomposition by answer
// digit, question category, and per-digit task, CSV logging, and greedy
// evaluation.
//
// Supervision covers only the rows whose next token is part of the answer
// segment: row r of the logits predicts token r+1, so the supervised rows
// run from the '=' position through the second-to-last position.

#include "addlens/datagen.hpp"
#include "addlens/model.hpp"
#include "addlens/optimizer.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace addlens {

struct TrainConfig {
    ModelConfig model;
    GeneratorConfig gen;
    AdamConfig optim;
    int steps = 5000;
    int batch_size = 64;
    int log_every = 10;
    std::string checkpoint_path;   // written after the last step when non-empty
    std::string loss_csv_path;     // streamed during training when non-empty

    void validate() const {
        model.validate();
        gen.validate();
        if (gen.n_digits != model.n_digits || gen.plus_prefix != model.plus_prefix)
            throw std::invalid_argument("generator and model disagree on n_digits/plus_prefix");
        if (steps < 0) throw std::invalid_argument("steps must be non-negative");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
        if (log_every < 1) throw std::invalid_argument("log_every must be at least 1");
    }
};

// Losses for one logged step.  per_digit is indexed by answer digit value
// position (0 = units, n = lead); in plus-prefix mode one extra trailing
// entry holds the predicted-'+' slot.  Category and task cells with no
// member in the batch hold NaN and a zero count.
struct LossRecord {
    int step = 0;
    double all_digits = 0.0;
    std::vector<double> per_digit;
    std::array<double, 3> per_category{};        // BA, MC1, US9 (simple and cascade merged)
    std::array<long, 3> category_counts{};
    std::vector<std::array<double, 3>> per_digit_per_task;   // digit 0..n-1 x {BA, UC1, US9}
    std::vector<std::array<long, 3>> task_counts;
};

// Raised when the loss or a gradient stops being finite.
struct NumericFailure : std::runtime_error {
    int step;
    LossRecord last_finite;
    NumericFailure(int at, LossRecord last, const std::string& why)
        : std::runtime_error("numeric failure at step " + std::to_string(at) + ": " + why +
                             (last.step > 0 ? " (last finite record at step " + std::to_string(last.step) +
                                                  ", loss " + std::to_string(last.all_digits) + ")"
                                            : "")),
          step(at), last_finite(std::move(last)) {}
};

namespace detail {

// Supervised logit rows and their targets for a batch, in batch-major order.
inline void answer_rows(const std::vector<TokenSeq>& batch, const TokenLayout& layout,
                        std::vector<int>& rows, std::vector<int>& targets) {
    rows.clear();
    targets.clear();
    for (size_t b = 0; b < batch.size(); ++b)
        for (int r : layout.answer_rows()) {
            rows.push_back(static_cast<int>(b) * layout.length() + r);
            targets.push_back(batch[b][r + 1]);
        }
}

} // namespace detail

// Per-cell negative log likelihoods computed straight from logits values.
// Cell (b, j) is the j-th supervised row of question b; within a question
// the rows run from the lead-digit predictor down to the units predictor.
struct LossBreakdown {
    double all = 0.0;
    std::vector<double> per_digit;                    // see LossRecord
    std::vector<std::vector<double>> per_cell;        // [question][answer slot in row order]
};

inline LossBreakdown per_digit_loss(const Tensor& logits, const std::vector<TokenSeq>& batch,
                                    const TokenLayout& layout) {
    const int L = layout.length(), V = logits.dim(1);
    if (logits.dim(0) != static_cast<int>(batch.size()) * L)
        throw std::invalid_argument("logit row count does not match batch size times length");
    const int slots = layout.answer_len();
    LossBreakdown out;
    out.per_digit.assign(slots, 0.0);
    out.per_cell.assign(batch.size(), std::vector<double>(slots, 0.0));
    const auto& lv = logits.values();
    for (size_t b = 0; b < batch.size(); ++b) {
        for (int j = 0; j < slots; ++j) {
            const int row = static_cast<int>(b) * L + layout.first_answer_row() + j;
            const int target = batch[b][layout.first_answer_row() + j + 1];
            if (target < 0 || target >= V) throw std::invalid_argument("target token outside vocab");
            const double* l = lv.data() + static_cast<size_t>(row) * V;
            double mx = l[0];
            for (int v = 1; v < V; ++v) mx = std::max(mx, l[v]);
            double z = 0.0;
            for (int v = 0; v < V; ++v) z += std::exp(l[v] - mx);
            const double nll = std::log(z) - (l[target] - mx);
            out.per_cell[b][j] = nll;
            // Row j predicts the highest remaining answer slot; map it to the
            // value-position index used by per_digit.
            const int digit_index = slots - 1 - j;
            out.per_digit[digit_index] += nll;
            out.all += nll;
        }
    }
    const double nq = static_cast<double>(batch.size());
    for (double& v : out.per_digit) v /= nq;
    out.all /= nq * slots;
    return out;
}

// Builds the full decomposition for one batch from per-cell losses.
inline LossRecord make_loss_record(int step, const std::vector<Question>& questions,
                                   const LossBreakdown& breakdown, const TokenLayout& layout) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    LossRecord rec;
    rec.step = step;
    rec.all_digits = breakdown.all;
    rec.per_digit = breakdown.per_digit;
    rec.per_digit_per_task.assign(layout.n, {0.0, 0.0, 0.0});
    rec.task_counts.assign(layout.n, {0, 0, 0});
    std::array<double, 3> cat_sum{};
    const int slots = layout.answer_len();
    for (size_t qi = 0; qi < questions.size(); ++qi) {
        const Question& q = questions[qi];
        double qsum = 0.0;
        for (int j = 0; j < slots; ++j) qsum += breakdown.per_cell[qi][j];
        int cat = static_cast<int>(classify_question(q));
        if (cat == static_cast<int>(QuestionCategory::US9Cascade)) cat = 2;   // merge US9 buckets
        cat_sum[cat] += qsum / slots;
        ++rec.category_counts[cat];
        for (int digit = 0; digit < layout.n; ++digit) {
            const int task = static_cast<int>(classify_digit(q, digit));
            const int j = slots - 1 - digit;
            rec.per_digit_per_task[digit][task] += breakdown.per_cell[qi][j];
            ++rec.task_counts[digit][task];
        }
    }
    for (int c = 0; c < 3; ++c)
        rec.per_category[c] = rec.category_counts[c] ? cat_sum[c] / rec.category_counts[c] : nan;
    for (int digit = 0; digit < layout.n; ++digit)
        for (int t = 0; t < 3; ++t)
            rec.per_digit_per_task[digit][t] = rec.task_counts[digit][t]
                                                   ? rec.per_digit_per_task[digit][t] / rec.task_counts[digit][t]
                                                   : nan;
    return rec;
}

// ----- loss CSV -----

inline void write_loss_csv_header(std::ostream& os, const TokenLayout& layout) {
    os << "step,loss_all";
    for (int k = 0; k <= layout.n; ++k) os << ",loss_d" << k;
    if (layout.plus_prefix) os << ",loss_plus";
    os << ",loss_BA,loss_MC1,loss_US9";
    for (int digit = 0; digit < layout.n; ++digit)
        os << ",d" << digit << "_BA,d" << digit << "_UC1,d" << digit << "_US9";
    os << '\n';
}

inline void append_loss_record(std::ostream& os, const LossRecord& rec) {
    auto cell = [&os](double v) {
        if (std::isnan(v)) os << ',';
        else os << ',' << v;
    };
    os << rec.step << ',' << rec.all_digits;
    for (double v : rec.per_digit) os << ',' << v;
    for (double v : rec.per_category) cell(v);
    for (const auto& digit : rec.per_digit_per_task)
        for (double v : digit) cell(v);
    os << '\n';
}

// Mean of all_digits over records in the window (step - window, step].
inline double smoothed_loss(const std::vector<LossRecord>& records, int step, int window = 100) {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : records)
        if (r.step > step - window && r.step <= step) {
            sum += r.all_digits;
            ++count;
        }
    if (count == 0) throw std::invalid_argument("no loss records in window ending at step " +
                                                std::to_string(step));
    return sum / count;
}

struct TrainResult {
    TransformerModel model;
    std::vector<LossRecord> records;
};

using ProgressFn = std::function<void(const LossRecord&)>;

inline TrainResult train(const TrainConfig& cfg, const ProgressFn& progress = {}) {
    cfg.validate();
    TransformerModel model(cfg.model);
    QuestionGenerator gen(cfg.gen);
    AdamW opt(cfg.optim);
    const TokenLayout layout = cfg.model.layout();

    std::ofstream csv;
    if (!cfg.loss_csv_path.empty()) {
        csv.open(cfg.loss_csv_path);
        if (!csv) throw std::runtime_error("cannot write " + cfg.loss_csv_path);
        write_loss_csv_header(csv, layout);
    }

    std::vector<LossRecord> records;
    LossRecord last_finite;
    std::vector<int> rows, targets;
    for (int step = 1; step <= cfg.steps; ++step) {
        const std::vector<Question> questions = gen.batch(cfg.batch_size);
        std::vector<TokenSeq> batch;
        batch.reserve(questions.size());
        for (const auto& q : questions) batch.push_back(tokenize(q, cfg.model.plus_prefix));

        Tape tape;
        Tensor logits = model.forward(tape, batch);
        detail::answer_rows(batch, layout, rows, targets);
        Tensor nll = tape.cross_entropy_rows(tape.gather_rows(logits, rows), targets);
        Tensor loss = tape.mean_all(nll);
        if (!std::isfinite(loss.item()))
            throw NumericFailure(step, last_finite, "loss is not finite");

        if (step % cfg.log_every == 0 || step == cfg.steps) {
            // Repackage the already-computed per-row NLLs as per-cell losses.
            LossBreakdown breakdown;
            const int slots = layout.answer_len();
            breakdown.per_digit.assign(slots, 0.0);
            breakdown.per_cell.assign(batch.size(), std::vector<double>(slots, 0.0));
            const auto& nv = nll.values();
            for (size_t b = 0; b < batch.size(); ++b)
                for (int j = 0; j < slots; ++j) {
                    const double v = nv[b * slots + j];
                    breakdown.per_cell[b][j] = v;
                    breakdown.per_digit[slots - 1 - j] += v;
                    breakdown.all += v;
                }
            for (double& v : breakdown.per_digit) v /= static_cast<double>(batch.size());
            breakdown.all /= static_cast<double>(batch.size() * slots);
            LossRecord rec = make_loss_record(step, questions, breakdown, layout);
            if (csv.is_open()) append_loss_record(csv, rec);
            if (progress) progress(rec);
            last_finite = rec;
            records.push_back(std::move(rec));
        }

        model.zero_grads();
        tape.backward(loss);
        try {
            opt.step(model.params());
        } catch (const std::runtime_error& e) {
            throw NumericFailure(step, last_finite, e.what());
        }
    }
    model.set_trained_steps(cfg.steps);
    if (!cfg.checkpoint_path.empty()) model.save(cfg.checkpoint_path);
    return {std::move(model), std::move(records)};
}

// ----- greedy evaluation -----

struct CategoryStats {
    long count = 0;
    double loss = 0.0;       // mean per-cell NLL over the category's questions
    double accuracy = 0.0;   // exact-match fraction
};

struct EvalReport {
    double mean_loss = 0.0;
    double exact_match = 0.0;
    std::vector<double> per_digit;
    std::map<QuestionCategory, CategoryStats> by_category;
    std::array<CategoryStats, 3> by_task{};            // per-digit tasks pooled over digits
    std::vector<double> per_question_loss;
    std::vector<uint8_t> per_question_correct;
    std::vector<std::string> decoded;                  // answer digits, most significant first
};

// Teacher-forced greedy decoding: every supervised row's argmax is compared
// with the true next token, and a question passes only if all rows match.
inline EvalReport evaluate(const TransformerModel& model, const std::vector<Question>& questions,
                           int batch_size = 64) {
    if (questions.empty()) throw std::invalid_argument("evaluate needs at least one question");
    const TokenLayout layout = model.config().layout();
    const int slots = layout.answer_len();
    EvalReport report;
    report.per_digit.assign(slots, 0.0);
    report.per_question_loss.reserve(questions.size());
    report.per_question_correct.reserve(questions.size());

    std::array<double, 3> task_loss_sum{};
    std::array<long, 3> task_cells{};
    std::array<long, 3> task_correct{};

    for (size_t start = 0; start < questions.size(); start += batch_size) {
        const size_t end = std::min(questions.size(), start + batch_size);
        std::vector<TokenSeq> batch;
        for (size_t i = start; i < end; ++i)
            batch.push_back(tokenize(questions[i], model.config().plus_prefix));
        Tape tape(false);
        const Tensor logits = model.forward(tape, batch);
        const LossBreakdown breakdown = per_digit_loss(logits, batch, layout);

        const auto& lv = logits.values();
        const int V = logits.dim(1);
        for (size_t b = 0; b < batch.size(); ++b) {
            const Question& q = questions[start + b];
            double qloss = 0.0;
            bool all_right = true;
            std::string digits;
            for (int j = 0; j < slots; ++j) {
                const int row = static_cast<int>(b) * layout.length() + layout.first_answer_row() + j;
                const double* l = lv.data() + static_cast<size_t>(row) * V;
                int arg = 0;
                for (int v = 1; v < V; ++v)
                    if (l[v] > l[arg]) arg = v;
                const int want = batch[b][layout.first_answer_row() + j + 1];
                const bool right = arg == want;
                all_right = all_right && right;
                digits += token_char(arg);
                qloss += breakdown.per_cell[b][j];
                report.per_digit[slots - 1 - j] += breakdown.per_cell[b][j];
                const int digit_index = slots - 1 - j;
                if (digit_index < layout.n) {
                    const int task = static_cast<int>(classify_digit(q, digit_index));
                    task_loss_sum[task] += breakdown.per_cell[b][j];
                    ++task_cells[task];
                    if (right) ++task_correct[task];
                }
            }
            qloss /= slots;
            report.per_question_loss.push_back(qloss);
            report.per_question_correct.push_back(all_right ? 1 : 0);
            report.decoded.push_back(digits);
            report.mean_loss += qloss;
            report.exact_match += all_right ? 1.0 : 0.0;

            auto& cat = report.by_category[classify_question(q)];
            ++cat.count;
            cat.loss += qloss;
            cat.accuracy += all_right ? 1.0 : 0.0;
        }
    }
    const double nq = static_cast<double>(questions.size());
    report.mean_loss /= nq;
    report.exact_match /= nq;
    for (double& v : report.per_digit) v /= nq;
    for (auto& [cat, stats] : report.by_category) {
        stats.loss /= stats.count;
        stats.accuracy /= stats.count;
    }
    for (int t = 0; t < 3; ++t) {
        report.by_task[t].count = task_cells[t];
        if (task_cells[t]) {
            report.by_task[t].loss = task_loss_sum[t] / task_cells[t];
            report.by_task[t].accuracy = static_cast<double>(task_correct[t]) / task_cells[t];
        }
    }
    return report;
}

} // namespace addlens
