// Training recipe: mini-batch SGD with global-norm gradient clipping,
// exponential learning-rate decay keyed to dev performance, dropout and word
// dropout, best-checkpoint selection.
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "relex/eval.hpp"
#include "relex/model.hpp"

namespace relex {

struct TrainConfig {
    int batch_size = 50;
    double lr0 = 1.0;
    double decay = 0.9;
    double clip = 5.0;
    double dropout = 0.5;
    double word_dropout = 0.04;
    int max_epochs = 30;
    uint64_t seed = 1;
    int patience = 1;

    void validate() const {
        auto rate = [](double v, const char* name) {
            if (v < 0.0 || v > 1.0)
                throw std::runtime_error(std::string(name) + " must lie in [0,1]");
        };
        rate(decay, "decay");
        rate(dropout, "dropout");
        rate(word_dropout, "word_dropout");
        if (clip <= 0.0) throw std::runtime_error("clip must be > 0");
        if (batch_size <= 0) throw std::runtime_error("batch_size must be > 0");
        if (max_epochs < 0) throw std::runtime_error("max_epochs must be >= 0");
        if (patience < 1) throw std::runtime_error("patience must be >= 1");
    }
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_f1 = 0.0;
    double lr = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    int best_epoch = -1;
    double best_dev_f1 = 0.0;
};

// Accumulates per-instance gradients into one batch gradient, in parameter
// order.
class GradAccumulator {
public:
    explicit GradAccumulator(std::span<const NamedParam> params) {
        for (const auto& p : params)
            sums_.push_back(Mat::zeros(p.value->rows, p.value->cols));
        params_ = params;
    }

    void add(const Tape& tape, double scale) {
        for (size_t i = 0; i < sums_.size(); ++i) {
            Mat g = tape.gradient(*params_[i].value);
            for (int j = 0; j < sums_[i].size(); ++j) sums_[i].a[j] += scale * g.a[j];
        }
    }

    std::vector<Mat> take() { return std::move(sums_); }

private:
    std::span<const NamedParam> params_;
    std::vector<Mat> sums_;
};

inline double global_grad_norm(const std::vector<Mat>& grads) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double x : g.a) sq += x * x;
    return std::sqrt(sq);
}

// Scales all gradients by clip/norm when the global norm exceeds the clip
// threshold; returns the factor applied.
inline double clip_gradients(std::vector<Mat>& grads, double clip) {
    double norm = global_grad_norm(grads);
    if (norm <= clip) return 1.0;
    double factor = clip / norm;
    for (auto& g : grads)
        for (double& x : g.a) x *= factor;
    return factor;
}

// Global-norm clipping followed by the SGD update. PAD rows of embedding
// tables never move.
inline void sgd_step(std::span<const NamedParam> params, std::vector<Mat> grads,
                     double lr, double clip) {
    if (grads.size() != params.size())
        throw std::runtime_error("sgd_step: gradient/parameter count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        Mat& g = grads[i];
        if (!g.same_shape(*params[i].value))
            throw std::runtime_error("sgd_step: gradient shape mismatch for " +
                                     params[i].name);
        if (params[i].freeze_row0 && g.rows > 0)
            for (int c = 0; c < g.cols; ++c) g(0, c) = 0.0;
        for (double x : g.a)
            if (!std::isfinite(x))
                throw std::runtime_error("sgd_step: non-finite gradient for " +
                                         params[i].name);
    }
    clip_gradients(grads, clip);
    for (size_t i = 0; i < params.size(); ++i) {
        Mat& p = *params[i].value;
        for (int j = 0; j < p.size(); ++j) p.a[j] -= lr * grads[i].a[j];
    }
}

// Decays when the dev score has not improved for `patience` consecutive
// epochs. History holds per-epoch dev F1 including the epoch just finished.
inline double lr_schedule(double lr, const std::vector<double>& dev_history, double decay,
                          int patience) {
    if (decay <= 0.0 || decay >= 1.0)
        throw std::runtime_error("lr_schedule: decay must lie in (0,1)");
    if (static_cast<int>(dev_history.size()) < patience + 1) return lr;
    int stale = 0;
    for (size_t t = dev_history.size(); t-- > 1;) {
        double best_before = dev_history[0];
        for (size_t i = 1; i < t; ++i) best_before = std::max(best_before, dev_history[i]);
        if (dev_history[t] > best_before) break;
        ++stale;
    }
    return stale >= patience ? lr * decay : lr;
}

// Each word index independently becomes UNK with probability p.
inline std::vector<int> word_dropout(std::vector<int> idx, double p, Rng& rng) {
    if (p < 0.0 || p > 1.0) throw std::runtime_error("word_dropout: p must lie in [0,1]");
    if (p == 0.0) return idx;
    for (int& i : idx)
        if (rng.bernoulli(p)) i = Vocabulary::kUnk;
    return idx;
}

// One full training run. The model ends up holding the parameters of the
// best dev epoch.
inline TrainLog train_loop(Model& model, const std::vector<Instance>& train,
                           const std::vector<Instance>& dev, const TrainConfig& cfg,
                           const EntityKB* kb = nullptr) {
    cfg.validate();
    if (train.empty() || dev.empty())
        throw std::runtime_error("train_loop: empty train or dev split");

    auto params = model.parameters();
    TrainLog log;
    if (cfg.max_epochs == 0) return log;

    std::vector<Mat> best;
    auto snapshot = [&]() {
        best.clear();
        for (const auto& p : params) best.push_back(*p.value);
    };
    auto restore = [&]() {
        for (size_t i = 0; i < params.size(); ++i) *params[i].value = best[i];
    };

    Rng shuffle_rng(mix_seed(cfg.seed, 0x5u));
    Rng wd_rng(mix_seed(cfg.seed, 0x17u));
    double lr = cfg.lr0;
    std::vector<double> dev_history;
    uint64_t step = 0;

    std::vector<int> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);

        double loss_sum = 0.0;
        long loss_count = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            GradAccumulator acc(params);
            double inv = 1.0 / static_cast<double>(end - start);
            for (size_t bi = start; bi < end; ++bi) {
                const Instance& inst = train[order[bi]];
                Tape tape(mix_seed(cfg.seed, 0x7a9e ^ step));
                ++step;
                ForwardOptions opt;
                opt.train = true;
                opt.dropout = cfg.dropout;
                opt.kb = kb;
                opt.gold = model.gold_index(inst);
                auto widx = word_dropout(model.word_indices(inst), cfg.word_dropout, wd_rng);
                opt.word_override = &widx;
                ForwardResult res = model.forward(tape, inst, opt);
                double loss = tape.value(res.loss).a[0];
                if (!std::isfinite(loss))
                    throw std::runtime_error(
                        "train_loop: non-finite loss at epoch " + std::to_string(epoch) +
                        ", batch " + std::to_string(start / cfg.batch_size) +
                        ", instance " + inst.id);
                tape.backward(res.loss);
                acc.add(tape, inv);
                loss_sum += loss;
                ++loss_count;
            }
            sgd_step(params, acc.take(), lr, cfg.clip);
        }

        PredictionReport dev_report = predict_corpus(model, dev, kb);
        MetricsReport m = micro_prf(dev_report.predicted_labels(), dev_report.gold_labels(),
                                    kNoRelation);
        dev_history.push_back(m.f1);
        log.epochs.push_back(EpochLog{epoch, loss_sum / std::max(1L, loss_count), m.f1, lr});
        if (log.best_epoch < 0 || m.f1 > log.best_dev_f1) {
            log.best_epoch = epoch;
            log.best_dev_f1 = m.f1;
            snapshot();
        }
        lr = lr_schedule(lr, dev_history, cfg.decay, cfg.patience);
    }

    restore();
    return log;
}

} // namespace relex
