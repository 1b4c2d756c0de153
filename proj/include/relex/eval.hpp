// Prediction and scoring: micro-averaged P/R/F1 with the nil class excluded,
// majority-vote ensembling, robustness binning and attention heatmap export.
#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "relex/model.hpp"

namespace relex {

struct Prediction {
    std::string id;
    std::string gold; // empty when the instance is unlabeled
    std::string pred;
    std::vector<double> probs;
    std::vector<double> alpha;
    std::vector<std::string> tokens;
    Span subj, obj;
};

struct PredictionReport {
    std::vector<Prediction> items;
    std::vector<std::string> label_names;

    std::vector<std::string> predicted_labels() const {
        std::vector<std::string> out;
        out.reserve(items.size());
        for (const auto& p : items) out.push_back(p.pred);
        return out;
    }
    std::vector<std::string> gold_labels() const {
        std::vector<std::string> out;
        out.reserve(items.size());
        for (const auto& p : items) out.push_back(p.gold);
        return out;
    }
};

inline PredictionReport predict_corpus(const Model& model,
                                       const std::vector<Instance>& instances,
                                       const EntityKB* kb = nullptr) {
    PredictionReport rep;
    rep.label_names = model.labels.tags();
    for (const auto& inst : instances) {
        Tape tape(0); // dropout off, tape seed irrelevant
        ForwardOptions opt;
        opt.train = false;
        opt.kb = kb;
        ForwardResult res = model.forward(tape, inst, opt);
        Prediction p;
        p.id = inst.id;
        p.gold = inst.relation.value_or("");
        p.pred = model.labels.tag(res.pred);
        p.probs = res.prob_values;
        p.alpha = res.alpha_values;
        for (const auto& t : inst.tokens) p.tokens.push_back(t.form);
        p.subj = inst.subj;
        p.obj = inst.obj;
        rep.items.push_back(std::move(p));
    }
    return rep;
}

// ------------------------------------------------------------------ metrics

struct MetricsReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long tp = 0, fp = 0, fn = 0;
};

inline MetricsReport micro_prf(const std::vector<std::string>& preds,
                               const std::vector<std::string>& golds,
                               const std::string& nil_label) {
    if (preds.size() != golds.size())
        throw std::runtime_error("micro_prf: " + std::to_string(preds.size()) +
                                 " predictions vs " + std::to_string(golds.size()) +
                                 " golds");
    MetricsReport m;
    for (size_t i = 0; i < preds.size(); ++i) {
        bool hit = preds[i] == golds[i];
        if (hit && preds[i] != nil_label) ++m.tp;
        if (!hit && preds[i] != nil_label) ++m.fp;
        if (!hit && golds[i] != nil_label) ++m.fn;
    }
    m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

inline double accuracy(const std::vector<std::string>& preds,
                       const std::vector<std::string>& golds) {
    if (preds.size() != golds.size())
        throw std::runtime_error("accuracy: length mismatch");
    if (preds.empty()) return 0.0;
    long hits = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == golds[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

inline nlohmann::json metrics_json(const MetricsReport& m) {
    nlohmann::json j;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["tp"] = m.tp;
    j["fp"] = m.fp;
    j["fn"] = m.fn;
    return j;
}

// ----------------------------------------------------------------- ensemble

// Per instance, the label with most votes; ties go to the highest summed
// probability, then to the lowest class index. Probabilities and attention
// in the output are the elementwise means across runs.
inline PredictionReport ensemble_vote(const std::vector<PredictionReport>& reports) {
    if (reports.empty()) throw std::runtime_error("ensemble_vote: no reports");
    const PredictionReport& first = reports[0];
    for (const auto& r : reports) {
        if (r.items.size() != first.items.size())
            throw std::runtime_error("ensemble_vote: reports cover different instance counts");
        if (r.label_names != first.label_names)
            throw std::runtime_error("ensemble_vote: reports use different label inventories");
        for (size_t i = 0; i < r.items.size(); ++i)
            if (r.items[i].id != first.items[i].id)
                throw std::runtime_error("ensemble_vote: instance id mismatch at position " +
                                         std::to_string(i) + ": '" + r.items[i].id +
                                         "' vs '" + first.items[i].id + "'");
    }
    std::map<std::string, int> label_index;
    for (size_t c = 0; c < first.label_names.size(); ++c)
        label_index[first.label_names[c]] = static_cast<int>(c);

    PredictionReport out;
    out.label_names = first.label_names;
    double inv = 1.0 / static_cast<double>(reports.size());
    for (size_t i = 0; i < first.items.size(); ++i) {
        int C = static_cast<int>(first.label_names.size());
        std::vector<int> votes(C, 0);
        std::vector<double> prob_sum(C, 0.0);
        for (const auto& r : reports) {
            const Prediction& p = r.items[i];
            auto it = label_index.find(p.pred);
            if (it == label_index.end())
                throw std::runtime_error("ensemble_vote: prediction '" + p.pred +
                                         "' outside the label inventory");
            ++votes[it->second];
            for (int c = 0; c < C && c < static_cast<int>(p.probs.size()); ++c)
                prob_sum[c] += p.probs[c];
        }
        int winner = 0;
        for (int c = 1; c < C; ++c) {
            if (votes[c] > votes[winner] ||
                (votes[c] == votes[winner] && prob_sum[c] > prob_sum[winner]))
                winner = c;
        }
        Prediction p = first.items[i];
        p.pred = first.label_names[winner];
        for (int c = 0; c < static_cast<int>(p.probs.size()); ++c) {
            p.probs[c] = prob_sum[c] * inv;
        }
        std::vector<double> alpha_sum(p.alpha.size(), 0.0);
        for (const auto& r : reports)
            for (size_t k = 0; k < alpha_sum.size(); ++k)
                alpha_sum[k] += r.items[i].alpha[k];
        for (size_t k = 0; k < alpha_sum.size(); ++k) p.alpha[k] = alpha_sum[k] * inv;
        out.items.push_back(std::move(p));
    }
    return out;
}

// ------------------------------------------------------------------ binning

enum class BinAxis { sent_len, pair_dist, n_entities, n_between };

inline const char* bin_axis_name(BinAxis a) {
    switch (a) {
        case BinAxis::sent_len: return "sent_len";
        case BinAxis::pair_dist: return "pair_dist";
        case BinAxis::n_entities: return "n_entities";
        case BinAxis::n_between: return "n_between";
    }
    return "?";
}

inline BinAxis parse_bin_axis(const std::string& s) {
    if (s == "sent_len") return BinAxis::sent_len;
    if (s == "pair_dist") return BinAxis::pair_dist;
    if (s == "n_entities") return BinAxis::n_entities;
    if (s == "n_between") return BinAxis::n_between;
    throw std::runtime_error("unknown analysis axis '" + s + "'");
}

inline int default_bin_size(BinAxis a) {
    switch (a) {
        case BinAxis::sent_len: return 10;
        case BinAxis::pair_dist: return 3;
        default: return 1;
    }
}

// Tokens strictly between the two spans.
inline int pair_token_distance(const Instance& inst) {
    int lo = std::min(inst.subj.end, inst.obj.end);
    int hi = std::max(inst.subj.start, inst.obj.start);
    return std::max(0, hi - lo);
}

inline int bin_axis_value(const Instance& inst, BinAxis axis) {
    switch (axis) {
        case BinAxis::sent_len: return inst.n();
        case BinAxis::pair_dist: return pair_token_distance(inst);
        case BinAxis::n_entities:
            if (!inst.n_entities)
                throw std::runtime_error("axis n_entities needs all-pairs metadata (instance " +
                                         inst.id + ")");
            return *inst.n_entities;
        case BinAxis::n_between:
            if (!inst.n_between)
                throw std::runtime_error("axis n_between needs all-pairs metadata (instance " +
                                         inst.id + ")");
            return *inst.n_between;
    }
    return 0;
}

struct BinReport {
    int lo = 0;
    int hi = 0; // inclusive upper edge
    int count = 0;
    MetricsReport metrics;
};

// Bin b covers [b*size, (b+1)*size); empty bins are omitted.
inline std::vector<BinReport> robustness_bins(const std::vector<Instance>& instances,
                                              const std::vector<std::string>& preds,
                                              const std::vector<std::string>& golds,
                                              BinAxis axis, int bin_size) {
    if (instances.size() != preds.size() || preds.size() != golds.size())
        throw std::runtime_error("robustness_bins: length mismatch");
    if (bin_size <= 0) throw std::runtime_error("robustness_bins: bin size must be > 0");
    std::map<int, std::vector<size_t>> groups;
    for (size_t i = 0; i < instances.size(); ++i)
        groups[bin_axis_value(instances[i], axis) / bin_size].push_back(i);
    std::vector<BinReport> out;
    for (const auto& [b, members] : groups) {
        BinReport br;
        br.lo = b * bin_size;
        br.hi = (b + 1) * bin_size - 1;
        br.count = static_cast<int>(members.size());
        std::vector<std::string> bp, bg;
        for (size_t i : members) {
            bp.push_back(preds[i]);
            bg.push_back(golds[i]);
        }
        br.metrics = micro_prf(bp, bg, kNoRelation);
        out.push_back(std::move(br));
    }
    return out;
}

inline void write_bin_tsv(const std::vector<BinReport>& bins, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write bin report: " + path);
    out << "bin_lo\tbin_hi\tcount\tprecision\trecall\tf1\n";
    char buf[128];
    for (const auto& b : bins) {
        std::snprintf(buf, sizeof buf, "%d\t%d\t%d\t%.6f\t%.6f\t%.6f\n", b.lo, b.hi,
                      b.count, b.metrics.precision, b.metrics.recall, b.metrics.f1);
        out << buf;
    }
}

// ------------------------------------------------------------------ heatmap

enum class HeatFormat { csv, html };

namespace detail {

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += "\"\"";
        q += c;
    }
    q += "\"";
    return q;
}

inline std::string token_marker(const Prediction& p, int i) {
    if (p.subj.contains(i)) return "subj";
    if (p.obj.contains(i)) return "obj";
    return "";
}

} // namespace detail

// One row per (instance, query pair); cell intensity is round(100*alpha) in
// the HTML rendering, the CSV carries raw weights.
inline void attention_heatmap(const PredictionReport& report,
                              const std::vector<std::string>& ids,
                              const std::string& out_path, HeatFormat format) {
    std::vector<const Prediction*> picked;
    for (const auto& id : ids) {
        const Prediction* found = nullptr;
        for (const auto& p : report.items)
            if (p.id == id) {
                found = &p;
                break;
            }
        if (!found) throw std::runtime_error("attention_heatmap: unknown instance id '" + id + "'");
        picked.push_back(found);
    }
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write heatmap: " + out_path);
    char buf[64];
    if (format == HeatFormat::csv) {
        out << "id,gold,pred,token_index,token,marker,alpha\n";
        for (const Prediction* p : picked) {
            for (size_t i = 0; i < p->tokens.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g", p->alpha[i]);
                out << detail::csv_quote(p->id) << "," << detail::csv_quote(p->gold) << ","
                    << detail::csv_quote(p->pred) << "," << i << ","
                    << detail::csv_quote(p->tokens[i]) << ","
                    << detail::token_marker(*p, static_cast<int>(i)) << "," << buf << "\n";
            }
        }
    } else {
        out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"></head><body>\n";
        for (const Prediction* p : picked) {
            out << "<p>" << p->id << " &mdash; gold: " << p->gold
                << ", predicted: " << p->pred << "</p>\n";
            out << "<table style=\"border-collapse:collapse;font-family:monospace\"><tr>\n";
            for (size_t i = 0; i < p->tokens.size(); ++i) {
                int intensity = static_cast<int>(std::lround(100.0 * p->alpha[i]));
                intensity = std::clamp(intensity, 0, 100);
                int chan = 255 - intensity * 255 / 100;
                out << "<td style=\"padding:4px;border:1px solid #ccc;background-color:rgb(255,"
                    << chan << "," << chan << ")\">" << p->tokens[i];
                std::string mark = detail::token_marker(*p, static_cast<int>(i));
                if (!mark.empty()) out << "<sub>" << mark << "</sub>";
                out << "</td>\n";
            }
            out << "</tr></table>\n";
        }
        out << "</body></html>\n";
    }
}

} // namespace relex
