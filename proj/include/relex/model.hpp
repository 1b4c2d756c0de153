// The relation-extraction network: embedding input layer, two stacked
// unidirectional LSTM layers, enriched attention (additive and dot-product
// variants), shortest-path LSTM and entity features, softmax output.
#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relex/corpus.hpp"
#include "relex/depfeat.hpp"
#include "relex/tape.hpp"

namespace relex {

enum class AttVariant { additive, dot };

inline const char* variant_name(AttVariant v) {
    return v == AttVariant::additive ? "additive" : "dot";
}

struct FeatureSet {
    bool dist = true;
    bool flag = true;
    bool sdp = true;
    bool types = true;
    bool wiki = true;

    bool any_local() const { return dist || flag; }
    bool any_global() const { return sdp || types || wiki; }
};

struct HyperParams {
    int lstm_hidden = 200;  // H
    int attn_hidden = 100;  // A
    int position_dim = 10;  // P
    int distance_dim = 10;  // D
    int sdp_hidden = 200;   // S
    int type_dim = 30;      // T
    int kq_dim = 200;       // d, key/query dim of dot attention
    int heads = 1;
    int word_dim = 300;
    int pos_dim = 30;
    int ner_dim = 30;
    int word_dim2 = 0;      // optional second pretrained channel
    int wiki_dim = 300;
    int max_pos = 50;
    int max_dist = 20;

    int input_dim() const { return word_dim + word_dim2 + pos_dim + ner_dim; }
    int local_dim(const FeatureSet& f) const {
        return (f.dist ? 2 * distance_dim : 0) + (f.flag ? 1 : 0);
    }
    int global_dim(const FeatureSet& f) const {
        return (f.sdp ? sdp_hidden : 0) + (f.types ? 2 * type_dim : 0) +
               (f.wiki ? 2 * wiki_dim : 0);
    }

    void validate() const {
        auto pos_check = [](int v, const char* name) {
            if (v <= 0)
                throw std::runtime_error(std::string("hyperparameter ") + name +
                                         " must be positive");
        };
        pos_check(lstm_hidden, "lstm_hidden_units");
        pos_check(attn_hidden, "attention_hidden_units");
        pos_check(position_dim, "position_emb_dim");
        pos_check(distance_dim, "distance_emb_dim");
        pos_check(sdp_hidden, "sp_lstm_hidden_units");
        pos_check(type_dim, "entity_type_emb_dim");
        pos_check(kq_dim, "kq_dim");
        pos_check(word_dim, "word_emb_dim");
        pos_check(pos_dim, "pos_emb_dim");
        pos_check(ner_dim, "ner_emb_dim");
        pos_check(max_pos, "max_pos");
        pos_check(max_dist, "max_dist");
        if (heads != 1) throw std::runtime_error("dot attention uses exactly 1 head");
    }
};

// ------------------------------------------------------------------- layers

struct LstmLayer {
    // gate order: input, forget, cell candidate, output
    Mat Wxi, Wxf, Wxg, Wxo;
    Mat Whi, Whf, Whg, Who;
    Mat bi, bf, bg, bo;
    int in = 0, hidden = 0;
};

inline void init_weight(Mat& w, int fan_in, Rng& rng) {
    double s = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
    for (double& x : w.a) x = rng.uniform(-s, s);
}

inline LstmLayer make_lstm_layer(int in, int hidden, Rng& rng) {
    LstmLayer l;
    l.in = in;
    l.hidden = hidden;
    for (Mat* w : {&l.Wxi, &l.Wxf, &l.Wxg, &l.Wxo}) {
        *w = Mat(hidden, in);
        init_weight(*w, in, rng);
    }
    for (Mat* w : {&l.Whi, &l.Whf, &l.Whg, &l.Who}) {
        *w = Mat(hidden, hidden);
        init_weight(*w, hidden, rng);
    }
    l.bi = Mat(hidden, 1);
    l.bf = Mat(hidden, 1);
    l.bg = Mat(hidden, 1);
    l.bo = Mat(hidden, 1);
    for (double& x : l.bf.a) x = 1.0; // forget-gate bias
    return l;
}

// Standard LSTM recurrence from zero initial state.
template <typename TapeType>
std::vector<Var> lstm_layer_forward(TapeType& t, std::span<const Var> inputs,
                                    const LstmLayer& l) {
    std::vector<Var> hs;
    hs.reserve(inputs.size());
    Var h = t.constant(Mat::zeros(l.hidden, 1));
    Var c = t.constant(Mat::zeros(l.hidden, 1));
    Var Wxi = t.param(l.Wxi), Wxf = t.param(l.Wxf), Wxg = t.param(l.Wxg), Wxo = t.param(l.Wxo);
    Var Whi = t.param(l.Whi), Whf = t.param(l.Whf), Whg = t.param(l.Whg), Who = t.param(l.Who);
    Var bi = t.param(l.bi), bf = t.param(l.bf), bg = t.param(l.bg), bo = t.param(l.bo);
    for (Var x : inputs) {
        Var i = t.sigmoid(t.add(t.add(t.matmul(Wxi, x), t.matmul(Whi, h)), bi));
        Var f = t.sigmoid(t.add(t.add(t.matmul(Wxf, x), t.matmul(Whf, h)), bf));
        Var g = t.tanh(t.add(t.add(t.matmul(Wxg, x), t.matmul(Whg, h)), bg));
        Var o = t.sigmoid(t.add(t.add(t.matmul(Wxo, x), t.matmul(Who, h)), bo));
        c = t.add(t.mul(f, c), t.mul(i, g));
        h = t.mul(o, t.tanh(c));
        hs.push_back(h);
    }
    return hs;
}

struct SentenceEncoding {
    std::vector<Var> h; // top-layer hidden state per token
    Var q;              // last hidden state, q == h.back()
};

template <typename TapeType>
SentenceEncoding lstm_forward(TapeType& t, std::span<const Var> inputs,
                              const LstmLayer& l1, const LstmLayer& l2) {
    SentenceEncoding enc;
    auto h1 = lstm_layer_forward(t, inputs, l1);
    enc.h = lstm_layer_forward(t, h1, l2);
    enc.q = enc.h.back();
    return enc;
}

// Independent single-layer LSTM over the shortest-path tokens' word
// embeddings; returns the final hidden state.
template <typename TapeType>
Var encode_sdp(TapeType& t, std::span<const int> path_word_rows, const Mat& word_table,
               const LstmLayer& sdp) {
    if (path_word_rows.empty())
        throw std::runtime_error("encode_sdp: empty shortest dependency path");
    Var table = t.param(word_table);
    std::vector<Var> xs;
    xs.reserve(path_word_rows.size());
    for (int row : path_word_rows) xs.push_back(t.row_lookup(table, row));
    auto hs = lstm_layer_forward(t, xs, sdp);
    return hs.back();
}

// Fixed concatenation order [s; t1; t2; e1; e2] over whichever parts are
// enabled; invalid Var when none are.
template <typename TapeType>
Var build_global_feature(TapeType& t, std::span<const Var> parts) {
    if (parts.empty()) return Var{};
    if (parts.size() == 1) return parts[0];
    return t.concat_rows(parts);
}

// Attention weights on plain values: softmax with max subtraction.
inline std::vector<double> attention_weights(const std::vector<double>& scores) {
    for (double e : scores)
        if (!std::isfinite(e)) throw std::runtime_error("attention_weights: non-finite score");
    return stable_softmax(scores);
}

struct AdditiveAttParams {
    Mat v;  // A x 1
    Mat Wh; // A x H
    Mat Wq; // A x H
    Mat Ws; // A x P
    Mat Wo; // A x P
    Mat Wl; // A x L, absent when L == 0
    Mat Wg; // A x G, absent when G == 0
};

struct DotAttParams {
    Mat WQ; // d x H
    Mat WK; // d x H
    Mat WV; // H x H
};

struct AttentionOutput {
    Var scores; // e, n x 1
    Var alpha;  // n x 1
    Var pooled; // z
    std::vector<Var> q_i, k_i, v_i; // dot variant projections
};

// e_i = v^T tanh(Wh h_i + Wq q + Ws ps_i + Wo po_i + Wl l_i + Wg g)
template <typename TapeType>
AttentionOutput additive_attention(TapeType& t, const SentenceEncoding& enc,
                                   std::span<const Var> local,
                                   std::span<const Var> pos_subj,
                                   std::span<const Var> pos_obj, Var global,
                                   const AdditiveAttParams& p) {
    size_t n = enc.h.size();
    Var v = t.param(p.v);
    Var Wh = t.param(p.Wh), Wq = t.param(p.Wq), Ws = t.param(p.Ws), Wo = t.param(p.Wo);
    Var shared = t.matmul(Wq, enc.q);
    if (global.valid()) shared = t.add(shared, t.matmul(t.param(p.Wg), global));
    Var Wl{};
    if (!local.empty()) Wl = t.param(p.Wl);
    std::vector<Var> es;
    es.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        Var u = t.add(t.matmul(Wh, enc.h[i]), shared);
        u = t.add(u, t.matmul(Ws, pos_subj[i]));
        u = t.add(u, t.matmul(Wo, pos_obj[i]));
        if (!local.empty()) u = t.add(u, t.matmul(Wl, local[i]));
        es.push_back(t.dot(v, t.tanh(u)));
    }
    AttentionOutput out;
    out.scores = t.concat_rows(es);
    out.alpha = t.softmax(out.scores);
    out.pooled = t.matmul(t.concat_cols(enc.h), out.alpha);
    return out;
}

// e_i = (q_i . k_i + l_i . l_i + g . g) / sqrt(d), z = sum_i alpha_i v_i
template <typename TapeType>
AttentionOutput dot_attention(TapeType& t, const SentenceEncoding& enc,
                              std::span<const Var> local, Var global,
                              const DotAttParams& p, int d) {
    size_t n = enc.h.size();
    Var WQ = t.param(p.WQ), WK = t.param(p.WK), WV = t.param(p.WV);
    AttentionOutput out;
    Var gg{};
    if (global.valid()) gg = t.dot(global, global);
    std::vector<Var> es;
    es.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        Var qi = t.matmul(WQ, enc.h[i]);
        Var ki = t.matmul(WK, enc.h[i]);
        Var vi = t.matmul(WV, enc.h[i]);
        out.q_i.push_back(qi);
        out.k_i.push_back(ki);
        out.v_i.push_back(vi);
        Var e = t.dot(qi, ki);
        if (!local.empty()) e = t.add(e, t.dot(local[i], local[i]));
        if (gg.valid()) e = t.add(e, gg);
        es.push_back(t.scale(e, 1.0 / std::sqrt(static_cast<double>(d))));
    }
    out.scores = t.concat_rows(es);
    out.alpha = t.softmax(out.scores);
    out.pooled = t.matmul(t.concat_cols(out.v_i), out.alpha);
    return out;
}

// -------------------------------------------------------------------- model

struct ModelParameters {
    Mat word_table;
    Mat word2_table; // optional second channel, never updated
    Mat pos_table;
    Mat ner_table;
    Mat position_table; // (2*max_pos+1) x P, shared by p^s and p^o
    Mat distance_table; // (max_dist+2) x D, shared by d^e1 and d^e2
    Mat type_table;     // |types| x T
    LstmLayer lstm1, lstm2, sdp;
    AdditiveAttParams att;
    DotAttParams dot;
    Mat Wout, bout;
};

struct ForwardOptions {
    bool train = false;
    double dropout = 0.5;
    const std::vector<int>* word_override = nullptr; // after word dropout
    const EntityKB* kb = nullptr;
    int gold = -1; // label index; -1 skips the loss node
};

struct ForwardResult {
    Var loss{};
    Var scores{};
    Var alpha{};
    Var pooled{};
    Var probs{};
    std::vector<double> prob_values;
    std::vector<double> alpha_values;
    int pred = -1;
};

class Model {
public:
    HyperParams hp;
    AttVariant variant = AttVariant::additive;
    FeatureSet feats;
    DistanceMode dist_mode = DistanceMode::min_over_span;
    Vocabulary words;
    TagVocab pos_tags, ner_tags, types, labels;
    ModelParameters P;

    Model() = default;

    Model(HyperParams hp_, AttVariant variant_, FeatureSet feats_, Vocabulary words_,
          TagVocab pos_, TagVocab ner_, TagVocab types_, TagVocab labels_, uint64_t seed,
          const Mat* pretrained_words = nullptr, const Mat* second_channel = nullptr)
        : hp(hp_), variant(variant_), feats(feats_), words(std::move(words_)),
          pos_tags(std::move(pos_)), ner_tags(std::move(ner_)), types(std::move(types_)),
          labels(std::move(labels_)) {
        hp.validate();
        if (labels.size() == 0) throw std::runtime_error("model: empty label inventory");
        Rng rng(mix_seed(seed, 0x90de1));
        auto emb = [&](int rows, int dim) {
            Mat m(rows, dim);
            for (double& x : m.a) x = rng.uniform(-0.01, 0.01);
            return m;
        };
        if (pretrained_words) {
            if (pretrained_words->rows != words.size() || pretrained_words->cols != hp.word_dim)
                throw std::runtime_error("model: pretrained word table shape " +
                                         pretrained_words->shape_str() + " does not match vocab " +
                                         std::to_string(words.size()) + "x" +
                                         std::to_string(hp.word_dim));
            P.word_table = *pretrained_words;
        } else {
            P.word_table = emb(words.size(), hp.word_dim);
            for (int c = 0; c < hp.word_dim; ++c) P.word_table(Vocabulary::kPad, c) = 0.0;
        }
        if (hp.word_dim2 > 0) {
            if (!second_channel || second_channel->rows != words.size() ||
                second_channel->cols != hp.word_dim2)
                throw std::runtime_error("model: second-channel table missing or mis-shaped");
            P.word2_table = *second_channel;
        }
        P.pos_table = emb(pos_tags.size(), hp.pos_dim);
        P.ner_table = emb(ner_tags.size(), hp.ner_dim);
        P.position_table = emb(2 * hp.max_pos + 1, hp.position_dim);
        P.distance_table = emb(hp.max_dist + 2, hp.distance_dim);
        P.type_table = emb(std::max(1, types.size()), hp.type_dim);
        P.lstm1 = make_lstm_layer(hp.input_dim(), hp.lstm_hidden, rng);
        P.lstm2 = make_lstm_layer(hp.lstm_hidden, hp.lstm_hidden, rng);
        P.sdp = make_lstm_layer(hp.word_dim + hp.word_dim2, hp.sdp_hidden, rng);
        int L = hp.local_dim(feats);
        int G = hp.global_dim(feats);
        P.att.v = Mat(hp.attn_hidden, 1);
        init_weight(P.att.v, hp.attn_hidden, rng);
        auto proj = [&](int r, int c) {
            Mat m(r, c);
            init_weight(m, c, rng);
            return m;
        };
        P.att.Wh = proj(hp.attn_hidden, hp.lstm_hidden);
        P.att.Wq = proj(hp.attn_hidden, hp.lstm_hidden);
        P.att.Ws = proj(hp.attn_hidden, hp.position_dim);
        P.att.Wo = proj(hp.attn_hidden, hp.position_dim);
        if (L > 0) P.att.Wl = proj(hp.attn_hidden, L);
        if (G > 0) P.att.Wg = proj(hp.attn_hidden, G);
        P.dot.WQ = proj(hp.kq_dim, hp.lstm_hidden);
        P.dot.WK = proj(hp.kq_dim, hp.lstm_hidden);
        P.dot.WV = proj(hp.lstm_hidden, hp.lstm_hidden);
        P.Wout = proj(labels.size(), hp.lstm_hidden);
        P.bout = Mat(labels.size(), 1);
    }

    // All trainable tensors, shared by the optimizer and checkpointing.
    std::vector<NamedParam> parameters() {
        std::vector<NamedParam> ps;
        auto addp = [&](const std::string& name, Mat& m, bool freeze0 = false) {
            if (!m.empty()) ps.push_back(NamedParam{name, &m, freeze0});
        };
        addp("emb.word", P.word_table, true);
        addp("emb.pos", P.pos_table);
        addp("emb.ner", P.ner_table);
        addp("emb.position", P.position_table);
        addp("emb.distance", P.distance_table);
        addp("emb.type", P.type_table);
        auto add_lstm = [&](const std::string& pre, LstmLayer& l) {
            addp(pre + ".Wxi", l.Wxi);
            addp(pre + ".Wxf", l.Wxf);
            addp(pre + ".Wxg", l.Wxg);
            addp(pre + ".Wxo", l.Wxo);
            addp(pre + ".Whi", l.Whi);
            addp(pre + ".Whf", l.Whf);
            addp(pre + ".Whg", l.Whg);
            addp(pre + ".Who", l.Who);
            addp(pre + ".bi", l.bi);
            addp(pre + ".bf", l.bf);
            addp(pre + ".bg", l.bg);
            addp(pre + ".bo", l.bo);
        };
        add_lstm("lstm1", P.lstm1);
        add_lstm("lstm2", P.lstm2);
        add_lstm("sdp", P.sdp);
        addp("att.v", P.att.v);
        addp("att.Wh", P.att.Wh);
        addp("att.Wq", P.att.Wq);
        addp("att.Ws", P.att.Ws);
        addp("att.Wo", P.att.Wo);
        addp("att.Wl", P.att.Wl);
        addp("att.Wg", P.att.Wg);
        addp("dot.WQ", P.dot.WQ);
        addp("dot.WK", P.dot.WK);
        addp("dot.WV", P.dot.WV);
        addp("out.W", P.Wout);
        addp("out.b", P.bout);
        return ps;
    }

    // Parameter groups that actually enter the graph for the configured
    // variant and feature set.
    std::vector<NamedParam> enabled_parameters() {
        std::vector<NamedParam> out;
        for (auto& p : parameters()) {
            bool additive = variant == AttVariant::additive;
            if (p.name.rfind("att.", 0) == 0 && !additive) continue;
            if (p.name.rfind("dot.", 0) == 0 && additive) continue;
            if (p.name == "emb.position" && !additive) continue;
            if (p.name == "emb.distance" && !feats.dist) continue;
            if (p.name.rfind("sdp.", 0) == 0 && !feats.sdp) continue;
            if (p.name == "emb.type" && !feats.types) continue;
            out.push_back(p);
        }
        return out;
    }

    std::vector<int> word_indices(const Instance& inst) const {
        std::vector<int> idx(inst.tokens.size());
        for (size_t i = 0; i < inst.tokens.size(); ++i)
            idx[i] = words.lookup(inst.tokens[i].form);
        return idx;
    }

    int gold_index(const Instance& inst) const {
        if (!inst.relation)
            throw std::runtime_error("instance " + inst.id + " has no gold relation");
        return labels.index(*inst.relation);
    }

    // Per-token [word; (word2); pos; ner] embedding concatenation.
    template <typename TapeType>
    std::vector<Var> embed_tokens(TapeType& t, const Instance& inst,
                                  const std::vector<int>& word_idx) const {
        Var wt = t.param(P.word_table);
        Var w2 = hp.word_dim2 > 0 ? t.param(P.word2_table) : Var{};
        Var pt = t.param(P.pos_table);
        Var nt = t.param(P.ner_table);
        std::vector<Var> xs;
        xs.reserve(inst.tokens.size());
        for (size_t i = 0; i < inst.tokens.size(); ++i) {
            std::vector<Var> parts;
            parts.push_back(t.row_lookup(wt, word_idx[i]));
            if (w2.valid()) parts.push_back(t.row_lookup(w2, word_idx[i]));
            parts.push_back(t.row_lookup(pt, pos_tags.index(inst.tokens[i].pos)));
            parts.push_back(t.row_lookup(nt, ner_tags.index(inst.tokens[i].ner)));
            xs.push_back(t.concat_rows(parts));
        }
        return xs;
    }

    template <typename TapeType>
    ForwardResult forward(TapeType& t, const Instance& inst, const ForwardOptions& opt) const {
        validate_instance(inst);
        int n = inst.n();
        auto tree = inst.tree();
        std::vector<int> widx =
            opt.word_override ? *opt.word_override : word_indices(inst);
        if (static_cast<int>(widx.size()) != n)
            throw std::runtime_error("forward: word index override length mismatch");

        auto xs = embed_tokens(t, inst, widx);
        if (opt.train)
            for (auto& x : xs) x = t.dropout(x, opt.dropout);

        SentenceEncoding enc;
        if (opt.train) {
            // dropout on the stack input, between the layers, and on z below
            auto h1 = lstm_layer_forward(t, xs, P.lstm1);
            for (auto& h : h1) h = t.dropout(h, opt.dropout);
            enc.h = lstm_layer_forward(t, h1, P.lstm2);
            enc.q = enc.h.back();
        } else {
            enc = lstm_forward(t, xs, P.lstm1, P.lstm2);
        }

        LocalFeatures lf =
            assemble_local_features(tree, inst.subj, inst.obj, hp.max_pos, dist_mode);

        std::vector<Var> local;
        if (feats.any_local()) {
            Var dt = feats.dist ? t.param(P.distance_table) : Var{};
            for (int i = 0; i < n; ++i) {
                std::vector<Var> parts;
                if (feats.dist) {
                    parts.push_back(
                        t.row_lookup(dt, distance_bucket(lf.dist_subj[i], hp.max_dist)));
                    parts.push_back(
                        t.row_lookup(dt, distance_bucket(lf.dist_obj[i], hp.max_dist)));
                }
                if (feats.flag) {
                    Mat f(1, 1);
                    f.a[0] = lf.on_path[i];
                    parts.push_back(t.constant(std::move(f)));
                }
                local.push_back(parts.size() == 1 ? parts[0] : t.concat_rows(parts));
            }
        }

        std::vector<Var> gparts;
        if (feats.sdp) {
            auto path = shortest_dependency_path(tree, inst.subj, inst.obj);
            std::vector<int> rows;
            rows.reserve(path.size());
            for (int tok : path) rows.push_back(widx[tok]);
            if (hp.word_dim2 > 0) {
                // same word slot as the input layer: [word; word2] per token
                Var wt = t.param(P.word_table);
                Var w2 = t.param(P.word2_table);
                std::vector<Var> pxs;
                for (int row : rows) {
                    std::vector<Var> pp = {t.row_lookup(wt, row), t.row_lookup(w2, row)};
                    pxs.push_back(t.concat_rows(pp));
                }
                gparts.push_back(lstm_layer_forward(t, pxs, P.sdp).back());
            } else {
                gparts.push_back(encode_sdp(t, rows, P.word_table, P.sdp));
            }
        }
        if (feats.types) {
            Var tt = t.param(P.type_table);
            gparts.push_back(t.row_lookup(tt, types.index(inst.subj_type)));
            gparts.push_back(t.row_lookup(tt, types.index(inst.obj_type)));
        }
        if (feats.wiki) {
            if (!opt.kb)
                throw std::runtime_error("forward: wiki feature enabled but no entity KB given");
            auto [e1, e2] = link_entities(inst, *opt.kb);
            gparts.push_back(t.constant(std::move(e1)));
            gparts.push_back(t.constant(std::move(e2)));
        }
        Var g = build_global_feature(t, gparts);

        AttentionOutput att;
        if (variant == AttVariant::additive) {
            Var pt = t.param(P.position_table);
            std::vector<Var> ps, po;
            for (int i = 0; i < n; ++i) {
                ps.push_back(t.row_lookup(pt, lf.pos_subj[i] + hp.max_pos));
                po.push_back(t.row_lookup(pt, lf.pos_obj[i] + hp.max_pos));
            }
            att = additive_attention(t, enc, local, ps, po, g, P.att);
        } else {
            att = dot_attention(t, enc, local, g, P.dot, hp.kq_dim);
        }

        Var z = att.pooled;
        if (opt.train) z = t.dropout(z, opt.dropout);
        Var logits = t.add(t.matmul(t.param(P.Wout), z), t.param(P.bout));

        ForwardResult res;
        res.scores = att.scores;
        res.alpha = att.alpha;
        res.pooled = z;
        res.probs = t.softmax(logits);
        if (opt.gold >= 0) res.loss = t.cross_entropy(logits, opt.gold);
        res.prob_values = t.value(res.probs).a;
        res.alpha_values = t.value(res.alpha).a;
        res.pred = 0;
        for (size_t c = 1; c < res.prob_values.size(); ++c)
            if (res.prob_values[c] > res.prob_values[res.pred])
                res.pred = static_cast<int>(c);
        return res;
    }
};

} // namespace relex
