// Randomized tiny-model gradient checking shared by the CLI gradcheck
// command and the acceptance suite: both attention variants with every
// feature enabled, central differences over all enabled parameter groups.
#pragma once

#include <string>
#include <vector>

#include "relex/model.hpp"

namespace relex {

// Random rooted tree over n tokens (node labels shuffled).
inline DependencyTree random_dependency_tree(int n, Rng& rng) {
    std::vector<int> parent(n, -1);
    for (int i = 1; i < n; ++i) parent[i] = rng.uniform_int(0, i - 1);
    std::vector<int> label(n);
    for (int i = 0; i < n; ++i) label[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(label[i], label[rng.uniform_int(0, i)]);
    DependencyTree t;
    t.head.resize(n);
    for (int i = 0; i < n; ++i)
        t.head[label[i]] = parent[i] == -1 ? -1 : label[parent[i]];
    return t;
}

struct TinyGradSetup {
    Model model;
    Instance inst;
    EntityKB kb;
};

// Small random model + instance: n <= 6 tokens, hidden sizes <= 8. Weights
// and embeddings are drawn wide enough that every parameter group carries a
// healthy gradient; near-zero gradients sit in the floor of the relative
// error formula where finite differences only see truncation noise.
inline TinyGradSetup random_tiny_setup(AttVariant variant, uint64_t seed) {
    Rng rng(mix_seed(seed, 0x6c4d));

    HyperParams hp;
    hp.word_dim = rng.uniform_int(3, 4);
    hp.pos_dim = 2;
    hp.ner_dim = 2;
    hp.lstm_hidden = rng.uniform_int(3, 6);
    hp.attn_hidden = rng.uniform_int(2, 4);
    hp.position_dim = 2;
    hp.distance_dim = 2;
    hp.sdp_hidden = rng.uniform_int(2, 4);
    hp.type_dim = 2;
    hp.kq_dim = rng.uniform_int(2, 4);
    hp.wiki_dim = rng.uniform_int(2, 3);
    hp.max_pos = 6;
    hp.max_dist = 4;

    Vocabulary words;
    std::vector<std::string> forms = {"w0", "w1", "w2", "w3", "w4", "w5"};
    for (const auto& f : forms) words.add(f);
    TagVocab pos, ner, types, labels;
    pos.add("P0");
    pos.add("P1");
    ner.add("N0");
    ner.add("N1");
    types.add("TA");
    types.add("TB");
    labels.add(kNoRelation);
    labels.add("rA");
    labels.add("rB");

    FeatureSet all; // every feature enabled
    TinyGradSetup s{Model(hp, variant, all, words, pos, ner, types, labels,
                          mix_seed(seed, 0x7e)),
                    Instance{}, EntityKB{}};

    // widen the random weights so activations are not all near the
    // tanh/sigmoid fixed point and gradients stay clear of the floor
    for (auto& p : s.model.parameters())
        for (double& v : p.value->a) v += rng.uniform(-0.35, 0.35);
    // word rows feed both LSTMs; a data-like scale keeps the short SDP-LSTM
    // rollout, whose first step starts from zero state, off the floor
    for (int r = 1; r < s.model.P.word_table.rows; ++r)
        for (int c = 0; c < s.model.P.word_table.cols; ++c)
            s.model.P.word_table(r, c) = rng.uniform(-1.0, 1.0);
    for (Mat* w : {&s.model.P.sdp.Whi, &s.model.P.sdp.Whf, &s.model.P.sdp.Whg,
                   &s.model.P.sdp.Who})
        for (double& v : w->a) v += rng.uniform(-0.4, 0.4);

    int n = rng.uniform_int(4, 6);
    DependencyTree tree = random_dependency_tree(n, rng);
    s.inst.id = "grad" + std::to_string(seed);
    for (int i = 0; i < n; ++i)
        s.inst.tokens.push_back(Token{forms[rng.uniform_int(0, 5)],
                                      rng.bernoulli(0.5) ? "P0" : "P1",
                                      rng.bernoulli(0.5) ? "N0" : "N1"});
    s.inst.dep_head = tree.head;
    // pick spans whose dependency path has at least two edges so every SDP
    // recurrence weight sees a non-degenerate rollout
    int a = 0, b = 1;
    for (int tries = 0; tries < 64; ++tries) {
        a = rng.uniform_int(0, n - 2);
        b = rng.uniform_int(a + 1, n - 1);
        if (shortest_dependency_path(tree, Span{a, a + 1}, Span{b, b + 1}).size() >= 3)
            break;
    }
    s.inst.subj = Span{a, a + 1};
    s.inst.obj = Span{b, b + 1};
    s.inst.subj_type = "TA";
    s.inst.obj_type = "TB";
    s.inst.relation = rng.bernoulli(0.5) ? "rA" : "rB";

    s.kb.set_dim(hp.wiki_dim);
    for (const char* tp : {"TA", "TB"}) {
        Mat v(hp.wiki_dim, 1);
        for (double& x : v.a) x = rng.uniform(-0.5, 0.5);
        s.kb.add_vector(std::string("Page_") + tp, std::move(v));
        s.kb.set_type_page(tp, std::string("Page_") + tp);
    }
    return s;
}

struct GradCheckSummary {
    double max_rel_err = 0.0;
    std::string worst; // "variant/param[index] @model"
    int models = 0;
};

// Runs finite_diff_check over all enabled parameter groups of `models`
// random tiny models for one variant and keeps the worst relative error.
inline GradCheckSummary gradcheck_variant(AttVariant variant, int models, uint64_t seed,
                                          double eps = 1e-4) {
    GradCheckSummary sum;
    sum.models = models;
    for (int m = 0; m < models; ++m) {
        TinyGradSetup s = random_tiny_setup(variant, mix_seed(seed, 1000 + m));
        auto params = s.model.enabled_parameters();
        ForwardOptions opt;
        opt.kb = &s.kb;
        opt.gold = s.model.gold_index(s.inst);
        auto build = [&](auto& t) { return s.model.forward(t, s.inst, opt).loss; };
        GradCheckReport rep = finite_diff_check(build, params, eps);
        if (rep.max_rel_err > sum.max_rel_err) {
            sum.max_rel_err = rep.max_rel_err;
            sum.worst = std::string(variant_name(variant)) + "/" + rep.worst_param + "[" +
                        std::to_string(rep.worst_index) + "] @model" + std::to_string(m);
        }
    }
    return sum;
}

} // namespace relex
