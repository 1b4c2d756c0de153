// Command-line wiring: flat key=value configuration with flag overrides,
// and the prepare/train/eval/predict/analyze/gradcheck commands.
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "relex/checkpoint.hpp"
#include "relex/eval.hpp"
#include "relex/gradcheck.hpp"
#include "relex/train.hpp"

namespace relex {

enum class Command { prepare, train, eval, predict, analyze, gradcheck };

inline Command parse_command(const std::string& s) {
    if (s == "prepare") return Command::prepare;
    if (s == "train") return Command::train;
    if (s == "eval") return Command::eval;
    if (s == "predict") return Command::predict;
    if (s == "analyze") return Command::analyze;
    if (s == "gradcheck") return Command::gradcheck;
    throw std::runtime_error("unknown command '" + s +
                             "' (expected prepare|train|eval|predict|analyze|gradcheck)");
}

inline const char* command_name(Command c) {
    switch (c) {
        case Command::prepare: return "prepare";
        case Command::train: return "train";
        case Command::eval: return "eval";
        case Command::predict: return "predict";
        case Command::analyze: return "analyze";
        case Command::gradcheck: return "gradcheck";
    }
    return "?";
}

struct RunConfig {
    Command command = Command::gradcheck;

    // paths
    std::string train_path, dev_path, test_path, input_path;
    std::string vectors_path, vectors2_path, kb_path, type_map_path;
    std::string checkpoint_path, out_dir;
    std::string format = "pairified"; // or all-pairs

    TrainConfig tc;
    HyperParams hp;
    AttVariant variant = AttVariant::additive;
    FeatureSet feats;
    DistanceMode dist_mode = DistanceMode::min_over_span;
    int lstm_layers = 2;
    int sp_lstm_layers = 1;
    int runs = 1;
    int min_freq = 1;

    // synthetic generation (prepare)
    int synth_instances = 0;
    int synth_dev_instances = 0;
    int synth_relations = 4;
    int synth_entities = 4;
    int synth_entity_pool = 200;
    int synth_nil_keep = 100; // % of nil pairs kept in the generated train split
    double synth_vector_scale = 1.5;

    // analysis
    std::string axis;
    int bin_size = 0; // 0 = axis default
    std::string heatmap_ids;
    std::string heatmap_format = "html";
    bool dump_features = false;

    int gradcheck_models = 5;
    double gradcheck_eps = 1e-4;
};

namespace detail {

inline int to_int(const std::string& v, const std::string& key) {
    try {
        size_t pos;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

inline double to_double(const std::string& v, const std::string& key) {
    try {
        size_t pos;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': expected number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config key '" + key + "': expected boolean, got '" + v + "'");
}

} // namespace detail

// Key registry shared by the config file and flag overrides; flags win.
// Names follow the conventional hyperparameter naming used in the README.
inline void apply_config_key(RunConfig& c, const std::string& key, const std::string& value) {
    using detail::to_bool;
    using detail::to_double;
    using detail::to_int;
    static const std::set<std::string> path_keys = {
        "train", "dev", "test", "input", "vectors", "vectors2",
        "kb", "type_map", "checkpoint", "out"};
    if (path_keys.count(key)) {
        if (key == "train") c.train_path = value;
        else if (key == "dev") c.dev_path = value;
        else if (key == "test") c.test_path = value;
        else if (key == "input") c.input_path = value;
        else if (key == "vectors") c.vectors_path = value;
        else if (key == "vectors2") c.vectors2_path = value;
        else if (key == "kb") c.kb_path = value;
        else if (key == "type_map") c.type_map_path = value;
        else if (key == "checkpoint") c.checkpoint_path = value;
        else c.out_dir = value;
        return;
    }
    if (key == "format") {
        if (value != "pairified" && value != "all-pairs")
            throw std::runtime_error("config key 'format': expected pairified|all-pairs");
        c.format = value;
    } else if (key == "batch_size") c.tc.batch_size = to_int(value, key);
    else if (key == "lr0") c.tc.lr0 = to_double(value, key);
    else if (key == "decay") c.tc.decay = to_double(value, key);
    else if (key == "clip") c.tc.clip = to_double(value, key);
    else if (key == "dropout") c.tc.dropout = to_double(value, key);
    else if (key == "word_dropout") c.tc.word_dropout = to_double(value, key);
    else if (key == "max_epochs") c.tc.max_epochs = to_int(value, key);
    else if (key == "seed") c.tc.seed = static_cast<uint64_t>(std::stoull(value));
    else if (key == "patience") c.tc.patience = to_int(value, key);
    else if (key == "variant") {
        if (value == "additive") c.variant = AttVariant::additive;
        else if (value == "dot") c.variant = AttVariant::dot;
        else throw std::runtime_error("config key 'variant': expected additive|dot");
    } else if (key == "features") c.feats = features_from_string(value);
    else if (key == "distance_mode") {
        if (value == "min_over_span") c.dist_mode = DistanceMode::min_over_span;
        else if (value == "head_based") c.dist_mode = DistanceMode::head_based;
        else throw std::runtime_error("config key 'distance_mode': expected min_over_span|head_based");
    } else if (key == "runs") c.runs = to_int(value, key);
    else if (key == "min_freq") c.min_freq = to_int(value, key);
    else if (key == "word_emb_dim") c.hp.word_dim = to_int(value, key);
    else if (key == "word_emb_dim2") c.hp.word_dim2 = to_int(value, key);
    else if (key == "pos_emb_dim") c.hp.pos_dim = to_int(value, key);
    else if (key == "ner_emb_dim") c.hp.ner_dim = to_int(value, key);
    else if (key == "position_emb_dim") c.hp.position_dim = to_int(value, key);
    else if (key == "distance_emb_dim") c.hp.distance_dim = to_int(value, key);
    else if (key == "lstm_hidden_units") c.hp.lstm_hidden = to_int(value, key);
    else if (key == "lstm_layers") c.lstm_layers = to_int(value, key);
    else if (key == "attention_hidden_units") c.hp.attn_hidden = to_int(value, key);
    else if (key == "attention_heads") c.hp.heads = to_int(value, key);
    else if (key == "sp_lstm_hidden_units") c.hp.sdp_hidden = to_int(value, key);
    else if (key == "sp_lstm_layers") c.sp_lstm_layers = to_int(value, key);
    else if (key == "entity_type_emb_dim") c.hp.type_dim = to_int(value, key);
    else if (key == "wiki_emb_dim") c.hp.wiki_dim = to_int(value, key);
    else if (key == "kq_dim") c.hp.kq_dim = to_int(value, key);
    else if (key == "max_pos") c.hp.max_pos = to_int(value, key);
    else if (key == "max_dist") c.hp.max_dist = to_int(value, key);
    else if (key == "synth_instances") c.synth_instances = to_int(value, key);
    else if (key == "synth_dev_instances") c.synth_dev_instances = to_int(value, key);
    else if (key == "synth_relations") c.synth_relations = to_int(value, key);
    else if (key == "synth_entities") c.synth_entities = to_int(value, key);
    else if (key == "synth_entity_pool") c.synth_entity_pool = to_int(value, key);
    else if (key == "synth_nil_keep") c.synth_nil_keep = to_int(value, key);
    else if (key == "synth_vector_scale") c.synth_vector_scale = to_double(value, key);
    else if (key == "axis") c.axis = value;
    else if (key == "bin_size") c.bin_size = to_int(value, key);
    else if (key == "heatmap_ids") c.heatmap_ids = value;
    else if (key == "heatmap_format") {
        if (value != "html" && value != "csv")
            throw std::runtime_error("config key 'heatmap_format': expected html|csv");
        c.heatmap_format = value;
    } else if (key == "dump_features") c.dump_features = to_bool(value, key);
    else if (key == "gradcheck_models") c.gradcheck_models = to_int(value, key);
    else if (key == "gradcheck_eps") c.gradcheck_eps = to_double(value, key);
    else throw std::runtime_error("unknown key '" + key + "'");
}

// File values first, flag overrides second. Unset values keep the
// stock defaults baked into the structs.
inline RunConfig parse_config(Command command, const std::string& config_path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig c;
    c.command = command;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot read config file: " + config_path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error(config_path + ":" + std::to_string(lineno) +
                                         ": expected key=value");
            std::string key = line.substr(0, eq);
            std::string value = line.substr(eq + 1);
            auto strip = [](std::string& s) {
                while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
                while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
                    s.pop_back();
            };
            strip(key);
            strip(value);
            apply_config_key(c, key, value);
        }
    }
    for (const auto& [key, value] : overrides) apply_config_key(c, key, value);

    if (c.lstm_layers != 2)
        throw std::runtime_error("lstm_layers is fixed at 2");
    if (c.sp_lstm_layers != 1)
        throw std::runtime_error("sp_lstm_layers is fixed at 1");
    c.hp.validate();
    c.tc.validate();
    if (c.runs < 1) throw std::runtime_error("runs must be >= 1");

    // per-command required paths
    auto need = [&](const std::string& path, const char* key) {
        if (path.empty())
            throw std::runtime_error(std::string("command '") + command_name(command) +
                                     "' requires --" + key);
    };
    switch (command) {
        case Command::prepare:
            need(c.out_dir, "out");
            if (c.synth_instances <= 0) need(c.input_path, "input");
            break;
        case Command::train:
            need(c.train_path, "train");
            need(c.dev_path, "dev");
            need(c.out_dir, "out");
            if (c.feats.wiki) {
                need(c.kb_path, "kb");
                need(c.type_map_path, "type_map");
            }
            break;
        case Command::eval:
        case Command::predict:
            need(c.checkpoint_path, "checkpoint");
            need(c.input_path, "input");
            need(c.out_dir, "out");
            break;
        case Command::analyze:
            need(c.input_path, "input");
            need(c.out_dir, "out");
            if (!c.dump_features) need(c.checkpoint_path, "checkpoint");
            break;
        case Command::gradcheck:
            break;
    }
    return c;
}

inline std::string resolved_config_text(const RunConfig& c) {
    std::ostringstream out;
    out << "command=" << command_name(c.command) << "\n";
    auto put = [&](const char* k, const auto& v) { out << k << "=" << v << "\n"; };
    if (!c.train_path.empty()) put("train", c.train_path);
    if (!c.dev_path.empty()) put("dev", c.dev_path);
    if (!c.test_path.empty()) put("test", c.test_path);
    if (!c.input_path.empty()) put("input", c.input_path);
    if (!c.vectors_path.empty()) put("vectors", c.vectors_path);
    if (!c.vectors2_path.empty()) put("vectors2", c.vectors2_path);
    if (!c.kb_path.empty()) put("kb", c.kb_path);
    if (!c.type_map_path.empty()) put("type_map", c.type_map_path);
    if (!c.checkpoint_path.empty()) put("checkpoint", c.checkpoint_path);
    if (!c.out_dir.empty()) put("out", c.out_dir);
    put("format", c.format);
    put("variant", variant_name(c.variant));
    put("features", features_to_string(c.feats).empty() ? "none" : features_to_string(c.feats));
    put("distance_mode",
        c.dist_mode == DistanceMode::min_over_span ? "min_over_span" : "head_based");
    put("batch_size", c.tc.batch_size);
    put("lr0", c.tc.lr0);
    put("decay", c.tc.decay);
    put("clip", c.tc.clip);
    put("dropout", c.tc.dropout);
    put("word_dropout", c.tc.word_dropout);
    put("max_epochs", c.tc.max_epochs);
    put("patience", c.tc.patience);
    put("seed", c.tc.seed);
    put("runs", c.runs);
    put("min_freq", c.min_freq);
    put("word_emb_dim", c.hp.word_dim);
    put("word_emb_dim2", c.hp.word_dim2);
    put("pos_emb_dim", c.hp.pos_dim);
    put("ner_emb_dim", c.hp.ner_dim);
    put("position_emb_dim", c.hp.position_dim);
    put("distance_emb_dim", c.hp.distance_dim);
    put("lstm_hidden_units", c.hp.lstm_hidden);
    put("lstm_layers", c.lstm_layers);
    put("attention_hidden_units", c.hp.attn_hidden);
    put("attention_heads", c.hp.heads);
    put("sp_lstm_hidden_units", c.hp.sdp_hidden);
    put("sp_lstm_layers", c.sp_lstm_layers);
    put("entity_type_emb_dim", c.hp.type_dim);
    put("wiki_emb_dim", c.hp.wiki_dim);
    put("kq_dim", c.hp.kq_dim);
    put("max_pos", c.hp.max_pos);
    put("max_dist", c.hp.max_dist);
    return out.str();
}

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

inline void write_resolved_config(const RunConfig& c) {
    if (c.out_dir.empty()) return;
    std::filesystem::create_directories(c.out_dir);
    write_text((std::filesystem::path(c.out_dir) / "config.resolved").string(),
               resolved_config_text(c));
}

inline nlohmann::json stats_json(const CorpusStats& s) {
    return nlohmann::json{{"count", s.count},
                          {"n_relations", s.n_relations},
                          {"pct_nil", s.pct_nil},
                          {"avg_length", s.avg_length}};
}

inline CorpusFormat corpus_format(const RunConfig& c) {
    return c.format == "all-pairs" ? CorpusFormat::all_pairs_sentence
                                   : CorpusFormat::pairified;
}

inline void write_predictions(const PredictionReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& p : rep.items) {
        nlohmann::json j;
        j["id"] = p.id;
        if (!p.gold.empty()) j["gold"] = p.gold;
        j["pred"] = p.pred;
        j["probs"] = p.probs;
        j["alpha"] = p.alpha;
        out << j.dump() << "\n";
    }
}

// Writes a pretrained-style vector file covering the corpus vocabulary with
// seeded values at a word-embedding-like scale.
inline void write_synthetic_vectors(const std::vector<Instance>& insts, int dim,
                                    double scale, uint64_t seed, const std::string& path) {
    std::set<std::string> forms;
    for (const auto& inst : insts)
        for (const auto& t : inst.tokens) forms.insert(t.form);
    Rng rng(mix_seed(seed, 0x7ec));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << forms.size() << " " << dim << "\n";
    char buf[32];
    for (const auto& f : forms) {
        out << f;
        for (int i = 0; i < dim; ++i) {
            std::snprintf(buf, sizeof buf, " %.6f", rng.uniform(-scale, scale));
            out << buf;
        }
        out << "\n";
    }
}

struct LoadedModel {
    Model model;
    EntityKB kb;
    bool has_kb = false;
};

inline LoadedModel load_model_with_kb(const RunConfig& c) {
    LoadedModel lm{load_model(c.checkpoint_path), EntityKB{}, false};
    if (lm.model.feats.wiki) {
        if (c.kb_path.empty() || c.type_map_path.empty())
            throw std::runtime_error(
                "checkpoint uses the wiki feature: --kb and --type_map are required");
        lm.kb = EntityKB::from_files(c.kb_path, c.type_map_path, lm.model.hp.wiki_dim);
        lm.has_kb = true;
    }
    return lm;
}

inline int cmd_prepare(const RunConfig& c) {
    namespace fs = std::filesystem;
    fs::create_directories(c.out_dir);
    std::vector<Instance> train;
    if (c.synth_instances > 0) {
        if (c.synth_nil_keep < 0 || c.synth_nil_keep > 100)
            throw std::runtime_error("synth_nil_keep must lie in [0,100]");
        SynthConfig sc;
        sc.n_instances = c.synth_instances;
        sc.n_relations = c.synth_relations;
        sc.entities_per_sentence = c.synth_entities;
        sc.entity_pool = c.synth_entity_pool;
        sc.seed = c.tc.seed;
        train = generate_synthetic(sc);
        if (c.synth_nil_keep < 100) {
            // thin out nil pairs in the training split for class balance
            Rng sub(mix_seed(c.tc.seed, 0x5b));
            std::vector<Instance> kept;
            for (auto& inst : train) {
                if (inst.relation == kNoRelation &&
                    sub.uniform_int(0, 99) >= c.synth_nil_keep)
                    continue;
                kept.push_back(std::move(inst));
            }
            train = std::move(kept);
        }
        save_corpus(train, (fs::path(c.out_dir) / "synth_train.jsonl").string());
        if (c.synth_dev_instances > 0) {
            SynthConfig dc = sc;
            dc.n_instances = c.synth_dev_instances;
            dc.seed = mix_seed(c.tc.seed, 0xdeu);
            auto dev = generate_synthetic(dc);
            save_corpus(dev, (fs::path(c.out_dir) / "synth_dev.jsonl").string());
        }
        write_synthetic_vectors(train, c.hp.word_dim, c.synth_vector_scale, c.tc.seed,
                                (fs::path(c.out_dir) / "synth_vectors.txt").string());
    } else {
        train = load_corpus(c.input_path, corpus_format(c));
        save_corpus(train, (fs::path(c.out_dir) / "pairified.jsonl").string());
    }
    write_text((fs::path(c.out_dir) / "stats.json").string(),
               stats_json(corpus_stats(train)).dump());
    std::cout << "prepared " << train.size() << " instances\n";
    return 0;
}

inline Model build_model_for_training(const RunConfig& c, const std::vector<Instance>& train,
                                      uint64_t seed) {
    Vocabulary words = build_vocab(train, c.min_freq);
    auto inv = collect_inventories(train);
    const Mat* pre = nullptr;
    Mat word_table;
    if (!c.vectors_path.empty()) {
        EmbeddingTable t = load_pretrained_vectors(c.vectors_path, words, c.hp.word_dim, seed);
        word_table = std::move(t.rows);
        pre = &word_table;
    }
    const Mat* second = nullptr;
    Mat word2_table;
    if (!c.vectors2_path.empty()) {
        if (c.hp.word_dim2 <= 0)
            throw std::runtime_error("--vectors2 requires word_emb_dim2 > 0");
        EmbeddingTable t =
            load_pretrained_vectors(c.vectors2_path, words, c.hp.word_dim2, seed + 1);
        word2_table = std::move(t.rows);
        second = &word2_table;
    }
    Model m(c.hp, c.variant, c.feats, std::move(words), inv.pos, inv.ner, inv.types,
            inv.labels, seed, pre, second);
    m.dist_mode = c.dist_mode;
    return m;
}

inline int cmd_train(const RunConfig& c) {
    namespace fs = std::filesystem;
    fs::create_directories(c.out_dir);
    auto train = load_corpus(c.train_path, corpus_format(c));
    auto dev = load_corpus(c.dev_path, corpus_format(c));
    std::vector<Instance> test;
    if (!c.test_path.empty()) test = load_corpus(c.test_path, corpus_format(c));

    EntityKB kb;
    const EntityKB* kbp = nullptr;
    if (c.feats.wiki) {
        kb = EntityKB::from_files(c.kb_path, c.type_map_path, c.hp.wiki_dim);
        kbp = &kb;
    }

    auto run_one = [&](uint64_t seed, const std::string& dir) {
        fs::create_directories(dir);
        Model m = build_model_for_training(c, train, seed);
        TrainConfig tc = c.tc;
        tc.seed = seed;
        TrainLog log = train_loop(m, train, dev, tc, kbp);
        std::ofstream tl(fs::path(dir) / "trainlog.jsonl");
        for (const auto& e : log.epochs)
            tl << nlohmann::json{{"epoch", e.epoch},
                                 {"train_loss", e.train_loss},
                                 {"dev_f1", e.dev_f1},
                                 {"lr", e.lr}}
                      .dump()
               << "\n";
        save_model(m, (fs::path(dir) / "checkpoint.json").string());
        struct Result {
            TrainLog log;
            PredictionReport dev_rep, test_rep;
        } r;
        r.log = log;
        r.dev_rep = predict_corpus(m, dev, kbp);
        if (!test.empty()) r.test_rep = predict_corpus(m, test, kbp);
        return r;
    };

    nlohmann::json summary;
    if (c.runs == 1) {
        auto r = run_one(c.tc.seed, c.out_dir);
        auto dm = micro_prf(r.dev_rep.predicted_labels(), r.dev_rep.gold_labels(), kNoRelation);
        summary["dev"] = metrics_json(dm);
        summary["best_epoch"] = r.log.best_epoch;
        summary["best_dev_f1"] = r.log.best_dev_f1;
        if (!test.empty()) {
            auto tm = micro_prf(r.test_rep.predicted_labels(), r.test_rep.gold_labels(),
                                kNoRelation);
            summary["test"] = metrics_json(tm);
        }
        write_predictions(r.dev_rep, (fs::path(c.out_dir) / "dev_predictions.jsonl").string());
        std::cout << "dev F1 " << dm.f1 << "\n";
    } else {
        // the five-seed protocol: median-dev single model plus majority vote
        std::vector<PredictionReport> dev_reports, test_reports;
        std::vector<double> dev_f1;
        for (int r = 0; r < c.runs; ++r) {
            auto res = run_one(c.tc.seed + r,
                               (fs::path(c.out_dir) / ("run" + std::to_string(r))).string());
            auto dm =
                micro_prf(res.dev_rep.predicted_labels(), res.dev_rep.gold_labels(), kNoRelation);
            dev_f1.push_back(dm.f1);
            dev_reports.push_back(std::move(res.dev_rep));
            if (!test.empty()) test_reports.push_back(std::move(res.test_rep));
        }
        std::vector<int> order(c.runs);
        for (int i = 0; i < c.runs; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return dev_f1[a] < dev_f1[b]; });
        int median = order[c.runs / 2];
        summary["per_run_dev_f1"] = dev_f1;
        summary["median_run"] = median;
        auto mm = micro_prf(dev_reports[median].predicted_labels(),
                            dev_reports[median].gold_labels(), kNoRelation);
        summary["median_dev"] = metrics_json(mm);
        auto ens = ensemble_vote(dev_reports);
        summary["ensemble_dev"] =
            metrics_json(micro_prf(ens.predicted_labels(), ens.gold_labels(), kNoRelation));
        if (!test.empty()) {
            auto tm = micro_prf(test_reports[median].predicted_labels(),
                                test_reports[median].gold_labels(), kNoRelation);
            summary["median_test"] = metrics_json(tm);
            auto enst = ensemble_vote(test_reports);
            summary["ensemble_test"] =
                metrics_json(micro_prf(enst.predicted_labels(), enst.gold_labels(), kNoRelation));
        }
        // keep the median run's checkpoint at the top level for convenience
        fs::copy_file(fs::path(c.out_dir) / ("run" + std::to_string(median)) / "checkpoint.json",
                      fs::path(c.out_dir) / "checkpoint.json",
                      fs::copy_options::overwrite_existing);
        std::cout << "median dev F1 " << mm.f1 << "\n";
    }
    write_text((fs::path(c.out_dir) / "metrics.json").string(), summary.dump());
    return 0;
}

inline int cmd_eval(const RunConfig& c) {
    namespace fs = std::filesystem;
    fs::create_directories(c.out_dir);
    auto lm = load_model_with_kb(c);
    auto insts = load_corpus(c.input_path, corpus_format(c));
    auto rep = predict_corpus(lm.model, insts, lm.has_kb ? &lm.kb : nullptr);
    auto m = micro_prf(rep.predicted_labels(), rep.gold_labels(), kNoRelation);
    write_text((fs::path(c.out_dir) / "metrics.json").string(), metrics_json(m).dump());
    write_predictions(rep, (fs::path(c.out_dir) / "predictions.jsonl").string());
    std::cout << "P " << m.precision << " R " << m.recall << " F1 " << m.f1 << "\n";
    return 0;
}

inline int cmd_predict(const RunConfig& c) {
    namespace fs = std::filesystem;
    fs::create_directories(c.out_dir);
    auto lm = load_model_with_kb(c);
    auto insts = load_corpus(c.input_path, corpus_format(c));
    auto rep = predict_corpus(lm.model, insts, lm.has_kb ? &lm.kb : nullptr);
    write_predictions(rep, (fs::path(c.out_dir) / "predictions.jsonl").string());
    std::cout << "wrote " << rep.items.size() << " predictions\n";
    return 0;
}

inline int cmd_analyze(const RunConfig& c) {
    namespace fs = std::filesystem;
    fs::create_directories(c.out_dir);
    auto insts = load_corpus(c.input_path, corpus_format(c));
    bool did_something = false;

    if (c.dump_features) {
        std::ofstream out(fs::path(c.out_dir) / "features.tsv");
        out << "id\ttoken_index\ttoken\tdist_subj\tdist_obj\ton_path\tpos_subj\tpos_obj\n";
        for (const auto& inst : insts) {
            auto lf = assemble_local_features(inst.tree(), inst.subj, inst.obj,
                                              c.hp.max_pos, c.dist_mode);
            for (int i = 0; i < inst.n(); ++i)
                out << inst.id << "\t" << i << "\t" << inst.tokens[i].form << "\t"
                    << lf.dist_subj[i] << "\t" << lf.dist_obj[i] << "\t" << lf.on_path[i]
                    << "\t" << lf.pos_subj[i] << "\t" << lf.pos_obj[i] << "\n";
        }
        did_something = true;
    }

    if (!c.axis.empty() || !c.heatmap_ids.empty()) {
        auto lm = load_model_with_kb(c);
        auto rep = predict_corpus(lm.model, insts, lm.has_kb ? &lm.kb : nullptr);
        if (!c.axis.empty()) {
            BinAxis axis = parse_bin_axis(c.axis);
            int size = c.bin_size > 0 ? c.bin_size : default_bin_size(axis);
            auto bins = robustness_bins(insts, rep.predicted_labels(), rep.gold_labels(),
                                        axis, size);
            write_bin_tsv(bins,
                          (fs::path(c.out_dir) / ("bins_" + c.axis + ".tsv")).string());
            did_something = true;
        }
        if (!c.heatmap_ids.empty()) {
            std::vector<std::string> ids;
            size_t pos = 0;
            while (pos <= c.heatmap_ids.size()) {
                size_t comma = c.heatmap_ids.find(',', pos);
                std::string id = c.heatmap_ids.substr(
                    pos, comma == std::string::npos ? std::string::npos : comma - pos);
                if (!id.empty()) ids.push_back(id);
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
            HeatFormat fmt = c.heatmap_format == "csv" ? HeatFormat::csv : HeatFormat::html;
            attention_heatmap(rep, ids,
                              (fs::path(c.out_dir) /
                               ("heatmap." + c.heatmap_format))
                                  .string(),
                              fmt);
            did_something = true;
        }
    }
    if (!did_something)
        throw std::runtime_error(
            "analyze: nothing to do (use --dump-features, --axis or --heatmap_ids)");
    return 0;
}

inline int cmd_gradcheck(const RunConfig& c) {
    bool ok = true;
    for (AttVariant v : {AttVariant::additive, AttVariant::dot}) {
        auto sum = gradcheck_variant(v, c.gradcheck_models, c.tc.seed, c.gradcheck_eps);
        std::cout << variant_name(v) << " attention: max relative error "
                  << sum.max_rel_err << " over " << sum.models << " models";
        if (!sum.worst.empty()) std::cout << " (worst " << sum.worst << ")";
        std::cout << "\n";
        if (!(sum.max_rel_err < 1e-4)) ok = false;
    }
    if (!c.out_dir.empty()) write_resolved_config(c);
    return ok ? 0 : 1;
}

} // namespace detail

inline int run(const RunConfig& c) {
    if (c.command != Command::gradcheck) detail::write_resolved_config(c);
    switch (c.command) {
        case Command::prepare: return detail::cmd_prepare(c);
        case Command::train: return detail::cmd_train(c);
        case Command::eval: return detail::cmd_eval(c);
        case Command::predict: return detail::cmd_predict(c);
        case Command::analyze: return detail::cmd_analyze(c);
        case Command::gradcheck: return detail::cmd_gradcheck(c);
    }
    return 1;
}

} // namespace relex
