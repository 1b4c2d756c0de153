// Self-describing JSON checkpoint: hyperparameters, vocabularies and every
// tensor, version-tagged. Doubles round-trip exactly through the JSON layer.
#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "relex/model.hpp"

namespace relex {

inline constexpr const char* kCheckpointFormat = "relex-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json mat_to_json(const Mat& m) {
    return nlohmann::json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.a}};
}

inline Mat mat_from_json(const nlohmann::json& j, const std::string& name) {
    Mat m;
    m.rows = j.at("rows").get<int>();
    m.cols = j.at("cols").get<int>();
    m.a = j.at("data").get<std::vector<double>>();
    if (static_cast<int>(m.a.size()) != m.rows * m.cols)
        throw std::runtime_error("checkpoint: tensor '" + name + "' has " +
                                 std::to_string(m.a.size()) + " values for shape " +
                                 m.shape_str());
    return m;
}

} // namespace detail

inline nlohmann::json hyper_to_json(const HyperParams& hp) {
    nlohmann::json j;
    j["lstm_hidden_units"] = hp.lstm_hidden;
    j["attention_hidden_units"] = hp.attn_hidden;
    j["position_emb_dim"] = hp.position_dim;
    j["distance_emb_dim"] = hp.distance_dim;
    j["sp_lstm_hidden_units"] = hp.sdp_hidden;
    j["entity_type_emb_dim"] = hp.type_dim;
    j["kq_dim"] = hp.kq_dim;
    j["heads"] = hp.heads;
    j["word_emb_dim"] = hp.word_dim;
    j["pos_emb_dim"] = hp.pos_dim;
    j["ner_emb_dim"] = hp.ner_dim;
    j["word_emb_dim2"] = hp.word_dim2;
    j["wiki_emb_dim"] = hp.wiki_dim;
    j["max_pos"] = hp.max_pos;
    j["max_dist"] = hp.max_dist;
    return j;
}

inline HyperParams hyper_from_json(const nlohmann::json& j) {
    HyperParams hp;
    hp.lstm_hidden = j.at("lstm_hidden_units").get<int>();
    hp.attn_hidden = j.at("attention_hidden_units").get<int>();
    hp.position_dim = j.at("position_emb_dim").get<int>();
    hp.distance_dim = j.at("distance_emb_dim").get<int>();
    hp.sdp_hidden = j.at("sp_lstm_hidden_units").get<int>();
    hp.type_dim = j.at("entity_type_emb_dim").get<int>();
    hp.kq_dim = j.at("kq_dim").get<int>();
    hp.heads = j.at("heads").get<int>();
    hp.word_dim = j.at("word_emb_dim").get<int>();
    hp.pos_dim = j.at("pos_emb_dim").get<int>();
    hp.ner_dim = j.at("ner_emb_dim").get<int>();
    hp.word_dim2 = j.at("word_emb_dim2").get<int>();
    hp.wiki_dim = j.at("wiki_emb_dim").get<int>();
    hp.max_pos = j.at("max_pos").get<int>();
    hp.max_dist = j.at("max_dist").get<int>();
    return hp;
}

inline std::string features_to_string(const FeatureSet& f) {
    std::string s;
    auto app = [&](bool on, const char* name) {
        if (!on) return;
        if (!s.empty()) s += ",";
        s += name;
    };
    app(f.dist, "dist");
    app(f.flag, "flag");
    app(f.sdp, "sdp");
    app(f.types, "types");
    app(f.wiki, "wiki");
    return s;
}

inline FeatureSet features_from_string(const std::string& s) {
    FeatureSet f{false, false, false, false, false};
    if (s == "none" || s.empty()) return f;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t comma = s.find(',', pos);
        std::string item = s.substr(pos, comma == std::string::npos ? std::string::npos
                                                                    : comma - pos);
        if (item == "dist") f.dist = true;
        else if (item == "flag") f.flag = true;
        else if (item == "sdp") f.sdp = true;
        else if (item == "types") f.types = true;
        else if (item == "wiki") f.wiki = true;
        else if (!item.empty())
            throw std::runtime_error("unknown feature '" + item +
                                     "' (expected dist,flag,sdp,types,wiki)");
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return f;
}

inline void save_model(Model& model, const std::string& path) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["hyper"] = hyper_to_json(model.hp);
    j["variant"] = variant_name(model.variant);
    j["features"] = features_to_string(model.feats);
    j["distance_mode"] =
        model.dist_mode == DistanceMode::min_over_span ? "min_over_span" : "head_based";
    j["word_forms"] = model.words.forms();
    j["pos_tags"] = model.pos_tags.tags();
    j["ner_tags"] = model.ner_tags.tags();
    j["types"] = model.types.tags();
    j["labels"] = model.labels.tags();
    nlohmann::json tensors;
    for (const auto& p : model.parameters()) tensors[p.name] = detail::mat_to_json(*p.value);
    if (!model.P.word2_table.empty())
        tensors["emb.word2"] = detail::mat_to_json(model.P.word2_table);
    j["tensors"] = std::move(tensors);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump();
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("checkpoint " + path + " is not valid JSON: " + e.what());
    }
    if (!j.contains("format") || j.at("format") != kCheckpointFormat)
        throw std::runtime_error("checkpoint " + path + " has unknown format tag");
    if (j.at("version").get<int>() != kCheckpointVersion)
        throw std::runtime_error("checkpoint " + path + " has unsupported version " +
                                 std::to_string(j.at("version").get<int>()));

    HyperParams hp = hyper_from_json(j.at("hyper"));
    std::string var = j.at("variant").get<std::string>();
    AttVariant variant = var == "dot" ? AttVariant::dot : AttVariant::additive;
    FeatureSet feats = features_from_string(j.at("features").get<std::string>());

    Vocabulary words;
    auto forms = j.at("word_forms").get<std::vector<std::string>>();
    for (size_t i = 2; i < forms.size(); ++i) words.add(forms[i]);
    auto load_tags = [&](const char* key) {
        TagVocab v;
        for (const auto& t : j.at(key).get<std::vector<std::string>>()) v.add(t);
        return v;
    };
    Mat second;
    if (hp.word_dim2 > 0) second = Mat(static_cast<int>(forms.size()), hp.word_dim2);
    Model m(hp, variant, feats, std::move(words), load_tags("pos_tags"),
            load_tags("ner_tags"), load_tags("types"), load_tags("labels"), 0,
            nullptr, hp.word_dim2 > 0 ? &second : nullptr);
    m.dist_mode = j.value("distance_mode", "min_over_span") == "head_based"
                      ? DistanceMode::head_based
                      : DistanceMode::min_over_span;

    const auto& tensors = j.at("tensors");
    for (const auto& p : m.parameters()) {
        if (!tensors.contains(p.name))
            throw std::runtime_error("checkpoint " + path + " lacks tensor '" + p.name + "'");
        Mat loaded = detail::mat_from_json(tensors.at(p.name), p.name);
        if (!loaded.same_shape(*p.value))
            throw std::runtime_error("checkpoint " + path + ": tensor '" + p.name +
                                     "' has shape " + loaded.shape_str() + ", expected " +
                                     p.value->shape_str());
        *p.value = std::move(loaded);
    }
    if (tensors.contains("emb.word2"))
        m.P.word2_table = detail::mat_from_json(tensors.at("emb.word2"), "emb.word2");
    return m;
}

} // namespace relex
