// Corpus data model and ingestion: JSONL loading for pre-paired and
// sentence-level all-pairs records, vocabulary building, pretrained-vector
// files, the entity knowledge base with type fallback, corpus statistics and
// the synthetic multi-entity generator.
#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "relex/depfeat.hpp"
#include "relex/matrix.hpp"
#include "relex/rng.hpp"

namespace relex {

inline const std::string kNoRelation = "no_relation";
inline const std::string kInverseSuffix = "_inv";

struct Token {
    std::string form;
    std::string pos;
    std::string ner;
};

struct Instance {
    std::string id;
    std::vector<Token> tokens;
    std::vector<int> dep_head; // -1 marks the root
    Span subj;
    Span obj;
    std::string subj_type;
    std::string obj_type;
    std::optional<std::string> relation;
    std::optional<std::string> subj_kb_id;
    std::optional<std::string> obj_kb_id;
    // sentence-level metadata, known only for all-pairs / synthetic corpora
    std::optional<int> n_entities;
    std::optional<int> n_between;

    int n() const { return static_cast<int>(tokens.size()); }
    DependencyTree tree() const { return DependencyTree{dep_head}; }
};

inline void validate_instance(const Instance& inst, const std::string& where = "") {
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error((where.empty() ? "instance " + inst.id : where) +
                                 ": " + msg);
    };
    int n = inst.n();
    if (n == 0) fail("no tokens");
    for (const auto& t : inst.tokens)
        if (t.form.empty()) fail("empty token form");
    if (static_cast<int>(inst.dep_head.size()) != n)
        fail("dep_head length " + std::to_string(inst.dep_head.size()) +
             " does not match " + std::to_string(n) + " tokens");
    try {
        validate_tree(inst.tree());
        check_span(inst.subj, n, "subject");
        check_span(inst.obj, n, "object");
    } catch (const std::exception& e) {
        fail(e.what());
    }
}

// ---------------------------------------------------------------- vocabulary

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocabulary() : forms_{"<PAD>", "<UNK>"} {
        index_["<PAD>"] = kPad;
        index_["<UNK>"] = kUnk;
    }

    int add(const std::string& form) {
        auto it = index_.find(form);
        if (it != index_.end()) return it->second;
        int id = static_cast<int>(forms_.size());
        forms_.push_back(form);
        index_[form] = id;
        return id;
    }

    int lookup(const std::string& form) const {
        auto it = index_.find(form);
        return it == index_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& form) const { return index_.count(form) > 0; }
    int size() const { return static_cast<int>(forms_.size()); }
    const std::string& form(int i) const { return forms_.at(i); }
    const std::vector<std::string>& forms() const { return forms_; }

private:
    std::vector<std::string> forms_;
    std::unordered_map<std::string, int> index_;
};

// Closed inventory for POS/NER tags, entity types and relation labels;
// lookups of unseen entries fail.
class TagVocab {
public:
    int add(const std::string& tag) {
        auto it = index_.find(tag);
        if (it != index_.end()) return it->second;
        int id = static_cast<int>(tags_.size());
        tags_.push_back(tag);
        index_[tag] = id;
        return id;
    }

    int index(const std::string& tag) const {
        auto it = index_.find(tag);
        if (it == index_.end())
            throw std::runtime_error("unknown tag '" + tag + "' (closed inventory)");
        return it->second;
    }

    int try_index(const std::string& tag) const {
        auto it = index_.find(tag);
        return it == index_.end() ? -1 : it->second;
    }

    bool contains(const std::string& tag) const { return index_.count(tag) > 0; }
    int size() const { return static_cast<int>(tags_.size()); }
    const std::string& tag(int i) const { return tags_.at(i); }
    const std::vector<std::string>& tags() const { return tags_; }

private:
    std::vector<std::string> tags_;
    std::unordered_map<std::string, int> index_;
};

struct EmbeddingTable {
    Mat rows;
    int dim = 0;
    bool trainable = true;
};

// ------------------------------------------------------------------- JSONL

namespace detail {

inline nlohmann::json parse_json_line(const std::string& line, const std::string& path,
                                      int lineno) {
    try {
        return nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": malformed record: " + e.what());
    }
}

template <typename T>
T require(const nlohmann::json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key))
        throw std::runtime_error(ctx + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const std::exception&) {
        throw std::runtime_error(ctx + ": field '" + key + "' has wrong type");
    }
}

inline Span require_span(const nlohmann::json& j, const char* key, const std::string& ctx) {
    auto v = require<std::vector<int>>(j, key, ctx);
    if (v.size() != 2)
        throw std::runtime_error(ctx + ": field '" + key + "' must be [start,end)");
    return Span{v[0], v[1]};
}

} // namespace detail

inline Instance instance_from_json(const nlohmann::json& j, const std::string& ctx) {
    using detail::require;
    Instance inst;
    inst.id = require<std::string>(j, "id", ctx);
    auto toks = require<std::vector<std::string>>(j, "tokens", ctx);
    auto pos = require<std::vector<std::string>>(j, "pos", ctx);
    auto ner = require<std::vector<std::string>>(j, "ner", ctx);
    inst.dep_head = require<std::vector<int>>(j, "dep_head", ctx);
    if (pos.size() != toks.size() || ner.size() != toks.size() ||
        inst.dep_head.size() != toks.size())
        throw std::runtime_error(ctx + ": tokens/pos/ner/dep_head lengths disagree");
    inst.tokens.reserve(toks.size());
    for (size_t i = 0; i < toks.size(); ++i)
        inst.tokens.push_back(Token{toks[i], pos[i], ner[i]});
    inst.subj = detail::require_span(j, "subj", ctx);
    inst.obj = detail::require_span(j, "obj", ctx);
    inst.subj_type = require<std::string>(j, "subj_type", ctx);
    inst.obj_type = require<std::string>(j, "obj_type", ctx);
    if (j.contains("relation") && !j.at("relation").is_null())
        inst.relation = j.at("relation").get<std::string>();
    if (j.contains("subj_kb_id") && !j.at("subj_kb_id").is_null())
        inst.subj_kb_id = j.at("subj_kb_id").get<std::string>();
    if (j.contains("obj_kb_id") && !j.at("obj_kb_id").is_null())
        inst.obj_kb_id = j.at("obj_kb_id").get<std::string>();
    if (j.contains("n_entities")) inst.n_entities = j.at("n_entities").get<int>();
    if (j.contains("n_between")) inst.n_between = j.at("n_between").get<int>();
    return inst;
}

inline nlohmann::json instance_to_json(const Instance& inst) {
    nlohmann::json j;
    j["id"] = inst.id;
    std::vector<std::string> toks, pos, ner;
    for (const auto& t : inst.tokens) {
        toks.push_back(t.form);
        pos.push_back(t.pos);
        ner.push_back(t.ner);
    }
    j["tokens"] = toks;
    j["pos"] = pos;
    j["ner"] = ner;
    j["dep_head"] = inst.dep_head;
    j["subj"] = {inst.subj.start, inst.subj.end};
    j["obj"] = {inst.obj.start, inst.obj.end};
    j["subj_type"] = inst.subj_type;
    j["obj_type"] = inst.obj_type;
    if (inst.relation) j["relation"] = *inst.relation;
    if (inst.subj_kb_id) j["subj_kb_id"] = *inst.subj_kb_id;
    if (inst.obj_kb_id) j["obj_kb_id"] = *inst.obj_kb_id;
    if (inst.n_entities) j["n_entities"] = *inst.n_entities;
    if (inst.n_between) j["n_between"] = *inst.n_between;
    return j;
}

// ------------------------------------------------------ all-pairs sentences

struct EntityMention {
    Span span;
    std::string type;
    std::optional<std::string> kb_id;
};

struct GoldRelation {
    int subj = 0; // entity indices
    int obj = 0;
    std::string label;
};

struct SentenceRecord {
    std::string id;
    std::vector<Token> tokens;
    std::vector<int> dep_head;
    std::vector<EntityMention> entities;
    std::vector<GoldRelation> relations;
    int n() const { return static_cast<int>(tokens.size()); }
};

inline SentenceRecord sentence_from_json(const nlohmann::json& j, const std::string& ctx) {
    using detail::require;
    SentenceRecord rec;
    rec.id = require<std::string>(j, "id", ctx);
    auto toks = require<std::vector<std::string>>(j, "tokens", ctx);
    auto pos = require<std::vector<std::string>>(j, "pos", ctx);
    auto ner = require<std::vector<std::string>>(j, "ner", ctx);
    rec.dep_head = require<std::vector<int>>(j, "dep_head", ctx);
    if (pos.size() != toks.size() || ner.size() != toks.size() ||
        rec.dep_head.size() != toks.size())
        throw std::runtime_error(ctx + ": tokens/pos/ner/dep_head lengths disagree");
    for (size_t i = 0; i < toks.size(); ++i)
        rec.tokens.push_back(Token{toks[i], pos[i], ner[i]});
    if (!j.contains("entities") || !j.at("entities").is_array())
        throw std::runtime_error(ctx + ": missing field 'entities'");
    for (const auto& je : j.at("entities")) {
        EntityMention m;
        m.span = detail::require_span(je, "span", ctx);
        m.type = require<std::string>(je, "type", ctx);
        if (je.contains("kb_id") && !je.at("kb_id").is_null())
            m.kb_id = je.at("kb_id").get<std::string>();
        rec.entities.push_back(std::move(m));
    }
    if (j.contains("relations")) {
        for (const auto& jr : j.at("relations")) {
            GoldRelation r;
            r.subj = require<int>(jr, "subj", ctx);
            r.obj = require<int>(jr, "obj", ctx);
            r.label = require<std::string>(jr, "label", ctx);
            rec.relations.push_back(std::move(r));
        }
    }
    return rec;
}

inline nlohmann::json sentence_to_json(const SentenceRecord& rec) {
    nlohmann::json j;
    j["id"] = rec.id;
    std::vector<std::string> toks, pos, ner;
    for (const auto& t : rec.tokens) {
        toks.push_back(t.form);
        pos.push_back(t.pos);
        ner.push_back(t.ner);
    }
    j["tokens"] = toks;
    j["pos"] = pos;
    j["ner"] = ner;
    j["dep_head"] = rec.dep_head;
    j["entities"] = nlohmann::json::array();
    for (const auto& e : rec.entities) {
        nlohmann::json je;
        je["span"] = {e.span.start, e.span.end};
        je["type"] = e.type;
        if (e.kb_id) je["kb_id"] = *e.kb_id;
        j["entities"].push_back(je);
    }
    j["relations"] = nlohmann::json::array();
    for (const auto& r : rec.relations) {
        j["relations"].push_back({{"subj", r.subj}, {"obj", r.obj}, {"label", r.label}});
    }
    return j;
}

// One classification instance per unordered entity pair; direction is folded
// into the label (R for gold R(a,b), R_inv for gold R(b,a), else nil).
inline std::vector<Instance> pairify(const SentenceRecord& rec) {
    int k = static_cast<int>(rec.entities.size());
    if (k < 2)
        throw std::runtime_error("pairify: record " + rec.id +
                                 " needs at least 2 entities, has " + std::to_string(k));
    for (int i = 0; i < k; ++i) {
        check_span(rec.entities[i].span, rec.n(), "entity");
        for (int j = i + 1; j < k; ++j) {
            const Span& a = rec.entities[i].span;
            const Span& b = rec.entities[j].span;
            if (a.start < b.end && b.start < a.end)
                throw std::runtime_error("pairify: record " + rec.id +
                                         ": overlapping entity spans " +
                                         std::to_string(i) + " and " + std::to_string(j));
        }
    }
    auto gold = [&](int s, int o) -> std::optional<std::string> {
        for (const auto& r : rec.relations)
            if (r.subj == s && r.obj == o) return r.label;
        return std::nullopt;
    };
    auto between = [&](int a, int b) {
        const Span& sa = rec.entities[a].span;
        const Span& sb = rec.entities[b].span;
        int lo = std::min(sa.end, sb.end);
        int hi = std::max(sa.start, sb.start);
        int cnt = 0;
        for (int e = 0; e < k; ++e) {
            if (e == a || e == b) continue;
            if (rec.entities[e].span.start >= lo && rec.entities[e].span.end <= hi) ++cnt;
        }
        return cnt;
    };
    std::vector<Instance> out;
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            Instance inst;
            inst.id = rec.id + ":" + std::to_string(a) + "-" + std::to_string(b);
            inst.tokens = rec.tokens;
            inst.dep_head = rec.dep_head;
            inst.subj = rec.entities[a].span;
            inst.obj = rec.entities[b].span;
            inst.subj_type = rec.entities[a].type;
            inst.obj_type = rec.entities[b].type;
            inst.subj_kb_id = rec.entities[a].kb_id;
            inst.obj_kb_id = rec.entities[b].kb_id;
            if (auto direct = gold(a, b)) {
                inst.relation = *direct;
            } else if (auto inverse = gold(b, a)) {
                inst.relation = *inverse + kInverseSuffix;
            } else {
                inst.relation = kNoRelation;
            }
            inst.n_entities = k;
            inst.n_between = between(a, b);
            validate_instance(inst);
            out.push_back(std::move(inst));
        }
    }
    return out;
}

// ----------------------------------------------------------------- loading

enum class CorpusFormat { pairified, all_pairs_sentence };

inline std::vector<Instance> load_corpus(const std::string& path, CorpusFormat format) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    std::vector<Instance> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::string ctx = path + ":" + std::to_string(lineno);
        auto j = detail::parse_json_line(line, path, lineno);
        if (format == CorpusFormat::pairified) {
            Instance inst = instance_from_json(j, ctx);
            validate_instance(inst, ctx + " (id " + inst.id + ")");
            out.push_back(std::move(inst));
        } else {
            SentenceRecord rec = sentence_from_json(j, ctx);
            try {
                validate_tree(DependencyTree{rec.dep_head});
            } catch (const std::exception& e) {
                throw std::runtime_error(ctx + ": " + e.what());
            }
            auto insts = pairify(rec);
            for (auto& inst : insts) out.push_back(std::move(inst));
        }
    }
    if (out.empty()) throw std::runtime_error("corpus file is empty: " + path);
    return out;
}

inline void save_corpus(const std::vector<Instance>& instances, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    for (const auto& inst : instances) out << instance_to_json(inst).dump() << "\n";
}

// ------------------------------------------------------------------- vocab

inline Vocabulary build_vocab(const std::vector<Instance>& instances, int min_freq) {
    if (instances.empty()) throw std::runtime_error("build_vocab: no instances");
    std::unordered_map<std::string, int> counts;
    for (const auto& inst : instances)
        for (const auto& t : inst.tokens) ++counts[t.form];
    Vocabulary vocab;
    // first-appearance order keeps indices reproducible
    for (const auto& inst : instances)
        for (const auto& t : inst.tokens)
            if (counts[t.form] >= min_freq) vocab.add(t.form);
    return vocab;
}

// Closed inventories gathered in first-appearance order; the nil label is
// always class 0.
struct CorpusInventories {
    TagVocab pos, ner, types, labels;
};

inline CorpusInventories collect_inventories(const std::vector<Instance>& instances) {
    CorpusInventories inv;
    inv.labels.add(kNoRelation);
    for (const auto& inst : instances) {
        for (const auto& t : inst.tokens) {
            inv.pos.add(t.pos);
            inv.ner.add(t.ner);
        }
        inv.types.add(inst.subj_type);
        inv.types.add(inst.obj_type);
        if (inst.relation) inv.labels.add(*inst.relation);
    }
    return inv;
}

// ---------------------------------------------------------- vector files

// "<token> <f1> ... <fdim>" per line, optional "<count> <dim>" header.
inline std::unordered_map<std::string, std::vector<double>> read_vector_file(
    const std::string& path, int dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vector file: " + path);
    std::unordered_map<std::string, std::vector<double>> vecs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream iss(line);
        std::string tok;
        iss >> tok;
        if (lineno == 1) {
            // header detection: "<count> <dim>" with nothing after
            long cnt, d;
            char extra;
            std::istringstream probe(line);
            if ((probe >> cnt >> d) && !(probe >> extra)) continue;
        }
        std::vector<double> v;
        v.reserve(dim);
        double x;
        while (iss >> x) v.push_back(x);
        if (static_cast<int>(v.size()) != dim)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected " + std::to_string(dim) +
                                     " values, found " + std::to_string(v.size()));
        vecs[tok] = std::move(v);
    }
    return vecs;
}

// In-vocab rows copied from file; missing rows (UNK included) drawn from
// seeded uniform(-0.01, 0.01); PAD stays zero.
inline EmbeddingTable load_pretrained_vectors(const std::string& path,
                                              const Vocabulary& vocab, int dim,
                                              uint64_t seed = 1) {
    auto vecs = read_vector_file(path, dim);
    EmbeddingTable table;
    table.dim = dim;
    table.rows = Mat(vocab.size(), dim);
    Rng rng(mix_seed(seed, 0xe1b));
    for (int i = 0; i < vocab.size(); ++i) {
        if (i == Vocabulary::kPad) continue;
        auto it = vecs.find(vocab.form(i));
        if (it != vecs.end()) {
            for (int c = 0; c < dim; ++c) table.rows(i, c) = it->second[c];
        } else {
            for (int c = 0; c < dim; ++c) table.rows(i, c) = rng.uniform(-0.01, 0.01);
        }
    }
    return table;
}

inline EmbeddingTable random_embedding_table(int rows, int dim, uint64_t seed) {
    EmbeddingTable t;
    t.dim = dim;
    t.rows = Mat(rows, dim);
    Rng rng(seed);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < dim; ++c) t.rows(r, c) = rng.uniform(-0.01, 0.01);
    return t;
}

// --------------------------------------------------------------- entity KB

// Types whose mentions a dictionary linker never resolves; they always take
// the type fallback vector.
inline const std::set<std::string>& unlinkable_types() {
    static const std::set<std::string> kTypes = {
        "DATE", "TIME", "DURATION", "NUMBER", "MONEY", "PERCENT", "ORDINAL", "SET"};
    return kTypes;
}

class EntityKB {
public:
    EntityKB() = default;

    static EntityKB from_files(const std::string& vector_path,
                               const std::string& type_map_path, int dim = 300) {
        EntityKB kb;
        kb.dim_ = dim;
        auto raw = read_vector_file(vector_path, dim);
        for (auto& [k, v] : raw) kb.vectors_[k] = Mat::colvec(v);
        kb.load_type_map(type_map_path);
        return kb;
    }

    int dim() const { return dim_; }

    void add_vector(const std::string& key, Mat v) {
        if (v.rows != dim_ || v.cols != 1)
            throw std::runtime_error("entity kb: vector for '" + key + "' has shape " +
                                     v.shape_str() + ", expected " +
                                     std::to_string(dim_) + "x1");
        vectors_[key] = std::move(v);
    }

    void set_dim(int d) { dim_ = d; }

    // "<TYPE>\t<PageTitle>" per line; page titles may contain spaces.
    void load_type_map(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open type map file: " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": expected '<TYPE>\\t<PageTitle>'");
            type_page_[line.substr(0, tab)] = line.substr(tab + 1);
        }
    }

    void set_type_page(const std::string& type, const std::string& page) {
        type_page_[type] = page;
    }

    const Mat* find_mention(const std::string& key) const {
        auto it = vectors_.find(key);
        return it == vectors_.end() ? nullptr : &it->second;
    }

    // Page titles are stored the way Wikipedia slugs them: spaces become
    // underscores; a lowercase retry covers slug-cased fixtures.
    const Mat& fallback(const std::string& type) const {
        auto tp = type_page_.find(type);
        if (tp == type_page_.end())
            throw std::runtime_error("entity kb: type '" + type +
                                     "' missing from the type fallback map");
        std::string page = tp->second;
        std::replace(page.begin(), page.end(), ' ', '_');
        if (const Mat* v = find_mention(page)) return *v;
        std::string lower = page;
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (const Mat* v = find_mention(lower)) return *v;
        throw std::runtime_error("entity kb: no vector for fallback page '" + page +
                                 "' of type '" + type + "'");
    }

    bool has_type(const std::string& type) const { return type_page_.count(type) > 0; }

private:
    int dim_ = 300;
    std::unordered_map<std::string, Mat> vectors_;
    std::unordered_map<std::string, std::string> type_page_;
};

inline std::string surface_key(const Instance& inst, const Span& span) {
    std::string key;
    for (int i = span.start; i < span.end; ++i) {
        if (!key.empty()) key += "_";
        key += inst.tokens[i].form;
    }
    return key;
}

// Mention vector if the KB knows the mention, else the fallback vector of
// the entity's type. Numeric/temporal types are never dictionary-linked.
inline std::pair<Mat, Mat> link_entities(const Instance& inst, const EntityKB& kb) {
    auto link_one = [&](const Span& span, const std::string& type,
                        const std::optional<std::string>& kb_id) -> Mat {
        if (!unlinkable_types().count(type)) {
            if (kb_id) {
                if (const Mat* v = kb.find_mention(*kb_id)) return *v;
            }
            if (const Mat* v = kb.find_mention(surface_key(inst, span))) return *v;
        }
        return kb.fallback(type);
    };
    return {link_one(inst.subj, inst.subj_type, inst.subj_kb_id),
            link_one(inst.obj, inst.obj_type, inst.obj_kb_id)};
}

// ------------------------------------------------------------------- stats

struct CorpusStats {
    long count = 0;
    int n_relations = 0; // distinct non-nil labels
    double pct_nil = 0.0;
    double avg_length = 0.0;
};

inline CorpusStats corpus_stats(const std::vector<Instance>& instances) {
    CorpusStats s;
    s.count = static_cast<long>(instances.size());
    if (instances.empty()) return s;
    std::set<std::string> labels;
    long nil = 0;
    double len = 0.0;
    for (const auto& inst : instances) {
        len += inst.n();
        if (inst.relation) {
            if (*inst.relation == kNoRelation)
                ++nil;
            else
                labels.insert(*inst.relation);
        }
    }
    s.n_relations = static_cast<int>(labels.size());
    s.pct_nil = 100.0 * static_cast<double>(nil) / static_cast<double>(s.count);
    s.avg_length = len / static_cast<double>(s.count);
    return s;
}

// --------------------------------------------------------------- synthetic

struct SynthConfig {
    int n_instances = 200;
    int n_relations = 4;
    int entities_per_sentence = 4;
    uint64_t seed = 7;
    int filler_min = 1;
    int filler_max = 3;
    int entity_pool = 200; // distinct entity surface forms
};

inline std::string synth_relation_name(int r) { return "rel" + std::to_string(r); }
inline std::string synth_trigger_word(int r) { return "tg_rel" + std::to_string(r); }

inline const std::vector<std::string>& synth_types() {
    static const std::vector<std::string> kTypes = {"PER", "ORG", "LOC"};
    return kTypes;
}

// Sentences are built from clauses. The trigger verb heads its clause and
// sits on the shortest path between the pair, mirroring the way "born"
// carries the relation between "Barack Obama Sr." and "1936":
//
//     E_subj -> trigger <- prep <- E_obj
//
// so the pair's path is [E_subj, trigger, prep, E_obj]: the subject one edge
// from the trigger and the object two, which encodes direction. The gold
// relation of the pair is dictated by its trigger. Token order is then
// shuffled, which leaves the tree (and hence the dependency features) as
// the only reliable signal. Cross-clause paths contain both triggers and
// are labeled nil.
inline SentenceRecord generate_synthetic_sentence(const SynthConfig& cfg, int sid,
                                                  Rng& rng) {
    struct Draft {
        std::vector<Token> toks;
        std::vector<int> head;
        int add(const std::string& form, const std::string& pos, const std::string& ner,
                int parent) {
            toks.push_back(Token{form, pos, ner});
            head.push_back(parent);
            return static_cast<int>(toks.size()) - 1;
        }
    };

    int k = cfg.entities_per_sentence;
    Draft d;
    int root = d.add("and", "CC", "O", -1);

    // entity slots: clause pairs (0,1),(2,3),...; odd k shares the last
    // placed entity with a final clause
    struct Clause {
        int subj_slot, obj_slot;
        int rel;
        bool subj_is_shared, obj_is_shared;
    };
    std::vector<Clause> clauses;
    int placed = 0;
    while (placed + 1 < k) {
        clauses.push_back({placed, placed + 1, 0, false, false});
        placed += 2;
    }
    if (placed < k) // one entity left: attach a clause sharing the previous one
        clauses.push_back({placed - 1, placed, 0, true, false});

    // draw relations; at least two distinct ones when possible
    for (auto& c : clauses) c.rel = rng.uniform_int(0, cfg.n_relations - 1);
    if (clauses.size() >= 2 && cfg.n_relations >= 2) {
        bool all_same = true;
        for (const auto& c : clauses)
            if (c.rel != clauses[0].rel) all_same = false;
        if (all_same)
            clauses[1].rel = (clauses[0].rel + 1 + rng.uniform_int(0, cfg.n_relations - 2)) %
                             cfg.n_relations;
    }

    // random orientation within each clause
    for (auto& c : clauses) {
        if (c.subj_is_shared || c.obj_is_shared) {
            if (rng.bernoulli(0.5)) {
                std::swap(c.subj_slot, c.obj_slot);
                std::swap(c.subj_is_shared, c.obj_is_shared);
            }
        } else if (rng.bernoulli(0.5)) {
            std::swap(c.subj_slot, c.obj_slot);
        }
    }

    std::vector<int> entity_token(k, -1);
    std::vector<std::string> entity_type(k);
    for (int e = 0; e < k; ++e)
        entity_type[e] = synth_types()[rng.uniform_int(0, static_cast<int>(synth_types().size()) - 1)];

    std::vector<GoldRelation> gold;
    for (const auto& c : clauses) {
        int trig;
        std::string trig_word = synth_trigger_word(c.rel);
        if (c.subj_is_shared) {
            // trigger hangs below the already-placed subject entity
            trig = d.add(trig_word, "VBD", "O", entity_token[c.subj_slot]);
        } else if (c.obj_is_shared) {
            // reach the placed object through its prep: E_o <- prep <- trig
            int prep = d.add("of", "IN", "O", entity_token[c.obj_slot]);
            trig = d.add(trig_word, "VBD", "O", prep);
            std::string form = "ent" + std::to_string(rng.uniform_int(0, cfg.entity_pool - 1));
            entity_token[c.subj_slot] =
                d.add(form, "NNP", entity_type[c.subj_slot], trig);
            gold.push_back({c.subj_slot, c.obj_slot, synth_relation_name(c.rel)});
            continue;
        } else {
            trig = d.add(trig_word, "VBD", "O", root);
        }
        if (!c.subj_is_shared) {
            std::string form = "ent" + std::to_string(rng.uniform_int(0, cfg.entity_pool - 1));
            entity_token[c.subj_slot] = d.add(form, "NNP", entity_type[c.subj_slot], trig);
        }
        int prep = d.add("of", "IN", "O", trig);
        std::string form = "ent" + std::to_string(rng.uniform_int(0, cfg.entity_pool - 1));
        entity_token[c.obj_slot] = d.add(form, "NNP", entity_type[c.obj_slot], prep);
        gold.push_back({c.subj_slot, c.obj_slot, synth_relation_name(c.rel)});
    }

    int fillers = rng.uniform_int(cfg.filler_min, cfg.filler_max);
    for (int f = 0; f < fillers; ++f) {
        int parent = rng.uniform_int(0, static_cast<int>(d.toks.size()) - 1);
        d.add("w" + std::to_string(rng.uniform_int(0, 49)), "NN", "O", parent);
    }

    // shuffle the linear order; the dependency tree is what carries signal
    int n = static_cast<int>(d.toks.size());
    std::vector<int> pos_of(n);
    for (int i = 0; i < n; ++i) pos_of[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(pos_of[i], pos_of[rng.uniform_int(0, i)]);

    SentenceRecord rec;
    rec.id = "syn" + std::to_string(sid);
    rec.tokens.resize(n);
    rec.dep_head.resize(n);
    for (int old = 0; old < n; ++old) {
        int now = pos_of[old];
        rec.tokens[now] = d.toks[old];
        rec.dep_head[now] = d.head[old] == -1 ? -1 : pos_of[d.head[old]];
    }
    rec.entities.resize(k);
    for (int e = 0; e < k; ++e) {
        int t = pos_of[entity_token[e]];
        rec.entities[e] = EntityMention{Span{t, t + 1}, entity_type[e], std::nullopt};
    }
    rec.relations = gold;
    return rec;
}

inline std::vector<SentenceRecord> generate_synthetic_sentences(const SynthConfig& cfg,
                                                                int n_sentences) {
    if (cfg.entities_per_sentence < 2)
        throw std::runtime_error("generate_synthetic: need at least 2 entities per sentence");
    if (cfg.n_relations < 1)
        throw std::runtime_error("generate_synthetic: need at least 1 relation");
    Rng rng(mix_seed(cfg.seed, 0x5f17));
    std::vector<SentenceRecord> out;
    out.reserve(n_sentences);
    for (int s = 0; s < n_sentences; ++s)
        out.push_back(generate_synthetic_sentence(cfg, s, rng));
    return out;
}

inline std::vector<Instance> generate_synthetic(const SynthConfig& cfg) {
    if (cfg.entities_per_sentence < 2)
        throw std::runtime_error("generate_synthetic: need at least 2 entities per sentence");
    Rng rng(mix_seed(cfg.seed, 0x5f17));
    std::vector<Instance> out;
    int sid = 0;
    while (static_cast<int>(out.size()) < cfg.n_instances) {
        auto rec = generate_synthetic_sentence(cfg, sid++, rng);
        for (auto& inst : pairify(rec)) out.push_back(std::move(inst));
    }
    out.resize(cfg.n_instances);
    return out;
}

// Type fallback KB covering the synthetic type inventory, vectors seeded.
inline EntityKB synthetic_kb(int dim, uint64_t seed) {
    EntityKB kb;
    kb.set_dim(dim);
    Rng rng(mix_seed(seed, 0xbc));
    for (const auto& type : synth_types()) {
        std::string page = "Synthetic_" + type;
        Mat v(dim, 1);
        for (int i = 0; i < dim; ++i) v.a[i] = rng.uniform(-0.05, 0.05);
        kb.add_vector(page, std::move(v));
        kb.set_type_page(type, page);
    }
    return kb;
}

} // namespace relex
