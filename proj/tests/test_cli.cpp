// CLI tests: config precedence and validation, plus an end-to-end
// prepare/train/eval/analyze round trip on a small synthetic corpus.
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "relex/cli.hpp"

using namespace relex;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
    fs::path p = fs::path(::testing::TempDir()) / name;
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

} // namespace

TEST(ParseConfig, EmptyInputsResolveTableDefaults) {
    RunConfig c = parse_config(Command::gradcheck, "", {});
    EXPECT_EQ(c.tc.batch_size, 50);
    EXPECT_DOUBLE_EQ(c.tc.lr0, 1.0);
    EXPECT_DOUBLE_EQ(c.tc.decay, 0.9);
    EXPECT_DOUBLE_EQ(c.tc.clip, 5.0);
    EXPECT_DOUBLE_EQ(c.tc.dropout, 0.5);
    EXPECT_DOUBLE_EQ(c.tc.word_dropout, 0.04);
    EXPECT_EQ(c.tc.max_epochs, 30);
    EXPECT_EQ(c.hp.word_dim, 300);
    EXPECT_EQ(c.hp.pos_dim, 30);
    EXPECT_EQ(c.hp.ner_dim, 30);
    EXPECT_EQ(c.hp.position_dim, 10);
    EXPECT_EQ(c.hp.distance_dim, 10);
    EXPECT_EQ(c.hp.lstm_hidden, 200);
    EXPECT_EQ(c.hp.attn_hidden, 100);
    EXPECT_EQ(c.hp.sdp_hidden, 200);
    EXPECT_EQ(c.hp.type_dim, 30);
    EXPECT_EQ(c.hp.wiki_dim, 300);
    EXPECT_EQ(c.hp.heads, 1);
    EXPECT_EQ(c.lstm_layers, 2);
    EXPECT_EQ(c.sp_lstm_layers, 1);
}

TEST(ParseConfig, FlagsOverrideFileValues) {
    std::string dir = temp_dir("cfg");
    std::string path = dir + "/run.conf";
    write_file(path, "lr0=1.0\nbatch_size=25\n# comment line\ndropout=0.4\n");
    RunConfig c = parse_config(Command::gradcheck, path, {{"lr0", "0.5"}});
    EXPECT_DOUBLE_EQ(c.tc.lr0, 0.5);    // flag wins
    EXPECT_EQ(c.tc.batch_size, 25);     // file value kept
    EXPECT_DOUBLE_EQ(c.tc.dropout, 0.4);
}

TEST(ParseConfig, UnknownKeyNamed) {
    std::string dir = temp_dir("cfg2");
    std::string path = dir + "/bad.conf";
    write_file(path, "learning_rte=0.5\n");
    try {
        parse_config(Command::gradcheck, path, {});
        FAIL() << "expected unknown key error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("unknown key"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("learning_rte"), std::string::npos);
    }
}

TEST(ParseConfig, MissingRequiredPathNamed) {
    try {
        parse_config(Command::train, "", {{"train", "x.jsonl"}, {"out", "o"}});
        FAIL() << "expected missing path error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("--dev"), std::string::npos);
    }
}

TEST(ParseConfig, WikiFeatureRequiresKbPaths) {
    EXPECT_THROW(parse_config(Command::train, "",
                              {{"train", "t"}, {"dev", "d"}, {"out", "o"},
                               {"features", "dist,flag,sdp,types,wiki"}}),
                 std::runtime_error);
    EXPECT_NO_THROW(parse_config(Command::train, "",
                                 {{"train", "t"}, {"dev", "d"}, {"out", "o"},
                                  {"features", "dist,flag,sdp,types"}}));
}

TEST(ParseConfig, VariantAndFeatureParsing) {
    RunConfig c = parse_config(Command::gradcheck, "",
                               {{"variant", "dot"}, {"features", "dist,types"}});
    EXPECT_EQ(c.variant, AttVariant::dot);
    EXPECT_TRUE(c.feats.dist);
    EXPECT_FALSE(c.feats.flag);
    EXPECT_FALSE(c.feats.sdp);
    EXPECT_TRUE(c.feats.types);
    EXPECT_FALSE(c.feats.wiki);
    EXPECT_THROW(parse_config(Command::gradcheck, "", {{"variant", "fancy"}}),
                 std::runtime_error);
    EXPECT_THROW(parse_config(Command::gradcheck, "", {{"features", "dist,bogus"}}),
                 std::runtime_error);
}

TEST(ParseConfig, LayerCountsArePinned) {
    EXPECT_THROW(parse_config(Command::gradcheck, "", {{"lstm_layers", "3"}}),
                 std::runtime_error);
    EXPECT_THROW(parse_config(Command::gradcheck, "", {{"attention_heads", "2"}}),
                 std::runtime_error);
}

namespace {

// common flags for a fast end-to-end run
std::vector<std::pair<std::string, std::string>> tiny_model_flags() {
    return {{"word_emb_dim", "16"}, {"pos_emb_dim", "4"}, {"ner_emb_dim", "4"},
            {"lstm_hidden_units", "12"}, {"attention_hidden_units", "8"},
            {"position_emb_dim", "4"}, {"distance_emb_dim", "4"},
            {"sp_lstm_hidden_units", "8"}, {"entity_type_emb_dim", "4"},
            {"kq_dim", "12"}, {"max_pos", "20"}, {"max_dist", "8"},
            {"features", "dist,flag,sdp,types"}};
}

} // namespace

TEST(RunCommand, EndToEndPrepareTrainEvalAnalyze) {
    std::string prep = temp_dir("e2e_prep");
    auto prep_flags = tiny_model_flags();
    prep_flags.insert(prep_flags.end(),
                      {{"out", prep},
                       {"synth_instances", "30"},
                       {"synth_dev_instances", "12"},
                       {"synth_entities", "2"},
                       {"seed", "5"}});
    ASSERT_EQ(run(parse_config(Command::prepare, "", prep_flags)), 0);
    EXPECT_TRUE(fs::exists(prep + "/synth_train.jsonl"));
    EXPECT_TRUE(fs::exists(prep + "/synth_dev.jsonl"));
    EXPECT_TRUE(fs::exists(prep + "/synth_vectors.txt"));
    EXPECT_TRUE(fs::exists(prep + "/stats.json"));
    EXPECT_TRUE(fs::exists(prep + "/config.resolved"));

    std::string out = temp_dir("e2e_train");
    auto train_flags = tiny_model_flags();
    train_flags.insert(train_flags.end(),
                       {{"train", prep + "/synth_train.jsonl"},
                        {"dev", prep + "/synth_dev.jsonl"},
                        {"vectors", prep + "/synth_vectors.txt"},
                        {"out", out},
                        {"max_epochs", "3"},
                        {"batch_size", "10"},
                        {"seed", "5"}});
    ASSERT_EQ(run(parse_config(Command::train, "", train_flags)), 0);
    EXPECT_TRUE(fs::exists(out + "/checkpoint.json"));
    EXPECT_TRUE(fs::exists(out + "/trainlog.jsonl"));
    EXPECT_TRUE(fs::exists(out + "/metrics.json"));

    std::string ev = temp_dir("e2e_eval");
    ASSERT_EQ(run(parse_config(Command::eval, "",
                               {{"checkpoint", out + "/checkpoint.json"},
                                {"input", prep + "/synth_dev.jsonl"},
                                {"out", ev}})),
              0);
    EXPECT_TRUE(fs::exists(ev + "/metrics.json"));
    EXPECT_TRUE(fs::exists(ev + "/predictions.jsonl"));
    auto metrics = nlohmann::json::parse(slurp(ev + "/metrics.json"));
    EXPECT_TRUE(metrics.contains("f1"));

    std::string an = temp_dir("e2e_analyze");
    ASSERT_EQ(run(parse_config(Command::analyze, "",
                               {{"checkpoint", out + "/checkpoint.json"},
                                {"input", prep + "/synth_dev.jsonl"},
                                {"out", an},
                                {"axis", "sent_len"},
                                {"dump_features", "true"}})),
              0);
    EXPECT_TRUE(fs::exists(an + "/features.tsv"));
    EXPECT_TRUE(fs::exists(an + "/bins_sent_len.tsv"));
    std::string bins = slurp(an + "/bins_sent_len.tsv");
    EXPECT_NE(bins.find("bin_lo\tbin_hi"), std::string::npos);

    // heatmap over the first dev instance id
    auto dev_insts = load_corpus(prep + "/synth_dev.jsonl", CorpusFormat::pairified);
    std::string hm = temp_dir("e2e_heat");
    ASSERT_EQ(run(parse_config(Command::analyze, "",
                               {{"checkpoint", out + "/checkpoint.json"},
                                {"input", prep + "/synth_dev.jsonl"},
                                {"out", hm},
                                {"heatmap_ids", dev_insts[0].id},
                                {"heatmap_format", "csv"}})),
              0);
    EXPECT_TRUE(fs::exists(hm + "/heatmap.csv"));
}

TEST(RunCommand, IdenticalSeedsGiveByteIdenticalMetrics) {
    std::string prep = temp_dir("det_prep");
    auto prep_flags = tiny_model_flags();
    prep_flags.insert(prep_flags.end(),
                      {{"out", prep},
                       {"synth_instances", "20"},
                       {"synth_dev_instances", "10"},
                       {"synth_entities", "2"},
                       {"seed", "9"}});
    ASSERT_EQ(run(parse_config(Command::prepare, "", prep_flags)), 0);

    auto train_once = [&](const std::string& out) {
        auto flags = tiny_model_flags();
        flags.insert(flags.end(),
                     {{"train", prep + "/synth_train.jsonl"},
                      {"dev", prep + "/synth_dev.jsonl"},
                      {"vectors", prep + "/synth_vectors.txt"},
                      {"out", out},
                      {"max_epochs", "2"},
                      {"batch_size", "10"},
                      {"seed", "33"}});
        EXPECT_EQ(run(parse_config(Command::train, "", flags)), 0);
        return slurp(out + "/metrics.json");
    };
    std::string a = train_once(temp_dir("det_a"));
    std::string b = train_once(temp_dir("det_b"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);
}

TEST(RunCommand, MultiRunWritesMedianAndEnsemble) {
    std::string prep = temp_dir("runs_prep");
    auto prep_flags = tiny_model_flags();
    prep_flags.insert(prep_flags.end(),
                      {{"out", prep},
                       {"synth_instances", "20"},
                       {"synth_dev_instances", "10"},
                       {"synth_entities", "2"},
                       {"seed", "2"}});
    ASSERT_EQ(run(parse_config(Command::prepare, "", prep_flags)), 0);
    std::string out = temp_dir("runs_out");
    auto flags = tiny_model_flags();
    flags.insert(flags.end(),
                 {{"train", prep + "/synth_train.jsonl"},
                  {"dev", prep + "/synth_dev.jsonl"},
                  {"out", out},
                  {"max_epochs", "2"},
                  {"batch_size", "10"},
                  {"runs", "3"},
                  {"seed", "7"}});
    ASSERT_EQ(run(parse_config(Command::train, "", flags)), 0);
    auto summary = nlohmann::json::parse(slurp(out + "/metrics.json"));
    EXPECT_EQ(summary.at("per_run_dev_f1").size(), 3u);
    EXPECT_TRUE(summary.contains("median_dev"));
    EXPECT_TRUE(summary.contains("ensemble_dev"));
    EXPECT_TRUE(fs::exists(out + "/run0/checkpoint.json"));
    EXPECT_TRUE(fs::exists(out + "/run2/trainlog.jsonl"));
    EXPECT_TRUE(fs::exists(out + "/checkpoint.json"));
}

TEST(RunCommand, EvalWithWrongCheckpointFailsClearly) {
    std::string dir = temp_dir("badckpt");
    write_file(dir + "/ckpt.json", "{\"format\":\"something_else\"}");
    auto cfg = parse_config(Command::eval, "",
                            {{"checkpoint", dir + "/ckpt.json"},
                             {"input", dir + "/missing.jsonl"},
                             {"out", dir}});
    EXPECT_THROW(run(cfg), std::runtime_error);
}

TEST(RunCommand, GradcheckPassesOnTinyModels) {
    RunConfig c = parse_config(Command::gradcheck, "",
                               {{"gradcheck_models", "2"}, {"seed", "4"}});
    EXPECT_EQ(run(c), 0);
}
