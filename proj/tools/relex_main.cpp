// relex: relation extraction with feature-enriched attention.
//
//   relex <command> [--config FILE] [--key value ...]
//
// Commands: prepare, train, eval, predict, analyze, gradcheck. Flag keys
// match the config-file keys; flags override file values.
#include <iostream>
#include <string>
#include <vector>

#include "relex/cli.hpp"

namespace {

void usage() {
    std::cerr <<
        "usage: relex <command> [--config FILE] [--key value ...]\n"
        "\n"
        "commands:\n"
        "  prepare    validate/convert a corpus, or generate a synthetic one\n"
        "  train      train a model (use --runs 5 for the five-seed protocol)\n"
        "  eval       score a corpus with a checkpoint\n"
        "  predict    write predictions without scoring\n"
        "  analyze    feature dumps, robustness bins, attention heatmaps\n"
        "  gradcheck  finite-difference check on random tiny models\n"
        "\n"
        "common keys: --train --dev --test --input --out --vectors --kb\n"
        "  --type_map --checkpoint --format {pairified,all-pairs}\n"
        "  --variant {additive,dot} --features dist,flag,sdp,types,wiki\n"
        "  --seed N --runs N --lr0 X --batch_size N --max_epochs N\n"
        "  --axis {sent_len,pair_dist,n_entities,n_between} --bin_size N\n"
        "  --heatmap_ids id1,id2 --heatmap_format {html,csv} --dump_features true\n";
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        usage();
        return 2;
    }
    std::string first = argv[1];
    if (first == "-h" || first == "--help" || first == "help") {
        usage();
        return 0;
    }
    try {
        relex::Command command = relex::parse_command(first);
        std::string config_path;
        std::vector<std::pair<std::string, std::string>> overrides;
        for (int i = 2; i < argc; ++i) {
            std::string arg = argv[i];
            if (arg.rfind("--", 0) != 0)
                throw std::runtime_error("expected --key [value], got '" + arg + "'");
            arg = arg.substr(2);
            std::string key, value;
            auto eq = arg.find('=');
            if (eq != std::string::npos) {
                key = arg.substr(0, eq);
                value = arg.substr(eq + 1);
            } else {
                key = arg;
                if (i + 1 >= argc)
                    throw std::runtime_error("flag --" + key + " needs a value");
                value = argv[++i];
            }
            if (key == "config") config_path = value;
            else overrides.emplace_back(key, value);
        }
        relex::RunConfig cfg = relex::parse_config(command, config_path, overrides);
        return relex::run(cfg);
    } catch (const std::exception& e) {
        std::cerr << "relex: " << e.what() << "\n";
        return 1;
    }
}
