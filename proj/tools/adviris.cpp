#include <cstdio>
#include <iostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "adviris/harness.hpp"

namespace harness = adviris::harness;

namespace {

harness::SampleRef parse_ref(const std::string& s) {
    harness::SampleRef r;
    char extra = 0;
    if (std::sscanf(s.c_str(), "%d,%d,%d%c", &r.identity, &r.eye, &r.sample, &extra) != 3)
        throw std::runtime_error("selector '" + s + "' must be identity,eye,sample");
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adviris: Gabor iris codec, surrogate training and gradient-sign attacks"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "key=value experiment file, applied before other flags");

    // every config key is also a global flag; flags override the file
    std::vector<std::pair<std::string, std::string>> overrides;
    auto key_opt = [&](const std::string& flag, const std::string& key, const std::string& help) {
        app.add_option_function<std::string>(
            flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
    };
    key_opt("--profile", "profile", "desk | full");
    key_opt("--data-dir", "data_dir", "corpus directory");
    key_opt("--checkpoint", "checkpoint", "surrogate weights file");
    key_opt("--bank-file", "bank_file", "filter bank archive (default: profile bank)");
    key_opt("--epsilons", "epsilons", "comma list, strictly descending");
    key_opt("--caps", "caps", "comma list of iteration caps, strictly ascending");
    key_opt("--scenario", "scenario", "verification scenario 1..3");
    key_opt("--mode", "mode", "non-targeted | targeted");
    key_opt("--trials", "trials", "sweep trials per grid cell");
    key_opt("--master-seed", "master_seed", "root seed for corpus, training and sweeps");
    key_opt("--n-identities", "n_identities", "corpus identities");
    key_opt("--eyes-per-identity", "eyes_per_identity", "eyes per identity");
    key_opt("--samples-per-eye", "samples_per_eye", "samples per eye");
    key_opt("--v-count", "v_count", "bit-location subset size (scenarios 2 and 3)");
    key_opt("--epochs", "epochs", "-1: profile default, 0: keep initial weights");

    CLI::App* gen = app.add_subcommand("gen-data", "render a synthetic corpus into the data directory");
    CLI::App* train = app.add_subcommand("train", "train the surrogate and write the checkpoint");

    CLI::App* attack = app.add_subcommand("attack", "attack one corpus sample");
    std::string subject_sel, target_sel, attack_out = "attack_out";
    double attack_epsilon = 0.03;
    int attack_cap = 50;
    attack->add_option("--subject", subject_sel, "identity,eye,sample to perturb")->required();
    attack->add_option("--target", target_sel, "identity,eye,sample to impersonate (targeted mode)");
    attack->add_option("--epsilon", attack_epsilon, "per-iteration step size");
    attack->add_option("--cap", attack_cap, "iteration cap");
    attack->add_option("--out", attack_out, "artifact directory");

    CLI::App* sweep = app.add_subcommand("sweep", "run the epsilon x scenario grid and write CSV tables");
    std::string sweep_out = "sweep_out";
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    sweep->add_option("--out", sweep_out, "output directory for the CSV tables");
    sweep->add_option("--threads", threads, "worker threads (results do not depend on this)");

    CLI::App* encode = app.add_subcommand("encode", "encode one iris/mask image pair");
    std::string enc_iris, enc_mask, enc_bits = "code.pbm", enc_code_mask = "code_mask.pbm";
    encode->add_option("--iris", enc_iris, "input PGM strip")->required();
    encode->add_option("--mask", enc_mask, "input PBM mask")->required();
    encode->add_option("--out-bits", enc_bits, "output PBM code");
    encode->add_option("--out-mask", enc_code_mask, "output PBM code mask");

    CLI::App* match = app.add_subcommand("match", "compare two stored codes");
    std::string a_bits, a_mask, b_bits, b_mask;
    double threshold = 0.32;
    match->add_option("--a-bits", a_bits, "first code PBM")->required();
    match->add_option("--a-mask", a_mask, "first code mask PBM")->required();
    match->add_option("--b-bits", b_bits, "second code PBM")->required();
    match->add_option("--b-mask", b_mask, "second code mask PBM")->required();
    match->add_option("--threshold", threshold, "acceptance threshold on HD");

    // let `adviris gen-data --profile desk` reach the global flags
    for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        harness::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = harness::parse_config_file(config_path);
        for (const auto& [key, value] : overrides) harness::apply_key(cfg, key, value);

        if (gen->parsed()) return harness::cmd_gen_data(cfg, std::cout);
        if (train->parsed()) return harness::cmd_train(cfg, std::cout);
        if (attack->parsed()) {
            std::optional<harness::SampleRef> target;
            if (!target_sel.empty()) target = parse_ref(target_sel);
            return harness::cmd_attack(cfg, parse_ref(subject_sel), target, attack_epsilon, attack_cap,
                                       attack_out, std::cout);
        }
        if (sweep->parsed()) return harness::cmd_sweep(cfg, sweep_out, threads, std::cout);
        if (encode->parsed())
            return harness::cmd_encode(cfg, enc_iris, enc_mask, enc_bits, enc_code_mask, std::cout);
        if (match->parsed()) return harness::cmd_match(a_bits, a_mask, b_bits, b_mask, threshold, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return harness::kExitIoError;
    }
    return harness::kExitOk;
}
