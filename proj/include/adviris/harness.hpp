#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "adviris/attack.hpp"
#include "adviris/gabor.hpp"
#include "adviris/surrogate.hpp"
#include "adviris/synth.hpp"

namespace adviris::harness {

// Step sizes and iteration caps swept by default (the published sweep grid).
extern const std::vector<double> kSweepEpsilons;
extern const std::vector<int> kSweepCaps;

// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitAttackFailed = 2;
inline constexpr int kExitCalibrationFailed = 3;
inline constexpr int kExitIoError = 4;

// Flat experiment description; loadable from key=value files and mirrored by
// CLI flags.  Keys: profile, data_dir, checkpoint, bank_file, epsilons, caps,
// scenario, mode, trials, master_seed, n_identities, eyes_per_identity,
// samples_per_eye, v_count, epochs.
struct ExperimentConfig {
    std::string profile = "desk";  // "desk" | "full"
    std::string data_dir = "data";
    std::string checkpoint = "surrogate.irsg";
    std::string bank_file;  // empty: the profile's default bank
    std::vector<double> epsilons = {0.03, 0.02, 0.01, 0.007, 0.005, 0.002,
                                    0.001, 0.0007, 0.0005, 0.0002, 0.0001};
    std::vector<int> caps = {10, 20, 30, 40, 50, 100, 200, 300};
    int scenario = 1;
    std::string mode = "non-targeted";  // "non-targeted" | "targeted"
    int trials = 30;
    std::uint64_t master_seed = 1;
    int n_identities = 75;
    int eyes_per_identity = 2;
    int samples_per_eye = 5;
    int v_count = 256;  // subset size for scenarios 2 and 3
    int epochs = -1;    // -1: profile default; 0: keep initial weights
};

ExperimentConfig parse_config_file(const std::string& path);
void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);
void validate(const ExperimentConfig& cfg);

// Profile expansions.
gabor::FilterBankParams bank_params(const ExperimentConfig& cfg);
net::SurrogateConfig surrogate_profile(const ExperimentConfig& cfg);
synth::CorpusParams corpus_params(const ExperimentConfig& cfg);

// Disk corpus: manifest.txt + bank.txt + one PGM/PBM pair per sample; codes
// are re-derived from the archived bank on load.
struct DiskCorpus {
    std::vector<synth::CorpusItem> items;
    gabor::FilterBank bank;
};
DiskCorpus load_corpus(const std::string& dir);

// Identity-disjoint 80/20 split (first 80% of identities train).
struct CorpusSplit {
    std::vector<net::SurrogateSample> train;
    std::vector<net::SurrogateSample> held;
};
CorpusSplit split_by_identity(const std::vector<synth::CorpusItem>& items);

struct SampleRef {
    int identity = 0;
    int eye = 0;
    int sample = 0;
};

// One sweep trial, fully determined by its seed.
struct TrialOutcome {
    double epsilon = 0.0;
    int scenario = 1;
    int trial = 0;
    std::uint64_t seed = 0;
    SampleRef subject;
    bool success = false;
    int iterations = 0;
    double dist = 0.0;
    double final_hd = 0.0;
    double gallery_hd = 0.0;  // vs a same-identity enrollment draw (non-targeted)
    // pixel clip, perturbation bound, mask monotonicity and re-verification,
    // checked while the attack artifacts are still in scope
    bool invariants_ok = false;
};

struct SweepReport {
    std::vector<double> epsilons;
    std::vector<int> caps;
    std::vector<TrialOutcome> trials;  // ordered by (epsilon, scenario, trial)

    // mean over successful trials of (epsilon, scenario); empty cell -> nullopt
    std::optional<double> mean_dist(double epsilon, int scenario) const;
    std::optional<double> mean_iterations(double epsilon, int scenario) const;
    // percent of `scenario` trials that terminated within `cap` iterations
    double success_rate(double epsilon, int cap, int scenario) const;
};

// Runs trials for every epsilon x scenario {1,2,3} at the largest cap; the
// per-cap success matrix is derived from recorded iteration counts.
SweepReport run_sweep(const DiskCorpus& corpus, net::Surrogate& surrogate,
                      const ExperimentConfig& cfg, int threads);

void write_sweep_csvs(const std::string& dir, const SweepReport& report, const ExperimentConfig& cfg);

// Subcommand bodies; log receives human-readable progress, return value is the
// process exit code.  File-system and parse problems are thrown and mapped to
// kExitIoError by the caller.
int cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log);
int cmd_train(const ExperimentConfig& cfg, std::ostream& log);
int cmd_attack(const ExperimentConfig& cfg, const SampleRef& subject,
               const std::optional<SampleRef>& target, double epsilon, int cap,
               const std::string& out_dir, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir, int threads, std::ostream& log);
int cmd_encode(const ExperimentConfig& cfg, const std::string& iris_path, const std::string& mask_path,
               const std::string& out_bits, const std::string& out_mask, std::ostream& log);
int cmd_match(const std::string& a_bits, const std::string& a_mask, const std::string& b_bits,
              const std::string& b_mask, double threshold, std::ostream& log);

}  // namespace adviris::harness
