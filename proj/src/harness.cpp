#include "adviris/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "adviris/matcher.hpp"
#include "adviris/netpbm.hpp"
#include "adviris/rng.hpp"

namespace fs = std::filesystem;

namespace adviris::harness {

const std::vector<double> kSweepEpsilons = {0.03, 0.02, 0.01, 0.007, 0.005, 0.002,
                                            0.001, 0.0007, 0.0005, 0.0002, 0.0001};
const std::vector<int> kSweepCaps = {10, 20, 30, 40, 50, 100, 200, 300};

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v, const char* format) {
    char buf[40];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(trim(part));
    return out;
}

double parse_double(const std::string& key, const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::runtime_error("config: bad number '" + s + "' for key " + key);
    }
}

long parse_long(const std::string& key, const std::string& s) {
    try {
        std::size_t used = 0;
        const long v = std::stol(s, &used);
        if (used != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::runtime_error("config: bad integer '" + s + "' for key " + key);
    }
}

}  // namespace

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "profile") cfg.profile = value;
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "checkpoint") cfg.checkpoint = value;
    else if (key == "bank_file") cfg.bank_file = value;
    else if (key == "epsilons") {
        cfg.epsilons.clear();
        for (const std::string& p : split_commas(value)) cfg.epsilons.push_back(parse_double(key, p));
    } else if (key == "caps") {
        cfg.caps.clear();
        for (const std::string& p : split_commas(value)) cfg.caps.push_back(static_cast<int>(parse_long(key, p)));
    } else if (key == "scenario") cfg.scenario = static_cast<int>(parse_long(key, value));
    else if (key == "mode") cfg.mode = value;
    else if (key == "trials") cfg.trials = static_cast<int>(parse_long(key, value));
    else if (key == "master_seed") cfg.master_seed = static_cast<std::uint64_t>(parse_long(key, value));
    else if (key == "n_identities") cfg.n_identities = static_cast<int>(parse_long(key, value));
    else if (key == "eyes_per_identity") cfg.eyes_per_identity = static_cast<int>(parse_long(key, value));
    else if (key == "samples_per_eye") cfg.samples_per_eye = static_cast<int>(parse_long(key, value));
    else if (key == "v_count") cfg.v_count = static_cast<int>(parse_long(key, value));
    else if (key == "epochs") cfg.epochs = static_cast<int>(parse_long(key, value));
    else throw std::runtime_error("config: unknown key '" + key + "'");
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line.substr(0, line.find('#')));
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) + ": expected key=value");
        try {
            apply_key(cfg, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.profile != "desk" && cfg.profile != "full")
        throw std::runtime_error("config: profile must be 'desk' or 'full'");
    if (cfg.mode != "non-targeted" && cfg.mode != "targeted")
        throw std::runtime_error("config: mode must be 'non-targeted' or 'targeted'");
    if (cfg.epsilons.empty()) throw std::runtime_error("config: epsilons must not be empty");
    for (std::size_t i = 0; i < cfg.epsilons.size(); ++i) {
        if (!(cfg.epsilons[i] > 0.0)) throw std::runtime_error("config: epsilons must be positive");
        if (i > 0 && !(cfg.epsilons[i] < cfg.epsilons[i - 1]))
            throw std::runtime_error("config: epsilons must be strictly descending");
    }
    if (cfg.caps.empty()) throw std::runtime_error("config: caps must not be empty");
    for (std::size_t i = 0; i < cfg.caps.size(); ++i) {
        if (cfg.caps[i] < 1) throw std::runtime_error("config: caps must be >= 1");
        if (i > 0 && cfg.caps[i] <= cfg.caps[i - 1])
            throw std::runtime_error("config: caps must be strictly ascending");
    }
    if (cfg.scenario < 1 || cfg.scenario > 3) throw std::runtime_error("config: scenario must be 1, 2 or 3");
    if (cfg.trials < 1) throw std::runtime_error("config: trials must be >= 1");
    if (cfg.n_identities < 1 || cfg.eyes_per_identity < 1 || cfg.samples_per_eye < 1)
        throw std::runtime_error("config: corpus counts must be >= 1");
    if (cfg.v_count < 1) throw std::runtime_error("config: v_count must be >= 1");
    if (cfg.epochs < -1) throw std::runtime_error("config: epochs must be >= -1");
}

gabor::FilterBankParams bank_params(const ExperimentConfig& cfg) {
    gabor::FilterBankParams p;
    p.wavelengths = cfg.profile == "desk" ? std::vector<int>{8} : std::vector<int>{8, 16, 32};
    return p;
}

net::SurrogateConfig surrogate_profile(const ExperimentConfig& cfg) {
    return cfg.profile == "desk" ? net::SurrogateConfig::desk_scale() : net::SurrogateConfig::full_scale();
}

synth::CorpusParams corpus_params(const ExperimentConfig& cfg) {
    synth::CorpusParams p;
    p.n_identities = cfg.n_identities;
    p.eyes_per_identity = cfg.eyes_per_identity;
    p.samples_per_eye = cfg.samples_per_eye;
    p.master_seed = cfg.master_seed;
    if (cfg.profile == "full") {
        p.height = 64;
        p.width = 512;
    }
    return p;
}

namespace {

gabor::FilterBank resolve_bank(const ExperimentConfig& cfg) {
    if (!cfg.bank_file.empty()) return gabor::load_filter_bank(cfg.bank_file);
    return gabor::make_filter_bank(bank_params(cfg));
}

std::string image_name(const synth::CorpusItem& item, const char* prefix, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03d_%d_%d.%s", prefix, item.identity, item.eye, item.sample, ext);
    return buf;
}

}  // namespace

int cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log) {
    validate(cfg);
    const gabor::FilterBank bank = resolve_bank(cfg);
    synth::Corpus corpus;
    try {
        corpus = synth::generate_corpus(corpus_params(cfg), bank);
    } catch (const synth::CalibrationError& e) {
        log << "calibration failed: " << e.what() << "\n";
        return kExitCalibrationFailed;
    }
    fs::create_directories(cfg.data_dir);
    gabor::save_filter_bank((fs::path(cfg.data_dir) / "bank.txt").string(), bank);
    std::ofstream manifest(fs::path(cfg.data_dir) / "manifest.txt", std::ios::trunc);
    if (!manifest) throw std::runtime_error("gen-data: cannot write manifest in " + cfg.data_dir);
    const synth::CorpusParams cp = corpus_params(cfg);
    manifest << "adviris-corpus v1\n";
    manifest << "profile " << cfg.profile << "\n";
    manifest << "identities " << cp.n_identities << " eyes " << cp.eyes_per_identity << " samples "
             << cp.samples_per_eye << "\n";
    manifest << "extent " << cp.height << " " << cp.width << "\n";
    manifest << "seed " << cfg.master_seed << "\n";
    for (const synth::CorpusItem& item : corpus.items) {
        const std::string iris_file = image_name(item, "iris", "pgm");
        const std::string mask_file = image_name(item, "mask", "pbm");
        pnm::write_pgm16((fs::path(cfg.data_dir) / iris_file).string(), item.image.iris);
        pnm::write_pbm((fs::path(cfg.data_dir) / mask_file).string(), item.image.mask);
        manifest << "item " << item.identity << " " << item.eye << " " << item.sample << " " << iris_file
                 << " " << mask_file << "\n";
    }
    if (!manifest) throw std::runtime_error("gen-data: manifest write failed");
    log << "wrote " << corpus.items.size() << " samples to " << cfg.data_dir << "\n";
    if (corpus.stats.genuine_pairs > 0) {
        log << "genuine HD mean " << fmt_short(corpus.stats.genuine_mean, "%.4f") << ", impostor HD mean "
            << fmt_short(corpus.stats.impostor_mean, "%.4f") << ", overlap "
            << fmt_short(100.0 * corpus.stats.overlap_frac, "%.2f") << "%\n";
    }
    return kExitOk;
}

DiskCorpus load_corpus(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("corpus: cannot open " + dir + "/manifest.txt");
    DiskCorpus out;
    out.bank = gabor::load_filter_bank((fs::path(dir) / "bank.txt").string());
    std::string line;
    int lineno = 0;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (lineno == 1) {
            if (line != "adviris-corpus v1")
                throw std::runtime_error("corpus: " + dir + "/manifest.txt: unknown format '" + line + "'");
            continue;
        }
        std::stringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag != "item") continue;  // header metadata
        synth::CorpusItem item;
        std::string iris_file, mask_file;
        ss >> item.identity >> item.eye >> item.sample >> iris_file >> mask_file;
        if (!ss)
            throw std::runtime_error("corpus: " + dir + "/manifest.txt:" + std::to_string(lineno) +
                                     ": malformed item line");
        item.image.iris = pnm::read_pgm16((fs::path(dir) / iris_file).string());
        item.image.mask = pnm::read_pbm((fs::path(dir) / mask_file).string());
        item.code = gabor::encode(item.image, out.bank);
        out.items.push_back(std::move(item));
    }
    if (out.items.empty()) throw std::runtime_error("corpus: " + dir + ": no items in manifest");
    return out;
}

CorpusSplit split_by_identity(const std::vector<synth::CorpusItem>& items) {
    std::set<int> ids;
    for (const auto& it : items) ids.insert(it.identity);
    const auto n_train = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(ids.size())));
    std::set<int> train_ids;
    for (int id : ids) {
        if (train_ids.size() >= n_train) break;
        train_ids.insert(id);
    }
    CorpusSplit split;
    for (const auto& it : items) {
        auto& dst = train_ids.count(it.identity) ? split.train : split.held;
        dst.push_back(net::make_surrogate_sample(it.image, it.code));
    }
    return split;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
    validate(cfg);
    const DiskCorpus corpus = load_corpus(cfg.data_dir);
    net::SurrogateConfig scfg = surrogate_profile(cfg);
    const auto& first = corpus.items.front().image.iris;
    if (first.shape[0] != scfg.height || first.shape[1] != scfg.width)
        throw std::runtime_error("train: corpus extent " + std::to_string(first.shape[0]) + "x" +
                                 std::to_string(first.shape[1]) + " does not match the " + cfg.profile +
                                 " profile");
    CorpusSplit split = split_by_identity(corpus.items);
    net::Surrogate s = net::build_surrogate(scfg, mix_seed(cfg.master_seed, 0x17A1));
    const bool has_held = !split.held.empty();
    double untrained_held = -1.0;
    if (has_held) untrained_held = net::bit_error_rate(s, split.held).rate;

    const int epochs = cfg.epochs < 0 ? scfg.epochs : cfg.epochs;
    if (epochs > 0) {
        net::TrainOptions topt;
        topt.epochs = epochs;
        topt.seed = mix_seed(cfg.master_seed, 0x7247);
        topt.on_epoch = [&](int e, double loss) {
            log << "epoch " << e << " loss " << fmt_short(loss, "%.4f") << "\n";
        };
        const std::vector<double> curve = net::train_surrogate(s, split.train, topt);
        std::ofstream csv(cfg.checkpoint + ".loss.csv", std::ios::trunc);
        csv << "schema,adviris.loss.v1\nepoch,mean_loss\n";
        for (std::size_t i = 0; i < curve.size(); ++i) csv << i << "," << fmt(curve[i]) << "\n";
        if (!csv) throw std::runtime_error("train: cannot write " + cfg.checkpoint + ".loss.csv");
    }
    net::save_surrogate(cfg.checkpoint, s);
    // report errors from the reloaded checkpoint so a later load reproduces
    // the printed numbers exactly (weights are quantized to float32 on disk)
    net::Surrogate reloaded = net::load_surrogate(cfg.checkpoint);
    log << "trained " << epochs << " epochs on " << split.train.size() << " samples (" << split.held.size()
        << " held out)\n";
    log << "bit error (train) " << fmt(net::bit_error_rate(reloaded, split.train).rate) << "\n";
    if (has_held) {
        log << "bit error (held-out, untrained) " << fmt(untrained_held) << "\n";
        log << "bit error (held-out) " << fmt(net::bit_error_rate(reloaded, split.held).rate) << "\n";
    }
    return kExitOk;
}

namespace {

const synth::CorpusItem* find_item(const std::vector<synth::CorpusItem>& items, const SampleRef& ref) {
    for (const auto& it : items)
        if (it.identity == ref.identity && it.eye == ref.eye && it.sample == ref.sample) return &it;
    return nullptr;
}

const synth::CorpusItem& require_item(const std::vector<synth::CorpusItem>& items, const SampleRef& ref,
                                      const char* what) {
    const synth::CorpusItem* item = find_item(items, ref);
    if (item == nullptr)
        throw std::runtime_error(std::string(what) + ": no corpus item identity=" +
                                 std::to_string(ref.identity) + " eye=" + std::to_string(ref.eye) +
                                 " sample=" + std::to_string(ref.sample));
    return *item;
}

struct CodeExtent {
    int rows = 0;
    int cols = 0;
};

CodeExtent code_extent(const DiskCorpus& corpus) {
    const auto& shape = corpus.items.front().code.bits.shape;
    return {shape[0], shape[1]};
}

const char* status_word(attack::Status s) {
    switch (s) {
        case attack::Status::Success: return "success";
        case attack::Status::CapExhausted: return "cap-exhausted";
        case attack::Status::DegenerateMask: return "degenerate-mask";
        case attack::Status::Stalled: return "stalled";
        case attack::Status::NumericalError: return "numerical-error";
    }
    return "unknown";
}

}  // namespace

int cmd_attack(const ExperimentConfig& cfg, const SampleRef& subject,
               const std::optional<SampleRef>& target, double epsilon, int cap,
               const std::string& out_dir, std::ostream& log) {
    validate(cfg);
    const DiskCorpus corpus = load_corpus(cfg.data_dir);
    net::Surrogate surrogate = net::load_surrogate(cfg.checkpoint);
    const synth::CorpusItem& item = require_item(corpus.items, subject, "attack");

    attack::AttackConfig acfg;
    acfg.epsilon = epsilon;
    acfg.max_iterations = cap;
    acfg.scenario = cfg.scenario;
    acfg.mode = cfg.mode == "targeted" ? attack::Mode::Targeted : attack::Mode::NonTargeted;
    acfg.delta = acfg.mode == attack::Mode::Targeted ? 0.25 : 0.32;
    const CodeExtent ext = code_extent(corpus);
    Rng locs_rng(mix_seed(cfg.master_seed, 0xA44C));
    if (cfg.scenario == 2) acfg.v = match::random_locations(ext.rows, ext.cols, cfg.v_count, locs_rng);
    if (cfg.scenario == 3) acfg.verifier = match::random_locations(ext.rows, ext.cols, cfg.v_count, locs_rng);

    std::optional<attack::AttackTarget> atk_target;
    if (acfg.mode == attack::Mode::Targeted) {
        if (!target) throw std::runtime_error("attack: targeted mode needs a target selector");
        const synth::CorpusItem& titem = require_item(corpus.items, *target, "attack target");
        atk_target = attack::AttackTarget{titem.code, titem.image.mask};
    }

    const attack::AttackResult r =
        attack::run_attack(item.image, surrogate, corpus.bank, acfg, atk_target ? &*atk_target : nullptr);

    fs::create_directories(out_dir);
    pnm::write_pgm16((fs::path(out_dir) / "adv_iris.pgm").string(), r.adversarial.iris);
    pnm::write_pbm((fs::path(out_dir) / "adv_mask.pbm").string(), r.adversarial.mask);
    pnm::write_pbm((fs::path(out_dir) / "adv_code.pbm").string(), r.code.bits);
    pnm::write_pbm((fs::path(out_dir) / "adv_code_mask.pbm").string(), r.code.code_mask);
    {
        std::ofstream csv(fs::path(out_dir) / "trace.csv", std::ios::trunc);
        csv << "schema,adviris.attack-trace.v1\nn,loss,hd,mask_popcount,flipped_bits\n";
        for (const attack::IterationRecord& t : r.trace)
            csv << t.n << "," << fmt(t.loss) << "," << fmt(t.hd) << "," << t.mask_popcount << ","
                << t.flipped_bits << "\n";
    }
    {
        // the report's verification is recomputed through the conventional
        // codec, independently of anything the attack loop tracked
        const gabor::IrisCode fresh = gabor::encode(r.adversarial, corpus.bank);
        const gabor::IrisCode& ref = atk_target ? atk_target->code : item.code;
        std::ofstream rep(fs::path(out_dir) / "report.txt", std::ios::trunc);
        rep << "adviris-attack v1\n";
        rep << "mode " << cfg.mode << "\nscenario " << cfg.scenario << "\n";
        rep << "epsilon " << fmt(epsilon) << "\ncap " << cap << "\n";
        rep << "status " << status_word(r.status) << "\niterations " << r.iterations << "\n";
        rep << "dist " << fmt(r.dist) << "\nfinal_hd " << fmt(r.final_hd) << "\n";
        try {
            const match::HammingResult hr = match::masked_hamming(ref, fresh);
            const match::MatchDecision d = match::verify(hr, 0.32);
            rep << "verified_hd " << fmt(hr.hd) << "\n";
            rep << "decision " << (d.accepted ? "accepted" : "rejected") << "\n";
        } catch (const std::runtime_error&) {
            rep << "verified_hd none\ndecision undecidable\n";
        }
        if (!rep) throw std::runtime_error("attack: cannot write report in " + out_dir);
    }
    log << "attack " << status_word(r.status) << " after " << r.iterations << " iterations, hd "
        << fmt_short(r.final_hd, "%.4f") << ", dist " << fmt_short(r.dist, "%.6f") << "\n";
    return r.success ? kExitOk : kExitAttackFailed;
}

namespace {

struct TrialPlan {
    double epsilon = 0.0;
    int scenario = 1;
    int trial = 0;
    std::uint64_t seed = 0;
};

// Post-hoc checks on one finished attack: the image stayed clipped, the total
// perturbation respects the step budget, the mask only ever shrank, and for
// successful runs the recorded metric survives an independent re-encode.
bool trial_invariants(const synth::CorpusItem& subject, const attack::AttackResult& r,
                      const attack::AttackConfig& acfg, const attack::AttackTarget* target,
                      const gabor::FilterBank& bank) {
    for (double v : r.adversarial.iris.v)
        if (!(v >= 0.0 && v <= 1.0)) return false;
    const double budget = r.iterations * acfg.epsilon + 1e-12;
    for (std::size_t k = 0; k < r.adversarial.iris.v.size(); ++k)
        if (std::abs(r.adversarial.iris.v[k] - subject.image.iris.v[k]) > budget) return false;
    for (std::size_t k = 0; k < r.adversarial.mask.v.size(); ++k)
        if (r.adversarial.mask.v[k] > subject.image.mask.v[k]) return false;
    for (std::size_t i = 1; i < r.trace.size(); ++i)
        if (r.trace[i].mask_popcount > r.trace[i - 1].mask_popcount) return false;
    if (r.success) {
        const gabor::IrisCode fresh = gabor::encode(r.adversarial, bank);
        if (fresh.bits.v != r.code.bits.v || fresh.code_mask.v != r.code.code_mask.v) return false;
        const gabor::IrisCode& ref = target != nullptr ? target->code : subject.code;
        double hd = 0.0;
        if (acfg.scenario == 1) hd = match::masked_hamming(ref, fresh).hd;
        else if (acfg.scenario == 2) hd = match::subset_hamming(ref, fresh, *acfg.v).hd;
        else hd = match::subset_hamming(ref, fresh, *acfg.verifier).hd;
        if (hd != r.final_hd) return false;
    }
    return true;
}

TrialOutcome run_trial(const TrialPlan& plan, const DiskCorpus& corpus, net::Surrogate& surrogate,
                       const ExperimentConfig& cfg, int max_cap) {
    TrialOutcome out;
    out.epsilon = plan.epsilon;
    out.scenario = plan.scenario;
    out.trial = plan.trial;
    out.seed = plan.seed;

    Rng rng(plan.seed);
    const auto& items = corpus.items;
    const auto& subject = items[static_cast<std::size_t>(rng.below(items.size()))];
    out.subject = SampleRef{subject.identity, subject.eye, subject.sample};

    const bool targeted = cfg.mode == "targeted";
    // enrollment draw: same identity and eye, a different sample when one exists
    std::vector<const synth::CorpusItem*> gallery_pool, target_pool;
    for (const auto& it : items) {
        if (it.identity == subject.identity && it.eye == subject.eye && it.sample != subject.sample)
            gallery_pool.push_back(&it);
        if (it.identity != subject.identity && it.eye == subject.eye) target_pool.push_back(&it);
    }
    const synth::CorpusItem* gallery =
        gallery_pool.empty() ? &subject
                             : gallery_pool[static_cast<std::size_t>(rng.below(gallery_pool.size()))];
    const synth::CorpusItem* target =
        target_pool.empty() ? nullptr
                            : target_pool[static_cast<std::size_t>(rng.below(target_pool.size()))];

    attack::AttackConfig acfg;
    acfg.epsilon = plan.epsilon;
    acfg.max_iterations = max_cap;
    acfg.scenario = plan.scenario;
    acfg.mode = targeted ? attack::Mode::Targeted : attack::Mode::NonTargeted;
    acfg.delta = targeted ? 0.25 : 0.32;
    const auto& cshape = subject.code.bits.shape;
    if (plan.scenario == 2) acfg.v = match::random_locations(cshape[0], cshape[1], cfg.v_count, rng);
    if (plan.scenario == 3) acfg.verifier = match::random_locations(cshape[0], cshape[1], cfg.v_count, rng);

    std::optional<attack::AttackTarget> atk_target;
    if (targeted) {
        if (target == nullptr) throw std::runtime_error("sweep: targeted mode needs >= 2 identities");
        atk_target = attack::AttackTarget{target->code, target->image.mask};
    }

    const attack::AttackResult r = attack::run_attack(subject.image, surrogate, corpus.bank, acfg,
                                                      atk_target ? &*atk_target : nullptr);
    out.success = r.success;
    out.iterations = r.iterations;
    out.dist = r.dist;
    out.final_hd = r.final_hd;
    out.invariants_ok = trial_invariants(subject, r, acfg, atk_target ? &*atk_target : nullptr, corpus.bank);
    if (targeted) {
        out.gallery_hd = r.final_hd;
    } else {
        try {
            out.gallery_hd = match::masked_hamming(gallery->code, r.code).hd;
        } catch (const std::runtime_error&) {
            out.gallery_hd = -1.0;  // degenerate joint mask, no decision
        }
    }
    return out;
}

}  // namespace

SweepReport run_sweep(const DiskCorpus& corpus, net::Surrogate& surrogate,
                      const ExperimentConfig& cfg, int threads) {
    validate(cfg);
    SweepReport report;
    report.epsilons = cfg.epsilons;
    report.caps = cfg.caps;
    const int max_cap = cfg.caps.back();

    std::vector<TrialPlan> plans;
    for (std::size_t ei = 0; ei < cfg.epsilons.size(); ++ei)
        for (int scenario = 1; scenario <= 3; ++scenario)
            for (int t = 0; t < cfg.trials; ++t) {
                TrialPlan p;
                p.epsilon = cfg.epsilons[ei];
                p.scenario = scenario;
                p.trial = t;
                // Seeded per (epsilon, trial): results do not depend on scheduling,
                // and all three scenarios attack the same drawn subjects so the
                // cross-scenario comparison is paired rather than resampled.
                p.seed = mix_seed(cfg.master_seed, 0x577EE7, ei, static_cast<std::uint64_t>(t));
                plans.push_back(p);
            }

    report.trials.resize(plans.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error;
    std::mutex error_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= plans.size() || failed.load()) return;
            try {
                report.trials[i] = run_trial(plans[i], corpus, surrogate, cfg, max_cap);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mu);
                error = e.what();
                failed.store(true);
                return;
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(plans.size())));
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failed.load()) throw std::runtime_error("sweep: " + error);
    return report;
}

std::optional<double> SweepReport::mean_dist(double epsilon, int scenario) const {
    double sum = 0.0;
    int n = 0;
    for (const TrialOutcome& t : trials)
        if (t.epsilon == epsilon && t.scenario == scenario && t.success) {
            sum += t.dist;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / n;
}

std::optional<double> SweepReport::mean_iterations(double epsilon, int scenario) const {
    double sum = 0.0;
    int n = 0;
    for (const TrialOutcome& t : trials)
        if (t.epsilon == epsilon && t.scenario == scenario && t.success) {
            sum += t.iterations;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / n;
}

double SweepReport::success_rate(double epsilon, int cap, int scenario) const {
    int total = 0, ok = 0;
    for (const TrialOutcome& t : trials)
        if (t.epsilon == epsilon && t.scenario == scenario) {
            ++total;
            if (t.success && t.iterations <= cap) ++ok;
        }
    return total == 0 ? 0.0 : 100.0 * ok / total;
}

void write_sweep_csvs(const std::string& dir, const SweepReport& report, const ExperimentConfig& cfg) {
    fs::create_directories(dir);
    {
        std::ofstream csv(fs::path(dir) / "sweep_distance.csv", std::ios::trunc);
        csv << "schema,adviris.sweep.distance.v1\n";
        csv << "epsilon,s1_dist,s1_itr,s2_dist,s2_itr,s3_dist,s3_itr\n";
        for (double eps : report.epsilons) {
            csv << fmt(eps);
            for (int scenario = 1; scenario <= 3; ++scenario) {
                const auto d = report.mean_dist(eps, scenario);
                const auto it = report.mean_iterations(eps, scenario);
                csv << "," << (d ? fmt_short(*d, "%.6f") : "") << "," << (it ? fmt_short(*it, "%.2f") : "");
            }
            csv << "\n";
        }
        if (!csv) throw std::runtime_error("sweep: cannot write sweep_distance.csv in " + dir);
    }
    {
        std::ofstream csv(fs::path(dir) / "sweep_success.csv", std::ios::trunc);
        csv << "schema,adviris.sweep.success.v1\nepsilon";
        for (int cap : report.caps) csv << ",cap_" << cap;
        csv << "\n";
        for (double eps : report.epsilons) {
            csv << fmt(eps);
            for (int cap : report.caps) csv << "," << fmt_short(report.success_rate(eps, cap, cfg.scenario), "%.1f");
            csv << "\n";
        }
        if (!csv) throw std::runtime_error("sweep: cannot write sweep_success.csv in " + dir);
    }
    {
        std::ofstream csv(fs::path(dir) / "sweep_trials.csv", std::ios::trunc);
        csv << "schema,adviris.sweep.trials.v1\n";
        csv << "epsilon,scenario,trial,seed,identity,eye,sample,success,iterations,dist,final_hd,gallery_hd\n";
        for (const TrialOutcome& t : report.trials)
            csv << fmt(t.epsilon) << "," << t.scenario << "," << t.trial << "," << t.seed << ","
                << t.subject.identity << "," << t.subject.eye << "," << t.subject.sample << ","
                << (t.success ? 1 : 0) << "," << t.iterations << "," << fmt(t.dist) << "," << fmt(t.final_hd)
                << "," << fmt(t.gallery_hd) << "\n";
        if (!csv) throw std::runtime_error("sweep: cannot write sweep_trials.csv in " + dir);
    }
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir, int threads, std::ostream& log) {
    validate(cfg);
    const DiskCorpus corpus = load_corpus(cfg.data_dir);
    net::Surrogate surrogate = net::load_surrogate(cfg.checkpoint);
    const SweepReport report = run_sweep(corpus, surrogate, cfg, threads);
    write_sweep_csvs(out_dir, report, cfg);
    for (double eps : report.epsilons) {
        log << "eps " << fmt(eps);
        for (int scenario = 1; scenario <= 3; ++scenario) {
            const auto it = report.mean_iterations(eps, scenario);
            log << "  s" << scenario << " itr " << (it ? fmt_short(*it, "%.2f") : std::string("-"));
        }
        log << "  success@max " << fmt_short(report.success_rate(eps, report.caps.back(), cfg.scenario), "%.1f")
            << "%\n";
    }
    log << "wrote sweep_distance.csv, sweep_success.csv, sweep_trials.csv to " << out_dir << "\n";
    return kExitOk;
}

int cmd_encode(const ExperimentConfig& cfg, const std::string& iris_path, const std::string& mask_path,
               const std::string& out_bits, const std::string& out_mask, std::ostream& log) {
    const gabor::FilterBank bank = resolve_bank(cfg);
    gabor::IrisSample sample;
    sample.iris = pnm::read_pgm16(iris_path);
    sample.mask = pnm::read_pbm(mask_path);
    const gabor::IrisCode code = gabor::encode(sample, bank);
    pnm::write_pbm(out_bits, code.bits);
    pnm::write_pbm(out_mask, code.code_mask);
    log << "encoded " << sample.iris.shape[0] << "x" << sample.iris.shape[1] << " -> code "
        << code.bits.shape[0] << "x" << code.bits.shape[1] << "\n";
    return kExitOk;
}

int cmd_match(const std::string& a_bits, const std::string& a_mask, const std::string& b_bits,
              const std::string& b_mask, double threshold, std::ostream& log) {
    gabor::IrisCode a, b;
    a.bits = pnm::read_pbm(a_bits);
    a.code_mask = pnm::read_pbm(a_mask);
    b.bits = pnm::read_pbm(b_bits);
    b.code_mask = pnm::read_pbm(b_mask);
    const match::HammingResult hr = match::masked_hamming(a, b);
    const match::MatchDecision d = match::verify(hr, threshold);
    log << "hd " << fmt(hr.hd) << " over " << hr.compared_bits << " bits -> "
        << (d.accepted ? "accepted" : "rejected") << " (threshold " << fmt(threshold) << ")\n";
    return kExitOk;
}

}  // namespace adviris::harness
