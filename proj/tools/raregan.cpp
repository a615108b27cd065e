#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "raregan/checkpoint.hpp"
#include "raregan/errors.hpp"
#include "raregan/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace raregan;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flags shared by every command that builds an ExperimentConfig.
struct ConfigFlags {
    std::string config_file;
    std::optional<std::string> schema, target, mode, loss, lipschitz, policy;
    std::optional<double> threshold, weight, clip, gain, lr, rare_rate, ema;
    std::optional<std::uint64_t> budget, seed, target_seed;
    std::optional<std::size_t> stages, iterations, batch, n_critic, gate, pool, eval_n;
    std::optional<bool> unlabeled, gumbel, lr_decay;

    void add(CLI::App* app) {
        app->add_option("--config", config_file, "JSON config file; flags override it");
        app->add_option("--schema", schema, "dns, fivetuple, toy-N, or a schema JSON path");
        app->add_option("--target", target, "synthetic-amp or synthetic-latency");
        app->add_option("--T", threshold, "rare threshold: score >= T is rare");
        app->add_option("--B", budget, "labeling budget");
        app->add_option("--S", stages, "active-learning stages");
        app->add_option("--w", weight, "rare-class weight (1 disables weighting)");
        app->add_option("--loss", loss, "wasserstein or js");
        app->add_option("--lipschitz", lipschitz, "clip or gradient-penalty");
        app->add_option("--clip", clip, "weight clipping bound");
        app->add_option("--n-critic", n_critic, "critic updates per generator update");
        app->add_option("--policy", policy, "least-confident, most-confident, or random");
        app->add_option("--mode", mode, "conditional or labeled-rare-only");
        app->add_option("--iterations", iterations, "iterations per stage");
        app->add_option("--batch", batch, "batch size");
        app->add_option("--lr", lr, "Adam learning rate (both networks)");
        app->add_option("--pool", pool, "candidate pool per stage");
        app->add_option("--unlabeled", unlabeled, "feed unlabeled samples to the GAN loss (true/false)");
        app->add_option("--gumbel", gumbel, "Gumbel-softmax relaxation (true/false)");
        app->add_option("--lr-decay", lr_decay, "decay learning rates linearly to zero in each stage (true/false)");
        app->add_option("--rare-condition-rate", rare_rate, "rate of rare conditions during training (0: natural rate)");
        app->add_option("--ema", ema, "generator parameter averaging decay (0 disables)");
        app->add_option("--gate", gate, "synthetic-amp gate fields");
        app->add_option("--gain", gain, "synthetic-amp gain");
        app->add_option("--target-seed", target_seed, "seed of the synthetic target");
        app->add_option("--seed", seed, "run seed");
        app->add_option("--eval-samples", eval_n, "generated samples for metrics");
    }

    ExperimentConfig build() const {
        ExperimentConfig c;
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw UsageError("cannot read config file: " + config_file);
            json j;
            try {
                j = json::parse(in);
            } catch (const json::exception& e) {
                throw UsageError("config file " + config_file + ": " + e.what());
            }
            merge_json(c, j);
        }
        TrainerConfig& t = c.trainer;
        if (schema) c.schema = *schema;
        if (target) c.target = *target;
        if (threshold) c.threshold = *threshold;
        if (budget) t.budget = *budget;
        if (stages) t.stages = *stages;
        if (weight) t.loss.weight = *weight;
        if (loss) t.loss.family = loss_family_from_string(*loss);
        if (lipschitz) t.loss.lipschitz = lipschitz_from_string(*lipschitz);
        if (clip) t.loss.clip = *clip;
        if (n_critic) t.loss.n_critic = *n_critic;
        if (policy) t.policy = selection_policy_from_string(*policy);
        if (mode) t.mode = train_mode_from_string(*mode);
        if (iterations) t.iterations_per_stage = *iterations;
        if (batch) t.batch_size = *batch;
        if (lr) t.generator_adam.learning_rate = t.critic_adam.learning_rate = *lr;
        if (pool) t.candidate_pool = *pool;
        if (unlabeled) t.use_unlabeled = *unlabeled;
        if (gumbel) t.gumbel_softmax = *gumbel;
        if (lr_decay) t.lr_decay = *lr_decay;
        if (rare_rate) t.rare_condition_rate = *rare_rate;
        if (ema) t.generator_ema = *ema;
        if (gate) c.gate_fields = *gate;
        if (gain) c.gain = *gain;
        if (target_seed) c.target_seed = *target_seed;
        if (seed) t.seed = *seed;
        if (eval_n) c.eval_samples = *eval_n;
        if (t.loss.n_critic == 0) t.loss.n_critic = t.loss.critic_steps();
        c.validate();
        return c;
    }
};

fs::path default_output_dir() {
    const char* env = std::getenv("RAREGAN_OUTPUT_DIR");
    return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("raregan_out");
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_metrics(const fs::path& path, const std::vector<StageMetrics>& stages) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "stage,labels_spent,stage_labels,labeled_rare,alpha_hat,effective_weight,weight_demoted,critic_loss,generator_loss,"
           "classification_loss,rare_hit_rate\n";
    char buf[512];
    for (const StageMetrics& m : stages) {
        std::snprintf(buf, sizeof buf, "%zu,%llu,%llu,%zu,%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", m.stage,
                      static_cast<unsigned long long>(m.labels_spent), static_cast<unsigned long long>(m.stage_labels), m.labeled_rare,
                      m.alpha_hat, m.effective_weight, m.weight_demoted ? 1 : 0, m.critic_loss, m.generator_loss, m.classification_loss,
                      m.rare_hit_rate);
        out << buf;
    }
}

std::string eval_header() { return "schema,target,threshold,checkpoint,seed,fidelity,diversity,n,n_rare,n_distinct_rare,no_rare"; }

std::string eval_row(const ExperimentConfig& c, const fs::path& checkpoint, const EvalReport& r) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%s,%llu,%.17g,%.17g,%zu,%zu,%zu,%d", c.schema.c_str(), c.target.c_str(), c.threshold,
                  checkpoint.string().c_str(), static_cast<unsigned long long>(r.seed), r.fidelity, r.diversity, r.n_generated, r.n_rare,
                  r.n_distinct_rare, r.no_rare ? 1 : 0);
    return buf;
}

int cmd_train(const ConfigFlags& flags, const fs::path& out_dir, bool quiet) {
    const ExperimentConfig c = flags.build();
    const PacketSchema schema = resolve_schema(c.schema);
    const auto target = make_target(c.target, schema, c.gate_fields, c.gain, c.target_seed);
    fs::create_directories(out_dir);
    write_json(out_dir / "run_config.json", to_json(c));

    std::ofstream transcript(out_dir / "transcript.tsv");
    if (!transcript) throw std::runtime_error("cannot write " + (out_dir / "transcript.tsv").string());
    BudgetedOracle oracle(target, c.threshold, c.trainer.budget);
    oracle.set_transcript(&transcript);
    Rng rng = train_rng(c.trainer.seed);
    const TrainResult result = train(c.trainer, schema, oracle, rng, [&](const StageMetrics& m) {
        if (!quiet)
            std::fprintf(stderr, "stage %zu: labels %llu, labeled rare %zu, alpha_hat %.6g, w %.4g, rare hit rate %.4f\n", m.stage,
                         static_cast<unsigned long long>(m.labels_spent), m.labeled_rare, m.alpha_hat, m.effective_weight, m.rare_hit_rate);
    });
    oracle.set_transcript(nullptr);
    for (const std::string& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

    save_train_state(out_dir / "checkpoint.txt", result.state);
    write_metrics(out_dir / "metrics.csv", result.stages);
    {
        std::ofstream labeled(out_dir / "labeled.csv");
        labeled << "# packet fields..., label, score, stage\n";
        for (const LabeledSample& s : result.state.labeled) {
            char buf[128];
            std::snprintf(buf, sizeof buf, ",%s,%.17g,%zu\n", std::string(to_string(s.label)).c_str(), s.score, s.stage);
            labeled << format_packet(s.packet) << buf;
        }
    }
    write_json(out_dir / "run_summary.json", {{"labels_spent", oracle.spent()},
                                              {"budget", oracle.budget()},
                                              {"alpha_hat", result.state.alpha_hat},
                                              {"labeled_rare", result.stages.back().labeled_rare},
                                              {"warnings", result.warnings}});
    std::printf("trained %s: %llu labels spent, outputs in %s\n", c.schema.c_str(), static_cast<unsigned long long>(oracle.spent()),
                out_dir.string().c_str());
    return 0;
}

int cmd_eval(ConfigFlags flags, const fs::path& run_dir, std::optional<std::size_t> n, std::optional<std::uint64_t> seed,
             const fs::path& csv_path) {
    if (n && *n == 0) throw UsageError("--n must be at least 1");
    if (flags.config_file.empty()) flags.config_file = (run_dir / "run_config.json").string();
    if (n) flags.eval_n = n;
    ExperimentConfig c = flags.build();
    const std::uint64_t eval_seed = seed.value_or(c.trainer.seed);
    const PacketSchema schema = resolve_schema(c.schema);
    const auto target = make_target(c.target, schema, c.gate_fields, c.gain, c.target_seed);
    const fs::path checkpoint = run_dir / "checkpoint.txt";
    TrainState state = load_train_state(checkpoint, schema, c.trainer.mode, 0.0);
    Rng truth_rng = eval_rng(c.target_seed);
    const EmpiricalScoreDist truth = ground_truth_scores(*target, c.threshold, c.enumeration_cap, c.ground_truth_samples, truth_rng);
    const EvalReport report = evaluate_state(state, *target, c.threshold, truth, c.eval_samples, eval_seed);

    const std::string row = eval_row(c, checkpoint, report);
    std::printf("%s\n%s\n", eval_header().c_str(), row.c_str());
    const bool fresh = !fs::exists(csv_path);
    if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
    std::ofstream out(csv_path, std::ios::app);
    if (!out) throw std::runtime_error("cannot write " + csv_path.string());
    if (fresh) out << eval_header() << '\n';
    out << row << '\n';
    return 0;
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::istringstream is(item);
        T v;
        if (!(is >> v) || !is.eof()) throw UsageError(std::string("bad value '") + item + "' in --" + what);
        out.push_back(v);
    }
    return out;
}

int cmd_ablate(const ConfigFlags& flags, const std::string& components, const std::string& budgets, const std::string& thresholds,
               const std::string& stages, const std::string& weights, const std::string& seeds, const fs::path& out_dir, bool quiet) {
    const ExperimentConfig base = flags.build();
    AblationGrid grid;
    if (!components.empty()) {
        grid.components.clear();
        std::stringstream ss(components);
        std::string item;
        while (std::getline(ss, item, ',')) grid.components.push_back(parse_components(item));
    }
    if (!budgets.empty()) grid.budgets = parse_list<std::uint64_t>(budgets, "budgets");
    if (!thresholds.empty()) grid.thresholds = parse_list<double>(thresholds, "thresholds");
    if (!stages.empty()) grid.stages = parse_list<std::size_t>(stages, "stages-list");
    if (!weights.empty()) grid.weights = parse_list<double>(weights, "weights");
    if (!seeds.empty()) grid.seeds = parse_list<std::uint64_t>(seeds, "seeds");
    grid.validate();

    fs::create_directories(out_dir);
    write_json(out_dir / "ablation_config.json", {{"base", to_json(base)}, {"components", components.empty() ? "NULL,U,W,UA,UW,UAW" : components},
                                                   {"seeds", grid.seeds}});
    std::ofstream csv(out_dir / "ablation.csv");
    if (!csv) throw std::runtime_error("cannot write " + (out_dir / "ablation.csv").string());
    write_ablation_header(csv);
    const auto rows = run_ablation(base, grid, [&](const AblationRow& row) {
        write_ablation_row(csv, row);
        csv.flush();
        if (!quiet)
            std::fprintf(stderr, "%s B=%llu T=%g S=%zu w=%g seed=%llu: fidelity %.4g diversity %.4g\n", row.components.c_str(),
                         static_cast<unsigned long long>(row.budget), row.threshold, row.stages, row.weight,
                         static_cast<unsigned long long>(row.seed), row.report.fidelity, row.report.diversity);
    });
    std::ofstream summary(out_dir / "summary.csv");
    write_summary(summary, summarize_ablation(rows));
    std::printf("%zu rows written to %s\n", rows.size(), (out_dir / "ablation.csv").string().c_str());
    return 0;
}

int cmd_ground_truth(const ConfigFlags& flags, const fs::path& out_file, std::uint64_t cap) {
    const ExperimentConfig c = flags.build();
    const PacketSchema schema = resolve_schema(c.schema);
    const auto target = make_target(c.target, schema, c.gate_fields, c.gain, c.target_seed);
    GroundTruth gt;
    try {
        gt = enumerate_ground_truth(*target, c.threshold, cap);
    } catch (const SpaceTooLarge& e) {
        throw UsageError(e.what());
    }
    if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
    std::ofstream out(out_file);
    if (!out) throw std::runtime_error("cannot write " + out_file.string());
    char alpha[64];
    std::snprintf(alpha, sizeof alpha, "%.17g", gt.alpha);
    out << "# schema " << schema.name() << " target " << target->describe() << " T " << c.threshold << '\n';
    out << "# space " << gt.space_size << " rare " << gt.rare.size() << " alpha " << alpha << '\n';
    write_packets(out, gt.rare);
    std::printf("space %llu, rare %zu, alpha %s\n", static_cast<unsigned long long>(gt.space_size), gt.rare.size(), alpha);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"raregan: budgeted rare-class generation for black-box packet systems"};
    app.require_subcommand(1);
    app.fallthrough();
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "suppress progress output");

    ConfigFlags train_flags, eval_flags, ablate_flags, gt_flags;
    std::string out_dir;

    auto* train_cmd = app.add_subcommand("train", "train a generator and write checkpoint, metrics and transcript");
    train_flags.add(train_cmd);
    train_cmd->add_option("--out", out_dir, "output directory (default $RAREGAN_OUTPUT_DIR or ./raregan_out)");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained run's fidelity and diversity");
    eval_flags.add(eval_cmd);
    std::string run_dir, eval_csv;
    std::optional<std::size_t> eval_n;
    std::optional<std::uint64_t> eval_seed;
    eval_cmd->add_option("--run", run_dir, "directory written by train")->required();
    eval_cmd->add_option("--n", eval_n, "generated samples");
    eval_cmd->add_option("--eval-seed", eval_seed, "sampling seed (default: the run seed)");
    eval_cmd->add_option("--csv", eval_csv, "CSV to append to (default <run>/eval.csv)");

    auto* ablate_cmd = app.add_subcommand("ablate", "run the U/A/W ablation grid");
    ablate_flags.add(ablate_cmd);
    std::string components, budgets, thresholds, stages_list, weights, seeds;
    ablate_cmd->add_option("--components", components, "comma list from NULL,U,W,UA,UW,UAW (default: all six)");
    ablate_cmd->add_option("--budgets", budgets, "comma list of B values");
    ablate_cmd->add_option("--thresholds", thresholds, "comma list of T values");
    ablate_cmd->add_option("--stages-list", stages_list, "comma list of S values");
    ablate_cmd->add_option("--weights", weights, "comma list of w values");
    ablate_cmd->add_option("--seeds", seeds, "comma list of seeds (default 1,2,3,4,5)");
    ablate_cmd->add_option("--out", out_dir, "output directory (default $RAREGAN_OUTPUT_DIR or ./raregan_out)");

    auto* gt_cmd = app.add_subcommand("ground-truth", "enumerate the rare set of a target");
    gt_flags.add(gt_cmd);
    std::string gt_out;
    std::uint64_t cap = kDefaultEnumerationCap;
    gt_cmd->add_option("--out", gt_out, "rare packet file (default <output dir>/ground_truth.csv)");
    gt_cmd->add_option("--cap", cap, "largest search space to enumerate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    const fs::path out = out_dir.empty() ? default_output_dir() : fs::path(out_dir);
    try {
        if (*train_cmd) return cmd_train(train_flags, out, quiet);
        if (*eval_cmd)
            return cmd_eval(eval_flags, run_dir, eval_n, eval_seed, eval_csv.empty() ? fs::path(run_dir) / "eval.csv" : fs::path(eval_csv));
        if (*ablate_cmd) return cmd_ablate(ablate_flags, components, budgets, thresholds, stages_list, weights, seeds, out, quiet);
        if (*gt_cmd) return cmd_ground_truth(gt_flags, gt_out.empty() ? default_output_dir() / "ground_truth.csv" : fs::path(gt_out), cap);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
