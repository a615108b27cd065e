#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "raregan/eval.hpp"
#include "raregan/trainer.hpp"

namespace raregan {

struct ExperimentConfig {
    std::string schema = "toy-12";
    std::string target = "synthetic-amp";
    std::size_t gate_fields = 7;
    double gain = 20.0;
    std::uint64_t target_seed = 7;
    double threshold = 10.0;
    TrainerConfig trainer;
    std::size_t eval_samples = 50000;
    // Uniform draws used for h_r when the space is too large to enumerate.
    std::size_t ground_truth_samples = 1000000;
    std::uint64_t enumeration_cap = kDefaultEnumerationCap;

    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
// Keys absent from `j` keep the values already in `config`; unknown keys throw.
void merge_json(ExperimentConfig& config, const nlohmann::json& j);

struct ExperimentResult {
    TrainResult train;
    EvalReport report;
    std::uint64_t labels_spent = 0;
};

// Trains with a fresh oracle seeded from config.trainer.seed, then evaluates
// config.eval_samples rare-conditioned samples against h_r.
ExperimentResult run_experiment(const ExperimentConfig& config, const TrainObserver& observer = {});

// Separate streams for training and evaluation, both derived from one seed.
Rng train_rng(std::uint64_t seed);
Rng eval_rng(std::uint64_t seed);

EvalReport evaluate_state(const TrainState& state, const ScoreFunction& score, double threshold, const EmpiricalScoreDist& truth,
                          std::size_t n, std::uint64_t seed);

// Component switches: unlabeled samples (U), active learning (A), weighted loss (W).
struct Components {
    bool unlabeled = false;
    bool active = false;
    bool weighted = false;

    std::string name() const;  // "NULL", "U", "W", "UA", "UW", "UAW"
    bool operator==(const Components&) const = default;
};

// Parses a name such as "UAW" or "NULL"; throws InvalidArgument for A without U.
Components parse_components(std::string_view name);
std::vector<Components> all_components();

ExperimentConfig apply_components(ExperimentConfig config, const Components& components, double weight);

struct AblationGrid {
    std::vector<Components> components = all_components();
    std::vector<std::uint64_t> budgets;
    std::vector<double> thresholds;
    std::vector<std::size_t> stages;
    std::vector<double> weights;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

    // Empty axes fall back to the base config's value.
    std::size_t cells(const ExperimentConfig& base) const;
    void validate() const;
};

struct AblationRow {
    std::string components;
    std::uint64_t budget = 0;
    double threshold = 0.0;
    double alpha = 0.0;  // exact when enumerable, NaN otherwise
    std::size_t stages = 0;
    double weight = 0.0;
    std::uint64_t seed = 0;
    EvalReport report;
};

using AblationObserver = std::function<void(const AblationRow&)>;

std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const AblationGrid& grid, const AblationObserver& observer = {});

// Column order: components,budget,threshold,alpha,stages,weight,seed,fidelity,diversity,n,n_rare,n_distinct_rare,no_rare
void write_ablation_header(std::ostream& out);
void write_ablation_row(std::ostream& out, const AblationRow& row);

struct AblationSummary {
    std::string components;
    std::uint64_t budget = 0;
    double threshold = 0.0;
    std::size_t stages = 0;
    double weight = 0.0;
    std::size_t runs = 0;
    double fidelity_mean = 0.0;
    double fidelity_stderr = 0.0;
    double diversity_mean = 0.0;
    double diversity_stderr = 0.0;
};

// Mean and standard error over seeds per cell, in first-appearance order.
std::vector<AblationSummary> summarize_ablation(const std::vector<AblationRow>& rows);
void write_summary(std::ostream& out, const std::vector<AblationSummary>& summary);

}  // namespace raregan
