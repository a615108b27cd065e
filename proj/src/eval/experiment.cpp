#include "raregan/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

#include "raregan/errors.hpp"

namespace raregan {

namespace {

using nlohmann::json;

json adam_json(const AdamHyper& h) {
    return {{"learning_rate", h.learning_rate}, {"beta1", h.beta1}, {"beta2", h.beta2}, {"epsilon", h.epsilon}};
}

// Walks an object, handing each key to `apply`; keys it does not claim are errors.
template <class F>
void merge_object(const json& j, const std::string& where, F apply) {
    if (!j.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
    for (const auto& [key, value] : j.items())
        if (!apply(key, value)) throw InvalidArgument("config: unknown key '" + where + key + "'");
}

template <class T>
bool take(const std::string& key, const json& value, const char* name, T& out) {
    if (key != name) return false;
    try {
        out = value.get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument("config: bad value for '" + key + "'");
    }
    return true;
}

void merge_adam(AdamHyper& h, const json& j, const std::string& where) {
    merge_object(j, where, [&](const std::string& k, const json& v) {
        return take(k, v, "learning_rate", h.learning_rate) || take(k, v, "beta1", h.beta1) || take(k, v, "beta2", h.beta2) ||
               take(k, v, "epsilon", h.epsilon);
    });
}

template <class Enum, class Parse>
bool take_enum(const std::string& key, const json& value, const char* name, Enum& out, Parse parse) {
    std::string text;
    if (!take(key, value, name, text)) return false;
    out = parse(text);
    return true;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (eval_samples == 0) throw InvalidArgument("eval samples must be at least 1");
    if (!std::isfinite(threshold)) throw InvalidArgument("threshold must be finite");
    trainer.validate();
}

json to_json(const ExperimentConfig& c) {
    const TrainerConfig& t = c.trainer;
    const LossConfig& l = t.loss;
    json loss{{"family", to_string(l.family)},
              {"weight", l.weight},
              {"normalization", l.normalization},
              {"lipschitz", to_string(l.lipschitz)},
              {"clip", l.clip},
              {"penalty_lambda", l.penalty_lambda},
              {"n_critic", l.n_critic},
              {"non_saturating", l.non_saturating}};
    json network{{"latent_dim", t.network.latent_dim},
                 {"generator_hidden", t.network.generator_hidden},
                 {"critic_hidden", t.network.critic_hidden},
                 {"hidden_layers", t.network.hidden_layers}};
    json trainer{{"mode", to_string(t.mode)},
                 {"stages", t.stages},
                 {"budget", t.budget},
                 {"iterations_per_stage", t.iterations_per_stage},
                 {"batch_size", t.batch_size},
                 {"policy", to_string(t.policy)},
                 {"candidate_pool", t.candidate_pool},
                 {"use_unlabeled", t.use_unlabeled},
                 {"reestimate_alpha_all_stages", t.reestimate_alpha_all_stages},
                 {"rare_condition_rate", t.rare_condition_rate},
                 {"lr_decay", t.lr_decay},
                 {"generator_ema", t.generator_ema},
                 {"gumbel_softmax", t.gumbel_softmax},
                 {"gumbel_temperature", t.gumbel_temperature},
                 {"metrics_samples", t.metrics_samples},
                 {"seed", t.seed},
                 {"loss", loss},
                 {"network", network},
                 {"generator_adam", adam_json(t.generator_adam)},
                 {"critic_adam", adam_json(t.critic_adam)}};
    return {{"schema", c.schema},
            {"target", c.target},
            {"gate_fields", c.gate_fields},
            {"gain", c.gain},
            {"target_seed", c.target_seed},
            {"threshold", c.threshold},
            {"eval_samples", c.eval_samples},
            {"ground_truth_samples", c.ground_truth_samples},
            {"enumeration_cap", c.enumeration_cap},
            {"trainer", trainer}};
}

void merge_json(ExperimentConfig& c, const json& j) {
    TrainerConfig& t = c.trainer;
    LossConfig& l = t.loss;
    merge_object(j, "", [&](const std::string& k, const json& v) {
        if (k == "trainer") {
            merge_object(v, "trainer.", [&](const std::string& tk, const json& tv) {
                if (tk == "loss") {
                    merge_object(tv, "trainer.loss.", [&](const std::string& lk, const json& lv) {
                        return take_enum(lk, lv, "family", l.family, loss_family_from_string) || take(lk, lv, "weight", l.weight) ||
                               take(lk, lv, "normalization", l.normalization) ||
                               take_enum(lk, lv, "lipschitz", l.lipschitz, lipschitz_from_string) || take(lk, lv, "clip", l.clip) ||
                               take(lk, lv, "penalty_lambda", l.penalty_lambda) || take(lk, lv, "n_critic", l.n_critic) ||
                               take(lk, lv, "non_saturating", l.non_saturating);
                    });
                    return true;
                }
                if (tk == "network") {
                    NetworkConfig& n = t.network;
                    merge_object(tv, "trainer.network.", [&](const std::string& nk, const json& nv) {
                        return take(nk, nv, "latent_dim", n.latent_dim) || take(nk, nv, "generator_hidden", n.generator_hidden) ||
                               take(nk, nv, "critic_hidden", n.critic_hidden) || take(nk, nv, "hidden_layers", n.hidden_layers);
                    });
                    return true;
                }
                if (tk == "generator_adam") {
                    merge_adam(t.generator_adam, tv, "trainer.generator_adam.");
                    return true;
                }
                if (tk == "critic_adam") {
                    merge_adam(t.critic_adam, tv, "trainer.critic_adam.");
                    return true;
                }
                return take_enum(tk, tv, "mode", t.mode, train_mode_from_string) || take(tk, tv, "stages", t.stages) ||
                       take(tk, tv, "budget", t.budget) || take(tk, tv, "iterations_per_stage", t.iterations_per_stage) ||
                       take(tk, tv, "batch_size", t.batch_size) || take_enum(tk, tv, "policy", t.policy, selection_policy_from_string) ||
                       take(tk, tv, "candidate_pool", t.candidate_pool) || take(tk, tv, "use_unlabeled", t.use_unlabeled) ||
                       take(tk, tv, "reestimate_alpha_all_stages", t.reestimate_alpha_all_stages) ||
                       take(tk, tv, "rare_condition_rate", t.rare_condition_rate) || take(tk, tv, "lr_decay", t.lr_decay) ||
                       take(tk, tv, "generator_ema", t.generator_ema) || take(tk, tv, "gumbel_softmax", t.gumbel_softmax) || take(tk, tv, "gumbel_temperature", t.gumbel_temperature) ||
                       take(tk, tv, "metrics_samples", t.metrics_samples) || take(tk, tv, "seed", t.seed);
            });
            return true;
        }
        return take(k, v, "schema", c.schema) || take(k, v, "target", c.target) || take(k, v, "gate_fields", c.gate_fields) ||
               take(k, v, "gain", c.gain) || take(k, v, "target_seed", c.target_seed) || take(k, v, "threshold", c.threshold) ||
               take(k, v, "eval_samples", c.eval_samples) || take(k, v, "ground_truth_samples", c.ground_truth_samples) ||
               take(k, v, "enumeration_cap", c.enumeration_cap);
    });
}

Rng train_rng(std::uint64_t seed) {
    std::seed_seq seq{seed, std::uint64_t{0x7261726567616e31}};
    return Rng(seq);
}

Rng eval_rng(std::uint64_t seed) {
    std::seed_seq seq{seed, std::uint64_t{0x6576616c75617465}};
    return Rng(seq);
}

EvalReport evaluate_state(const TrainState& state, const ScoreFunction& score, double threshold, const EmpiricalScoreDist& truth,
                          std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("evaluation needs at least one sample");
    Rng rng = eval_rng(seed);
    const std::vector<Packet> samples = sample_rare(state, n, rng);
    EvalReport report = evaluate_samples(samples, score, threshold, truth);
    report.seed = seed;
    return report;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const TrainObserver& observer) {
    config.validate();
    const PacketSchema schema = resolve_schema(config.schema);
    const auto target = make_target(config.target, schema, config.gate_fields, config.gain, config.target_seed);
    Rng truth_rng = eval_rng(config.target_seed);
    const EmpiricalScoreDist truth =
        ground_truth_scores(*target, config.threshold, config.enumeration_cap, config.ground_truth_samples, truth_rng);

    BudgetedOracle oracle(target, config.threshold, config.trainer.budget);
    Rng rng = train_rng(config.trainer.seed);
    ExperimentResult result;
    result.train = train(config.trainer, schema, oracle, rng, observer);
    result.labels_spent = oracle.spent();
    result.report = evaluate_state(result.train.state, *target, config.threshold, truth, config.eval_samples, config.trainer.seed);
    return result;
}

std::string Components::name() const {
    std::string out;
    if (unlabeled) out += 'U';
    if (active) out += 'A';
    if (weighted) out += 'W';
    return out.empty() ? "NULL" : out;
}

Components parse_components(std::string_view name) {
    Components c;
    if (name == "NULL") return c;
    if (name.empty()) throw InvalidArgument("empty component combination");
    for (char ch : name) {
        bool* flag = ch == 'U' ? &c.unlabeled : ch == 'A' ? &c.active : ch == 'W' ? &c.weighted : nullptr;
        if (flag == nullptr || *flag) throw InvalidArgument("bad component combination '" + std::string(name) + "'");
        *flag = true;
    }
    if (c.active && !c.unlabeled) throw InvalidArgument("component combination '" + std::string(name) + "': active learning requires U");
    return c;
}

std::vector<Components> all_components() {
    return {{false, false, false}, {true, false, false}, {false, false, true}, {true, true, false}, {true, false, true}, {true, true, true}};
}

ExperimentConfig apply_components(ExperimentConfig config, const Components& components, double weight) {
    if (components.active && !components.unlabeled) throw InvalidArgument("active learning requires unlabeled samples");
    TrainerConfig& t = config.trainer;
    t.mode = TrainMode::conditional;
    t.use_unlabeled = components.unlabeled;
    if (!components.active) t.policy = SelectionPolicy::random;
    else if (t.policy == SelectionPolicy::random) t.policy = SelectionPolicy::least_confident;
    t.loss.weight = components.weighted ? weight : 1.0;
    return config;
}

std::size_t AblationGrid::cells(const ExperimentConfig&) const {
    auto axis = [](std::size_t n) { return std::max<std::size_t>(n, 1); };
    std::size_t per_budget = 0;
    for (const Components& c : components) per_budget += c.weighted ? axis(weights.size()) : 1;
    return per_budget * axis(budgets.size()) * axis(thresholds.size()) * axis(stages.size());
}

void AblationGrid::validate() const {
    if (components.empty()) throw InvalidArgument("ablation: no component combinations");
    if (seeds.empty()) throw InvalidArgument("ablation: no seeds");
    for (const Components& c : components)
        if (c.active && !c.unlabeled) throw InvalidArgument("ablation: combination " + c.name() + " uses A without U");
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const AblationGrid& grid, const AblationObserver& observer) {
    grid.validate();
    const std::vector<std::uint64_t> budgets = grid.budgets.empty() ? std::vector{base.trainer.budget} : grid.budgets;
    const std::vector<double> thresholds = grid.thresholds.empty() ? std::vector{base.threshold} : grid.thresholds;
    const std::vector<std::size_t> stages = grid.stages.empty() ? std::vector{base.trainer.stages} : grid.stages;
    const std::vector<double> weights = grid.weights.empty() ? std::vector{base.trainer.loss.weight} : grid.weights;

    const PacketSchema schema = resolve_schema(base.schema);
    const auto target = make_target(base.target, schema, base.gate_fields, base.gain, base.target_seed);
    const bool enumerable = search_space_size(schema) <= base.enumeration_cap;
    std::map<double, double> alphas;
    for (double t : thresholds)
        alphas[t] = enumerable ? enumerate_ground_truth(*target, t, base.enumeration_cap).alpha : std::nan("");

    std::vector<AblationRow> rows;
    for (const Components& comp : grid.components)
        for (std::uint64_t b : budgets)
            for (double t : thresholds)
                for (std::size_t s : stages)
                    for (double w : weights) {
                        // Without W the weight axis collapses to a single cell.
                        if (!comp.weighted && w != weights.front()) continue;
                        for (std::uint64_t seed : grid.seeds) {
                            ExperimentConfig cfg = apply_components(base, comp, w);
                            cfg.trainer.budget = b;
                            cfg.threshold = t;
                            cfg.trainer.stages = s;
                            cfg.trainer.seed = seed;
                            AblationRow row;
                            row.components = comp.name();
                            row.budget = b;
                            row.threshold = t;
                            row.alpha = alphas[t];
                            row.stages = s;
                            row.weight = cfg.trainer.loss.weight;
                            row.seed = seed;
                            row.report = run_experiment(cfg).report;
                            if (observer) observer(row);
                            rows.push_back(std::move(row));
                        }
                    }
    return rows;
}

void write_ablation_header(std::ostream& out) {
    out << "components,budget,threshold,alpha,stages,weight,seed,fidelity,diversity,n,n_rare,n_distinct_rare,no_rare\n";
}

void write_ablation_row(std::ostream& out, const AblationRow& r) {
    const EvalReport& e = r.report;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%llu,%.17g,%.17g,%zu,%.17g,%llu,%.17g,%.17g,%zu,%zu,%zu,%d\n", r.components.c_str(),
                  static_cast<unsigned long long>(r.budget), r.threshold, r.alpha, r.stages, r.weight, static_cast<unsigned long long>(r.seed),
                  e.fidelity, e.diversity, e.n_generated, e.n_rare, e.n_distinct_rare, e.no_rare ? 1 : 0);
    out << buf;
}

std::vector<AblationSummary> summarize_ablation(const std::vector<AblationRow>& rows) {
    std::vector<AblationSummary> out;
    std::vector<std::vector<const AblationRow*>> members;
    for (const AblationRow& r : rows) {
        std::size_t i = 0;
        for (; i < out.size(); ++i)
            if (out[i].components == r.components && out[i].budget == r.budget && out[i].threshold == r.threshold &&
                out[i].stages == r.stages && out[i].weight == r.weight)
                break;
        if (i == out.size()) {
            out.push_back({r.components, r.budget, r.threshold, r.stages, r.weight});
            members.emplace_back();
        }
        members[i].push_back(&r);
    }
    auto mean_se = [](const std::vector<double>& v, double& mean, double& se) {
        const double n = static_cast<double>(v.size());
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    };
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::vector<double> fid, div;
        for (const AblationRow* r : members[i]) {
            fid.push_back(r->report.fidelity);
            div.push_back(r->report.diversity);
        }
        out[i].runs = members[i].size();
        mean_se(fid, out[i].fidelity_mean, out[i].fidelity_stderr);
        mean_se(div, out[i].diversity_mean, out[i].diversity_stderr);
    }
    return out;
}

void write_summary(std::ostream& out, const std::vector<AblationSummary>& summary) {
    out << "components,budget,threshold,stages,weight,runs,fidelity_mean,fidelity_stderr,diversity_mean,diversity_stderr\n";
    char buf[512];
    for (const AblationSummary& s : summary) {
        std::snprintf(buf, sizeof buf, "%s,%llu,%.17g,%zu,%.17g,%zu,%.17g,%.17g,%.17g,%.17g\n", s.components.c_str(),
                      static_cast<unsigned long long>(s.budget), s.threshold, s.stages, s.weight, s.runs, s.fidelity_mean,
                      s.fidelity_stderr, s.diversity_mean, s.diversity_stderr);
        out << buf;
    }
}

}  // namespace raregan
