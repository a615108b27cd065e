#include "raregan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <unordered_set>

#include "raregan/checkpoint.hpp"
#include "raregan/errors.hpp"

namespace raregan {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr std::size_t kForwardChunk = 4096;
constexpr std::size_t kMetricWindow = 100;
constexpr std::size_t kCandidateRounds = 64;

void require_finite(double value, const std::string& what) {
    if (!std::isfinite(value)) throw Divergence(what + " became non-finite");
}

Matrix generator_probs(const DenseNet& generator, const Matrix& input) { return forward(generator, input).output(); }

std::vector<Label> draw_conditions(std::size_t n, double rare_probability, Rng& rng) {
    std::bernoulli_distribution rare(std::clamp(rare_probability, 0.0, 1.0));
    std::vector<Label> out(n);
    for (Label& l : out) l = rare(rng) ? Label::rare : Label::common;
    return out;
}

// Uniform packets, distinct from each other and from anything labeled so far.
std::vector<Packet> draw_candidates(const PacketSchema& schema, const TrainState& state, const BudgetedOracle& oracle, std::size_t pool,
                                    std::size_t needed, Rng& rng) {
    std::unordered_set<Packet, PacketHash> seen;
    std::vector<Packet> out;
    out.reserve(pool);
    for (std::size_t round = 0; round < kCandidateRounds && (round == 0 || out.size() < needed); ++round) {
        for (std::size_t i = 0; i < pool; ++i) {
            Packet p = sample_uniform(schema, rng);
            if (state.find_labeled(p) || oracle.cached(p) || !seen.insert(p).second) continue;
            out.push_back(std::move(p));
        }
    }
    if (out.size() < needed)
        throw InvalidArgument("only " + std::to_string(out.size()) + " unlabeled candidates found, " + std::to_string(needed) + " needed");
    return out;
}

Matrix class_probabilities(const Critic& critic, const PacketSchema& schema, std::span<const Packet> packets) {
    Matrix probs(packets.size(), 2);
    for (std::size_t begin = 0; begin < packets.size(); begin += kForwardChunk) {
        const std::size_t count = std::min(kForwardChunk, packets.size() - begin);
        const Matrix x = encode_batch(schema, packets.subspan(begin, count));
        const CriticPass pass = critic_forward(critic, x);
        std::copy(pass.class_probs().data().begin(), pass.class_probs().data().end(),
                  probs.data().begin() + static_cast<std::ptrdiff_t>(begin * 2));
    }
    return probs;
}

}  // namespace

std::string_view to_string(TrainMode mode) { return mode == TrainMode::conditional ? "conditional" : "labeled-rare-only"; }

TrainMode train_mode_from_string(std::string_view text) {
    if (text == "conditional") return TrainMode::conditional;
    if (text == "labeled-rare-only") return TrainMode::labeled_rare_only;
    throw InvalidArgument("unknown train mode '" + std::string(text) + "'");
}

void TrainerConfig::validate() const {
    if (stages == 0) throw InvalidArgument("TrainerConfig: stages must be positive");
    if (budget == 0) throw InvalidArgument("TrainerConfig: budget must be positive");
    if (budget < stages) throw InvalidArgument("TrainerConfig: budget must cover at least one label per stage");
    if (batch_size == 0) throw InvalidArgument("TrainerConfig: batch size must be positive");
    if (candidate_pool < stage_budget(stages - 1)) throw InvalidArgument("TrainerConfig: candidate pool smaller than the per-stage budget");
    if (network.latent_dim == 0 || network.generator_hidden == 0 || network.critic_hidden == 0)
        throw InvalidArgument("TrainerConfig: network sizes must be positive");
    if (gumbel_softmax && !(gumbel_temperature > 0.0)) throw InvalidArgument("TrainerConfig: Gumbel temperature must be positive");
    if (!(rare_condition_rate >= 0.0 && rare_condition_rate < 1.0)) throw InvalidArgument("TrainerConfig: rare condition rate must be in [0, 1)");
    if (!(generator_ema >= 0.0 && generator_ema < 1.0)) throw InvalidArgument("TrainerConfig: generator EMA decay must be in [0, 1)");
    loss.validate();
}

std::uint64_t TrainerConfig::stage_budget(std::size_t stage) const {
    const std::uint64_t base = budget / stages;
    return stage + 1 == stages ? base + budget % stages : base;
}

CriticPass critic_forward(const Critic& critic, const Matrix& input) {
    CriticPass pass;
    pass.trunk = forward(critic.trunk, input);
    pass.gan = forward(critic.gan_head, pass.trunk.output());
    pass.cls = forward(critic.class_head, pass.trunk.output());
    return pass;
}

CriticGradients critic_backward(const Critic& critic, const CriticPass& pass, const Matrix& gan_grad, const Matrix& class_grad) {
    CriticGradients g;
    g.gan_head = backward(critic.gan_head, pass.gan, gan_grad);
    g.class_head = backward(critic.class_head, pass.cls, class_grad);
    Matrix features_grad = g.gan_head.input;
    auto dst = features_grad.data();
    auto src = g.class_head.input.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    g.trunk = backward(critic.trunk, pass.trunk, features_grad);
    g.input = g.trunk.input;
    return g;
}

const LabeledSample* TrainState::find_labeled(const Packet& packet) const {
    auto it = index_.find(packet);
    return it == index_.end() ? nullptr : &labeled[it->second];
}

void TrainState::add_labeled(LabeledSample sample) {
    if (index_.contains(sample.packet)) throw InvalidArgument("TrainState: packet already labeled");
    index_.emplace(sample.packet, labeled.size());
    labeled.push_back(std::move(sample));
}

TrainState make_train_state(const PacketSchema& schema, const TrainerConfig& config, Rng& rng) {
    const NetworkConfig& net = config.network;
    TrainState state;
    state.schema = schema;
    state.mode = config.mode;
    state.latent_dim = net.latent_dim;

    std::vector<LayerSpec> g_specs;
    for (std::size_t i = 0; i < net.hidden_layers; ++i) g_specs.push_back({net.generator_hidden, Activation::relu});
    g_specs.push_back({schema.encoded_width(), Activation::grouped_softmax, schema.group_widths()});
    state.generator = DenseNet::build(net.latent_dim + 2, g_specs, rng);

    std::vector<LayerSpec> trunk_specs;
    for (std::size_t i = 0; i < std::max<std::size_t>(net.hidden_layers, 1); ++i) trunk_specs.push_back({net.critic_hidden, Activation::relu});
    state.critic.trunk = DenseNet::build(schema.encoded_width(), trunk_specs, rng);
    const Activation gan_act = config.loss.family == LossFamily::js ? Activation::sigmoid : Activation::identity;
    const std::vector<LayerSpec> gan_spec{{1, gan_act}};
    const std::vector<LayerSpec> cls_spec{{2, Activation::grouped_softmax, {2}}};
    state.critic.gan_head = DenseNet::build(net.critic_hidden, gan_spec, rng);
    state.critic.class_head = DenseNet::build(net.critic_hidden, cls_spec, rng);
    return state;
}

Matrix make_generator_input(std::span<const Label> conditions, std::size_t latent_dim, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix input(conditions.size(), latent_dim + 2);
    for (std::size_t r = 0; r < conditions.size(); ++r) {
        auto row = input.row(r);
        for (std::size_t j = 0; j < latent_dim; ++j) row[j] = normal(rng);
        row[latent_dim + class_index(conditions[r])] = 1.0;
    }
    return input;
}

std::vector<Label> surrogate_labels(const Matrix& class_probs) {
    std::vector<Label> out(class_probs.rows());
    for (std::size_t r = 0; r < class_probs.rows(); ++r)
        out[r] = class_probs(r, class_index(Label::rare)) >= class_probs(r, class_index(Label::common)) ? Label::rare : Label::common;
    return out;
}

Matrix gumbel_softmax(const Matrix& probs, std::span<const std::size_t> groups, double temperature, Rng& rng) {
    std::uniform_real_distribution<double> uniform(std::numeric_limits<double>::min(), 1.0);
    Matrix out(probs.rows(), probs.cols());
    std::vector<double> logits(probs.cols());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto p = probs.row(r);
        for (std::size_t j = 0; j < p.size(); ++j) logits[j] = (std::log(std::max(p[j], kProbFloor)) - std::log(-std::log(uniform(rng)))) / temperature;
        auto y = out.row(r);
        std::size_t off = 0;
        for (std::size_t width : groups) {
            const double mx = *std::max_element(logits.begin() + static_cast<std::ptrdiff_t>(off), logits.begin() + static_cast<std::ptrdiff_t>(off + width));
            double sum = 0.0;
            for (std::size_t j = off; j < off + width; ++j) sum += (y[j] = std::exp(logits[j] - mx));
            for (std::size_t j = off; j < off + width; ++j) y[j] /= sum;
            off += width;
        }
    }
    return out;
}

Matrix gumbel_softmax_backward(const Matrix& probs, const Matrix& relaxed, const Matrix& grad_relaxed, std::span<const std::size_t> groups,
                               double temperature) {
    Matrix grad(probs.rows(), probs.cols());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto p = probs.row(r);
        auto y = relaxed.row(r);
        auto gy = grad_relaxed.row(r);
        auto out = grad.row(r);
        std::size_t off = 0;
        for (std::size_t width : groups) {
            double dot = 0.0;
            for (std::size_t j = off; j < off + width; ++j) dot += y[j] * gy[j];
            for (std::size_t j = off; j < off + width; ++j) {
                const double dlogit = y[j] * (gy[j] - dot) / temperature;
                out[j] = p[j] > kProbFloor ? dlogit / p[j] : 0.0;
            }
            off += width;
        }
    }
    return grad;
}

namespace {

// Generator objective with an optional Gumbel-softmax relaxation of the
// generated probabilities between the generator and the critic.
ObjectiveResult generator_step_objective(const DenseNet& generator, const Critic& critic, const LossConfig& loss, const Matrix& generator_input,
                                         std::span<const Label> conditions, double alpha_hat, bool conditional, std::span<const double> scale,
                                         double gumbel_temperature, Rng* gumbel_rng) {
    if (conditions.size() != generator_input.rows()) throw DimensionMismatch("generator_objective: one condition per input row required");
    if (!scale.empty() && scale.size() != conditions.size()) throw DimensionMismatch("generator_objective: one scale per input row required");
    const ForwardCache gen = forward(generator, generator_input);
    const auto groups = generator.layers().back().groups;
    const bool relax = gumbel_rng != nullptr;
    const Matrix relaxed = relax ? gumbel_softmax(gen.output(), groups, gumbel_temperature, *gumbel_rng) : Matrix{};
    const Matrix& fake = relax ? relaxed : gen.output();
    const CriticPass pass = critic_forward(critic, fake);
    const std::size_t n = fake.rows();

    const std::vector<Label> weight_labels = conditional ? surrogate_labels(pass.class_probs()) : std::vector<Label>(n, Label::rare);
    const WeightFunction weight{loss.weight, alpha_hat};
    const double inv_s = 1.0 / loss.normalization;
    const double nf = static_cast<double>(n);

    ObjectiveResult out;
    Matrix gan_grad(n, 1);
    double gan_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = scale.empty() ? weight(weight_labels[i]) : weight(weight_labels[i]) * scale[i];
        const double d = pass.d_values()(i, 0);
        if (!std::isfinite(d)) throw Divergence("generator_objective: non-finite discriminator output");
        if (loss.family == LossFamily::wasserstein) {
            gan_sum -= w * d;
            gan_grad(i, 0) = -inv_s * w / nf;
        } else if (loss.non_saturating) {
            gan_sum -= w * std::log(std::max(d, kProbFloor));
            gan_grad(i, 0) = d > kProbFloor ? -inv_s * w / (d * nf) : 0.0;
        } else {
            gan_sum += w * std::log(std::max(1.0 - d, kProbFloor));
            gan_grad(i, 0) = 1.0 - d > kProbFloor ? -inv_s * w / ((1.0 - d) * nf) : 0.0;
        }
    }
    out.value = n == 0 ? 0.0 : inv_s * (gan_sum / nf);

    Matrix class_grad(n, 2);
    if (conditional) {
        const ClassificationLossResult cls = classification_loss(Matrix(0, 2), {}, pass.class_probs(), conditions, scale);
        out.value += cls.value;
        class_grad = cls.fake_grad;
    }
    const CriticGradients cg = critic_backward(critic, pass, gan_grad, class_grad);
    const Matrix probs_grad = relax ? gumbel_softmax_backward(gen.output(), relaxed, cg.input, groups, gumbel_temperature) : cg.input;
    out.generator = backward(generator, gen, probs_grad);
    return out;
}

}  // namespace

ObjectiveResult generator_objective(const DenseNet& generator, const Critic& critic, const LossConfig& loss, const Matrix& generator_input,
                                    std::span<const Label> conditions, double alpha_hat, bool conditional,
                                    std::span<const double> condition_scale) {
    return generator_step_objective(generator, critic, loss, generator_input, conditions, alpha_hat, conditional, condition_scale, 0.0,
                                    nullptr);
}

CriticObjectiveResult critic_objective(const Critic& critic, const LossConfig& loss, const CriticBatch& batch, double alpha_hat,
                                       bool conditional, Rng* penalty_rng) {
    const std::size_t nr = batch.real.rows();
    const std::size_t nf = batch.fake.rows();
    const std::size_t nl = conditional ? batch.labeled.rows() : 0;
    if (batch.real_labels.size() != nr || batch.fake_conditions.size() != nf || (conditional && batch.labeled_labels.size() != nl))
        throw DimensionMismatch("critic_objective: label counts do not match batch sizes");

    Matrix input = vstack(batch.real, batch.fake);
    if (nl > 0) input = vstack(input, batch.labeled);
    const CriticPass pass = critic_forward(critic, input);
    const Matrix& d = pass.d_values();
    const Matrix& probs = pass.class_probs();

    std::vector<double> real_d(nr), fake_d(nf);
    for (std::size_t i = 0; i < nr; ++i) real_d[i] = d(i, 0);
    for (std::size_t i = 0; i < nf; ++i) fake_d[i] = d(nr + i, 0);
    std::vector<Label> fake_labels(nf, Label::rare);
    if (conditional) fake_labels = surrogate_labels(row_slice(probs, nr, nf));
    for (double v : real_d) require_finite(v, "critic output");
    for (double v : fake_d) require_finite(v, "critic output");

    const GanLossResult gan = gan_loss(loss, alpha_hat, real_d, batch.real_labels, fake_d, fake_labels, batch.fake_scale);

    CriticObjectiveResult out;
    out.gan = gan.value;
    Matrix gan_grad(input.rows(), 1);
    for (std::size_t i = 0; i < nr; ++i) gan_grad(i, 0) = -gan.real_grad[i];
    for (std::size_t i = 0; i < nf; ++i) gan_grad(nr + i, 0) = -gan.fake_grad[i];

    Matrix class_grad(input.rows(), 2);
    if (conditional) {
        const ClassificationLossResult cls =
            classification_loss(row_slice(probs, nr + nf, nl), batch.labeled_labels, row_slice(probs, nr, nf), batch.fake_conditions,
                                batch.fake_scale);
        out.classification = cls.value;
        for (std::size_t i = 0; i < nf; ++i)
            for (std::size_t c = 0; c < 2; ++c) class_grad(nr + i, c) = cls.fake_grad(i, c);
        for (std::size_t i = 0; i < nl; ++i)
            for (std::size_t c = 0; c < 2; ++c) class_grad(nr + nf + i, c) = cls.real_grad(i, c);
    }
    out.grads = critic_backward(critic, pass, gan_grad, class_grad);

    if (loss.family == LossFamily::wasserstein && loss.lipschitz == Lipschitz::gradient_penalty && penalty_rng != nullptr) {
        const std::size_t n = std::min(nr, nf);
        Matrix mixed(n, input.cols());
        std::uniform_real_distribution<double> eps_dist(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double eps = eps_dist(*penalty_rng);
            for (std::size_t j = 0; j < input.cols(); ++j) mixed(i, j) = eps * batch.real(i, j) + (1.0 - eps) * batch.fake(i, j);
        }
        const DenseNet composed = compose(critic.trunk, critic.gan_head);
        const PenaltyResult penalty = gradient_penalty(composed, mixed, loss.penalty_lambda);
        out.penalty = penalty.value;
        const std::size_t trunk_layers = critic.trunk.layers().size();
        for (std::size_t l = 0; l < composed.layers().size(); ++l) {
            NetGradients& target = l < trunk_layers ? out.grads.trunk : out.grads.gan_head;
            const std::size_t local = l < trunk_layers ? l : l - trunk_layers;
            auto dst = target.weight[local].data();
            auto src = penalty.grads.weight[l].data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            for (std::size_t i = 0; i < target.bias[local].size(); ++i) target.bias[local][i] += penalty.grads.bias[l][i];
        }
    }
    out.value = -out.gan + out.classification + out.penalty;
    return out;
}

TrainResult train(const TrainerConfig& config, const PacketSchema& schema, BudgetedOracle& oracle, Rng& rng, const TrainObserver& observer) {
    config.validate();
    if (!oracle.score_function().schema().same_layout(schema)) throw DimensionMismatch("train: oracle schema differs from training schema");
    const bool conditional = config.mode == TrainMode::conditional;
    const double threshold = oracle.threshold();

    TrainResult result;
    TrainState& state = result.state;
    state = make_train_state(schema, config, rng);
    AdamState g_adam = AdamState::for_net(state.generator, config.generator_adam);
    AdamState trunk_adam = AdamState::for_net(state.critic.trunk, config.critic_adam);
    AdamState gan_adam = AdamState::for_net(state.critic.gan_head, config.critic_adam);
    AdamState cls_adam = AdamState::for_net(state.critic.class_head, config.critic_adam);
    const std::size_t batch = config.batch_size;
    const bool clip = config.loss.family == LossFamily::wasserstein && config.loss.lipschitz == Lipschitz::clip;
    const bool ema = config.generator_ema > 0.0;
    std::vector<double> ema_params = ema ? state.generator.flatten() : std::vector<double>{};
    auto averaged = [&] {
        TrainState copy = state;
        copy.generator.assign(ema_params);
        return copy;
    };

    for (std::size_t stage = 0; stage < config.stages; ++stage) {
        state.stage = stage;
        const std::uint64_t k = config.stage_budget(stage);

        // Labeling round.
        const std::vector<Packet> candidates = draw_candidates(schema, state, oracle, config.candidate_pool, k, rng);
        const SelectionPolicy policy = (stage == 0 || !conditional) ? SelectionPolicy::random : config.policy;
        std::vector<double> confidence(candidates.size(), 0.0);
        if (policy != SelectionPolicy::random) confidence = max_class_probability(class_probabilities(state.critic, schema, candidates));
        for (std::size_t idx : select_for_labeling(confidence, k, policy, rng)) {
            const LabelResult lr = oracle.label(candidates[idx]);
            state.add_labeled({candidates[idx], lr.label, lr.score, stage});
        }

        std::vector<Label> alpha_labels;
        for (const LabeledSample& s : state.labeled)
            if (s.stage == 0 || config.reestimate_alpha_all_stages) alpha_labels.push_back(s.label);
        state.alpha_hat = estimate_alpha(alpha_labels);

        StageMetrics metrics;
        metrics.stage = stage;
        metrics.stage_labels = k;
        metrics.labels_spent = oracle.spent();
        metrics.alpha_hat = state.alpha_hat;

        LossConfig loss = config.loss;
        if (conditional) {
            const EffectiveWeight eff = effective_weight(config.loss.weight, state.alpha_hat);
            loss.weight = eff.w;
            metrics.weight_demoted = eff.demoted;
            if (eff.demoted)
                result.warnings.push_back("stage " + std::to_string(stage) + ": weight " + std::to_string(config.loss.weight) +
                                          " unusable with alpha_hat " + std::to_string(state.alpha_hat) + "; weighting disabled");
        } else {
            loss.weight = 1.0;
        }
        metrics.effective_weight = loss.weight;

        std::vector<const LabeledSample*> rare_pool, pool;
        for (const LabeledSample& s : state.labeled) {
            pool.push_back(&s);
            if (s.label == Label::rare) rare_pool.push_back(&s);
        }
        metrics.labeled_rare = rare_pool.size();
        if (!conditional && rare_pool.empty()) throw std::runtime_error("train: no rare samples among the labeled packets");
        const double labeled_rare_fraction = static_cast<double>(rare_pool.size()) / static_cast<double>(pool.size());
        const double condition_rare = !conditional ? 1.0 : config.use_unlabeled ? state.alpha_hat : labeled_rare_fraction;
        std::uniform_int_distribution<std::size_t> pick_pool(0, pool.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_rare(0, rare_pool.empty() ? 0 : rare_pool.size() - 1);

        // Importance-sampled conditions: draw at `draw_rare`, rescale to `condition_rare`.
        const bool reweigh = conditional && config.rare_condition_rate > 0.0;
        const double draw_rare = reweigh ? config.rare_condition_rate : condition_rare;
        auto condition_scale = [&](const std::vector<Label>& conditions) {
            std::vector<double> out;
            if (!reweigh) return out;
            for (Label c : conditions)
                out.push_back(c == Label::rare ? condition_rare / draw_rare : (1.0 - condition_rare) / (1.0 - draw_rare));
            return out;
        };
        auto fake_batch = [&](std::vector<Label>& conditions) {
            conditions = draw_conditions(batch, draw_rare, rng);
            const Matrix probs = generator_probs(state.generator, make_generator_input(conditions, state.latent_dim, rng));
            return config.gumbel_softmax ? gumbel_softmax(probs, schema.group_widths(), config.gumbel_temperature, rng) : probs;
        };

        const std::size_t critic_steps = loss.critic_steps();
        double critic_sum = 0.0, gen_sum = 0.0, cls_sum = 0.0;
        std::size_t window = 0;
        for (std::size_t it = 0; it < config.iterations_per_stage; ++it) {
            const bool record = it + kMetricWindow >= config.iterations_per_stage;
            if (config.lr_decay) {
                const double f = 1.0 - static_cast<double>(it) / static_cast<double>(config.iterations_per_stage);
                g_adam.hyper.learning_rate = f * config.generator_adam.learning_rate;
                for (AdamState* a : {&trunk_adam, &gan_adam, &cls_adam}) a->hyper.learning_rate = f * config.critic_adam.learning_rate;
            }
            for (std::size_t c = 0; c < critic_steps; ++c) {
                CriticBatch cb;
                std::vector<Packet> real_packets(batch);
                std::vector<std::optional<Label>> known(batch);
                for (std::size_t i = 0; i < batch; ++i) {
                    if (!conditional) {
                        real_packets[i] = rare_pool[pick_rare(rng)]->packet;
                        known[i] = Label::rare;
                    } else if (config.use_unlabeled) {
                        real_packets[i] = sample_uniform(schema, rng);
                        if (const LabeledSample* s = state.find_labeled(real_packets[i])) known[i] = s->label;
                    } else {
                        const LabeledSample* s = pool[pick_pool(rng)];
                        real_packets[i] = s->packet;
                        known[i] = s->label;
                    }
                }
                cb.real = encode_batch(schema, real_packets);
                // Unlabeled real samples are weighted by the classifier's label.
                std::vector<Label> surrogate;
                if (conditional && std::any_of(known.begin(), known.end(), [](const auto& l) { return !l.has_value(); }))
                    surrogate = surrogate_labels(critic_forward(state.critic, cb.real).class_probs());
                cb.real_labels.resize(batch);
                for (std::size_t i = 0; i < batch; ++i) cb.real_labels[i] = known[i] ? *known[i] : surrogate[i];
                cb.fake = fake_batch(cb.fake_conditions);
                cb.fake_scale = condition_scale(cb.fake_conditions);
                if (conditional) {
                    std::vector<Packet> labeled_packets(batch);
                    cb.labeled_labels.resize(batch);
                    for (std::size_t i = 0; i < batch; ++i) {
                        const LabeledSample* s = pool[pick_pool(rng)];
                        labeled_packets[i] = s->packet;
                        cb.labeled_labels[i] = s->label;
                    }
                    cb.labeled = encode_batch(schema, labeled_packets);
                }
                const CriticObjectiveResult co = critic_objective(state.critic, loss, cb, state.alpha_hat, conditional, &rng);
                require_finite(co.value, "critic loss");
                adam_step(trunk_adam, state.critic.trunk, co.grads.trunk);
                adam_step(gan_adam, state.critic.gan_head, co.grads.gan_head);
                if (conditional) adam_step(cls_adam, state.critic.class_head, co.grads.class_head);
                if (clip) {
                    clip_weights(state.critic.trunk, loss.clip);
                    clip_weights(state.critic.gan_head, loss.clip);
                }
                if (record && c + 1 == critic_steps) {
                    critic_sum += co.value;
                    cls_sum += co.classification;
                }
            }
            const std::vector<Label> conditions = draw_conditions(batch, draw_rare, rng);
            const Matrix input = make_generator_input(conditions, state.latent_dim, rng);
            const ObjectiveResult go = generator_step_objective(state.generator, state.critic, loss, input, conditions, state.alpha_hat,
                                                                conditional, condition_scale(conditions), config.gumbel_temperature,
                                                                config.gumbel_softmax ? &rng : nullptr);
            require_finite(go.value, "generator loss");
            adam_step(g_adam, state.generator, go.generator);
            if (ema) {
                const std::vector<double> p = state.generator.flatten();
                for (std::size_t i = 0; i < p.size(); ++i) ema_params[i] = config.generator_ema * ema_params[i] + (1.0 - config.generator_ema) * p[i];
            }
            if (record) {
                gen_sum += go.value;
                ++window;
            }
        }
        if (window > 0) {
            metrics.critic_loss = critic_sum / static_cast<double>(window);
            metrics.generator_loss = gen_sum / static_cast<double>(window);
            metrics.classification_loss = cls_sum / static_cast<double>(window);
        }
        if (config.metrics_samples > 0) {
            const auto samples = sample_rare(ema ? averaged() : state, config.metrics_samples, rng);
            std::size_t hits = 0;
            for (const Packet& p : samples) hits += oracle.score_function().score(p) >= threshold ? 1 : 0;
            metrics.rare_hit_rate = static_cast<double>(hits) / static_cast<double>(samples.size());
        }
        result.stages.push_back(metrics);
        if (observer) observer(metrics);
    }
    if (ema) state.generator.assign(ema_params);
    return result;
}

std::vector<Packet> sample_rare(const TrainState& state, std::size_t n, Rng& rng) {
    std::vector<Packet> out;
    out.reserve(n);
    for (std::size_t begin = 0; begin < n; begin += kForwardChunk) {
        const std::size_t count = std::min(kForwardChunk, n - begin);
        const std::vector<Label> conditions(count, Label::rare);
        const Matrix probs = generator_probs(state.generator, make_generator_input(conditions, state.latent_dim, rng));
        for (Packet& p : decode_batch(state.schema, probs)) out.push_back(std::move(p));
    }
    return out;
}

void save_train_state(const std::filesystem::path& path, const TrainState& state) {
    save_nets(path, {state.generator, state.critic.trunk, state.critic.gan_head, state.critic.class_head});
}

TrainState load_train_state(const std::filesystem::path& path, const PacketSchema& schema, TrainMode mode, double alpha_hat) {
    std::vector<DenseNet> nets = load_nets(path);
    if (nets.size() != 4) throw FormatError("checkpoint " + path.string() + ": expected 4 networks, found " + std::to_string(nets.size()));
    const Layer& out = nets[0].layers().back();
    if (out.activation != Activation::grouped_softmax || out.groups != schema.group_widths() || nets[1].in_dim() != schema.encoded_width())
        throw DimensionMismatch("checkpoint " + path.string() + " does not match schema '" + schema.name() + "'");
    if (nets[0].in_dim() < 3) throw FormatError("checkpoint: generator input too narrow");
    TrainState state;
    state.schema = schema;
    state.mode = mode;
    state.latent_dim = nets[0].in_dim() - 2;
    state.generator = std::move(nets[0]);
    state.critic = {std::move(nets[1]), std::move(nets[2]), std::move(nets[3])};
    state.alpha_hat = alpha_hat;
    return state;
}

}  // namespace raregan
