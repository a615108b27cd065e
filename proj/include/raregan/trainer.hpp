#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "raregan/adam.hpp"
#include "raregan/losses.hpp"
#include "raregan/nn.hpp"
#include "raregan/oracle.hpp"
#include "raregan/schema.hpp"
#include "raregan/selection.hpp"

namespace raregan {

enum class TrainMode {
    // Conditional GAN with an auxiliary rare/common classifier.
    conditional,
    // Unconditional GAN fitted to the labeled rare samples only (baseline).
    labeled_rare_only,
};

std::string_view to_string(TrainMode mode);
TrainMode train_mode_from_string(std::string_view text);

struct NetworkConfig {
    std::size_t latent_dim = 16;
    std::size_t generator_hidden = 64;
    std::size_t critic_hidden = 64;
    std::size_t hidden_layers = 2;
};

struct TrainerConfig {
    TrainMode mode = TrainMode::conditional;
    std::size_t stages = 2;
    std::uint64_t budget = 2000;
    std::size_t iterations_per_stage = 2000;
    std::size_t batch_size = 64;
    // Policy for stages after the first; the first stage is always random.
    SelectionPolicy policy = SelectionPolicy::least_confident;
    std::size_t candidate_pool = 100000;
    // Feed uniform (unlabeled) samples to the GAN loss; otherwise the GAN
    // loss sees the labeled pool only.
    bool use_unlabeled = true;
    // Re-estimate alpha_hat from every labeled stage instead of the first
    // (uniformly drawn) stage only.
    bool reestimate_alpha_all_stages = false;
    // When positive, training draws the rare condition at this rate and
    // rescales each generated sample by p(c) / rate(c), so the objective is
    // unchanged in expectation while rare-conditioned samples appear in every
    // batch. Zero draws conditions at their natural rate.
    double rare_condition_rate = 0.0;
    // Linearly decay both learning rates to zero over each stage.
    bool lr_decay = false;
    // Decay of an exponential moving average of the generator parameters;
    // when positive the averaged generator is the one sampled from. 0 disables.
    double generator_ema = 0.0;
    bool gumbel_softmax = false;
    double gumbel_temperature = 0.5;
    LossConfig loss;
    NetworkConfig network;
    AdamHyper generator_adam;
    AdamHyper critic_adam;
    // Rare-conditioned samples scored (unmetered) for the per-stage hit rate.
    std::size_t metrics_samples = 2000;
    std::uint64_t seed = 1;

    void validate() const;
    // Labels requested in stage `stage` (the last stage takes the remainder).
    std::uint64_t stage_budget(std::size_t stage) const;
};

// Discriminator and classifier sharing one trunk, with separate heads.
struct Critic {
    DenseNet trunk;
    DenseNet gan_head;
    DenseNet class_head;  // grouped softmax over {rare, common}
};

struct CriticPass {
    ForwardCache trunk;
    ForwardCache gan;
    ForwardCache cls;

    const Matrix& d_values() const { return gan.output(); }
    const Matrix& class_probs() const { return cls.output(); }
};

CriticPass critic_forward(const Critic& critic, const Matrix& input);

struct CriticGradients {
    NetGradients trunk;
    NetGradients gan_head;
    NetGradients class_head;
    Matrix input;
};

// Backpropagates head output gradients (n x 1 for the GAN head, n x 2 for the
// class head) through both heads and the shared trunk.
CriticGradients critic_backward(const Critic& critic, const CriticPass& pass, const Matrix& gan_grad, const Matrix& class_grad);

struct LabeledSample {
    Packet packet;
    Label label = Label::common;
    double score = 0.0;
    std::size_t stage = 0;
};

struct TrainState {
    PacketSchema schema;
    TrainMode mode = TrainMode::conditional;
    std::size_t latent_dim = 0;
    DenseNet generator;
    Critic critic;
    std::vector<LabeledSample> labeled;
    double alpha_hat = 0.0;
    std::size_t stage = 0;

    // Label of a labeled packet, if any.
    const LabeledSample* find_labeled(const Packet& packet) const;
    void add_labeled(LabeledSample sample);

private:
    std::unordered_map<Packet, std::size_t, PacketHash> index_;
};

// Fresh networks sized for `schema`.
TrainState make_train_state(const PacketSchema& schema, const TrainerConfig& config, Rng& rng);

struct StageMetrics {
    std::size_t stage = 0;
    std::uint64_t labels_spent = 0;
    std::uint64_t stage_labels = 0;
    std::size_t labeled_rare = 0;
    double alpha_hat = 0.0;
    double effective_weight = 1.0;
    bool weight_demoted = false;
    double critic_loss = 0.0;
    double generator_loss = 0.0;
    double classification_loss = 0.0;
    double rare_hit_rate = 0.0;
};

struct TrainResult {
    TrainState state;
    std::vector<StageMetrics> stages;
    std::vector<std::string> warnings;
};

using TrainObserver = std::function<void(const StageMetrics&)>;

// Runs the staged procedure: per stage, draw a candidate pool, select and
// label its share of the budget, update alpha_hat, then train. Throws
// Divergence on a non-finite loss and BudgetExhausted if the oracle runs out.
TrainResult train(const TrainerConfig& config, const PacketSchema& schema, BudgetedOracle& oracle, Rng& rng,
                  const TrainObserver& observer = {});

// Packets decoded from G(z, rare).
std::vector<Packet> sample_rare(const TrainState& state, std::size_t n, Rng& rng);

// Generator input rows: standard normal latent followed by the one-hot condition.
Matrix make_generator_input(std::span<const Label> conditions, std::size_t latent_dim, Rng& rng);

// Labels from the classifier's argmax (rare wins ties).
std::vector<Label> surrogate_labels(const Matrix& class_probs);

struct ObjectiveResult {
    double value = 0.0;
    NetGradients generator;
};

// Generator objective on one batch: the generated-sample GAN term it
// minimizes (weighted by surrogate labels of the generated samples) plus,
// in conditional mode, the classification loss of the conditioned fakes.
// `condition_scale`, if non-empty, multiplies each sample's terms.
ObjectiveResult generator_objective(const DenseNet& generator, const Critic& critic, const LossConfig& loss, const Matrix& generator_input,
                                    std::span<const Label> conditions, double alpha_hat, bool conditional,
                                    std::span<const double> condition_scale = {});

struct CriticObjectiveResult {
    double value = 0.0;
    double gan = 0.0;
    double classification = 0.0;
    double penalty = 0.0;
    CriticGradients grads;
};

struct CriticBatch {
    Matrix real;                     // GAN-loss real samples
    std::vector<Label> real_labels;  // true or surrogate labels, for weighting
    Matrix fake;                     // generated samples
    std::vector<Label> fake_conditions;
    std::vector<double> fake_scale;  // empty, or one importance factor per generated sample
    Matrix labeled;                  // labeled real samples for the classification loss
    std::vector<Label> labeled_labels;
};

// Critic objective to minimize: -GAN loss + classification loss (+ gradient
// penalty). Generated samples are weighted by their surrogate labels.
CriticObjectiveResult critic_objective(const Critic& critic, const LossConfig& loss, const CriticBatch& batch, double alpha_hat,
                                       bool conditional, Rng* penalty_rng = nullptr);

// Gumbel-softmax relaxation of per-field probabilities and its backward pass.
Matrix gumbel_softmax(const Matrix& probs, std::span<const std::size_t> groups, double temperature, Rng& rng);
Matrix gumbel_softmax_backward(const Matrix& probs, const Matrix& relaxed, const Matrix& grad_relaxed, std::span<const std::size_t> groups,
                               double temperature);

// Checkpoint I/O for a TrainState: generator, trunk, GAN head, class head.
void save_train_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_train_state(const std::filesystem::path& path, const PacketSchema& schema, TrainMode mode, double alpha_hat);

}  // namespace raregan
