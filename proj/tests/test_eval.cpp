#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "raregan/errors.hpp"
#include "raregan/eval.hpp"
#include "raregan/experiment.hpp"

using namespace raregan;

namespace {

// Scores looked up by packet rank on a toy schema.
class TableScore final : public ScoreFunction {
public:
    TableScore(PacketSchema schema, std::vector<double> table) : schema_(std::move(schema)), table_(std::move(table)) {}
    double score(const Packet& p) const override { return table_.at(packet_rank(schema_, p)); }
    const PacketSchema& schema() const override { return schema_; }
    std::string describe() const override { return "table"; }

private:
    PacketSchema schema_;
    std::vector<double> table_;
};

Packet at(const PacketSchema& s, std::uint64_t rank) { return packet_from_rank(s, rank); }

// Riemann sum of |F_a - F_b| on a fine grid.
double w1_grid(const std::vector<double>& a, const std::vector<double>& b, std::size_t steps = 200000) {
    const double lo = std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end()));
    const double hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
    if (hi == lo) return 0.0;
    auto cdf = [](const std::vector<double>& v, double x) {
        return static_cast<double>(std::count_if(v.begin(), v.end(), [x](double y) { return y <= x; })) / v.size();
    };
    const double h = (hi - lo) / steps;
    double total = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
        const double x = lo + (i + 0.5) * h;
        total += std::abs(cdf(a, x) - cdf(b, x)) * h;
    }
    return total;
}

std::vector<double> random_values(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

}  // namespace

TEST_CASE("wasserstein1 closed-form examples") {
    CHECK(wasserstein1(EmpiricalScoreDist({1.0, 2.0, 2.0}), EmpiricalScoreDist({2.0, 1.0, 2.0})) == 0.0);
    CHECK(std::abs(wasserstein1(EmpiricalScoreDist({0.0}), EmpiricalScoreDist({1.0})) - 1.0) <= 1e-12);
    CHECK(std::abs(wasserstein1(EmpiricalScoreDist({0.0, 1.0}), EmpiricalScoreDist({0.5})) - 0.5) <= 1e-12);
    CHECK(std::abs(w1_grid({0.0, 1.0}, {0.5}) - 0.5) < 1e-4);
    CHECK_THROWS_AS(wasserstein1(EmpiricalScoreDist(std::vector<double>{}), EmpiricalScoreDist({1.0})), InvalidArgument);
    CHECK_THROWS_AS(EmpiricalScoreDist({1.0, std::nan("")}), InvalidArgument);
}

TEST_CASE("wasserstein1 equals the sorted-pairing formula on equal sizes") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 40;
        auto a = random_values(n, rng), b = random_values(n, rng);
        const double w = wasserstein1(EmpiricalScoreDist(a), EmpiricalScoreDist(b));
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        double pairing = 0.0;
        for (std::size_t i = 0; i < n; ++i) pairing += std::abs(a[i] - b[i]);
        CHECK(std::abs(w - pairing / n) <= 1e-12);
    }
}

TEST_CASE("wasserstein1 on unequal sizes agrees with a discretized CDF") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_values(3 + trial, rng), b = random_values(7 + 2 * trial, rng);
        CHECK(std::abs(wasserstein1(EmpiricalScoreDist(a), EmpiricalScoreDist(b)) - w1_grid(a, b)) < 1e-3);
    }
}

TEST_CASE("wasserstein1 is a metric") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const EmpiricalScoreDist a(random_values(1 + trial % 7, rng)), b(random_values(2 + trial % 5, rng)), c(random_values(1 + trial % 9, rng));
        CHECK(wasserstein1(a, b) == doctest::Approx(wasserstein1(b, a)).epsilon(1e-12));
        CHECK(wasserstein1(a, a) == 0.0);
        CHECK(wasserstein1(a, b) > 0.0);
        CHECK(wasserstein1(a, c) <= wasserstein1(a, b) + wasserstein1(b, c) + 1e-12);
    }
}

TEST_CASE("diversity on hand-built cases") {
    const PacketSchema s = toy_schema(2);
    const double T = 10.0;
    const TableScore score(s, {T + 1, T - 1, T + 2, T + 5});
    const std::vector<Packet> four{at(s, 0), at(s, 0), at(s, 1), at(s, 2)};
    CHECK(diversity(four, score, T) == 0.5);
    const std::vector<Packet> none{at(s, 1), at(s, 1)};
    CHECK(diversity(none, score, T) == 0.0);
    const std::vector<Packet> all{at(s, 0), at(s, 2), at(s, 3)};
    CHECK(diversity(all, score, T) == 1.0);
    CHECK_THROWS_AS(diversity(std::vector<Packet>{}, score, T), InvalidArgument);
}

TEST_CASE("diversity is order-invariant and non-increasing in T") {
    const PacketSchema s = toy_schema(8);
    const SyntheticAmplifier score(s, 3, 20.0);
    Rng rng(14);
    std::vector<Packet> samples;
    for (int i = 0; i < 500; ++i) samples.push_back(sample_uniform(s, rng));
    const double d = diversity(samples, score, 10.0);
    std::shuffle(samples.begin(), samples.end(), rng);
    CHECK(diversity(samples, score, 10.0) == d);
    double prev = 1.0;
    for (double T : {0.0, 1.0, 10.0, 25.0, 30.0, 35.0, 41.0, 50.0}) {
        const double v = diversity(samples, score, T);
        CHECK(v <= prev);
        prev = v;
    }
    const EvalReport r = evaluate_samples(samples, score, 10.0, EmpiricalScoreDist({21.0}));
    CHECK(r.diversity <= r.rare_fraction());
    CHECK(r.rare_fraction() <= 1.0);
}

TEST_CASE("fidelity of a memorizing generator is W1 to a point mass") {
    const PacketSchema s = toy_schema(12);
    const SyntheticAmplifier score(s, 7, 20.0);
    const GroundTruth gt = enumerate_ground_truth(score, 10.0);
    REQUIRE(gt.rare.size() == 32);
    std::map<double, int> counts;
    for (double v : gt.rare_scores) ++counts[v];
    const double modal = std::max_element(counts.begin(), counts.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
    const Packet* memorized = nullptr;
    for (const Packet& p : gt.rare)
        if (score.score(p) == modal) memorized = &p;
    REQUIRE(memorized != nullptr);
    const std::vector<Packet> samples(1000, *memorized);
    const EmpiricalScoreDist truth(gt.rare_scores);
    const EvalReport r = evaluate_samples(samples, score, 10.0, truth);
    double expected = 0.0;
    for (double v : gt.rare_scores) expected += std::abs(v - modal);
    expected /= static_cast<double>(gt.rare_scores.size());
    CHECK(r.fidelity == doctest::Approx(expected).epsilon(1e-12));
    CHECK(r.n_distinct_rare == 1);
    CHECK(r.diversity == 0.001);
}

TEST_CASE("an enumeration-backed perfect sampler converges") {
    const PacketSchema s = toy_schema(12);
    const SyntheticAmplifier score(s, 7, 20.0);
    const GroundTruth gt = enumerate_ground_truth(score, 10.0);
    const EmpiricalScoreDist truth(gt.rare_scores);
    const double range = truth.max() - truth.min();
    for (std::uint64_t seed : {1, 2, 3}) {
        Rng rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, gt.rare.size() - 1);
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t n : {100, 50000}) {
            std::vector<Packet> samples(n);
            for (Packet& p : samples) p = gt.rare[pick(rng)];
            const EvalReport r = evaluate_samples(samples, score, 10.0, truth);
            CHECK(r.fidelity < prev);
            prev = r.fidelity;
        }
        CHECK(prev < 0.05 * range);
    }
}

TEST_CASE("no rare samples gives infinite fidelity with the flag") {
    const PacketSchema s = toy_schema(4);
    const SyntheticAmplifier score(s, 2, 20.0);
    const std::vector<Packet> samples(5, at(s, 0));
    const EvalReport r = evaluate_samples(samples, score, 10.0, EmpiricalScoreDist({21.0}));
    CHECK(r.no_rare);
    CHECK(std::isinf(r.fidelity));
    CHECK(r.diversity == 0.0);
}

TEST_CASE("ground truth by enumeration and by sampling") {
    const PacketSchema s = toy_schema(12);
    const SyntheticAmplifier score(s, 7, 20.0);
    Rng rng(3);
    const EmpiricalScoreDist exact = ground_truth_scores(score, 10.0, kDefaultEnumerationCap, 0, rng);
    CHECK(exact.size() == 32);
    const EmpiricalScoreDist sampled = ground_truth_scores(score, 10.0, 100, 400000, rng);
    CHECK(sampled.size() > 2000);
    CHECK(wasserstein1(exact, sampled) < 0.5);
    CHECK_THROWS_AS(ground_truth_scores(score, 1000.0, kDefaultEnumerationCap, 0, rng), InvalidArgument);
}

TEST_CASE("component parsing") {
    CHECK(parse_components("UAW") == Components{true, true, true});
    CHECK(parse_components("NULL") == Components{});
    CHECK(parse_components("W").name() == "W");
    CHECK_THROWS_AS(parse_components("A"), InvalidArgument);
    CHECK_THROWS_AS(parse_components("AW"), InvalidArgument);
    CHECK_THROWS_AS(parse_components("UU"), InvalidArgument);
    const auto all = all_components();
    REQUIRE(all.size() == 6);
    std::vector<std::string> names;
    for (const Components& c : all) names.push_back(c.name());
    std::sort(names.begin(), names.end());
    CHECK(names == std::vector<std::string>{"NULL", "U", "UA", "UAW", "UW", "W"});
}

TEST_CASE("apply_components sets the trainer switches") {
    const ExperimentConfig base;
    const ExperimentConfig null = apply_components(base, parse_components("NULL"), 3.0);
    CHECK_FALSE(null.trainer.use_unlabeled);
    CHECK(null.trainer.policy == SelectionPolicy::random);
    CHECK(null.trainer.loss.weight == 1.0);
    const ExperimentConfig full = apply_components(base, parse_components("UAW"), 3.0);
    CHECK(full.trainer.use_unlabeled);
    CHECK(full.trainer.policy == SelectionPolicy::least_confident);
    CHECK(full.trainer.loss.weight == 3.0);
    CHECK(full.trainer.mode == TrainMode::conditional);
}

TEST_CASE("ablation grid sizes") {
    ExperimentConfig base;
    AblationGrid grid;
    CHECK(grid.cells(base) == 6);
    grid.components = {Components{true, true, true}};
    CHECK(grid.cells(base) == 1);
    grid.components = all_components();
    grid.weights = {2.0, 3.0};
    // The weight axis only multiplies configurations with W.
    CHECK(grid.cells(base) == 3 + 3 * 2);
    grid.components = {Components{false, true, false}};
    CHECK_THROWS_AS(grid.validate(), InvalidArgument);
}

TEST_CASE("a defaults-only ablation gives one row per seed") {
    ExperimentConfig base;
    base.schema = "toy-8";
    base.gate_fields = 3;
    base.trainer.budget = 60;
    base.trainer.iterations_per_stage = 10;
    base.trainer.batch_size = 8;
    base.trainer.candidate_pool = 200;
    base.trainer.network = {4, 8, 8, 1};
    base.trainer.metrics_samples = 50;
    base.eval_samples = 500;
    AblationGrid grid;
    grid.components = {parse_components("UAW")};
    grid.seeds = {1, 2, 3};
    const auto rows = run_ablation(base, grid);
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rows[i].seed == grid.seeds[i]);
        CHECK(rows[i].components == "UAW");
        CHECK(rows[i].alpha == doctest::Approx(1.0 / 8.0));
        CHECK(rows[i].report.n_generated == 500);
    }
    std::ostringstream csv;
    write_ablation_header(csv);
    for (const auto& r : rows) write_ablation_row(csv, r);
    const std::string text = csv.str();
    CHECK(text.rfind("components,budget,threshold,alpha,stages,weight,seed,fidelity,diversity,n,n_rare,n_distinct_rare,no_rare\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("ablation summary computes the standard error over seeds") {
    std::vector<AblationRow> rows;
    const double fid[] = {1.0, 2.0, 3.0, 4.0, 5.0};
    for (int i = 0; i < 5; ++i) {
        AblationRow r;
        r.components = "UAW";
        r.seed = i + 1;
        r.report.fidelity = fid[i];
        r.report.diversity = 0.5;
        rows.push_back(r);
    }
    AblationRow other;
    other.components = "NULL";
    other.report.fidelity = 7.0;
    rows.push_back(other);
    const auto s = summarize_ablation(rows);
    REQUIRE(s.size() == 2);
    CHECK(s[0].components == "UAW");
    CHECK(s[0].runs == 5);
    CHECK(s[0].fidelity_mean == doctest::Approx(3.0));
    // Sample standard deviation sqrt(2.5) over sqrt(5).
    CHECK(s[0].fidelity_stderr == doctest::Approx(std::sqrt(2.5 / 5.0)));
    CHECK(s[0].diversity_stderr == 0.0);
    CHECK(s[1].runs == 1);
}

TEST_CASE("experiment config JSON round trip") {
    ExperimentConfig c;
    c.threshold = 12.5;
    c.trainer.loss.weight = 2.0;
    c.trainer.network.latent_dim = 9;
    c.trainer.lr_decay = true;
    c.trainer.rare_condition_rate = 0.25;
    ExperimentConfig back;
    merge_json(back, to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.trainer.network.latent_dim == 9);
    CHECK_THROWS_AS(merge_json(back, nlohmann::json{{"thresh", 3}}), InvalidArgument);
    CHECK_THROWS_AS(merge_json(back, nlohmann::json{{"trainer", {{"bogus", 1}}}}), InvalidArgument);
}

TEST_CASE("seed derivation separates training and evaluation streams") {
    Rng a = train_rng(1), b = train_rng(1), c = eval_rng(1);
    const auto x = a(), y = b(), z = c();
    CHECK(x == y);
    CHECK(x != z);
}
