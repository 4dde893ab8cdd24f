#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "psr/config.hpp"
#include "psr/experiment.hpp"
#include "psr/synthetic.hpp"

using namespace psr;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTiny = R"(
[synthetic]
train_subjects = 6
test_subjects = 4
lifetime_min = 30
lifetime_max = 45
variables = 3
noise = 0.1

[model]
encoder = 8,4
epochs = 15
B = 16
lr = 0.01

[scarcity]
train = 0.3
test = 0.5

[experiment]
seed = 5
replicates = 3
)";

ExperimentConfig tiny() {
    std::istringstream in(kTiny);
    return parse_config(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("psr_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("config parsing") {
    const auto c = tiny();
    CHECK(c.train_subjects == 6);
    CHECK(c.architecture.encoder_widths == std::vector<std::size_t>{8, 4});
    CHECK(c.train.sample_size == 16);
    CHECK(c.effective_test_scarcity() == 0.5);
    CHECK(c.replicates == 3);
    CHECK(c.labeling.theta_divisor == 1.7);

    SUBCASE("round trip") {
        const auto text = to_ini(c);
        std::istringstream in(text);
        CHECK(to_ini(parse_config(in)) == text);
    }
    SUBCASE("defaults") {
        std::istringstream empty("");
        const auto d = parse_config(empty);
        CHECK(d.source == DataSource::synthetic);
        CHECK(d.architecture.kind == ModelKind::aer);
        CHECK(d.eval_space == EvalSpace::label);
        CHECK_FALSE(d.test_scarcity.has_value());
    }
    SUBCASE("errors") {
        std::istringstream unknown_key("[model]\nepoch = 3\n");
        CHECK_THROWS_AS(parse_config(unknown_key), ConfigError);
        std::istringstream unknown_section("[optimizer]\nlr = 1\n");
        CHECK_THROWS_AS(parse_config(unknown_section), ConfigError);
        std::istringstream bad_number("[model]\nepochs = ten\n");
        CHECK_THROWS_AS(parse_config(bad_number), ConfigError);
        std::istringstream bad_fraction("[scarcity]\ntrain = 1.0\n");
        CHECK_THROWS_AS(parse_config(bad_fraction), ConfigError);
        std::istringstream zero_reps("[experiment]\nreplicates = 0\n");
        CHECK_THROWS_AS(parse_config(zero_reps), ConfigError);
    }
}

TEST_CASE("synthetic data") {
    SyntheticSpec spec;
    spec.subjects = 1;
    spec.variables = 3;
    spec.lifetime_min = 20;
    spec.lifetime_max = 20;
    const auto d = generate_synthetic(spec, 3);
    REQUIRE(d.subject_count() == 1);
    const auto& s = d.subjects()[0];
    CHECK(s.latest_interval() == 20);
    CHECK(*s.true_rul() == 0.0);
    // noise-free features depend on t alone: another seed with the same lifetime agrees
    const auto again = generate_synthetic(spec, 99);
    CHECK(again.subjects()[0].samples()[5].features == s.samples()[5].features);
    CHECK(s.samples()[5].features != s.samples()[6].features);

    spec.subjects = 20;
    spec.noise = 0.3;
    const auto n20 = generate_synthetic(spec, 8);
    CHECK(n20.subject_count() == 20);
    CHECK(categorize(n20) == SeriesCategory::RSTS);

    std::ostringstream a, b;
    write_canonical_csv(a, n20);
    write_canonical_csv(b, generate_synthetic(spec, 8));
    CHECK(a.str() == b.str());
}

TEST_CASE("experiment data hides the test truth") {
    const auto data = load_experiment_data(tiny());
    CHECK(data.truth.size() == data.test.subject_count());
    CHECK_FALSE(data.test.has_labels());
    for (const auto& s : data.test.subjects()) {
        CHECK_FALSE(s.true_rul().has_value());
        CHECK(data.truth.lifetime(s.subject_id()) > static_cast<double>(s.latest_interval()));
    }
    CHECK(data.truth.reads() == data.test.subject_count());
}

TEST_CASE("leakage guard") {
    auto cfg = tiny();
    cfg.workers = 1;
    const auto data = load_experiment_data(cfg);
    const std::size_t before = data.truth.reads();
    std::vector<std::string> stages;
    std::size_t at_ingest = 0;
    bool clean = true;
    PipelineHooks hooks;
    hooks.on_stage = [&](std::string_view stage, const GroundTruth& truth) {
        stages.emplace_back(stage);
        if (stage == "ingest") at_ingest = truth.reads();
        if (truth.reads() != at_ingest) clean = false;
        if (stage == "evaluate" && stages.size() <= std::size(kStages)) CHECK(truth.reads() == before);
    };
    const auto r = run_experiment(cfg, data, hooks);
    CHECK(r.failures() == 0);
    CHECK(clean);
    REQUIRE(stages.size() == cfg.replicates * std::size(kStages));
    for (std::size_t i = 0; i < stages.size(); ++i) CHECK(stages[i] == kStages[i % std::size(kStages)]);
    CHECK(data.truth.reads() > before);
}

TEST_CASE("determinism") {
    const auto cfg = tiny();
    const auto a = scratch("a");
    const auto b = scratch("b");
    write_experiment(a, run_experiment(cfg));
    write_experiment(b, run_experiment(cfg));
    for (const auto& entry : fs::directory_iterator(a)) {
        const auto name = entry.path().filename();
        CHECK_MESSAGE(slurp(entry.path()) == slurp(b / name), name.string());
    }
    const auto metrics = slurp(a / "metrics.csv");
    CHECK(metrics.find("# [model]") != std::string::npos);
    CHECK(metrics.find("rng = ") != std::string::npos);
    CHECK(slurp(a / "summary.csv").find("rmse_i,") != std::string::npos);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("replicate order does not matter") {
    auto cfg = tiny();
    cfg.workers = 1;
    const auto serial = run_experiment(cfg);
    cfg.workers = 3;
    const auto parallel = run_experiment(cfg);
    REQUIRE(serial.replicates.size() == parallel.replicates.size());
    for (std::size_t k = 0; k < serial.replicates.size(); ++k) {
        CHECK(serial.replicates[k].seed == cfg.seed + k);
        CHECK(serial.replicates[k].metrics == parallel.replicates[k].metrics);
    }
    // a replicate run alone gives the same numbers as inside the experiment
    const auto data = load_experiment_data(cfg);
    CHECK(run_replicate(cfg, data, 2).metrics == serial.replicates[2].metrics);
}

TEST_CASE("failed replicates are recorded") {
    auto cfg = tiny();
    cfg.workers = 1;
    bool failed_once = false;
    PipelineHooks hooks;
    hooks.on_stage = [&](std::string_view stage, const GroundTruth&) {
        if (stage == "train" && !failed_once) {
            failed_once = true;
            throw TrainingDiverged("injected");
        }
    };
    const auto r = run_experiment(cfg, hooks);
    CHECK(r.failures() == 1);
    REQUIRE(r.replicates[0].error);
    CHECK(*r.replicates[0].error == "injected");
    CHECK_FALSE(r.replicates[1].error);
    CHECK(r.summary_for("rmse_i")->n == cfg.replicates - 1);

    const auto dir = scratch("fail");
    write_experiment(dir, r);
    CHECK(slurp(dir / "failures.csv").find("0,5,\"injected\"") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("summary statistics") {
    std::vector<ReplicateResult> reps(4);
    const double values[] = {1.0, 2.0, 3.0, 4.0};
    for (std::size_t k = 0; k < 4; ++k) {
        reps[k].index = k;
        reps[k].metrics = {{"m", values[k]}};
    }
    auto rows = summarize(reps);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mean == 2.5);
    CHECK(rows[0].std == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(rows[0].n == 4);

    reps.resize(1);
    rows = summarize(reps);
    CHECK(rows[0].std == 0.0);
}

TEST_CASE("sweep") {
    auto cfg = tiny();
    cfg.replicates = 2;
    SUBCASE("single value equals a run") {
        const auto s = sweep(cfg, SweepAxis::scarcity, {0.3});
        const auto r = run_experiment(cfg);
        REQUIRE(s.cells.size() == 1);
        REQUIRE(s.rows.size() == r.summary.size());
        for (std::size_t i = 0; i < s.rows.size(); ++i) {
            CHECK(s.rows[i].axis_value == 0.3);
            CHECK(s.rows[i].summary.metric == r.summary[i].metric);
            CHECK(s.rows[i].summary.mean == r.summary[i].mean);
            CHECK(s.rows[i].summary.std == r.summary[i].std);
        }
    }
    SUBCASE("one row per value and metric") {
        cfg.train.epochs = 2;
        const auto s = sweep(cfg, SweepAxis::scarcity, {0.5, 0.7, 0.9});
        CHECK(s.cells.size() == 3);
        CHECK(s.rows.size() == 3 * s.cells[0].summary.size());
        std::ostringstream out;
        write_sweep(out, cfg, s);
        CHECK(out.str().find("scarcity,0.7,rmse_i,") != std::string::npos);
    }
    SUBCASE("axis validation") {
        CHECK(apply_axis(cfg, SweepAxis::sample_size, 10).train.sample_size == 10);
        CHECK(apply_axis(cfg, SweepAxis::gamma, 0.5).train.gamma == 0.5);
        CHECK_THROWS_AS(apply_axis(cfg, SweepAxis::sample_size, 2.5), ConfigError);
        CHECK_THROWS_AS(apply_axis(cfg, SweepAxis::scarcity, 1.0), ConfigError);
        CHECK(parse_sweep_axis("B") == SweepAxis::sample_size);
        CHECK_THROWS(parse_sweep_axis("epochs"));
    }
}

TEST_CASE("stage files round trip") {
    PosteriorEstimates p;
    p.subject_id = "u1";
    p.latest_interval = 12;
    p.estimates = {0.1, 1.0 / 3.0, 2e-17};
    p.intervals = {2, 2, 9};
    p.sample_indices = {1, 2, 1};
    PosteriorEstimates q;
    q.subject_id = "u2";
    q.latest_interval = 4;
    q.estimates = {5.0};
    q.intervals = {4};
    q.sample_indices = {1};

    std::stringstream ss;
    write_posterior_csv(ss, {p, q}, "header\nlines");
    const auto back = read_posterior_csv(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0].subject_id == "u1");
    CHECK(back[0].latest_interval == 12);
    CHECK(back[0].estimates == p.estimates);
    CHECK(back[0].intervals == p.intervals);
    CHECK(back[1].estimates == q.estimates);

    std::istringstream beyond("#@subject=a,latest_interval=3\nsubject_id,interval,sample_idx,estimate\na,5,1,1.0\n");
    CHECK_THROWS_AS(read_posterior_csv(beyond), DataError);
    std::istringstream bad_header("subject,interval\n");
    CHECK_THROWS_AS(read_posterior_csv(bad_header), ParseError);

    const auto rect = rectify_posterior({p, q}, LabelingPolicy::linear(), {}, false);
    std::stringstream rs;
    write_interval_predictions(rs, rect);
    const auto rows = read_interval_predictions(rs);
    // sampled intervals plus T for each subject
    CHECK(rows.size() == 3 + 1);
    CHECK(rows[0].subject_id == "u1");
    CHECK(rows[0].interval == 2);
    CHECK(rows.back().interval == 4);
}

TEST_CASE("shipped configs parse") {
    std::size_t n = 0;
    for (const auto& entry : fs::directory_iterator(PSR_CONFIG_DIR)) {
        if (entry.path().extension() != ".ini") continue;
        ++n;
        CHECK_NOTHROW(load_config(entry.path()));
    }
    CHECK(n >= 3);
}

TEST_CASE("noise-free synthetic data is learned almost exactly") {
    std::istringstream in(R"(
[synthetic]
train_subjects = 10
test_subjects = 5
noise = 0

[model]
model = mlp
dropout = 0
gamma = 0
epochs = 1000
lr = 0.001
)");
    const auto r = run_experiment(parse_config(in));
    REQUIRE(r.failures() == 0);
    // rectification still improves on the raw last estimate
    CHECK(*r.replicates[0].metric("rmse_i") < 0.05);
    CHECK(*r.replicates[0].metric("rmse_i_raw") > *r.replicates[0].metric("rmse_i"));
}
