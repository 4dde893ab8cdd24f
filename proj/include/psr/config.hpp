#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psr/labeling.hpp"
#include "psr/rectification.hpp"
#include "psr/regressors.hpp"
#include "psr/synthetic.hpp"

namespace psr {

enum class DataSource { synthetic, cmapss, canonical };
enum class InputMode { sample, mean };
enum class IntervalPrediction { rectified, median };
enum class EvalSpace { label, rul };

std::string_view to_string(DataSource v);
std::string_view to_string(InputMode v);
std::string_view to_string(IntervalPrediction v);
std::string_view to_string(EvalSpace v);

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Everything one experiment needs; serialized as a flat INI-style file.
struct ExperimentConfig {
    // [data]
    DataSource source = DataSource::synthetic;
    std::string train_path;
    std::string test_path;
    std::string test_rul_path;
    std::vector<std::size_t> feature_columns;
    InputMode input_mode = InputMode::sample;

    // [synthetic]
    std::uint64_t synthetic_seed = 1;
    std::size_t train_subjects = 30;
    std::size_t test_subjects = 15;
    SyntheticSpec synthetic; // shared shape; subjects/observed fraction set per split
    double test_observed_min = 0.5;
    double test_observed_max = 0.9;

    // [labeling]
    LabelingPolicy labeling = LabelingPolicy::weibull();

    // [model]
    Architecture architecture = Architecture::defaults(ModelKind::aer);
    TrainConfig train;
    std::optional<std::size_t> test_sample_cap;

    // [scarcity]
    double train_scarcity = 0.0;
    /// Unset: follow train_scarcity.
    std::optional<double> test_scarcity;
    bool keep_last = false;

    // [rectification]
    LMConfig lm;
    bool median_aggregation = false;
    IntervalPrediction interval_prediction = IntervalPrediction::rectified;
    bool refit_every_interval = false;
    EvalSpace eval_space = EvalSpace::label;

    // [experiment]
    std::uint64_t seed = 42;
    std::size_t replicates = 1;
    std::size_t workers = 1;

    double effective_test_scarcity() const { return test_scarcity.value_or(train_scarcity); }
    SyntheticSpec synthetic_split(Split split) const;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully-resolved config text; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const ExperimentConfig& cfg);

} // namespace psr
