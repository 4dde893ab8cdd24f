#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace psr {

/// Malformed input text (wrong column count, unparsable number).
class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Well-formed input that violates a data invariant.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// One observation x^i_{t,s}: the s-th sample of interval t.
struct Sample {
    std::size_t interval = 1;
    std::size_t sample_idx = 1;
    std::vector<double> features;
    std::optional<double> label;
};

/**
 * All samples of one subject, ordered by (interval, sample_idx).
 *
 * The latest interval T_i is stored explicitly: scarcity may remove the
 * sample at T_i while the prediction target stays at T_i.
 */
class SubjectSeries {
  public:
    SubjectSeries(std::string subject_id, std::size_t latest_interval, std::vector<Sample> samples,
                  std::optional<double> true_rul = std::nullopt);

    const std::string& subject_id() const { return subject_id_; }
    std::size_t latest_interval() const { return latest_interval_; }
    const std::vector<Sample>& samples() const { return samples_; }
    std::size_t sample_count() const { return samples_.size(); }

    /// Evaluation ground truth: remaining life at the latest interval.
    std::optional<double> true_rul() const { return true_rul_; }

    /// S_t for t = 1..T_i (element t-1).
    std::vector<std::size_t> interval_counts() const;

    /// Largest interval carrying a sample; 0 when the subject is empty.
    std::size_t last_sampled_interval() const;

    SubjectSeries with_samples(std::vector<Sample> samples) const;
    SubjectSeries with_true_rul(std::optional<double> true_rul) const;

  private:
    std::string subject_id_;
    std::size_t latest_interval_;
    std::vector<Sample> samples_;
    std::optional<double> true_rul_;
};

/// Per-variable z-score statistics.
struct NormStats {
    std::vector<double> means;
    std::vector<double> stds;
};

enum class SeriesCategory { RSTS, RMTS, SSTS, SMTS };

std::string_view to_string(SeriesCategory category);

/// The partitioned multivariate series D = [D_1; ...; D_N].
class Dataset {
  public:
    Dataset() = default;
    Dataset(std::vector<SubjectSeries> subjects, std::size_t num_variables,
            std::optional<NormStats> normalization = std::nullopt);

    const std::vector<SubjectSeries>& subjects() const { return subjects_; }
    std::size_t num_variables() const { return num_variables_; }
    const std::optional<NormStats>& normalization() const { return normalization_; }

    std::size_t subject_count() const { return subjects_.size(); }
    std::size_t total_samples() const;
    std::size_t max_interval() const;
    bool has_labels() const;

    const SubjectSeries* find(std::string_view subject_id) const;

  private:
    std::vector<SubjectSeries> subjects_;
    std::size_t num_variables_ = 0;
    std::optional<NormStats> normalization_;
};

enum class Split { train, test };

struct CmapssOptions {
    /// Zero-based indices into the 24 feature columns (3 settings + 21 sensors).
    /// Empty selects all of them.
    std::vector<std::size_t> feature_columns;
};

/// Whitespace-delimited benchmark text: unit, cycle, 3 settings, 21 sensors.
/// For the test split, `rul_path` holds one true RUL per unit (line k = unit k).
Dataset ingest_cmapss(const std::filesystem::path& path, Split split,
                      const std::optional<std::filesystem::path>& rul_path = std::nullopt,
                      const CmapssOptions& options = {});
Dataset parse_cmapss(std::istream& in, Split split, std::istream* rul_in = nullptr,
                     const CmapssOptions& options = {});

/**
 * Canonical CSV: header `subject_id,interval,sample_idx,v1,...,vV[,label]`,
 * rows in any order. Lines starting with '#' are comments, except directive
 * lines of the form `#@subject=<id>,latest_interval=<T>[,true_rul=<r>]`
 * which override per-subject metadata.
 */
Dataset ingest_canonical_csv(const std::filesystem::path& path);
Dataset parse_canonical_csv(std::istream& in);

/// Writes the canonical form; `header_comment` lines are emitted as '# ' comments.
void write_canonical_csv(std::ostream& out, const Dataset& d, std::string_view header_comment = {});
void write_canonical_csv(const std::filesystem::path& path, const Dataset& d,
                         std::string_view header_comment = {});

SeriesCategory categorize(const Dataset& d);

NormStats fit_normalization(const Dataset& d);
Dataset apply_normalization(const Dataset& d, const NormStats& stats);

/// Replaces every non-empty interval group by the per-variable mean sample.
Dataset mean_collapse(const Dataset& d);

/// Copy without per-sample labels and true RUL.
Dataset strip_labels(const Dataset& d);

} // namespace psr
