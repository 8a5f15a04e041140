#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mccir/channel.hpp"

namespace mccir {

enum class Estimator { ml, ml_sub, lsse, lsse_sub, map, lmmse, isif };

std::string estimator_name(Estimator e);

enum class SequenceKind { repeated_base, isi_free, optimal_lsse, optimal_lmmse };

std::string sequence_kind_name(SequenceKind k);

// What the CSV's criterion column reports for each cell: nothing, the
// analytic expected squared error of the clipping-free least-squares
// estimator, or the analytic mean squared error of the linear MMSE filter.
enum class CriterionColumn { none, lsse_up_error, lmmse_mse };

struct ExperimentConfig {
    std::string preset;
    std::vector<std::size_t> memories;
    std::vector<double> sigma2s;
    std::vector<std::size_t> lengths;  // sequence lengths K, each >= 2L
    std::vector<SequenceKind> sequence_kinds;
    std::vector<Estimator> estimators;
    std::size_t trials = 10000;
    std::uint64_t master_seed = 1;
    PhysicalParams physical;  // symbol_duration must be set (presets calibrate it)
    // Recalibrate the symbol duration for each memory depth (tap L+1 at 5% of
    // the peak) instead of reusing the fixed one; multi-memory presets set it.
    bool per_memory_duration = false;
    bool with_bounds = true;
    std::size_t bound_samples = 1000;
    bool track_unclipped = false;  // also record the clipping-free least-squares error
    CriterionColumn criterion_column = CriterionColumn::none;
};

// One row per (cell, estimator), where a cell is a combination of memory,
// sigma^2, sequence kind and length. Cell-level values (criterion, bounds,
// unclipped-error tracking) are repeated on every row of the cell; fields
// that do not apply hold NaN and serialize as empty CSV cells.
struct MetricRow {
    std::string preset;
    Estimator estimator = Estimator::ml;
    std::size_t memory = 0;
    double sigma2 = 0.0;
    std::size_t length = 0;
    SequenceKind seq_kind = SequenceKind::repeated_base;
    std::size_t trials = 0;
    std::size_t failures = 0;
    double bias_norm = 0.0;           // ||mean error||
    double error_variance = 0.0;      // E||e||^2 - ||E e||^2
    double error_variance_stderr = 0.0;
    double err_mean_sq = 0.0;         // E||e||^2
    double normalized_variance = 0.0; // error_variance / ||prior mean||^2
    double normalized_variance_stderr = 0.0;
    double criterion = 0.0;           // designed-sequence criterion value
    double mc_up_error = 0.0;         // Monte Carlo E||e_up||^2, clipping-free LS
    double mc_up_error_stderr = 0.0;
    double ccrb_value = 0.0;          // classical bound at the default CIR
    double expected_ccrb_value = 0.0;
    double expected_ccrb_stderr = 0.0;
    double bcrb_value = 0.0;
    double bcrb_stderr = 0.0;
};

struct MetricSeries {
    std::vector<MetricRow> rows;
};

TrainingSequence repeat_sequence(const TrainingSequence& base, std::size_t copies);

// The binary base sequence the sweeps repeat to reach each length K = 10n.
TrainingSequence base_sequence();

// Named configuration for one of the study's sweeps. Physical parameters are
// the defaults with the symbol duration calibrated so the second tap hits its
// reference value.
ExperimentConfig preset(const std::string& name);

// Monte Carlo sweep over every cell of the config. Per-trial RNG streams are
// derived from (master_seed, cell*2^32 + trial), and partial sums are merged
// in fixed chunk order, so results are bit-identical for any thread count.
// A trial whose estimator fails is counted, not silently dropped; more than
// 0.1% failures for one estimator aborts the run.
MetricSeries run_trials(const ExperimentConfig& config);

// Optimal-sequence table: both search criteria for each (memory, length).
struct DesignTableRow {
    std::string criterion;  // "lsse" or "lmmse"
    std::size_t memory = 0;
    std::size_t length = 0;
    TrainingSequence sequence;
    double value = 0.0;
};

std::vector<DesignTableRow> design_table(const ExperimentConfig& config);

void write_csv(const MetricSeries& series, const std::string& path);
void write_design_csv(const std::vector<DesignTableRow>& rows, const std::string& path);
void write_json_summary(const ExperimentConfig& config, const MetricSeries& series,
                        const std::string& csv_name, const std::string& path);

}  // namespace mccir
