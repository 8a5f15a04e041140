#include "mccir/experiments.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mccir/bounds.hpp"
#include "mccir/config_io.hpp"
#include "mccir/errors.hpp"
#include "mccir/estimators.hpp"
#include "mccir/linalg.hpp"
#include "mccir/parallel.hpp"
#include "mccir/rng.hpp"
#include "mccir/seqdesign.hpp"

namespace mccir {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Independent seed domain per purpose (trial streams use the master seed
// directly; bound Monte Carlo runs get their own masters per cell).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct Accum {
    Vector sum_e;
    double sum_q = 0.0;
    double sum_q2 = 0.0;
    std::size_t failures = 0;

    explicit Accum(std::size_t n = 0) : sum_e(n, 0.0) {}

    void add_error(const Vector& e) {
        double q = 0.0;
        for (std::size_t j = 0; j < e.size(); ++j) {
            sum_e[j] += e[j];
            q += e[j] * e[j];
        }
        sum_q += q;
        sum_q2 += q * q;
    }

    void merge(const Accum& o) {
        for (std::size_t j = 0; j < sum_e.size(); ++j) sum_e[j] += o.sum_e[j];
        sum_q += o.sum_q;
        sum_q2 += o.sum_q2;
        failures += o.failures;
    }
};

struct ChunkPartial {
    std::vector<Accum> per_est;
    Accum up;
};

double norm2(const Vector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

Matrix gram_of(const Matrix& s) {
    Matrix g(s.cols, s.cols);
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j1 = 0; j1 < s.cols; ++j1) {
            const double v = s(i, j1);
            if (v == 0.0) continue;
            for (std::size_t j2 = 0; j2 < s.cols; ++j2) g(j1, j2) += v * s(i, j2);
        }
    return g;
}

CirVector run_one(Estimator est, const Observation& r, const DesignMatrix& s_mat,
                  const PriorMoments& moments, const std::optional<Matrix>& lmmse_f,
                  const TrainingSequence& seq, std::size_t memory) {
    switch (est) {
        case Estimator::ml: return ml_estimate(r, s_mat).cir;
        case Estimator::ml_sub: return ml_suboptimal(r, s_mat);
        case Estimator::lsse: return lsse_estimate(r, s_mat).cir;
        case Estimator::lsse_sub: return lsse_suboptimal(r, s_mat);
        case Estimator::map: return map_estimate(r, s_mat, moments).cir;
        case Estimator::lmmse: return lmmse_estimate(r, *lmmse_f);
        case Estimator::isif: return isi_free_estimate(r, seq, memory, 1);
    }
    throw std::invalid_argument("unknown estimator");
}

struct CellStats {
    std::vector<Accum> per_est;
    Accum up;
    std::size_t trials = 0;
};

CellStats run_cell_trials(const ExperimentConfig& cfg, const ChannelPrior& prior,
                          const PriorMoments& moments, const TrainingSequence& seq,
                          const DesignMatrix& s_mat, std::size_t memory,
                          std::size_t cell_index) {
    const std::size_t n = memory + 1;
    const std::size_t n_est = cfg.estimators.size();

    std::optional<Matrix> lmmse_f;
    for (Estimator e : cfg.estimators)
        if (e == Estimator::lmmse) lmmse_f = lmmse_matrix(s_mat, moments);
    for (Estimator e : cfg.estimators)
        if (e == Estimator::isif) {
            // surface a sequence/pattern mismatch here, in the calling thread,
            // instead of as a 100% trial failure rate
            Observation probe;
            probe.counts.assign(s_mat.m.rows, 0);
            (void)isi_free_estimate(probe, seq, memory, 1);
        }

    Matrix gram_full;
    if (cfg.track_unclipped) gram_full = gram_of(s_mat.m);

    const std::uint64_t stream_base = static_cast<std::uint64_t>(cell_index) << 32;
    constexpr std::size_t kChunk = 256;
    const std::size_t n_chunks = (cfg.trials + kChunk - 1) / kChunk;
    std::vector<ChunkPartial> partials(n_chunks);

    parallel_chunks(cfg.trials, kChunk, [&](std::size_t ci, std::size_t begin, std::size_t end) {
        ChunkPartial& p = partials[ci];
        p.per_est.assign(n_est, Accum(n));
        p.up = Accum(n);
        Vector e(n), rhs(n);
        for (std::size_t t = begin; t < end; ++t) {
            RngStream stream = derive_stream(cfg.master_seed, stream_base + t);
            const CirVector c = sample_prior(prior, stream);
            const Observation r = simulate_observations(c, s_mat, stream);
            const Vector cv = c.to_vector();
            for (std::size_t ei = 0; ei < n_est; ++ei) {
                try {
                    const CirVector hat =
                        run_one(cfg.estimators[ei], r, s_mat, moments, lmmse_f, seq, memory);
                    const Vector hv = hat.to_vector();
                    for (std::size_t j = 0; j < n; ++j) e[j] = hv[j] - cv[j];
                    p.per_est[ei].add_error(e);
                } catch (const std::exception&) {
                    ++p.per_est[ei].failures;
                }
            }
            if (cfg.track_unclipped) {
                try {
                    std::fill(rhs.begin(), rhs.end(), 0.0);
                    for (std::size_t i = 0; i < s_mat.m.rows; ++i) {
                        const double ri = static_cast<double>(r.counts[i]);
                        if (ri == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) rhs[j] += s_mat.m(i, j) * ri;
                    }
                    const Vector up = solve_spd(gram_full, rhs);
                    for (std::size_t j = 0; j < n; ++j) e[j] = up[j] - cv[j];
                    p.up.add_error(e);
                } catch (const std::exception&) {
                    ++p.up.failures;
                }
            }
        }
    });

    CellStats stats;
    stats.trials = cfg.trials;
    stats.per_est.assign(n_est, Accum(n));
    stats.up = Accum(n);
    for (const ChunkPartial& p : partials) {
        for (std::size_t ei = 0; ei < n_est; ++ei) stats.per_est[ei].merge(p.per_est[ei]);
        stats.up.merge(p.up);
    }
    return stats;
}

struct SampleMean {
    double mean = kNan;
    double stderr_ = kNan;
};

SampleMean mean_of(double sum, double sum_sq, std::size_t n) {
    SampleMean out;
    if (n == 0) return out;
    const double nd = static_cast<double>(n);
    out.mean = sum / nd;
    if (n > 1) {
        const double var = std::max(0.0, (sum_sq - nd * out.mean * out.mean) / (nd - 1.0));
        out.stderr_ = std::sqrt(var / nd);
    } else {
        out.stderr_ = 0.0;
    }
    return out;
}

void run_cell(const ExperimentConfig& cfg, std::size_t memory, double sigma2, SequenceKind kind,
              std::size_t length, std::size_t cell_index, MetricSeries& out) {
    if (length < 2 * memory)
        throw std::invalid_argument("sequence length must be at least twice the memory");
    PhysicalParams params = cfg.physical;
    if (cfg.per_memory_duration)
        params.symbol_duration = symbol_duration_for_memory(params, memory);
    const CirVector c_def = physical_cir(params, memory);
    const ChannelPrior prior{c_def, std::sqrt(sigma2)};
    const PriorMoments moments = prior_moments(prior);

    TrainingSequence seq;
    switch (kind) {
        case SequenceKind::repeated_base: {
            const TrainingSequence base = base_sequence();
            if (length % base.symbols.size() != 0)
                throw std::invalid_argument("length is not a multiple of the base sequence");
            seq = repeat_sequence(base, length / base.symbols.size());
            break;
        }
        case SequenceKind::isi_free:
            seq = isi_free_sequence(length, memory, 1);
            break;
        case SequenceKind::optimal_lsse:
            seq = search_lsse(length, memory, moments.mean).sequence;
            break;
        case SequenceKind::optimal_lmmse:
            seq = search_lmmse(length, memory, moments).sequence;
            break;
    }
    const DesignMatrix s_mat = design_matrix(seq, memory);

    double criterion = kNan;
    switch (cfg.criterion_column) {
        case CriterionColumn::none: break;
        case CriterionColumn::lsse_up_error:
            criterion = lsse_criterion(s_mat, moments.mean);
            break;
        case CriterionColumn::lmmse_mse: {
            double tr_phi = 0.0;
            for (std::size_t j = 0; j < memory + 1; ++j) tr_phi += moments.second_moment(j, j);
            criterion = tr_phi - lmmse_criterion(s_mat, moments);
            break;
        }
    }

    double ccrb_value = kNan;
    MonteCarloBound exp_bound, bayes_bound;
    exp_bound.value = exp_bound.stderr_ = kNan;
    bayes_bound.value = bayes_bound.stderr_ = kNan;
    if (cfg.with_bounds) {
        ccrb_value = ccrb(c_def, s_mat);
        // Wide priors put non-trivial mass on zero components, and the Monte
        // Carlo bounds refuse to average once too many draws degenerate. Keep
        // the estimator metrics for such cells and report the bound columns
        // as nan instead of aborting the sweep.
        try {
            exp_bound = expected_ccrb(prior, s_mat, cfg.bound_samples,
                                      mix_seed(cfg.master_seed, 2 * cell_index + 1));
        } catch (const NumericError&) {
            exp_bound.value = exp_bound.stderr_ = kNan;
        }
        try {
            bayes_bound = bcrb(prior, s_mat, cfg.bound_samples,
                               mix_seed(cfg.master_seed, 2 * cell_index + 2));
        } catch (const SingularMatrixError&) {
            bayes_bound.value = bayes_bound.stderr_ = kNan;  // deterministic prior
        } catch (const NumericError&) {
            bayes_bound.value = bayes_bound.stderr_ = kNan;
        }
    }

    const CellStats stats = run_cell_trials(cfg, prior, moments, seq, s_mat, memory, cell_index);

    const double mu_norm2 = [&] {
        double s = 0.0;
        for (double v : moments.mean) s += v * v;
        return s;
    }();

    SampleMean up_err;
    if (cfg.track_unclipped)
        up_err = mean_of(stats.up.sum_q, stats.up.sum_q2, cfg.trials - stats.up.failures);

    for (std::size_t ei = 0; ei < cfg.estimators.size(); ++ei) {
        const Accum& acc = stats.per_est[ei];
        if (acc.failures * 1000 > cfg.trials)
            throw NumericError("estimator " + estimator_name(cfg.estimators[ei]) +
                               " failed in more than 0.1% of trials");
        const std::size_t n_ok = cfg.trials - acc.failures;
        const SampleMean q = mean_of(acc.sum_q, acc.sum_q2, n_ok);
        Vector mean_e = acc.sum_e;
        for (double& v : mean_e) v /= static_cast<double>(n_ok);
        const double bias = norm2(mean_e);

        MetricRow row;
        row.preset = cfg.preset;
        row.estimator = cfg.estimators[ei];
        row.memory = memory;
        row.sigma2 = sigma2;
        row.length = length;
        row.seq_kind = kind;
        row.trials = cfg.trials;
        row.failures = acc.failures;
        row.bias_norm = bias;
        row.err_mean_sq = q.mean;
        row.error_variance = std::max(0.0, q.mean - bias * bias);
        // the bias-squared correction's own sampling error is second order,
        // so the mean-square term's standard error is reported
        row.error_variance_stderr = q.stderr_;
        row.normalized_variance = row.error_variance / mu_norm2;
        row.normalized_variance_stderr = row.error_variance_stderr / mu_norm2;
        row.criterion = criterion;
        row.mc_up_error = cfg.track_unclipped ? up_err.mean : kNan;
        row.mc_up_error_stderr = cfg.track_unclipped ? up_err.stderr_ : kNan;
        row.ccrb_value = ccrb_value;
        row.expected_ccrb_value = cfg.with_bounds ? exp_bound.value : kNan;
        row.expected_ccrb_stderr = cfg.with_bounds ? exp_bound.stderr_ : kNan;
        row.bcrb_value = cfg.with_bounds ? bayes_bound.value : kNan;
        row.bcrb_stderr = cfg.with_bounds ? bayes_bound.stderr_ : kNan;
        out.rows.push_back(std::move(row));
    }
}

std::string format_cell_value(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

std::ofstream open_output(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open output file: " + path);
    return f;
}

}  // namespace

std::string estimator_name(Estimator e) {
    switch (e) {
        case Estimator::ml: return "ml";
        case Estimator::ml_sub: return "ml_sub";
        case Estimator::lsse: return "lsse";
        case Estimator::lsse_sub: return "lsse_sub";
        case Estimator::map: return "map";
        case Estimator::lmmse: return "lmmse";
        case Estimator::isif: return "isif";
    }
    return "?";
}

std::string sequence_kind_name(SequenceKind k) {
    switch (k) {
        case SequenceKind::repeated_base: return "repeated_base";
        case SequenceKind::isi_free: return "isi_free";
        case SequenceKind::optimal_lsse: return "optimal_lsse";
        case SequenceKind::optimal_lmmse: return "optimal_lmmse";
    }
    return "?";
}

TrainingSequence repeat_sequence(const TrainingSequence& base, std::size_t copies) {
    if (copies < 1) throw std::invalid_argument("need at least one copy");
    TrainingSequence out;
    out.symbols.reserve(base.symbols.size() * copies);
    for (std::size_t c = 0; c < copies; ++c)
        out.symbols.insert(out.symbols.end(), base.symbols.begin(), base.symbols.end());
    return out;
}

TrainingSequence base_sequence() {
    return TrainingSequence{{1, 1, 0, 0, 1, 0, 0, 1, 0, 1}};
}

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig cfg;
    cfg.preset = name;
    cfg.physical = default_physical_params();
    cfg.physical.symbol_duration =
        calibrate_symbol_duration(cfg.physical, default_second_tap());

    const std::vector<std::size_t> k_sweep = {10, 20, 50, 100, 200, 500, 1000};
    const std::vector<std::size_t> k_short = {6, 8, 10, 12, 14};
    const std::vector<Estimator> all = {Estimator::ml,   Estimator::ml_sub, Estimator::lsse,
                                        Estimator::lsse_sub, Estimator::map,    Estimator::lmmse};

    if (name == "mean_k" || name == "var_k") {
        cfg.memories = {3};
        cfg.sigma2s = {0.1};
        cfg.lengths = k_sweep;
        cfg.sequence_kinds = {SequenceKind::repeated_base};
        cfg.estimators = all;
        cfg.with_bounds = true;
    } else if (name == "var_k_cir") {
        cfg.memories = {3};
        cfg.sigma2s = {0.01, 0.05, 0.1, 0.5, 1.0};
        cfg.lengths = k_sweep;
        cfg.sequence_kinds = {SequenceKind::repeated_base};
        cfg.estimators = {Estimator::lsse_sub, Estimator::lmmse};
        cfg.with_bounds = true;
    } else if (name == "var_k_l") {
        cfg.memories = {1, 2, 3, 4, 5};
        cfg.sigma2s = {0.1};
        cfg.lengths = k_sweep;
        cfg.sequence_kinds = {SequenceKind::repeated_base};
        cfg.estimators = {Estimator::lsse_sub, Estimator::lmmse};
        cfg.per_memory_duration = true;
        cfg.with_bounds = false;
    } else if (name == "seq_lsse") {
        cfg.memories = {1, 2, 3, 4, 5};
        cfg.sigma2s = {0.1};
        cfg.lengths = k_short;
        cfg.sequence_kinds = {SequenceKind::optimal_lsse, SequenceKind::isi_free};
        cfg.estimators = {Estimator::lsse_sub};
        cfg.per_memory_duration = true;
        cfg.with_bounds = false;
        cfg.track_unclipped = true;
        cfg.criterion_column = CriterionColumn::lsse_up_error;
    } else if (name == "seq_mmse") {
        cfg.memories = {1, 3, 5};
        cfg.sigma2s = {0.1};
        cfg.lengths = k_short;
        cfg.sequence_kinds = {SequenceKind::optimal_lmmse, SequenceKind::isi_free};
        cfg.estimators = {Estimator::lmmse};
        cfg.per_memory_duration = true;
        cfg.with_bounds = false;
        cfg.criterion_column = CriterionColumn::lmmse_mse;
    } else if (name == "table1") {
        cfg.memories = {1, 3, 5};
        cfg.sigma2s = {0.1};
        cfg.lengths = {10, 20};
        cfg.sequence_kinds = {};
        cfg.estimators = {};
        cfg.per_memory_duration = true;
        cfg.with_bounds = false;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return cfg;
}

MetricSeries run_trials(const ExperimentConfig& config) {
    if (config.trials < 100) throw std::invalid_argument("need at least 100 trials");
    if (!config.physical.symbol_duration)
        throw std::invalid_argument("physical parameters need a symbol duration");
    if (config.estimators.empty()) throw std::invalid_argument("no estimators selected");
    if (config.memories.empty() || config.sigma2s.empty() || config.lengths.empty() ||
        config.sequence_kinds.empty())
        throw std::invalid_argument("empty sweep dimension");

    MetricSeries out;
    std::size_t cell_index = 0;
    for (std::size_t memory : config.memories)
        for (double sigma2 : config.sigma2s)
            for (SequenceKind kind : config.sequence_kinds)
                for (std::size_t length : config.lengths) {
                    // skip grid corners that violate the identifiability
                    // requirement instead of failing the whole sweep
                    if (length < 2 * memory) {
                        ++cell_index;
                        continue;
                    }
                    run_cell(config, memory, sigma2, kind, length, cell_index, out);
                    ++cell_index;
                }
    return out;
}

std::vector<DesignTableRow> design_table(const ExperimentConfig& config) {
    if (!config.physical.symbol_duration)
        throw std::invalid_argument("physical parameters need a symbol duration");
    if (config.memories.empty() || config.lengths.empty() || config.sigma2s.empty())
        throw std::invalid_argument("empty sweep dimension");
    const double sigma2 = config.sigma2s.front();

    std::vector<DesignTableRow> rows;
    for (const char* crit : {"lsse", "lmmse"})
        for (std::size_t memory : config.memories)
            for (std::size_t length : config.lengths) {
                if (length < 2 * memory) continue;
                PhysicalParams params = config.physical;
                if (config.per_memory_duration)
                    params.symbol_duration = symbol_duration_for_memory(params, memory);
                const CirVector c_def = physical_cir(params, memory);
                const ChannelPrior prior{c_def, std::sqrt(sigma2)};
                const PriorMoments moments = prior_moments(prior);
                DesignTableRow row;
                row.criterion = crit;
                row.memory = memory;
                row.length = length;
                if (std::string(crit) == "lsse") {
                    const SearchResult sr = search_lsse(length, memory, moments.mean);
                    row.sequence = sr.sequence;
                    row.value = sr.criterion;
                } else {
                    const SearchResult sr = search_lmmse(length, memory, moments);
                    row.sequence = sr.sequence;
                    row.value = sr.criterion;
                }
                rows.push_back(std::move(row));
            }
    return rows;
}

void write_csv(const MetricSeries& series, const std::string& path) {
    std::ofstream f = open_output(path);
    f << "preset,estimator,L,sigma2,K,seq_kind,trials,failures,bias_norm,error_variance,"
         "error_variance_stderr,err_mean_sq,normalized_variance,normalized_variance_stderr,"
         "criterion,mc_up_error,mc_up_error_stderr,ccrb,expected_ccrb,expected_ccrb_stderr,"
         "bcrb,bcrb_stderr\n";
    for (const MetricRow& r : series.rows) {
        f << r.preset << ',' << estimator_name(r.estimator) << ',' << r.memory << ','
          << format_cell_value(r.sigma2) << ',' << r.length << ',' << sequence_kind_name(r.seq_kind)
          << ',' << r.trials << ',' << r.failures << ',' << format_cell_value(r.bias_norm) << ','
          << format_cell_value(r.error_variance) << ','
          << format_cell_value(r.error_variance_stderr) << ',' << format_cell_value(r.err_mean_sq)
          << ',' << format_cell_value(r.normalized_variance) << ','
          << format_cell_value(r.normalized_variance_stderr) << ','
          << format_cell_value(r.criterion) << ',' << format_cell_value(r.mc_up_error) << ','
          << format_cell_value(r.mc_up_error_stderr) << ',' << format_cell_value(r.ccrb_value)
          << ',' << format_cell_value(r.expected_ccrb_value) << ','
          << format_cell_value(r.expected_ccrb_stderr) << ',' << format_cell_value(r.bcrb_value)
          << ',' << format_cell_value(r.bcrb_stderr) << '\n';
    }
    if (!f) throw std::runtime_error("failed while writing " + path);
}

void write_design_csv(const std::vector<DesignTableRow>& rows, const std::string& path) {
    std::ofstream f = open_output(path);
    f << "criterion,L,K,sequence,value\n";
    for (const DesignTableRow& r : rows) {
        f << r.criterion << ',' << r.memory << ',' << r.length << ',';
        for (double s : r.sequence.symbols) f << (s > 0.5 ? '1' : '0');
        f << ',' << format_cell_value(r.value) << '\n';
    }
    if (!f) throw std::runtime_error("failed while writing " + path);
}

void write_json_summary(const ExperimentConfig& config, const MetricSeries& series,
                        const std::string& csv_name, const std::string& path) {
    nlohmann::json j;
    j["preset"] = config.preset;
    j["trials"] = config.trials;
    j["master_seed"] = config.master_seed;
    j["memories"] = config.memories;
    j["sigma2s"] = config.sigma2s;
    j["lengths"] = config.lengths;
    std::vector<std::string> kinds, ests;
    for (SequenceKind k : config.sequence_kinds) kinds.push_back(sequence_kind_name(k));
    for (Estimator e : config.estimators) ests.push_back(estimator_name(e));
    j["sequence_kinds"] = kinds;
    j["estimators"] = ests;
    j["with_bounds"] = config.with_bounds;
    j["bound_samples"] = config.bound_samples;
    j["rows"] = series.rows.size();
    j["csv"] = csv_name;
    std::ofstream f = open_output(path);
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("failed while writing " + path);
}

}  // namespace mccir
