#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mccir/bounds.hpp"
#include "mccir/config_io.hpp"
#include "mccir/errors.hpp"
#include "mccir/estimators.hpp"
#include "mccir/experiments.hpp"
#include "mccir/seqdesign.hpp"

namespace {

using nlohmann::json;

json cir_to_json(const mccir::CirVector& cir) {
    json j;
    j["taps"] = cir.taps;
    j["noise_mean"] = cir.noise_mean;
    return j;
}

int run_cir(const std::string& config_path) {
    mccir::CirConfig cfg;
    if (config_path.empty()) {
        cfg.params = mccir::default_physical_params();
        cfg.params.symbol_duration =
            mccir::calibrate_symbol_duration(cfg.params, mccir::default_second_tap());
    } else {
        cfg = mccir::load_cir_config(config_path);
    }
    const mccir::CirVector cir = mccir::physical_cir(cfg.params, cfg.memory);
    json j = cir_to_json(cir);
    j["memory"] = cfg.memory;
    j["symbol_duration"] = *cfg.params.symbol_duration;
    std::cout << j.dump(2) << '\n';
    return 0;
}

int run_estimate(const std::string& method, const std::string& seq_path,
                 const std::string& obs_path, std::size_t memory, const std::string& prior_path,
                 std::size_t k0) {
    const mccir::TrainingSequence seq = mccir::load_sequence(seq_path);
    const mccir::Observation obs = mccir::load_observation(obs_path);

    json j;
    j["method"] = method;
    const auto emit_full = [&](const mccir::EstimateResult& res) {
        j.update(cir_to_json(res.cir));
        j["active_subset"] = res.active_subset.indices();
        j["objective"] = res.objective;
        j["iterations"] = res.solver_iterations;
    };

    if (method == "isif") {
        j.update(cir_to_json(mccir::isi_free_estimate(obs, seq, memory, k0)));
    } else {
        const mccir::DesignMatrix s_mat = mccir::design_matrix(seq, memory);
        if (method == "ml") {
            emit_full(mccir::ml_estimate(obs, s_mat));
        } else if (method == "ml-sub") {
            j.update(cir_to_json(mccir::ml_suboptimal(obs, s_mat)));
        } else if (method == "lsse") {
            emit_full(mccir::lsse_estimate(obs, s_mat));
        } else if (method == "lsse-sub") {
            j.update(cir_to_json(mccir::lsse_suboptimal(obs, s_mat)));
        } else if (method == "map" || method == "lmmse") {
            if (prior_path.empty())
                throw std::invalid_argument("method " + method + " requires --prior");
            const mccir::ChannelPrior prior = mccir::load_prior(prior_path, memory);
            const mccir::PriorMoments moments = mccir::prior_moments(prior);
            if (method == "map") {
                emit_full(mccir::map_estimate(obs, s_mat, moments));
            } else {
                const mccir::Matrix f = mccir::lmmse_matrix(s_mat, moments);
                j.update(cir_to_json(mccir::lmmse_estimate(obs, f)));
            }
        } else {
            throw std::invalid_argument("unknown method: " + method);
        }
    }
    std::cout << j.dump(2) << '\n';
    return 0;
}

int run_experiment(const std::string& name, std::size_t trials, std::uint64_t seed,
                   const std::string& out_dir) {
    mccir::ExperimentConfig cfg = mccir::preset(name);
    cfg.trials = trials;
    cfg.master_seed = seed;
    const std::string csv_name = name + ".csv";
    const std::string csv_path = out_dir + "/" + csv_name;
    if (name == "table1") {
        mccir::write_design_csv(mccir::design_table(cfg), csv_path);
        std::cout << "wrote " << csv_path << '\n';
        return 0;
    }
    const mccir::MetricSeries series = mccir::run_trials(cfg);
    mccir::write_csv(series, csv_path);
    const std::string summary_path = out_dir + "/" + name + "_summary.json";
    mccir::write_json_summary(cfg, series, csv_name, summary_path);
    std::cout << "wrote " << csv_path << " and " << summary_path << '\n';
    return 0;
}

int run_seqsearch(const std::string& criterion, std::size_t length, std::size_t memory,
                  double sigma2, double eps) {
    mccir::PhysicalParams p = mccir::default_physical_params();
    p.symbol_duration = mccir::symbol_duration_for_memory(p, memory);
    const mccir::CirVector c_def = mccir::physical_cir(p, memory);
    const mccir::ChannelPrior prior{c_def, std::sqrt(sigma2)};
    const mccir::PriorMoments moments = mccir::prior_moments(prior);

    mccir::SearchResult res;
    if (criterion == "lsse") {
        res = mccir::search_lsse(length, memory, moments.mean, eps);
    } else if (criterion == "lmmse") {
        res = mccir::search_lmmse(length, memory, moments);
    } else {
        throw std::invalid_argument("criterion must be lsse or lmmse");
    }
    std::string bits;
    for (double s : res.sequence.symbols) bits += s > 0.5 ? '1' : '0';
    json j;
    j["criterion"] = criterion;
    j["K"] = length;
    j["L"] = memory;
    j["sequence"] = bits;
    j["value"] = res.criterion;
    std::cout << j.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Poisson counting-channel CIR estimation toolkit"};
    app.require_subcommand(1);

    auto* cir_cmd = app.add_subcommand("cir", "Compute the physical channel impulse response");
    std::string config_path;
    cir_cmd->add_option("config", config_path, "JSON config file (defaults used when omitted)");

    auto* est_cmd = app.add_subcommand("estimate", "Estimate a CIR from observed counts");
    std::string method, seq_path, obs_path, prior_path;
    std::size_t memory = 1, k0 = 1;
    est_cmd->add_option("--method", method, "ml|ml-sub|lsse|lsse-sub|map|lmmse|isif")->required();
    est_cmd->add_option("--seq", seq_path, "training sequence file, one symbol per line")
        ->required();
    est_cmd->add_option("--obs", obs_path, "observed counts file, one count per line")->required();
    est_cmd->add_option("--L", memory, "channel memory length")->required();
    est_cmd->add_option("--prior", prior_path, "prior JSON (required for map and lmmse)");
    est_cmd->add_option("--k0", k0, "release offset of the isif pattern (default 1)");

    auto* exp_cmd = app.add_subcommand("experiment", "Run a Monte Carlo sweep preset");
    std::string preset_name, out_dir = ".";
    std::size_t trials = 10000;
    std::uint64_t seed = 1;
    exp_cmd->add_option("--preset", preset_name,
                        "mean_k|var_k|var_k_cir|var_k_l|seq_lsse|seq_mmse|table1")
        ->required();
    exp_cmd->add_option("--trials", trials, "Monte Carlo trials per cell (default 10000)");
    exp_cmd->add_option("--seed", seed, "master seed (default 1)");
    exp_cmd->add_option("--out", out_dir, "output directory (default .)");

    auto* ss_cmd = app.add_subcommand("seqsearch", "Exhaustive binary training-sequence search");
    std::string criterion;
    std::size_t ss_len = 0, ss_mem = 0;
    double sigma2 = 0.1, eps = 1e-9;
    ss_cmd->add_option("--criterion", criterion, "lsse|lmmse")->required();
    ss_cmd->add_option("--K", ss_len, "sequence length (at most 24)")->required();
    ss_cmd->add_option("--L", ss_mem, "channel memory length")->required();
    ss_cmd->add_option("--sigma2", sigma2, "prior spread (default 0.1)");
    ss_cmd->add_option("--eps", eps, "Gram eigenvalue threshold for the lsse search");

    try {
        app.parse(argc, argv);
        if (*cir_cmd) return run_cir(config_path);
        if (*est_cmd) return run_estimate(method, seq_path, obs_path, memory, prior_path, k0);
        if (*exp_cmd) return run_experiment(preset_name, trials, seed, out_dir);
        if (*ss_cmd) return run_seqsearch(criterion, ss_len, ss_mem, sigma2, eps);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const mccir::SingularMatrixError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 1;
    } catch (const mccir::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << '\n';
        return 1;
    }
}
