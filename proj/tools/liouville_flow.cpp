// liouville-flow: batch front end. Each command reads a JSON config and
// writes JSON/CSV artifacts; the primary JSON result also goes to stdout.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include <liouville_flow.hpp>
#include <liouville_flow/verify.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace liouville_flow;

namespace
{

struct usage_error : error {
    explicit usage_error(const std::string &what) : error("usage_error", what) {}
};

struct config_error : error {
    explicit config_error(const std::string &what) : error("invalid_config", what) {}
};

struct verification_failed : error {
    explicit verification_failed(const std::string &what) : error("verification_failed", what) {}
};

struct options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 0;
};

void require_keys(const json &j, const std::set<std::string> &allowed, const std::string &where)
{
    if (!j.is_object()) {
        throw config_error(where + " must be a JSON object");
    }
    for (const auto &[key, _] : j.items()) {
        if (!allowed.count(key)) {
            throw config_error("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
T get_or(const json &j, const char *key, T fallback)
{
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &e) {
        throw config_error(std::string("bad value for '") + key + "': " + e.what());
    }
}

template <typename T>
T get_required(const json &j, const char *key)
{
    if (!j.contains(key)) {
        throw config_error(std::string("missing required key '") + key + "'");
    }
    return get_or<T>(j, key, T{});
}

json load_config(const options &o)
{
    if (o.config.empty()) {
        return json::object();
    }
    std::ifstream is(o.config);
    if (!is) {
        throw usage_error("cannot open config " + o.config);
    }
    try {
        return json::parse(is);
    } catch (const json::parse_error &e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
}

// Config "seed" unless --seed is given; mandatory for stochastic commands.
std::uint64_t resolve_seed(const options &o, const json &cfg)
{
    if (o.seed) {
        return *o.seed;
    }
    if (!cfg.contains("seed")) {
        throw config_error("seed is required (config key 'seed' or --seed)");
    }
    return get_or<std::uint64_t>(cfg, "seed", 0);
}

fs::path resolve_path(const options &o, const std::string &p)
{
    const fs::path path(p);
    if (path.is_absolute() || o.config.empty()) {
        return path;
    }
    const fs::path rel = fs::path(o.config).parent_path() / path;
    return fs::exists(rel) ? rel : path;
}

std::optional<fs::path> out_dir(const options &o)
{
    if (o.out.empty()) {
        return std::nullopt;
    }
    fs::create_directories(o.out);
    return fs::path(o.out);
}

void write_json(const fs::path &path, const json &j)
{
    std::ofstream os(path);
    os << j.dump(2) << '\n';
    if (!os) {
        throw usage_error("cannot write " + path.string());
    }
}

radial_beckmann_problem parse_problem(const json &j)
{
    try {
        return problem_from_json(j);
    } catch (const invalid_argument &e) {
        throw config_error(e.what());
    }
}

flow_density_model<cutoff_field> load_model(const options &o, const json &cfg)
{
    const auto path = resolve_path(o, get_required<std::string>(cfg, "model"));
    std::ifstream is(path);
    if (!is) {
        throw dataset_not_found("cannot open model " + path.string());
    }
    try {
        return model_from_json(json::parse(is));
    } catch (const json::exception &e) {
        throw config_error("bad model checkpoint: " + std::string(e.what()));
    }
}

std::vector<Vector> load_samples(const options &o, const json &cfg, int d, std::uint64_t seed)
{
    if (cfg.contains("dataset")) {
        return read_points_csv(resolve_path(o, get_required<std::string>(cfg, "dataset")), d);
    }
    if (cfg.contains("problem")) {
        const auto p = parse_problem(cfg.at("problem"));
        if (p.dim != d) {
            throw config_error("problem dimension does not match the network");
        }
        return sample_target(p, get_or<std::size_t>(cfg, "n", 2000), seed);
    }
    throw config_error("need 'dataset' (CSV path) or 'problem' (Beckmann family)");
}

int run_train(const options &o, const json &cfg)
{
    require_keys(cfg,
                 {"seed", "dataset", "problem", "n", "network", "steps", "guard", "learning_rate", "iterations",
                  "batch_size", "lipschitz_samples", "max_steps", "threads"},
                 "train config");
    const auto seed = resolve_seed(o, cfg);
    const json net_cfg = get_or<json>(cfg, "network", json::object());
    require_keys(net_cfg, {"d", "L", "W", "K", "k", "init", "init_scale"}, "network");
    const int d = get_or(net_cfg, "d", 2);
    const int L = get_or(net_cfg, "L", 3);
    const int W = get_or(net_cfg, "W", 16);
    const auto samples = load_samples(o, cfg, d, seed);

    auto net = requ_network::uniform(d, L, W);
    const auto init = get_or<std::string>(net_cfg, "init", "uniform");
    if (init == "uniform") {
        initialize_uniform(net, seed);
    } else if (init == "zero_readout") {
        initialize_zero_readout(net, seed, get_or(net_cfg, "init_scale", 1.0));
    } else {
        throw config_error("unknown init '" + init + "'");
    }

    train_config tc;
    tc.seed = seed;
    tc.learning_rate = get_or(cfg, "learning_rate", tc.learning_rate);
    tc.iterations = get_or(cfg, "iterations", tc.iterations);
    tc.batch_size = get_or(cfg, "batch_size", tc.batch_size);
    tc.lipschitz_samples = get_or(cfg, "lipschitz_samples", tc.lipschitz_samples);
    tc.max_steps = get_or(cfg, "max_steps", tc.max_steps);
    const auto mode = get_or<std::string>(cfg, "guard", "empirical");
    if (mode != "empirical" && mode != "formula") {
        throw config_error("guard must be 'empirical' or 'formula'");
    }
    tc.guard = mode == "formula" ? guard_mode::formula : guard_mode::empirical;
    try {
        tc.validate();
    } catch (const invalid_argument &e) {
        throw config_error(e.what());
    }

    flow_density_model<cutoff_field> model{cutoff_field(std::move(net), get_or(net_cfg, "K", 12), get_or(net_cfg, "k", 4)),
                                           {get_or(cfg, "steps", 16), 0.0, tc.guard}};
    const auto result = train_erm(std::move(model), samples, tc);
    const auto &m = result.model;
    const auto ledger = capacity_ledger(d, L, W, m.schedule.step());

    json summary{{"schema_version", 1},
                 {"seed", seed},
                 {"samples", samples.size()},
                 {"initial_nll", result.trace.front().nll},
                 {"final_nll", result.trace.back().nll},
                 {"m", m.schedule.steps},
                 {"guard_lipschitz", m.schedule.guard_lipschitz}};
    if (const auto dir = out_dir(o)) {
        write_json(*dir / "checkpoint.json", model_to_json(m));
        std::ofstream log(*dir / "training_log.csv");
        write_training_log_csv(log, result.trace, seed);
        write_json(*dir / "ledger.json", ledger_to_json(ledger));
    }
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int run_sample(const options &o, const json &cfg)
{
    require_keys(cfg, {"seed", "model", "n", "threads"}, "sample config");
    const auto seed = resolve_seed(o, cfg);
    const auto model = load_model(o, cfg);
    const auto n = get_or<std::size_t>(cfg, "n", 1000);
    const auto xs = sample(model, n, seed);
    if (const auto dir = out_dir(o)) {
        std::ofstream os(*dir / "samples.csv");
        write_points_csv(os, xs, model.field.dim(), "samples/1", seed);
    } else {
        write_points_csv(std::cout, xs, model.field.dim(), "samples/1", seed);
        return 0;
    }
    std::cout << json{{"samples", n}, {"seed", seed}}.dump(2) << '\n';
    return 0;
}

int run_evaluate(const options &o, const json &cfg)
{
    require_keys(cfg, {"seed", "model", "dataset", "problem", "grid", "threads"}, "evaluate config");
    const auto model = load_model(o, cfg);
    const int grid = get_or(cfg, "grid", 128);
    json report{{"schema_version", 1}, {"m", model.schedule.steps}, {"mass", model_mass(model, grid)}};
    if (cfg.contains("dataset")) {
        const auto xs = read_points_csv(resolve_path(o, get_required<std::string>(cfg, "dataset")), model.field.dim());
        report["nll"] = nll(model, xs);
    }
    if (cfg.contains("problem")) {
        const auto p = parse_problem(cfg.at("problem"));
        const auto kl = kl_estimate(model, [&](const Vector &x) { return std::log(p.target(x.norm())); }, grid);
        report["kl"] = {{"raw", kl.raw}, {"clipped", kl.clipped}};
        report["target_neg_entropy"] = target_neg_entropy(p);
    }
    if (const auto dir = out_dir(o)) {
        write_json(*dir / "evaluation.json", report);
    }
    std::cout << report.dump(2) << '\n';
    return 0;
}

int run_beckmann(const options &o, const json &cfg)
{
    require_keys(cfg, {"seed", "problem", "steps", "grid", "field_grid", "threads"}, "beckmann config");
    const auto p = parse_problem(get_or<json>(cfg, "problem", json::object()));
    const auto schedule = beckmann_schedule(p, get_or(cfg, "steps", 64));
    json report{{"schema_version", 1},
                {"problem", problem_to_json(p)},
                {"kappa", p.kappa()},
                {"boundary_flux", radial_flux(p, 0.5)},
                {"guard_lipschitz", schedule.guard_lipschitz},
                {"m", schedule.steps}};
    double residual = 0.0;
    for (int i = 1; i <= 100; ++i) {
        residual = std::max(residual, continuity_residual(p, 0.49 * i / 100.0, 0.5));
    }
    report["continuity_residual"] = residual;
    if (p.dim <= 2) {
        report["transport_kl"] = verify_transport(p, schedule, get_or(cfg, "grid", 256));
    }
    if (const auto dir = out_dir(o)) {
        write_json(*dir / "beckmann.json", report);
        if (p.dim == 2) {
            std::ofstream os(*dir / "field_grid.csv");
            write_field_grid_csv(os, p, get_or(cfg, "field_grid", 32), {0.0, 0.5, 1.0});
        }
    }
    std::cout << report.dump(2) << '\n';
    return 0;
}

int run_bounds(const options &o, const json &cfg)
{
    require_keys(cfg, {"seed", "d", "L", "W", "h", "R0", "exponent", "pac", "threads"}, "bounds config");
    const int d = get_required<int>(cfg, "d");
    const int L = get_required<int>(cfg, "L");
    const int W = get_required<int>(cfg, "W");
    const double h = get_required<double>(cfg, "h");
    const double r0 = get_or(cfg, "R0", default_r0);
    const int e = get_or(cfg, "exponent", 5);
    if (e != 5 && e != 6) {
        throw config_error("exponent must be 5 or 6");
    }
    const auto ledger = capacity_ledger(d, L, W, h, r0, static_cast<subgaussian_exponent>(e));
    json out{{"schema_version", 1}, {"ledger", ledger_to_json(ledger)}};
    if (cfg.contains("pac")) {
        const json &pac = cfg.at("pac");
        require_keys(pac, {"eps", "delta", "p", "k", "C_H", "C_H_hat", "N_tilde", "n"}, "pac");
        const double p = get_required<double>(pac, "p");
        if (pac.contains("n")) {
            const auto s = pac_schedule(get_required<double>(pac, "n"), p, d, r0);
            out["pac_schedule"] = pac_schedule_to_json(s);
            if (!s.warning.empty()) {
                out["warning"] = s.warning;
            }
        }
        if (pac.contains("eps") || pac.contains("delta")) {
            const double c_h = get_or(pac, "C_H", 1.0);
            const double c_h_hat = get_or(pac, "C_H_hat", 1.0);
            if (!(c_h > 0.0) || !(c_h_hat > 0.0)) {
                throw config_error("C_H and C_H_hat must be positive");
            }
            const auto r = pac_sample_size(get_required<double>(pac, "eps"), get_required<double>(pac, "delta"), p, d,
                                           get_or(pac, "k", 4), std::log(c_h), std::log(c_h_hat),
                                           get_or(pac, "N_tilde", 0.0), r0);
            out["pac_sample_size"] = pac_sample_size_to_json(r);
        }
    }
    if (const auto dir = out_dir(o)) {
        write_json(*dir / "bounds.json", out);
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int run_verify(const options &o, const json &cfg)
{
    require_keys(cfg, {"seed", "flux_defect", "beta", "threads"}, "verify config");
    verify_config vc;
    vc.seed = o.seed ? *o.seed : get_or<std::uint64_t>(cfg, "seed", 0);
    vc.flux_defect = get_or(cfg, "flux_defect", 0.0);
    vc.beta = get_or(cfg, "beta", 0.5);
    const auto report = verify_report(run_invariant_suite(vc), vc.seed);
    if (const auto dir = out_dir(o)) {
        write_json(*dir / "verify_report.json", report);
    }
    std::cout << report.dump(2) << '\n';
    return report["status"] == "pass" ? 0 : 1;
}

int emit_error(const std::string &kind, const std::string &message, int code)
{
    std::cout << json{{"error", {{"kind", kind}, {"message", message}}}}.dump(2) << '\n';
    return code;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Discrete ReQU flows: training, sampling, Beckmann transport, bound ledgers"};
    app.require_subcommand(1);
    options o;
    std::string command;
    const auto add = [&](const std::string &name, const std::string &help) {
        auto *sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "JSON config path");
        sub->add_option("--seed", o.seed, "RNG seed (overrides the config)");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--threads", o.threads, "worker threads (fallback: LIOUVILLE_FLOW_THREADS)");
        sub->callback([&command, name] { command = name; });
    };
    add("train", "fit a flow density by ERM");
    add("sample", "draw samples from a checkpoint");
    add("evaluate", "nll, mass and KL of a checkpoint");
    add("beckmann", "radial Beckmann oracle and transport check");
    add("bounds", "capacity ledger, PAC schedule and sample size");
    add("verify", "run the invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        return emit_error("usage_error", e.what(), 2);
    }

    try {
        const json cfg = load_config(o);
        int threads = o.threads;
        if (threads == 0 && cfg.is_object() && cfg.contains("threads")) {
            threads = get_or(cfg, "threads", 0);
        }
        set_thread_count(threads);
        if (command == "train") {
            return run_train(o, cfg);
        }
        if (command == "sample") {
            return run_sample(o, cfg);
        }
        if (command == "evaluate") {
            return run_evaluate(o, cfg);
        }
        if (command == "beckmann") {
            return run_beckmann(o, cfg);
        }
        if (command == "bounds") {
            return run_bounds(o, cfg);
        }
        return run_verify(o, cfg);
    } catch (const dataset_not_found &e) {
        return emit_error(e.kind(), e.what(), 2);
    } catch (const usage_error &e) {
        return emit_error(e.kind(), e.what(), 2);
    } catch (const config_error &e) {
        return emit_error(e.kind(), e.what(), 2);
    } catch (const invalid_argument &e) {
        return emit_error(e.kind(), e.what(), 2);
    } catch (const parse_error &e) {
        return emit_error(e.kind(), e.what(), 2);
    } catch (const dimension_mismatch &e) {
        return emit_error(e.kind(), e.what(), 2);
    } catch (const error &e) {
        return emit_error(e.kind(), e.what(), 1);
    } catch (const std::exception &e) {
        return emit_error("internal_error", e.what(), 1);
    }
}
