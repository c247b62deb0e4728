#include "uniqueid/cli.hpp"

#include "uniqueid/attack.hpp"
#include "uniqueid/sim.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <regex>
#include <sstream>

#include <CLI11.hpp>

namespace uniqueid::cli {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json read_json_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError(path + ": malformed JSON: " + e.what());
    }
}

sim::ScenarioConfig load_config(const std::string& path)
{
    try {
        return sim::config_from_json(read_json_file(path));
    } catch (const ProtocolError& e) {
        throw UsageError(path + ": " + e.what());
    }
}

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::int64_t> epochs,
            const std::string& out_dir, std::ostream& out)
{
    auto cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (epochs) {
        if (*epochs < 0) throw UsageError("--epochs must be non-negative");
        cfg.epochs = *epochs;
    }
    const auto result = sim::run_scenario(cfg, out_dir);
    out << nlohmann::json{{"command", "run"},
                          {"out", out_dir},
                          {"seed", cfg.seed},
                          {"epochs", cfg.epochs},
                          {"state_hash", to_hex(result.state_hash)},
                          {"ledger_events", result.report.at("ledger_events")},
                          {"metrics_rows", result.rows.size()}}
               .dump()
        << '\n';
    return ok;
}

int cmd_attack(const std::string& config_path, const std::string& sweep, std::int64_t trials, const std::string& out_dir,
               std::ostream& out)
{
    auto cfg = load_config(config_path);
    if (!cfg.adversary) throw UsageError(config_path + ": no adversary plan");
    if (trials < 1) throw UsageError("--trials must be at least 1");
    std::smatch m;
    static const std::regex range(R"(^(\d+)\.\.(\d+)$)");
    if (!std::regex_match(sweep, m, range)) throw UsageError("--sweep must look like k_min..k_max");
    const std::int64_t k_min = std::stoll(m[1]);
    const std::int64_t k_max = std::stoll(m[2]);
    const std::string city = cfg.adversary->city.empty() ? cfg.cities.front().id : cfg.adversary->city;
    std::int64_t n = 0;
    for (const auto& c : cfg.cities)
        if (c.id == city) n = c.genesis_verifiers;
    if (k_min > k_max || k_max > n) throw UsageError("--sweep must satisfy k_min <= k_max <= " + std::to_string(n));

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    std::ostringstream csv;
    csv << "k,success_prob,expected_cost\n";
    nlohmann::json rows = nlohmann::json::array();
    for (std::int64_t k = k_min; k <= k_max; ++k) {
        auto run = cfg;
        run.adversary->corrupt_count = k;
        run.adversary->corrupt_indices.clear();
        run.adversary->attempts = trials;
        auto report = adversary::run_attack(run);
        const double p = report.success_rate();
        const double cost = static_cast<double>(k * run.adversary->bribe_cost_per_verifier)
                            + static_cast<double>(report.forfeited + report.slashed) / static_cast<double>(trials);
        csv << k << ',' << fmt(p) << ',' << fmt(cost) << '\n';
        rows.push_back({{"k", k}, {"success_prob", p}, {"expected_cost", cost}});
        std::ofstream rep(dir / ("report_k" + std::to_string(k) + ".json"), std::ios::binary);
        rep << adversary::to_json(report).dump(2) << '\n';
        if (!rep) throw std::runtime_error("cannot write reports to " + out_dir);
    }
    std::ofstream frontier(dir / "frontier.csv", std::ios::binary);
    frontier << csv.str();
    if (!frontier) throw std::runtime_error("cannot write frontier.csv to " + out_dir);
    out << nlohmann::json{{"command", "attack"}, {"out", out_dir}, {"trials", trials}, {"frontier", rows}}.dump()
        << '\n';
    return ok;
}

int cmd_verify(const std::string& path, std::ostream& out, std::ostream& err)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read " + path);
    const auto loaded = load_jsonl(in);
    if (loaded.first_invalid) {
        err << "ledger is invalid at height " << *loaded.first_invalid << '\n';
        out << nlohmann::json{{"command", "verify"}, {"ok", false}, {"first_invalid_height", *loaded.first_invalid}}
                   .dump()
            << '\n';
        return failure;
    }
    try {
        const auto state = replay(loaded.events);
        out << nlohmann::json{{"command", "verify"},
                              {"ok", true},
                              {"events", loaded.events.size()},
                              {"state_hash", to_hex(state.state_hash())}}
                   .dump()
            << '\n';
        return ok;
    } catch (const RejectedEvent& e) {
        err << e.what() << '\n';
        out << nlohmann::json{{"command", "verify"}, {"ok", false}, {"first_invalid_height", e.height()}}.dump() << '\n';
        return failure;
    }
}

int cmd_validate(const std::string& path, std::ostream& out)
{
    const auto cfg = load_config(path);
    out << nlohmann::json{{"command", "validate"}, {"valid", true}, {"config", sim::to_json(cfg)}}.dump() << '\n';
    return ok;
}

} // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Deterministic proof-of-unique-human protocol simulator", "uniqueid-sim"};
    app.require_subcommand(1);

    std::string config, out_dir, sweep, ledger;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> epochs;
    std::int64_t trials = 0;

    auto* run = app.add_subcommand("run", "Run a scenario and write ledger.jsonl, metrics.csv and report.json");
    run->add_option("--config", config, "Scenario config JSON")->required();
    run->add_option("--seed", seed, "Override the config seed");
    run->add_option("--epochs", epochs, "Override the config epoch count");
    run->add_option("--out", out_dir, "Output directory")->required();

    auto* attack = app.add_subcommand("attack", "Sweep the collusion size and write frontier.csv");
    attack->add_option("--config", config, "Scenario config JSON with an adversary plan")->required();
    attack->add_option("--sweep", sweep, "Range of corrupted verifiers, k_min..k_max")->required();
    attack->add_option("--trials", trials, "Attempts per k")->required();
    attack->add_option("--out", out_dir, "Output directory")->required();

    auto* verify = app.add_subcommand("verify", "Check the hash chain and replay a ledger");
    verify->add_option("--ledger", ledger, "ledger.jsonl")->required();

    auto* validate = app.add_subcommand("validate", "Validate a scenario config");
    validate->add_option("--config", config, "Scenario config JSON")->required();

    std::ostringstream help_out, help_err;
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, help_out, help_err);
        out << help_out.str();
        err << help_err.str();
        return code == 0 ? ok : usage;
    }

    try {
        if (*run) return cmd_run(config, seed, epochs, out_dir, out);
        if (*attack) return cmd_attack(config, sweep, trials, out_dir, out);
        if (*verify) return cmd_verify(ledger, out, err);
        if (*validate) return cmd_validate(config, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    } catch (const ProtocolError& e) {
        err << "error: " << e.what() << '\n';
        return e.code() == ErrorCode::ConfigInvalid || e.code() == ErrorCode::InsufficientGenesisVerifiers ? usage
                                                                                                          : failure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return failure;
    }
    return usage;
}

} // namespace uniqueid::cli
