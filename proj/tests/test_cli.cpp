#include "uniqueid/cli.hpp"
#include "uniqueid/ledger.hpp"

#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out, err;
    nlohmann::json summary() const { return nlohmann::json::parse(out); }
};

Outcome cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "uniqueid-sim");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    Outcome o;
    o.code = uniqueid::cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

fs::path scratch(const std::string& name)
{
    const auto dir = fs::path(UNIQUEID_BINARY_DIR) / "cli_scratch" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string config(const std::string& name) { return std::string(UNIQUEID_SOURCE_DIR) + "/configs/" + name; }

fs::path write_file(const fs::path& path, const std::string& text)
{
    std::ofstream(path, std::ios::binary) << text;
    return path;
}

std::vector<std::string> read_lines(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);)
        lines.push_back(l);
    return lines;
}

const char* small_scenario = R"({
  "seed": 3, "epochs": 4,
  "cities": [{"id": "faro", "genesis_verifiers": 6, "arrival_rate": 5}],
  "biometric": {"tau": 0.74}
})";

} // namespace

TEST_SUITE("cli")
{
    TEST_CASE("run then verify reproduces the state hash")
    {
        const auto dir = scratch("run");
        const auto cfg = write_file(dir / "scenario.json", small_scenario);
        const auto run = cli({"run", "--config", cfg.string(), "--out", (dir / "out").string()});
        REQUIRE(run.code == 0);
        const auto s = run.summary();
        CHECK(s.at("metrics_rows") == 4);
        for (const auto* f : {"ledger.jsonl", "metrics.csv", "report.json"})
            CHECK(fs::exists(dir / "out" / f));

        const auto verify = cli({"verify", "--ledger", (dir / "out" / "ledger.jsonl").string()});
        CHECK(verify.code == 0);
        CHECK(verify.summary().at("ok") == true);
        CHECK(verify.summary().at("state_hash") == s.at("state_hash"));

        const auto again = cli({"run", "--config", cfg.string(), "--out", (dir / "again").string()});
        CHECK(again.summary().at("state_hash") == s.at("state_hash"));
        const auto reseeded =
            cli({"run", "--config", cfg.string(), "--seed", "4", "--epochs", "2", "--out", (dir / "seed4").string()});
        CHECK(reseeded.code == 0);
        CHECK(reseeded.summary().at("metrics_rows") == 2);
        CHECK(reseeded.summary().at("state_hash") != s.at("state_hash"));
    }

    TEST_CASE("verify rejects a tampered ledger")
    {
        const auto dir = scratch("tamper");
        const auto cfg = write_file(dir / "scenario.json", small_scenario);
        REQUIRE(cli({"run", "--config", cfg.string(), "--out", dir.string()}).code == 0);
        auto lines = read_lines(dir / "ledger.jsonl");
        REQUIRE(lines.size() > 10);

        // Edit a payload without fixing the hash.
        auto edited = lines;
        auto ev = nlohmann::json::parse(edited[7]);
        ev["epoch"] = ev["epoch"].get<std::int64_t>() + 1;
        edited[7] = ev.dump();
        std::string text;
        for (const auto& l : edited)
            text += l + '\n';
        const auto bad = write_file(dir / "edited.jsonl", text);
        const auto v = cli({"verify", "--ledger", bad.string()});
        CHECK(v.code == 1);
        CHECK(v.summary().at("ok") == false);
        CHECK(v.summary().at("first_invalid_height") == ev.at("height"));

        // Drop an event from the middle.
        text.clear();
        for (std::size_t i = 0; i < lines.size(); ++i)
            if (i != 5) text += lines[i] + '\n';
        CHECK(cli({"verify", "--ledger", write_file(dir / "gap.jsonl", text).string()}).code == 1);

        CHECK(cli({"verify", "--ledger", (dir / "missing.jsonl").string()}).code == 2);
    }

    TEST_CASE("validate")
    {
        const auto ok = cli({"validate", "--config", config("honest_small.json")});
        CHECK(ok.code == 0);
        CHECK(ok.summary().at("valid") == true);
        CHECK(ok.summary().at("config").at("seed") == 7);

        const auto dir = scratch("validate");
        CHECK(cli({"validate", "--config", write_file(dir / "a.json", R"({"seed": 1})").string()}).code == 2);
        CHECK(cli({"validate", "--config", write_file(dir / "b.json", "{not json").string()}).code == 2);
        CHECK(cli({"validate", "--config",
                   write_file(dir / "c.json", R"({"cities": [{"id": "x", "genesis_verifiers": 1}]})").string()})
                  .code
              == 2);
        const auto unknown = cli({"validate", "--config", (dir / "nope.json").string()});
        CHECK(unknown.code == 2);
        CHECK_FALSE(unknown.err.empty());
    }

    TEST_CASE("usage errors")
    {
        CHECK(cli({}).code == 2);
        CHECK(cli({"teleport"}).code == 2);
        CHECK(cli({"run", "--config", config("honest_small.json")}).code == 2);
        CHECK(cli({"attack", "--config", config("collusion.json"), "--sweep", "3-5", "--trials", "10", "--out",
                   scratch("usage").string()})
                  .code
              == 2);
        CHECK(cli({"attack", "--config", config("collusion.json"), "--sweep", "5..3", "--trials", "10", "--out",
                   scratch("usage").string()})
                  .code
              == 2);
        CHECK(cli({"attack", "--config", config("honest_small.json"), "--sweep", "3..5", "--trials", "10", "--out",
                   scratch("usage").string()})
                  .code
              == 2);
        CHECK(cli({"--help"}).code == 0);
    }

    TEST_CASE("attack sweep writes a monotone frontier")
    {
        const auto dir = scratch("attack");
        const auto cfg = write_file(dir / "attack.json", R"({
  "seed": 8, "epochs": 0,
  "cities": [{"id": "evora", "genesis_verifiers": 8}],
  "biometric": {"tau": 0.74},
  "governance": {"enabled": false},
  "metrics": false,
  "adversary": {"bribe_cost_per_verifier": 100, "budget": 20000, "batch_size": 400}
})");
        const auto r = cli({"attack", "--config", cfg.string(), "--sweep", "2..8", "--trials", "400", "--out",
                            (dir / "out").string()});
        REQUIRE(r.code == 0);
        const auto lines = read_lines(dir / "out" / "frontier.csv");
        REQUIRE(lines.size() == 8);
        CHECK(lines[0] == "k,success_prob,expected_cost");
        std::vector<double> p, cost;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            std::istringstream row(lines[i]);
            std::string k, sp, ec;
            std::getline(row, k, ',');
            std::getline(row, sp, ',');
            std::getline(row, ec, ',');
            CHECK(std::stoll(k) == static_cast<long long>(i) + 1);
            p.push_back(std::stod(sp));
            cost.push_back(std::stod(ec));
            CHECK(fs::exists(dir / "out" / ("report_k" + k + ".json")));
        }
        CHECK(p.front() == 0.0);
        CHECK(p.back() == 1.0);
        for (std::size_t i = 1; i < p.size(); ++i) {
            CHECK(p[i] >= p[i - 1]);
            CHECK(cost[i] >= 100.0 * static_cast<double>(i + 2));
        }
        CHECK(r.summary().at("frontier").size() == 7);
    }
}
