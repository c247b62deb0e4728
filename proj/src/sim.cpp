#include "uniqueid/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace uniqueid::sim {

namespace {

[[noreturn]] void bad_config(const std::string& detail)
{
    throw ProtocolError(ErrorCode::ConfigInvalid, detail);
}

void require_known(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> known)
{
    if (!j.is_object()) bad_config(where + " must be an object");
    for (const auto& [key, _] : j.items())
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end())
            bad_config(where + "." + key + " is not a known field");
}

void require_probability(double p, const std::string& what)
{
    if (!(p >= 0.0 && p <= 1.0)) bad_config(what + " must lie in [0, 1]");
}

std::int64_t ppm_value(const nlohmann::json& v, const std::string& what)
{
    // Floats are fractions, integers are already parts-per-million.
    if (v.is_number_float()) {
        const double f = v.get<double>();
        require_probability(f, what);
        return to_ppm(f);
    }
    if (v.is_number_integer()) return v.get<std::int64_t>();
    bad_config(what + " must be a number");
}

const char* const protocol_keys[] = {"certs_required",     "max_reassignments",     "verifier_trust_threshold",
                                     "city_trust_threshold", "invitations_per_user", "sponsor_quota",
                                     "sponsor_window_epochs", "recheck_quota",       "quota_window_epochs",
                                     "identity_ttl_epochs", "suspension_epochs",     "ajudge_deadline_epochs",
                                     "ajudge_unanimous",    "rep_retention_ppm",     "community",
                                     "layer2_group",        "layer3_group"};
const char* const monetary_keys[] = {"a",          "x", "base_stake", "verifier_stake", "ajudge_reward",
                                     "mint_user_weight", "mint_verifier_weight"};

bool is_one_of(const std::string& key, std::span<const char* const> keys)
{
    return std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) != keys.end();
}

ProtocolParams parse_params(const nlohmann::json& protocol, const nlohmann::json& monetary, ScenarioConfig& c)
{
    nlohmann::json merged = to_json(ProtocolParams{});
    for (const auto& [key, v] : protocol.items()) {
        if (key == "random_check_rate") c.random_check_rate = v.get<double>();
        else if (key == "honest_call_rate") c.honest_call_rate = v.get<double>();
        else if (key == "rep_retention") merged["rep_retention_ppm"] = ppm_value(v, "protocol.rep_retention");
        else if (key == "importance_classes") {
            if (!v.is_object()) bad_config("protocol.importance_classes must be an object");
            nlohmann::json classes = nlohmann::json::object();
            for (const auto& [name, t] : v.items()) {
                if (!t.is_array() || t.size() != 3) bad_config("protocol.importance_classes." + name + " needs 3 values");
                classes[name] = {ppm_value(t[0], name), ppm_value(t[1], name), ppm_value(t[2], name)};
            }
            merged["importance_classes"] = classes;
        } else if (is_one_of(key, protocol_keys))
            merged[key] = v;
        else
            bad_config("protocol." + key + " is not a known field");
    }
    for (const auto& [key, v] : monetary.items()) {
        if (key == "ico_allocations") {
            if (!v.is_object()) bad_config("monetary.ico_allocations must be an object of label -> amount");
            for (const auto& [label, amount] : v.items())
                c.ico_allocations.emplace_back(label, amount.get<Amount>());
        } else if (key == "adversary_budget") {
            bad_config("monetary.adversary_budget is set through adversary.budget");
        } else if (is_one_of(key, monetary_keys))
            merged[key] = v;
        else
            bad_config("monetary." + key + " is not a known field");
    }
    ProtocolParams p;
    try {
        p = protocol_params_from_json(merged);
    } catch (const nlohmann::json::exception& e) {
        bad_config(std::string("protocol parameter has the wrong type: ") + e.what());
    }
    validate(p);
    return p;
}

std::string fixed6(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

// Config.

ScenarioConfig config_from_json(const nlohmann::json& j)
{
    require_known(j, "config",
                  {"seed", "epochs", "cities", "protocol", "monetary", "biometric", "arrivals", "governance",
                   "adversary", "metrics"});
    ScenarioConfig c;
    try {
        if (j.contains("seed")) {
            const auto& s = j.at("seed");
            if (!s.is_number_integer()) bad_config("seed must be an integer");
            c.seed = s.is_number_unsigned() ? s.get<std::uint64_t>() : static_cast<std::uint64_t>(s.get<std::int64_t>());
        }
        c.epochs = j.value("epochs", c.epochs);

        if (!j.contains("cities") || !j.at("cities").is_array()) bad_config("cities must be a non-empty array");
        for (const auto& city : j.at("cities")) {
            require_known(city, "cities[]", {"id", "genesis_verifiers", "arrival_rate", "max_arrivals"});
            CityConfig cc;
            cc.id = city.at("id").get<std::string>();
            cc.genesis_verifiers = city.at("genesis_verifiers").get<std::int64_t>();
            cc.arrival_rate = city.value("arrival_rate", 0.0);
            cc.max_arrivals = city.value("max_arrivals", std::int64_t{-1});
            c.cities.push_back(cc);
        }
        std::sort(c.cities.begin(), c.cities.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

        const nlohmann::json empty = nlohmann::json::object();
        const auto& protocol = j.contains("protocol") ? j.at("protocol") : empty;
        const auto& monetary = j.contains("monetary") ? j.at("monetary") : empty;
        if (!protocol.is_object()) bad_config("protocol must be an object");
        if (!monetary.is_object()) bad_config("monetary must be an object");
        c.params = parse_params(protocol, monetary, c);
        std::sort(c.ico_allocations.begin(), c.ico_allocations.end());

        if (j.contains("biometric")) {
            const auto& b = j.at("biometric");
            require_known(b, "biometric",
                          {"template_dim", "n_modalities", "k_required", "genuine_noise_sigma", "target_eer",
                           "calibration_pairs", "tau"});
            c.policy.template_dim = b.value("template_dim", c.policy.template_dim);
            c.policy.n_modalities = b.value("n_modalities", c.policy.n_modalities);
            c.policy.k_required = b.value("k_required", c.policy.k_required);
            c.policy.genuine_noise_sigma = b.value("genuine_noise_sigma", c.policy.genuine_noise_sigma);
            c.target_eer = b.value("target_eer", c.target_eer);
            c.calibration_pairs = b.value("calibration_pairs", c.calibration_pairs);
            if (b.contains("tau")) c.tau = b.at("tau").get<double>();
        }

        if (j.contains("arrivals")) {
            const auto& a = j.at("arrivals");
            require_known(a, "arrivals", {"jitter", "gate_order", "renewal_lead_epochs", "renewal_rate"});
            c.arrival_jitter = a.value("jitter", c.arrival_jitter);
            if (a.contains("gate_order")) {
                c.gate_order.clear();
                for (const auto& g : a.at("gate_order")) {
                    auto kind = gate_kind_from_string(g.get<std::string>());
                    if (!kind || *kind == GateKind::Genesis || *kind == GateKind::Recovery)
                        bad_config("arrivals.gate_order accepts invitation, sponsor and stake");
                    c.gate_order.push_back(*kind);
                }
            }
            c.renewal_lead_epochs = a.value("renewal_lead_epochs", c.renewal_lead_epochs);
            c.renewal_rate = a.value("renewal_rate", c.renewal_rate);
        }

        if (j.contains("governance")) {
            const auto& g = j.at("governance");
            require_known(g, "governance",
                          {"enabled", "interval_epochs", "delegation_rate", "candidates_per_community", "proposals"});
            auto& gc = c.governance;
            gc.enabled = g.value("enabled", gc.enabled);
            gc.interval_epochs = g.value("interval_epochs", gc.interval_epochs);
            gc.delegation_rate = g.value("delegation_rate", gc.delegation_rate);
            gc.candidates_per_community = g.value("candidates_per_community", gc.candidates_per_community);
            if (g.contains("proposals")) {
                for (const auto& p : g.at("proposals")) {
                    require_known(p, "governance.proposals[]",
                                  {"epoch", "class", "parameter", "value", "approve_probability",
                                   "abstain_probability", "voting_epochs"});
                    ProposalPlan pp;
                    pp.epoch = p.at("epoch").get<Epoch>();
                    pp.importance_class = p.value("class", pp.importance_class);
                    pp.parameter = p.at("parameter").get<std::string>();
                    pp.value = p.at("value").get<std::int64_t>();
                    pp.approve_probability = p.value("approve_probability", pp.approve_probability);
                    pp.abstain_probability = p.value("abstain_probability", pp.abstain_probability);
                    pp.voting_epochs = p.value("voting_epochs", pp.voting_epochs);
                    gc.proposals.push_back(pp);
                }
                std::stable_sort(gc.proposals.begin(), gc.proposals.end(),
                                 [](const auto& a, const auto& b) { return a.epoch < b.epoch; });
            }
        }

        if (j.contains("adversary") && !j.at("adversary").is_null())
            c.adversary = adversary::plan_from_json(j.at("adversary"));
        c.collect_metrics = j.value("metrics", c.collect_metrics);
    } catch (const nlohmann::json::exception& e) {
        bad_config(std::string("malformed field: ") + e.what());
    }
    validate(c);
    return c;
}

nlohmann::json to_json(const ScenarioConfig& c)
{
    nlohmann::json cities = nlohmann::json::array();
    for (const auto& city : c.cities)
        cities.push_back({{"id", city.id},
                          {"genesis_verifiers", city.genesis_verifiers},
                          {"arrival_rate", city.arrival_rate},
                          {"max_arrivals", city.max_arrivals}});
    nlohmann::json params = to_json(c.params);
    nlohmann::json protocol = nlohmann::json::object();
    nlohmann::json monetary = nlohmann::json::object();
    for (const auto& [key, v] : params.items()) {
        if (is_one_of(key, monetary_keys)) monetary[key] = v;
        else protocol[key] = v;
    }
    protocol["random_check_rate"] = c.random_check_rate;
    protocol["honest_call_rate"] = c.honest_call_rate;
    nlohmann::json ico = nlohmann::json::object();
    for (const auto& [label, amount] : c.ico_allocations)
        ico[label] = amount;
    monetary["ico_allocations"] = ico;
    nlohmann::json gates = nlohmann::json::array();
    for (auto g : c.gate_order)
        gates.push_back(std::string(to_string(g)));
    nlohmann::json proposals = nlohmann::json::array();
    for (const auto& p : c.governance.proposals)
        proposals.push_back({{"epoch", p.epoch},
                             {"class", p.importance_class},
                             {"parameter", p.parameter},
                             {"value", p.value},
                             {"approve_probability", p.approve_probability},
                             {"abstain_probability", p.abstain_probability},
                             {"voting_epochs", p.voting_epochs}});
    nlohmann::json biometric = {{"template_dim", c.policy.template_dim},
                                {"n_modalities", c.policy.n_modalities},
                                {"k_required", c.policy.k_required},
                                {"genuine_noise_sigma", c.policy.genuine_noise_sigma},
                                {"target_eer", c.target_eer},
                                {"calibration_pairs", c.calibration_pairs}};
    if (c.tau) biometric["tau"] = *c.tau;
    nlohmann::json out = {
        {"seed", c.seed},
        {"epochs", c.epochs},
        {"cities", cities},
        {"protocol", protocol},
        {"monetary", monetary},
        {"biometric", biometric},
        {"arrivals",
         {{"jitter", c.arrival_jitter},
          {"gate_order", gates},
          {"renewal_lead_epochs", c.renewal_lead_epochs},
          {"renewal_rate", c.renewal_rate}}},
        {"governance",
         {{"enabled", c.governance.enabled},
          {"interval_epochs", c.governance.interval_epochs},
          {"delegation_rate", c.governance.delegation_rate},
          {"candidates_per_community", c.governance.candidates_per_community},
          {"proposals", proposals}}},
        {"metrics", c.collect_metrics},
    };
    if (c.adversary) out["adversary"] = adversary::to_json(*c.adversary);
    return out;
}

void validate(const ScenarioConfig& c)
{
    validate(c.params);
    if (c.epochs < 0) bad_config("epochs must be non-negative");
    if (c.cities.empty()) bad_config("cities must be a non-empty array");
    for (std::size_t i = 0; i < c.cities.size(); ++i) {
        const auto& city = c.cities[i];
        if (city.id.empty()) bad_config("city id must be non-empty");
        if (i > 0 && c.cities[i - 1].id == city.id) bad_config("duplicate city " + city.id);
        if (!(city.arrival_rate >= 0.0) || !std::isfinite(city.arrival_rate))
            bad_config("arrival_rate of " + city.id + " must be finite and non-negative");
        // The ring of genesis delegations needs a second member.
        if (city.genesis_verifiers < std::max<std::int64_t>(c.params.certs_required, 2))
            throw ProtocolError(ErrorCode::InsufficientGenesisVerifiers,
                                city.id + " has " + std::to_string(city.genesis_verifiers)
                                    + " genesis verifiers; at least max(certs_required, 2) = "
                                    + std::to_string(std::max<std::int64_t>(c.params.certs_required, 2))
                                    + " are needed");
    }
    require_probability(c.random_check_rate, "protocol.random_check_rate");
    require_probability(c.honest_call_rate, "protocol.honest_call_rate");
    if (!(c.arrival_jitter >= 0.0 && c.arrival_jitter < 1.0)) bad_config("arrivals.jitter must lie in [0, 1)");
    if (c.gate_order.empty()) bad_config("arrivals.gate_order must not be empty");
    if (c.renewal_lead_epochs < 0) bad_config("arrivals.renewal_lead_epochs must be non-negative");
    require_probability(c.renewal_rate, "arrivals.renewal_rate");
    c.policy.validate(false);
    if (!(c.target_eer > 0.0 && c.target_eer < 0.5)) bad_config("biometric.target_eer must lie in (0, 0.5)");
    if (c.calibration_pairs < 1000) bad_config("biometric.calibration_pairs must be at least 1000");
    if (c.tau && !(*c.tau > 0.0)) bad_config("biometric.tau must be positive");
    const auto& g = c.governance;
    if (g.interval_epochs < 1) bad_config("governance.interval_epochs must be at least 1");
    require_probability(g.delegation_rate, "governance.delegation_rate");
    if (g.candidates_per_community < 1) bad_config("governance.candidates_per_community must be at least 1");
    for (const auto& p : g.proposals) {
        if (p.epoch < 1) bad_config("governance.proposals[].epoch must be at least 1");
        if (p.voting_epochs < 0) bad_config("governance.proposals[].voting_epochs must be non-negative");
        require_probability(p.approve_probability, "approve_probability");
        require_probability(p.abstain_probability, "abstain_probability");
        if (p.approve_probability + p.abstain_probability > 1.0)
            bad_config("approve_probability + abstain_probability must not exceed 1");
        if (!c.params.importance_classes.count(p.importance_class))
            bad_config("unknown importance class " + p.importance_class);
    }

    Amount allocated = 0;
    for (const auto& city : c.cities)
        allocated += city.genesis_verifiers * c.params.monetary.verifier_stake;
    for (const auto& [label, amount] : c.ico_allocations) {
        if (amount <= 0) bad_config("ico allocation " + label + " must be positive");
        allocated += amount;
    }
    if (c.adversary) {
        const auto& plan = *c.adversary;
        adversary::validate(plan);
        const std::string city = plan.city.empty() ? c.cities.front().id : plan.city;
        auto it = std::find_if(c.cities.begin(), c.cities.end(), [&](const auto& x) { return x.id == city; });
        if (it == c.cities.end()) bad_config("adversary.city " + city + " is not a configured city");
        if (plan.corrupt_count > it->genesis_verifiers)
            bad_config("adversary.corrupt_count exceeds the verifiers of " + city);
        for (auto i : plan.corrupt_indices)
            if (i >= it->genesis_verifiers) bad_config("adversary.corrupt_indices names a verifier that does not exist");
        allocated += plan.budget;
    }
    if (allocated > c.params.monetary.genesis_supply())
        bad_config("genesis allocations (" + std::to_string(allocated) + ") exceed a * x ("
                   + std::to_string(c.params.monetary.genesis_supply()) + ")");
}

// Metrics.

std::string metrics_csv_header()
{
    return "epoch,verified,pending,revoked,expired,claims_total,eligible_verifiers,circulating,minted,forfeited,"
           "slashed,locked,gini_balance,calls_opened,passed,failed,missed,communities,representatives_l1,"
           "representatives_l2,representatives_l3,proposals_passed,proposals_failed,ledger_events";
}

std::string to_csv(const MetricsRow& r)
{
    std::ostringstream out;
    out << r.epoch << ',' << r.verified << ',' << r.pending << ',' << r.revoked << ',' << r.expired << ','
        << r.claims_total << ',' << r.eligible_verifiers << ',' << r.circulating << ',' << r.minted << ','
        << r.forfeited << ',' << r.slashed << ',' << r.locked << ',' << fixed6(r.gini_balance) << ','
        << r.calls_opened << ',' << r.passed << ',' << r.failed << ',' << r.missed << ',' << r.communities << ','
        << r.representatives_l1 << ',' << r.representatives_l2 << ',' << r.representatives_l3 << ','
        << r.proposals_passed << ',' << r.proposals_failed << ',' << r.ledger_events;
    return out.str();
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows)
{
    out << metrics_csv_header() << '\n';
    for (const auto& r : rows)
        out << to_csv(r) << '\n';
}

// Simulator.

PersonId Simulator::ico_account(const std::string& label)
{
    return PersonId::from_label("uniqueid:ico:" + label);
}

PersonId Simulator::treasury_account()
{
    return PersonId::from_label("uniqueid:treasury");
}

PersonId Simulator::adversary_account()
{
    return PersonId::from_label("uniqueid:adversary");
}

Simulator::Simulator(ScenarioConfig config)
    : config_(std::move(config)), rng_(mix_seed(config_.seed, 0)), targets_(std::make_shared<std::set<PersonId>>())
{
    validate(config_);
    if (config_.adversary) {
        const auto& plan = *config_.adversary;
        if (plan.budget < config_.params.monetary.base_stake)
            throw ProtocolError(ErrorCode::BudgetExceeded, "the adversary budget cannot fund a single stake-gated claim");
        if (plan.city.empty()) config_.adversary->city = config_.cities.front().id;
    }
    biometric::MatchPolicy policy = config_.policy;
    if (config_.tau) {
        calibration_.tau = *config_.tau;
    } else {
        Rng cal(mix_seed(config_.seed, 1));
        calibration_ = biometric::calibrate_tau(policy, config_.calibration_pairs, cal, config_.target_eer);
    }
    policy.tau = calibration_.tau;
    config_.policy = policy;
    protocol_ = std::make_unique<Protocol>(policy);
}

PersonId Simulator::new_pk(const std::string& kind)
{
    return PersonId::from_label("uniqueid:sim:" + std::to_string(config_.seed) + ":" + kind + ":"
                                + std::to_string(pk_counter_++));
}

std::uint64_t Simulator::new_human()
{
    const auto id = ++human_counter_;
    humans_.emplace(id, biometric::generate_person_ground_truth(config_.policy, rng_));
    return id;
}

const Simulator::Person* Simulator::person(const PersonId& pk) const
{
    auto it = people_.find(pk);
    return it == people_.end() ? nullptr : &it->second;
}

void Simulator::add_person(const PersonId& pk, const std::string& city, std::uint64_t human, bool adversarial,
                           const biometric::BiometricTemplate& tmpl, std::uint64_t template_source)
{
    people_[pk] = Person{pk, city, human, adversarial};
    digest_source_[tmpl.digest] = template_source;
}

const std::vector<PersonId>& Simulator::genesis_verifiers(const std::string& city) const
{
    static const std::vector<PersonId> none;
    auto it = genesis_verifiers_.find(city);
    return it == genesis_verifiers_.end() ? none : it->second;
}

std::vector<PersonId> Simulator::verified_in(const std::string& city) const
{
    std::vector<PersonId> out;
    for (const auto& [pk, r] : protocol_->state().registry.identities)
        if (r.status == IdentityStatus::Verified && r.city == city) out.push_back(pk);
    return out;
}

void Simulator::genesis()
{
    if (genesis_done_) return;
    genesis_done_ = true;
    const auto& params = config_.params;
    const Json info = {{"engine", "uniqueid-sim"},
                       {"tau_e12", std::llround(calibration_.tau * 1e12)},
                       {"sigma_e12", std::llround(config_.policy.genuine_noise_sigma * 1e12)},
                       {"template_dim", config_.policy.template_dim},
                       {"n_modalities", config_.policy.n_modalities},
                       {"k_required", config_.policy.k_required}};
    protocol_->initialize(params, config_.seed, info);

    // Verifier keys and persons first so the allocation can fund their stakes.
    for (const auto& city : config_.cities) {
        auto& list = genesis_verifiers_[city.id];
        for (std::int64_t i = 0; i < city.genesis_verifiers; ++i)
            list.push_back(new_pk("genesis"));
    }

    std::vector<Credit> allocations;
    Amount total = 0;
    for (const auto& city : config_.cities)
        for (const auto& pk : genesis_verifiers_[city.id]) {
            allocations.push_back({pk, params.monetary.verifier_stake});
            total += params.monetary.verifier_stake;
        }
    if (config_.adversary) {
        allocations.push_back({adversary_account(), config_.adversary->budget});
        total += config_.adversary->budget;
    }
    for (const auto& [label, amount] : config_.ico_allocations) {
        allocations.push_back({ico_account(label), amount});
        total += amount;
    }
    if (const Amount rest = params.monetary.genesis_supply() - total; rest > 0)
        allocations.push_back({treasury_account(), rest});
    protocol_->allocate(allocations);

    for (const auto& city : config_.cities) {
        auto& list = genesis_verifiers_[city.id];
        for (const auto& pk : list) {
            const auto human = new_human();
            auto tmpl = biometric::sample_template(humans_.at(human), config_.policy, rng_);
            protocol_->genesis_identity(pk, city.id, tmpl);
            add_person(pk, city.id, human, false, tmpl, human);
            protocol_->lock_verifier_stake(pk);
            protocol_->register_verifier(pk);
            inviters_[city.id].insert(pk);
        }
        std::sort(list.begin(), list.end());
    }

    // Bootstrap weight threshold - 1 plus one ring delegation i -> i+1 puts
    // every genesis verifier exactly at the threshold.
    for (const auto& city : config_.cities) {
        const auto& list = genesis_verifiers_[city.id];
        const auto threshold = params.trust_threshold_for(city.id);
        if (threshold > 1)
            for (const auto& pk : list)
                protocol_->bootstrap_trust(pk, threshold - 1);
        for (std::size_t i = 0; i < list.size(); ++i)
            protocol_->delegate(list[i], list[(i + 1) % list.size()]);
    }

    if (config_.adversary) {
        const auto& plan = *config_.adversary;
        const auto& list = genesis_verifiers_[plan.city];
        if (!plan.corrupt_indices.empty()) {
            for (auto i : plan.corrupt_indices)
                corrupted_.insert(list[static_cast<std::size_t>(i)]);
        } else {
            // A dedicated stream: the first k of the same permutation, so the
            // corrupted sets for growing k are nested.
            Rng pick(mix_seed(config_.seed, 2));
            std::vector<PersonId> order = list;
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[pick.below(i)]);
            for (std::int64_t i = 0; i < plan.corrupt_count; ++i)
                corrupted_.insert(order[static_cast<std::size_t>(i)]);
        }
        protocol_->set_behavior(std::make_shared<adversary::CorruptBehavior>(corrupted_, targets_));
        stand_in_ = new_human();
    }
}

void Simulator::run()
{
    genesis();
    for (std::int64_t e = 0; e < config_.epochs; ++e)
        step();
}

void Simulator::run_attack_campaign(std::int64_t max_epochs)
{
    genesis();
    while (protocol_->epoch() < max_epochs && !attack_done())
        step();
}

void Simulator::step()
{
    genesis();
    protocol_->advance_epoch();
    phase_arrivals();
    launch_attempts();
    phase_verification();
    phase_renewals();
    phase_audits();
    phase_governance();
    phase_settlement();
    track_attempts();
    if (config_.collect_metrics) rows_.push_back(snapshot());
}

// Phase 2: arrivals.

void Simulator::phase_arrivals()
{
    for (const auto& city : config_.cities) {
        double expected = city.arrival_rate;
        if (config_.arrival_jitter > 0.0) expected *= 1.0 + config_.arrival_jitter * (2.0 * rng_.uniform() - 1.0);
        auto& carry = arrival_carry_[city.id];
        carry += expected;
        auto n = static_cast<std::int64_t>(std::floor(carry));
        carry -= static_cast<double>(n);
        auto& arrived = arrived_[city.id];
        if (city.max_arrivals >= 0) n = std::min(n, city.max_arrivals - arrived);
        for (std::int64_t i = 0; i < n; ++i)
            queue_.push_back({new_pk("user"), city.id, new_human()});
        arrived += n;
    }

    const auto& s = protocol_->state();
    const Epoch epoch = protocol_->epoch();
    std::vector<Arrival> waiting;
    for (auto& a : queue_) {
        if (assignable_verifiers(s, a.city, a.pk, epoch).empty()) {
            waiting.push_back(std::move(a));
            continue;
        }
        std::optional<std::pair<GateKind, std::optional<PersonId>>> gate;
        for (auto kind : config_.gate_order) {
            if (kind == GateKind::Invitation) {
                auto& pool = inviters_[a.city];
                while (!pool.empty() && invitations_remaining(s, *pool.begin()) < 1)
                    pool.erase(pool.begin());
                if (!pool.empty()) gate = {{kind, *pool.begin()}};
            } else if (kind == GateKind::VerifierSponsor) {
                auto it = s.registry.city_verifiers.find(a.city);
                if (it != s.registry.city_verifiers.end())
                    for (const auto& v : it->second)
                        if (is_eligible_verifier(s, v, epoch) && sponsor_quota_remaining(s, v, epoch) >= 1) {
                            gate = {{kind, v}};
                            break;
                        }
            } else if (kind == GateKind::Stake) {
                const Amount amount = required_stake(s, a.city);
                if (s.tokens.balance(treasury_account()) >= amount) {
                    protocol_->transfer(treasury_account(), a.pk, amount);
                    gate = {{kind, std::nullopt}};
                }
            }
            if (gate) break;
        }
        if (!gate) {
            waiting.push_back(std::move(a));
            continue;
        }
        const auto tmpl = biometric::sample_template(humans_.at(a.human), config_.policy, rng_);
        add_person(a.pk, a.city, a.human, false, tmpl, a.human);
        auto result = protocol_->claim_identity(a.pk, tmpl, a.city, gate->first, gate->second);
        if (!result.flagged.empty()) pending_flags_[a.pk] = std::move(result.flagged);
    }
    queue_ = std::move(waiting);
}

void Simulator::launch_attempts()
{
    if (!config_.adversary || budget_exhausted_) return;
    const auto& plan = *config_.adversary;
    const Epoch epoch = protocol_->epoch();
    if (epoch < plan.start_epoch) return;
    const auto& s = protocol_->state();
    for (std::int64_t i = 0; i < plan.attempts_per_epoch && launched_ < plan.attempts; ++i) {
        const PersonId pk = new_pk("adversary");
        if (assignable_verifiers(s, plan.city, pk, epoch).empty()) return;
        const Amount amount = required_stake(s, plan.city);
        if (s.tokens.balance(adversary_account()) < amount) {
            budget_exhausted_ = true;
            return;
        }

        std::uint64_t presenter = stand_in_;
        std::uint64_t source = 0;
        biometric::BiometricTemplate tmpl;
        if (plan.strategy == adversary::Strategy::DuplicateEnrollment) {
            // Re-enroll a verified honest person under a second key.
            std::vector<PersonId> victims;
            for (const auto& v : verified_in(plan.city))
                if (const auto* p = person(v); p && !p->adversarial) victims.push_back(v);
            if (victims.empty()) return;
            presenter = person(victims[rng_.below(victims.size())])->human;
            source = presenter;
            tmpl = biometric::sample_template(humans_.at(presenter), config_.policy, rng_);
        } else {
            // A non-human template: a latent no living person carries.
            source = new_human();
            tmpl = biometric::sample_template(humans_.at(source), config_.policy, rng_);
        }

        protocol_->transfer(adversary_account(), pk, amount);
        targets_->insert(pk);
        add_person(pk, plan.city, presenter, true, tmpl, source);
        Attempt attempt;
        attempt.pk = pk;
        attempt.launched = epoch;
        auto result = protocol_->claim_identity(pk, tmpl, plan.city, GateKind::Stake);
        attempt.flagged = !result.flagged.empty();
        if (attempt.flagged) pending_flags_[pk] = std::move(result.flagged);
        attempt_index_[pk] = attempts_.size();
        active_attempts_.push_back(attempts_.size());
        attempts_.push_back(attempt);
        ++launched_;
    }
}

// Phase 3: verification.

biometric::BiometricTemplate Simulator::presentation(const PersonId& pk)
{
    return biometric::sample_template(humans_.at(people_.at(pk).human), config_.policy, rng_);
}

void Simulator::certificate_step(const PersonId& pk)
{
    const auto* r = protocol_->state().registry.find(pk);
    if (!r || r->status != IdentityStatus::PendingVerification || !r->current_assignee) return;
    const PersonId verifier = *r->current_assignee;
    const auto result = protocol_->submit_certificate(verifier, pk, presentation(pk));
    const auto* p = person(pk);
    if (result.verified) {
        if (p && !p->adversarial) inviters_[p->city].insert(pk);
        return;
    }
    if (!result.accepted && p && p->adversarial && !config_.adversary->grinding) protocol_->abandon_claim(pk);
}

void Simulator::handle_rejection(const PersonId& pk)
{
    const auto& r = protocol_->state().registry.identities.at(pk);
    if (r.reassignments_used >= config_.params.max_reassignments) {
        protocol_->abandon_claim(pk);
        return;
    }
    if (assignable_verifiers(protocol_->state(), r.city, pk, protocol_->epoch()).empty()) return;
    protocol_->request_reassignment(pk);
}

void Simulator::phase_verification()
{
    protocol_->void_stale_assignments();
    const auto& s = protocol_->state();
    const Epoch epoch = protocol_->epoch();
    std::vector<PersonId> pending;
    for (const auto& [pk, r] : s.registry.identities)
        if (r.status == IdentityStatus::PendingVerification) pending.push_back(pk);

    for (const auto& pk : pending) {
        const auto* r = s.registry.find(pk);
        if (!r || r->status != IdentityStatus::PendingVerification) continue;
        if (r->dedup_pending) {
            if (ajudge_panel(s, r->city, pk, epoch).empty()) continue;
            bool same_human = false;
            const auto source = digest_source_.at(r->template_digest);
            for (const auto& d : pending_flags_[pk])
                if (auto it = digest_source_.find(d); it != digest_source_.end() && it->second == source)
                    same_human = true;
            pending_flags_.erase(pk);
            if (protocol_->resolve_dedup(pk, [&](const PersonId&) { return same_human; })) continue;
            r = s.registry.find(pk);
        }
        if (!r->current_assignee) {
            if (r->last_rejected_by) handle_rejection(pk);
            else if (!assignable_verifiers(s, r->city, pk, epoch).empty()) protocol_->assign_next_verifier(pk);
        }
        certificate_step(pk);
    }
}

// Phase 4: renewals and expiries.

void Simulator::phase_renewals()
{
    const auto& s = protocol_->state();
    const Epoch epoch = protocol_->epoch();
    std::vector<PersonId> due;
    for (const auto& [pk, r] : s.registry.identities)
        if (r.status == IdentityStatus::Verified && r.expiry_epoch && epoch <= *r.expiry_epoch
            && *r.expiry_epoch - epoch <= config_.renewal_lead_epochs)
            due.push_back(pk);
    for (const auto& pk : due) {
        if (config_.renewal_rate < 1.0 && !rng_.bernoulli(config_.renewal_rate)) continue;
        const auto& r = s.registry.identities.at(pk);
        if (ajudge_panel(s, r.city, pk, epoch).empty()) continue;
        protocol_->renew_identity(pk, presentation(pk));
    }
    protocol_->expire_due();
}

// Phase 5: audits.

void Simulator::phase_audits()
{
    const auto& s = protocol_->state();
    const Epoch epoch = protocol_->epoch();
    for (auto id : protocol_->miss_deadlines())
        closed_calls_.push_back(id);

    auto auditable = [&](const PersonId& pk) {
        return s.registry.is_verified(pk) && !s.audit.open_by_target.count(pk);
    };

    if (config_.random_check_rate > 0.0 && rng_.bernoulli(config_.random_check_rate)) {
        std::vector<PersonId> targets;
        for (const auto& [pk, r] : s.registry.identities)
            if (r.status == IdentityStatus::Verified && !s.audit.open_by_target.count(pk)) targets.push_back(pk);
        if (!targets.empty()) open_calls_.push_back(protocol_->random_check(targets[rng_.below(targets.size())]));
    }

    if (config_.honest_call_rate > 0.0) {
        for (const auto& [city, verifiers] : s.registry.city_verifiers) {
            std::vector<PersonId> callers(verifiers.begin(), verifiers.end());
            std::vector<PersonId> members;
            for (const auto& pk : verified_in(city))
                members.push_back(pk);
            for (const auto& v : callers) {
                if (!is_eligible_verifier(s, v, epoch) || recheck_quota_remaining(s, v, epoch) < 1) continue;
                if (!rng_.bernoulli(config_.honest_call_rate)) continue;
                std::vector<PersonId> targets;
                for (const auto& pk : members)
                    if (pk != v && auditable(pk)) targets.push_back(pk);
                if (targets.empty()) continue;
                open_calls_.push_back(protocol_->call_ajudge(v, targets[rng_.below(targets.size())]));
            }
        }
    }

    if (config_.adversary && config_.adversary->audit_successes)
        for (auto& a : attempts_)
            if (!a.audited && auditable(a.pk)) {
                // The call may revoke before track_attempts sees it verified.
                if (!a.verified) a.verified = epoch;
                a.audited = true;
                open_calls_.push_back(protocol_->random_check(a.pk));
            }

    std::vector<std::int64_t> still_open;
    for (auto id : open_calls_) {
        const auto& call = s.audit.calls.at(id);
        if (call.outcome) continue;
        const auto* p = person(call.target);
        const bool appears = !p || !p->adversarial || config_.adversary->appear_at_audit;
        const auto* r = s.registry.find(call.target);
        if (!appears || !r || ajudge_panel(s, r->city, call.target, epoch).empty()) {
            still_open.push_back(id);
            continue;
        }
        const PersonId target = call.target;
        protocol_->adjudicate(id, [&](const PersonId&) { return presentation(target); });
        closed_calls_.push_back(id);
    }
    open_calls_ = std::move(still_open);
}

// Phase 6: governance.

void Simulator::phase_governance()
{
    const auto& g = config_.governance;
    if (!g.enabled) return;
    const auto& s = protocol_->state();
    const Epoch epoch = protocol_->epoch();

    if (epoch % g.interval_epochs == 0) {
        std::vector<governance::CityMember> verified;
        for (const auto& [pk, r] : s.registry.identities)
            if (r.status == IdentityStatus::Verified) verified.push_back({r.city, pk});
        if (static_cast<std::int64_t>(verified.size()) >= s.params.community.min) {
            const auto groups = governance::form_communities(verified, s.params.community);
            std::vector<std::vector<PersonId>> current;
            for (const auto& grp : s.governance.layers[0])
                current.push_back(grp.members);
            if (governance::membership_digest(groups) != governance::membership_digest(current))
                protocol_->form_communities();

            // Members without an in-group delegate pick one of the group's
            // first few members. Registered verifiers keep their genesis ring.
            for (const auto& grp : s.governance.layers[0]) {
                const auto n = std::min<std::size_t>(grp.members.size(),
                                                     static_cast<std::size_t>(g.candidates_per_community));
                const std::vector<PersonId> candidates(grp.members.begin(), grp.members.begin() + n);
                for (const auto& m : grp.members) {
                    if (s.registry.verifiers.count(m)) continue;
                    auto d = s.trust.delegation_of.find(m);
                    if (d != s.trust.delegation_of.end()
                        && std::binary_search(grp.members.begin(), grp.members.end(), d->second))
                        continue;
                    if (!rng_.bernoulli(g.delegation_rate)) continue;
                    std::vector<PersonId> options;
                    for (const auto& c : candidates)
                        if (c != m) options.push_back(c);
                    if (options.empty()) continue;
                    protocol_->delegate(m, options[rng_.below(options.size())]);
                }
            }
        }

        for (int layer = 1; layer <= 3; ++layer) {
            if (layer > 1) {
                const auto reps = s.governance.representatives(layer - 2);
                if (reps.empty()) break;
                const auto& bounds = layer == 2 ? s.params.layer2_group : s.params.layer3_group;
                std::vector<std::vector<PersonId>> current;
                for (const auto& grp : s.governance.layers[static_cast<std::size_t>(layer - 1)])
                    current.push_back(grp.members);
                if (governance::membership_digest(governance::form_layer(reps, bounds))
                    != governance::membership_digest(current))
                    protocol_->form_layer(layer);
            }
            const auto& groups = s.governance.layers[static_cast<std::size_t>(layer - 1)];
            for (std::size_t i = 0; i < groups.size(); ++i) {
                const auto& grp = groups[i];
                if (grp.representative
                    && !governance::representative_valid(grp.election_support, current_support(s, grp),
                                                         s.params.rep_retention_ppm)) {
                    protocol_->invalidate(layer, i);
                    governance_log_.push_back("epoch " + std::to_string(epoch) + ": layer " + std::to_string(layer)
                                              + " group " + std::to_string(i) + " representative invalidated");
                }
                if (grp.representative) continue;
                try {
                    protocol_->elect(layer, i);
                } catch (const ProtocolError& e) {
                    if (e.code() != ErrorCode::NoVotesCast) throw;
                }
            }
        }
    }

    for (std::size_t i = 0; i < g.proposals.size(); ++i) {
        const auto& plan = g.proposals[i];
        if (plan.epoch != epoch) continue;
        const auto top = s.governance.representatives(2);
        if (top.empty()) {
            governance_log_.push_back("epoch " + std::to_string(epoch) + ": proposal on " + plan.parameter
                                      + " skipped, no layer-3 representative");
            continue;
        }
        const auto id = protocol_->open_proposal(top.front(), plan.importance_class, plan.parameter, plan.value);
        proposals_due_[id] = {epoch + plan.voting_epochs, static_cast<std::int64_t>(i)};
    }
    for (auto it = proposals_due_.begin(); it != proposals_due_.end();) {
        if (it->second.first != epoch) {
            ++it;
            continue;
        }
        const auto& plan = g.proposals[static_cast<std::size_t>(it->second.second)];
        std::array<governance::LayerBallots, 3> ballots;
        for (int layer = 0; layer < 3; ++layer)
            for (std::size_t r = 0; r < s.governance.representatives(layer).size(); ++r) {
                const double u = rng_.uniform();
                auto& b = ballots[static_cast<std::size_t>(layer)];
                if (u < plan.approve_probability) ++b.approvals;
                else if (u < plan.approve_probability + plan.abstain_probability) ++b.abstentions;
                else ++b.rejections;
            }
        const auto status = protocol_->tally_proposal(it->first, ballots);
        governance_log_.push_back("epoch " + std::to_string(epoch) + ": proposal " + std::to_string(it->first) + " on "
                                  + plan.parameter + " " + std::string(governance::to_string(status)));
        it = proposals_due_.erase(it);
    }
}

// Phase 7: settlement.

void Simulator::phase_settlement()
{
    std::sort(closed_calls_.begin(), closed_calls_.end());
    for (auto id : closed_calls_)
        protocol_->settle_audit(id);
    closed_calls_.clear();
    protocol_->settle_rewards();
}

void Simulator::track_attempts()
{
    const auto& s = protocol_->state();
    const Epoch epoch = protocol_->epoch();
    std::vector<std::size_t> still;
    for (auto i : active_attempts_) {
        auto& a = attempts_[i];
        const auto* r = s.registry.find(a.pk);
        if (r && r->status == IdentityStatus::Verified && !a.verified) a.verified = epoch;
        if (r && (r->status == IdentityStatus::Revoked || r->status == IdentityStatus::Expired)) {
            a.revoked = epoch;
            a.revocation_reason = r->status == IdentityStatus::Expired ? "expired" : r->revocation_reason;
            continue;
        }
        still.push_back(i);
    }
    active_attempts_ = std::move(still);
    if (campaign_resolved_ < 0 && config_.adversary
        && (launched_ >= config_.adversary->attempts || budget_exhausted_)) {
        const bool any_pending = std::any_of(active_attempts_.begin(), active_attempts_.end(), [&](auto i) {
            const auto* r = s.registry.find(attempts_[i].pk);
            return r && r->status == IdentityStatus::PendingVerification;
        });
        if (!any_pending) campaign_resolved_ = epoch;
    }
}

bool Simulator::attack_done() const
{
    return config_.adversary && campaign_resolved_ >= 0
           && protocol_->epoch() >= campaign_resolved_ + config_.adversary->observation_epochs;
}

adversary::AttackReport Simulator::attack_report() const
{
    adversary::AttackReport rep;
    if (!config_.adversary) return rep;
    const auto& plan = *config_.adversary;
    const auto& s = protocol_->state();
    rep.strategy = plan.strategy;
    rep.attempts = launched_;
    rep.collusion_size = static_cast<std::int64_t>(corrupted_.size());
    rep.bribes = rep.collusion_size * plan.bribe_cost_per_verifier;
    rep.budget_exhausted = budget_exhausted_;
    for (const auto& a : attempts_) {
        if (a.flagged) ++rep.dedup_flagged;
        if (a.verified) ++rep.reached_verified;
        if (s.registry.is_verified(a.pk)) ++rep.successes;
        if (a.revoked) {
            const auto& why = a.revocation_reason;
            if (why == "failed_fake" || why == "missed_deadline" || why == "duplicate") {
                ++rep.detected;
                if (a.verified) rep.detection_times.push_back(*a.revoked - *a.verified);
            } else if (why == "rejected") {
                ++rep.rejected;
            }
        }
    }
    for (const auto& ev : protocol_->ledger().events()) {
        if (ev.kind == EventKind::StakeForfeited) {
            if (targets_->count(field_pk(ev.payload, "pk"))) rep.forfeited += field_int(ev.payload, "amount");
        } else if (ev.kind == EventKind::StakeSlashed) {
            if (corrupted_.count(field_pk(ev.payload, "pk"))) rep.slashed += field_int(ev.payload, "amount");
        }
    }
    rep.finalize();
    return rep;
}

MetricsRow Simulator::snapshot() const
{
    const auto& s = protocol_->state();
    MetricsRow row;
    row.epoch = s.epoch;
    std::vector<Amount> holdings;
    for (const auto& [pk, r] : s.registry.identities) {
        switch (r.status) {
        case IdentityStatus::Verified: ++row.verified; break;
        case IdentityStatus::PendingVerification:
        case IdentityStatus::PendingEntry: ++row.pending; break;
        case IdentityStatus::Revoked: ++row.revoked; break;
        case IdentityStatus::Expired: ++row.expired; break;
        }
        if (auto it = s.tokens.accounts.find(pk); it != s.tokens.accounts.end())
            holdings.push_back(it->second.balance + it->second.locked);
        else
            holdings.push_back(0);
    }
    row.claims_total = static_cast<std::int64_t>(s.registry.claims_total);
    for (const auto& [pk, v] : s.registry.verifiers)
        if (is_eligible_verifier(s, pk, s.epoch)) ++row.eligible_verifiers;
    const auto& sup = s.tokens.supply;
    row.circulating = sup.circulating();
    row.minted = sup.minted;
    row.forfeited = sup.forfeited;
    row.slashed = sup.slashed;
    row.locked = sup.locked;
    row.gini_balance = gini(std::move(holdings));
    row.calls_opened = s.audit.stats.calls_opened;
    row.passed = s.audit.stats.passed;
    row.failed = s.audit.stats.failed;
    row.missed = s.audit.stats.missed;
    row.communities = static_cast<std::int64_t>(s.governance.layers[0].size());
    row.representatives_l1 = static_cast<std::int64_t>(s.governance.representatives(0).size());
    row.representatives_l2 = static_cast<std::int64_t>(s.governance.representatives(1).size());
    row.representatives_l3 = static_cast<std::int64_t>(s.governance.representatives(2).size());
    row.proposals_passed = s.governance.passed;
    row.proposals_failed = s.governance.failed;
    row.ledger_events = protocol_->ledger().size();
    return row;
}

nlohmann::json Simulator::report() const
{
    const auto& s = protocol_->state();
    const auto last = snapshot();
    nlohmann::json final_state = {{"epoch", last.epoch},
                                  {"verified", last.verified},
                                  {"pending", last.pending},
                                  {"revoked", last.revoked},
                                  {"expired", last.expired},
                                  {"claims_total", last.claims_total},
                                  {"eligible_verifiers", last.eligible_verifiers},
                                  {"circulating", last.circulating},
                                  {"minted", last.minted},
                                  {"forfeited", last.forfeited},
                                  {"slashed", last.slashed},
                                  {"locked", last.locked},
                                  {"calls_opened", last.calls_opened},
                                  {"proposals_passed", last.proposals_passed},
                                  {"proposals_failed", last.proposals_failed}};
    nlohmann::json out = {
        {"seed", config_.seed},
        {"epochs", config_.epochs},
        {"epochs_run", s.epoch},
        {"state_hash", to_hex(s.state_hash())},
        {"ledger_tip", to_hex(protocol_->ledger().tip_hash())},
        {"ledger_events", protocol_->ledger().size()},
        {"metrics_rows", rows_.size()},
        {"calibration", biometric::to_json(calibration_, config_.policy, mix_seed(config_.seed, 1))},
        {"final", final_state},
        {"governance_log", governance_log_},
        {"queued_arrivals", queue_.size()},
    };
    if (config_.adversary) out["attack"] = adversary::to_json(attack_report());
    return out;
}

ScenarioResult run_scenario(const ScenarioConfig& config, const std::string& out_dir)
{
    Simulator sim(config);
    sim.run();
    ScenarioResult result;
    result.rows = sim.rows();
    result.state_hash = sim.protocol().state().state_hash();
    result.calibration = sim.calibration();
    if (config.adversary) result.attack = sim.attack_report();
    result.report = sim.report();
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const std::filesystem::path dir(out_dir);
        std::ofstream ledger(dir / "ledger.jsonl", std::ios::binary);
        sim.protocol().ledger().write_jsonl(ledger);
        std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
        write_metrics_csv(metrics, result.rows);
        std::ofstream report(dir / "report.json", std::ios::binary);
        report << result.report.dump(2) << '\n';
        ledger.flush();
        metrics.flush();
        report.flush();
        if (!ledger || !metrics || !report) throw std::runtime_error("failed to write outputs to " + out_dir);
    }
    return result;
}

} // namespace uniqueid::sim
