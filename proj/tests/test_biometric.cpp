#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace uniqueid;
using namespace uniqueid::biometric;

namespace {

// oracles.py, d = 16, sigma = 0.08
constexpr double eer_tau = 0.73980596;
constexpr double eer_rate = 3.037938e-4;

double std_error(double p, double n)
{
    return std::sqrt(p * (1 - p) / n);
}

} // namespace

TEST_SUITE("biometric")
{
    TEST_CASE("template digest matches the oracle bytes")
    {
        const std::vector<ModalitySample> samples{{0, {0.5, -1.25}}, {1, {0.0, 3.0}}};
        CHECK(to_hex(template_digest(samples)) == "302a63d100faa285ad5f48c5a57ba14b1cf7c06a6428fb7d2c7cd99a66a17677");
    }

    TEST_CASE("ground truth latents are unit vectors and readings are seeded")
    {
        MatchPolicy p = testing::default_policy();
        Rng r1(1), r2(1);
        const auto g = generate_person_ground_truth(p, r1);
        const auto g2 = generate_person_ground_truth(p, r2);
        REQUIRE(g.latents.size() == 4);
        for (const auto& v : g.latents) {
            REQUIRE(v.size() == 16);
            double n2 = 0;
            for (double x : v)
                n2 += x * x;
            CHECK(n2 == doctest::Approx(1.0).epsilon(1e-12));
        }
        CHECK(g.latents == g2.latents);
        const auto t = sample_template(g, p, r1);
        CHECK(t.digest == template_digest(t.samples));
        CHECK(sample_template(g2, p, r2).digest == t.digest);
    }

    TEST_CASE("mismatched modalities are refused")
    {
        const MatchPolicy p = testing::default_policy();
        CHECK_THROWS_AS(match_modality({0, {0.0, 0.0}}, {1, {0.0, 0.0}}, p), ProtocolError);
        CHECK_THROWS_AS(match_modality({0, {0.0, 0.0}}, {0, {0.0}}, p), ProtocolError);
        BiometricTemplate a, b;
        a.samples = {{0, {0.0}}};
        b.samples = {{0, {0.0}}, {1, {0.0}}};
        CHECK_THROWS_AS(match_template(a, b, p), ProtocolError);
    }

    TEST_CASE("k-of-n fusion counts matching modalities")
    {
        MatchPolicy p;
        p.tau = 1.0;
        p.template_dim = 1;
        p.n_modalities = 4;
        p.k_required = 3;
        BiometricTemplate a, b;
        for (int m = 0; m < 4; ++m) {
            a.samples.push_back({m, {0.0}});
            b.samples.push_back({m, {m < 3 ? 0.5 : 5.0}});
        }
        CHECK(match_template(a, b, p));
        b.samples[2].vector[0] = 5.0;
        CHECK_FALSE(match_template(a, b, p));
        p.k_required = 2;
        CHECK(match_template(a, b, p));
    }

    TEST_CASE("per-modality rates at the analytic EER threshold agree with the closed form")
    {
        MatchPolicy p = testing::default_policy();
        Rng rng(11);
        const std::uint64_t n = 200'000;
        const auto rates = measure_modality_rates(p, n, rng);
        const double se = std_error(eer_rate, n);
        CHECK(std::abs(rates.far - eer_rate) < 4 * se);
        CHECK(std::abs(rates.frr - eer_rate) < 4 * se);
    }

    TEST_CASE("calibration lands on the equal-error threshold")
    {
        MatchPolicy p;
        Rng rng(5);
        const auto c = calibrate_tau(p, 100'000, rng, 0.02);
        CHECK(c.n_pairs == 100'000);
        CHECK(std::abs(c.far - c.frr) <= 0.003);
        CHECK(c.eer() <= 0.02);
        // Both error curves are steep here; a 1e5-pair estimate stays within 0.03 of the analytic tau.
        CHECK(std::abs(c.tau - eer_tau) < 0.03);
    }

    TEST_CASE("calibration fails loudly past the EER bound")
    {
        MatchPolicy p;
        p.genuine_noise_sigma = 0.3;
        Rng rng(5);
        try {
            calibrate_tau(p, 20'000, rng, 0.02);
            FAIL("calibration should not meet the bound");
        } catch (const ProtocolError& e) {
            CHECK(e.code() == ErrorCode::CalibrationFailed);
        }
        CHECK_THROWS_AS(calibrate_tau(p, 0, rng, 1.0), ProtocolError);
    }

    TEST_CASE("fused rates follow the binomial tail")
    {
        // At this sigma and tau every modality errs with probability 0.01.
        MatchPolicy p;
        p.genuine_noise_sigma = 0.12756406764768366;
        p.tau = 1.0205113757046982;
        Rng rng(17);
        const std::uint64_t n = 100'000;
        const auto r = testing::fused_rates(p, n, rng);
        CHECK(std::abs(r.miss - 5.9203e-4) < 4 * std_error(5.9203e-4, n));
        CHECK(std::abs(r.false_flag - 3.97e-6) < 4 * std_error(3.97e-6, n) + 1.0 / n);
    }

    TEST_CASE("fusion closed form")
    {
        CHECK(fused_match_probability(0.01, 4, 3) == doctest::Approx(3.97e-6).epsilon(1e-12));
        CHECK(1.0 - fused_match_probability(0.99, 4, 3) == doctest::Approx(5.9203e-4).epsilon(1e-9));
        CHECK(fused_match_probability(0.01, 4, 4) == doctest::Approx(1e-8).epsilon(1e-12));
        CHECK(fused_match_probability(0.3, 5, 1) == doctest::Approx(1.0 - std::pow(0.7, 5)));
        CHECK(fused_match_probability(1.0, 4, 4) == 1.0);
        CHECK_THROWS_AS(fused_match_probability(0.5, 4, 5), ProtocolError);
        CHECK_THROWS_AS(fused_match_probability(1.5, 4, 2), ProtocolError);
    }

    TEST_CASE("lowering k never unflags a pair")
    {
        MatchPolicy p = testing::default_policy();
        p.genuine_noise_sigma = 0.12;
        Rng rng(23);
        int flagged_at_4 = 0;
        for (int i = 0; i < 2000; ++i) {
            const auto a = generate_person_ground_truth(p, rng);
            const auto t1 = sample_template(a, p, rng);
            const auto t2 = sample_template(a, p, rng);
            bool prev = false;
            for (int k = 4; k >= 1; --k) {
                p.k_required = k;
                const bool now = match_template(t1, t2, p);
                if (prev) REQUIRE(now);
                prev = now;
                if (k == 4) flagged_at_4 += now;
            }
        }
        CHECK(flagged_at_4 > 0);
        CHECK(flagged_at_4 < 2000);
    }

    TEST_CASE("template JSON round trip")
    {
        const MatchPolicy p = testing::default_policy();
        Rng rng(2);
        const auto t = sample_template(generate_person_ground_truth(p, rng), p, rng);
        const auto back = template_from_json(to_json(t));
        CHECK(back.digest == t.digest);
        CHECK(back.samples.size() == t.samples.size());
        CHECK(back.samples[3].vector == t.samples[3].vector);
    }
}

TEST_SUITE("dedup")
{
    TEST_CASE("re-readings of an indexed person are flagged and strangers are not")
    {
        const MatchPolicy p = testing::default_policy();
        DedupIndex index(p);
        Rng rng(8);
        std::vector<GroundTruth> people;
        std::vector<BiometricTemplate> enrolled;
        for (int i = 0; i < 300; ++i) {
            people.push_back(generate_person_ground_truth(p, rng));
            enrolled.push_back(sample_template(people.back(), p, rng));
            index.add(enrolled.back());
        }
        CHECK(index.size() == 300);
        int flagged = 0;
        for (int i = 0; i < 300; ++i) {
            const auto hits = index.check(sample_template(people[i], p, rng));
            if (std::find(hits.begin(), hits.end(), enrolled[i].digest) != hits.end()) ++flagged;
        }
        // Per-template miss probability is below 1e-6.
        CHECK(flagged == 300);
        int false_hits = 0;
        for (int i = 0; i < 300; ++i)
            false_hits += index.check(sample_template(generate_person_ground_truth(p, rng), p, rng)).empty() ? 0 : 1;
        CHECK(false_hits == 0);
    }

    TEST_CASE("removed templates no longer match")
    {
        const MatchPolicy p = testing::default_policy();
        DedupIndex index(p);
        Rng rng(9);
        const auto person = generate_person_ground_truth(p, rng);
        const auto t = sample_template(person, p, rng);
        index.add(t);
        CHECK(index.contains(t.digest));
        CHECK(index.remove(t.digest));
        CHECK_FALSE(index.remove(t.digest));
        CHECK_FALSE(index.contains(t.digest));
        CHECK(index.check(sample_template(person, p, rng)).empty());
    }

    TEST_CASE("templates with the wrong shape are refused")
    {
        const MatchPolicy p = testing::default_policy();
        DedupIndex index(p);
        BiometricTemplate t;
        t.samples = {{0, std::vector<double>(16, 0.0)}};
        CHECK_THROWS_AS(index.add(t), ProtocolError);
        CHECK_THROWS_AS(index.check(t), ProtocolError);
    }
}
