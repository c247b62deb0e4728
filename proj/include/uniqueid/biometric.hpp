#pragma once

#include "uniqueid/common.hpp"
#include "uniqueid/rng.hpp"

#include <cstddef>
#include <shared_mutex>
#include <vector>

#include <json.hpp>

namespace uniqueid::biometric {

/// Synthetic biometric model: each person owns one unit-norm latent vector
/// per modality; a reading is the latent plus i.i.d. Gaussian noise.
struct MatchPolicy {
    double tau = 0.0; // Euclidean distance threshold per modality
    int template_dim = 16;
    int n_modalities = 4;
    int k_required = 3; // k-of-n fusion
    double genuine_noise_sigma = 0.08;

    /// Throws ProtocolError(ConfigInvalid).
    void validate(bool require_tau = true) const;
};

struct ModalitySample {
    int modality_id = 0;
    std::vector<double> vector;
};

/// A person's latent biometrics. Never recorded anywhere but the simulator.
struct GroundTruth {
    std::vector<std::vector<double>> latents;
};

struct BiometricTemplate {
    std::vector<ModalitySample> samples;
    Digest digest{};
};

/// SHA-256 over (modality_id, dim, IEEE-754 big-endian coordinates) for each
/// sample in modality order.
Digest template_digest(const std::vector<ModalitySample>& samples);

GroundTruth generate_person_ground_truth(const MatchPolicy& policy, Rng& rng);

BiometricTemplate sample_template(const GroundTruth& person, const MatchPolicy& policy, Rng& rng);

/// Throws ProtocolError(ModalityMismatch) on id or dimension mismatch.
bool match_modality(const ModalitySample& a, const ModalitySample& b, const MatchPolicy& policy);

bool match_template(const BiometricTemplate& a, const BiometricTemplate& b, const MatchPolicy& policy);

/// P(at least k of n independent modalities match) when each matches with
/// probability p. Impostor flags: p = FAR. Genuine accepts: p = 1 - FRR.
double fused_match_probability(double p, int n, int k);

struct Calibration {
    double tau = 0.0;
    double far = 0.0;
    double frr = 0.0;
    std::uint64_t n_pairs = 0;

    double eer() const { return 0.5 * (far + frr); }
};

/// Monte Carlo threshold calibration on single-modality pairs. Draws n_pairs
/// genuine and n_pairs impostor pairs, binary-searches the crossing of the
/// empirical FAR and FRR curves and returns the midpoint of the threshold
/// interval minimizing |FAR - FRR|. Throws CalibrationFailed when the
/// resulting EER exceeds max_eer.
Calibration calibrate_tau(const MatchPolicy& policy, std::uint64_t n_pairs, Rng& rng, double max_eer);

struct ErrorRates {
    double far = 0.0; // impostor pairs accepted
    double frr = 0.0; // genuine pairs rejected
    std::uint64_t n_pairs = 0;
};

/// Single-modality rates at policy.tau over fresh Monte Carlo pairs.
ErrorRates measure_modality_rates(const MatchPolicy& policy, std::uint64_t n_pairs, Rng& rng);

/// Linear-scan deduplication index over verified templates. Reads may run
/// concurrently; writes are exclusive.
class DedupIndex {
public:
    explicit DedupIndex(MatchPolicy policy) : policy_(policy) {}

    void add(const BiometricTemplate& tmpl);
    bool remove(const Digest& digest);
    bool contains(const Digest& digest) const;
    std::size_t size() const;

    /// Digests of every indexed template that matches under k-of-n fusion.
    /// Empty result means the template is fresh.
    std::vector<Digest> check(const BiometricTemplate& candidate) const;

    const MatchPolicy& policy() const { return policy_; }

private:
    MatchPolicy policy_;
    mutable std::shared_mutex mutex_;
    std::vector<Digest> digests_;
    std::vector<double> data_; // row-major: entry, modality, coordinate
};

nlohmann::json to_json(const BiometricTemplate& tmpl);
BiometricTemplate template_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Calibration& c, const MatchPolicy& policy, std::uint64_t seed);

} // namespace uniqueid::biometric
