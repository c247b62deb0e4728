#include "uniqueid/biometric.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>

namespace uniqueid::biometric {

namespace {

double squared_distance(const double* a, const double* b, int dim)
{
    double s = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

std::vector<double> unit_vector(int dim, Rng& rng)
{
    std::vector<double> v(dim);
    double norm2;
    do {
        norm2 = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm2 += x * x;
        }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v)
        x *= inv;
    return v;
}

std::vector<double> noisy(const std::vector<double>& latent, double sigma, Rng& rng)
{
    std::vector<double> out(latent);
    if (sigma > 0.0)
        for (auto& x : out)
            x += sigma * rng.normal();
    return out;
}

// One single-modality reading pair. Genuine pairs are two readings of one
// latent; impostor pairs are readings of two independent latents.
double pair_distance(const MatchPolicy& policy, bool genuine, Rng& rng)
{
    const auto a = unit_vector(policy.template_dim, rng);
    const auto b = genuine ? a : unit_vector(policy.template_dim, rng);
    const auto ra = noisy(a, policy.genuine_noise_sigma, rng);
    const auto rb = noisy(b, policy.genuine_noise_sigma, rng);
    return std::sqrt(squared_distance(ra.data(), rb.data(), policy.template_dim));
}

} // namespace

void MatchPolicy::validate(bool require_tau) const
{
    auto fail = [](const char* what) { throw ProtocolError(ErrorCode::ConfigInvalid, what); };
    if (template_dim < 1) fail("template_dim must be >= 1");
    if (n_modalities < 1) fail("n_modalities must be >= 1");
    if (k_required < 1 || k_required > n_modalities) fail("k_required must be in [1, n_modalities]");
    if (!(genuine_noise_sigma >= 0.0) || !std::isfinite(genuine_noise_sigma))
        fail("genuine_noise_sigma must be finite and non-negative");
    if (require_tau && !(tau > 0.0)) fail("tau must be positive");
}

Digest template_digest(const std::vector<ModalitySample>& samples)
{
    std::string bytes;
    for (const auto& s : samples) {
        append_be64(bytes, static_cast<std::uint64_t>(s.modality_id));
        append_be64(bytes, s.vector.size());
        for (double x : s.vector)
            append_be64(bytes, std::bit_cast<std::uint64_t>(x));
    }
    return sha256(bytes);
}

GroundTruth generate_person_ground_truth(const MatchPolicy& policy, Rng& rng)
{
    GroundTruth g;
    g.latents.reserve(policy.n_modalities);
    for (int m = 0; m < policy.n_modalities; ++m)
        g.latents.push_back(unit_vector(policy.template_dim, rng));
    return g;
}

BiometricTemplate sample_template(const GroundTruth& person, const MatchPolicy& policy, Rng& rng)
{
    BiometricTemplate t;
    t.samples.reserve(person.latents.size());
    for (std::size_t m = 0; m < person.latents.size(); ++m)
        t.samples.push_back({static_cast<int>(m), noisy(person.latents[m], policy.genuine_noise_sigma, rng)});
    t.digest = template_digest(t.samples);
    return t;
}

bool match_modality(const ModalitySample& a, const ModalitySample& b, const MatchPolicy& policy)
{
    if (a.modality_id != b.modality_id || a.vector.size() != b.vector.size())
        throw ProtocolError(ErrorCode::ModalityMismatch, "modality id or dimension differs");
    const double d2 = squared_distance(a.vector.data(), b.vector.data(), static_cast<int>(a.vector.size()));
    return d2 <= policy.tau * policy.tau;
}

double fused_match_probability(double p, int n, int k)
{
    if (n < 1 || k < 1 || k > n || !(p >= 0.0 && p <= 1.0))
        throw ProtocolError(ErrorCode::InvalidCounts, "fused_match_probability needs 1 <= k <= n and p in [0, 1]");
    long double total = 0.0L;
    for (int j = k; j <= n; ++j) {
        long double choose = 1.0L;
        for (int i = 0; i < j; ++i)
            choose = choose * (n - i) / (i + 1);
        total += choose * std::pow(static_cast<long double>(p), j) * std::pow(1.0L - p, n - j);
    }
    return static_cast<double>(total);
}

bool match_template(const BiometricTemplate& a, const BiometricTemplate& b, const MatchPolicy& policy)
{
    if (a.samples.size() != b.samples.size())
        throw ProtocolError(ErrorCode::ModalityMismatch, "templates have different modality counts");
    const int n = static_cast<int>(a.samples.size());
    const int k = std::min(policy.k_required, n);
    int matched = 0;
    for (int m = 0; m < n; ++m) {
        if (match_modality(a.samples[m], b.samples[m], policy)) {
            if (++matched >= k) return true;
        } else if (m + 1 - matched > n - k) {
            return false;
        }
    }
    return matched >= k;
}

Calibration calibrate_tau(const MatchPolicy& policy, std::uint64_t n_pairs, Rng& rng, double max_eer)
{
    policy.validate(false);
    if (n_pairs == 0) throw ProtocolError(ErrorCode::CalibrationFailed, "n_pairs must be positive");

    std::vector<double> genuine(n_pairs), impostor(n_pairs);
    for (std::uint64_t i = 0; i < n_pairs; ++i) {
        genuine[i] = pair_distance(policy, true, rng);
        impostor[i] = pair_distance(policy, false, rng);
    }
    std::sort(genuine.begin(), genuine.end());
    std::sort(impostor.begin(), impostor.end());

    // FAR and FRR are step functions that only change at observed distances,
    // so the candidate thresholds are the interval starts below.
    std::vector<double> starts;
    starts.reserve(2 * n_pairs + 1);
    std::merge(genuine.begin(), genuine.end(), impostor.begin(), impostor.end(), std::back_inserter(starts));
    starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
    if (starts.front() > 0.0) starts.insert(starts.begin(), 0.0);

    const auto n = static_cast<std::int64_t>(n_pairs);
    auto far_count = [&](double t) {
        return static_cast<std::int64_t>(std::upper_bound(impostor.begin(), impostor.end(), t) - impostor.begin());
    };
    auto frr_count = [&](double t) {
        return n - static_cast<std::int64_t>(std::upper_bound(genuine.begin(), genuine.end(), t) - genuine.begin());
    };
    auto gap = [&](std::size_t i) { return far_count(starts[i]) - frr_count(starts[i]); };

    // first interval where FAR >= FRR; the gap is non-decreasing in the threshold
    std::size_t lo = 0, hi = starts.size() - 1;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (gap(mid) >= 0) hi = mid;
        else lo = mid + 1;
    }
    std::size_t best = lo;
    if (lo > 0 && std::llabs(gap(lo - 1)) < std::llabs(gap(lo))) best = lo - 1;
    std::size_t last = best;
    while (gap(best) == 0 && last + 1 < starts.size() && gap(last + 1) == 0)
        ++last;

    const double begin = starts[best];
    const double end = last + 1 < starts.size() ? starts[last + 1] : starts[last];
    Calibration c;
    c.tau = 0.5 * (begin + end);
    c.far = static_cast<double>(far_count(begin)) / static_cast<double>(n);
    c.frr = static_cast<double>(frr_count(begin)) / static_cast<double>(n);
    c.n_pairs = n_pairs;
    if (c.eer() > max_eer)
        throw ProtocolError(ErrorCode::CalibrationFailed,
                            "empirical EER " + std::to_string(c.eer()) + " exceeds " + std::to_string(max_eer));
    return c;
}

ErrorRates measure_modality_rates(const MatchPolicy& policy, std::uint64_t n_pairs, Rng& rng)
{
    const double tau2 = policy.tau * policy.tau;
    std::uint64_t false_accepts = 0, false_rejects = 0;
    for (std::uint64_t i = 0; i < n_pairs; ++i) {
        const double g = pair_distance(policy, true, rng);
        const double m = pair_distance(policy, false, rng);
        if (g * g > tau2) ++false_rejects;
        if (m * m <= tau2) ++false_accepts;
    }
    const double n = static_cast<double>(n_pairs);
    return {static_cast<double>(false_accepts) / n, static_cast<double>(false_rejects) / n, n_pairs};
}

void DedupIndex::add(const BiometricTemplate& tmpl)
{
    const auto dim = static_cast<std::size_t>(policy_.template_dim);
    if (tmpl.samples.size() != static_cast<std::size_t>(policy_.n_modalities))
        throw ProtocolError(ErrorCode::ModalityMismatch, "template modality count differs from index policy");
    std::unique_lock lock(mutex_);
    if (std::find(digests_.begin(), digests_.end(), tmpl.digest) != digests_.end()) return;
    digests_.push_back(tmpl.digest);
    for (const auto& s : tmpl.samples) {
        if (s.vector.size() != dim)
            throw ProtocolError(ErrorCode::ModalityMismatch, "template dimension differs from index policy");
        data_.insert(data_.end(), s.vector.begin(), s.vector.end());
    }
}

bool DedupIndex::remove(const Digest& digest)
{
    std::unique_lock lock(mutex_);
    auto it = std::find(digests_.begin(), digests_.end(), digest);
    if (it == digests_.end()) return false;
    const std::size_t stride = static_cast<std::size_t>(policy_.template_dim) * policy_.n_modalities;
    const std::size_t i = static_cast<std::size_t>(it - digests_.begin());
    const std::size_t last = digests_.size() - 1;
    if (i != last) {
        digests_[i] = digests_[last];
        std::copy_n(data_.begin() + last * stride, stride, data_.begin() + i * stride);
    }
    digests_.pop_back();
    data_.resize(last * stride);
    return true;
}

bool DedupIndex::contains(const Digest& digest) const
{
    std::shared_lock lock(mutex_);
    return std::find(digests_.begin(), digests_.end(), digest) != digests_.end();
}

std::size_t DedupIndex::size() const
{
    std::shared_lock lock(mutex_);
    return digests_.size();
}

std::vector<Digest> DedupIndex::check(const BiometricTemplate& candidate) const
{
    const int dim = policy_.template_dim;
    const int n = policy_.n_modalities;
    const int k = policy_.k_required;
    const double tau2 = policy_.tau * policy_.tau;
    if (candidate.samples.size() != static_cast<std::size_t>(n))
        throw ProtocolError(ErrorCode::ModalityMismatch, "candidate modality count differs from index policy");
    for (const auto& s : candidate.samples)
        if (s.vector.size() != static_cast<std::size_t>(dim))
            throw ProtocolError(ErrorCode::ModalityMismatch, "candidate dimension differs from index policy");

    std::shared_lock lock(mutex_);
    std::vector<Digest> flagged;
    const std::size_t stride = static_cast<std::size_t>(dim) * n;
    for (std::size_t e = 0; e < digests_.size(); ++e) {
        const double* entry = data_.data() + e * stride;
        int matched = 0, missed = 0;
        for (int m = 0; m < n; ++m) {
            if (squared_distance(entry + m * dim, candidate.samples[m].vector.data(), dim) <= tau2) {
                if (++matched >= k) break;
            } else if (++missed > n - k) {
                break;
            }
        }
        if (matched >= k) flagged.push_back(digests_[e]);
    }
    return flagged;
}

nlohmann::json to_json(const BiometricTemplate& tmpl)
{
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : tmpl.samples)
        samples.push_back({{"modality_id", s.modality_id}, {"vector", s.vector}});
    return {{"digest", to_hex(tmpl.digest)}, {"samples", samples}};
}

BiometricTemplate template_from_json(const nlohmann::json& j)
{
    BiometricTemplate t;
    for (const auto& s : j.at("samples"))
        t.samples.push_back({s.at("modality_id").get<int>(), s.at("vector").get<std::vector<double>>()});
    std::sort(t.samples.begin(), t.samples.end(),
              [](const auto& a, const auto& b) { return a.modality_id < b.modality_id; });
    for (std::size_t i = 0; i < t.samples.size(); ++i) {
        if (t.samples[i].modality_id != static_cast<int>(i))
            throw ProtocolError(ErrorCode::ModalityMismatch, "modality ids must be 0..n-1, each exactly once");
        for (double x : t.samples[i].vector)
            if (!std::isfinite(x)) throw ProtocolError(ErrorCode::ModalityMismatch, "non-finite coordinate");
    }
    t.digest = template_digest(t.samples);
    return t;
}

nlohmann::json to_json(const Calibration& c, const MatchPolicy& policy, std::uint64_t seed)
{
    return {{"sigma", policy.genuine_noise_sigma},
            {"d", policy.template_dim},
            {"tau", c.tau},
            {"measured_far", c.far},
            {"measured_frr", c.frr},
            {"n_pairs", c.n_pairs},
            {"seed", seed}};
}

} // namespace uniqueid::biometric
