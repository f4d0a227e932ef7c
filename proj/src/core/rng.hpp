#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace synth {

// Deterministic random stream. All draws are derived from the raw
// mt19937_64 output so two builds on the same platform produce identical
// sequences; std::*_distribution is avoided because its mapping is
// implementation-defined.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; the pair partner is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double gumbel() {
        double u = 0.0;
        do {
            u = uniform();
        } while (u <= 0.0);
        return -std::log(-std::log(u));
    }

    // Uniform integer in [lo, hi).
    int randint(int lo, int hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo);
        return lo + static_cast<int>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = next_u64() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), ascending order not guaranteed.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        for (int i = 0; i < k; ++i) {
            const int j = i + static_cast<int>(next_u64() % static_cast<uint64_t>(n - i));
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        idx.resize(static_cast<size_t>(k));
        return idx;
    }

    // splitmix64 finalizer; good avalanche for seed derivation.
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t h = a ^ (0x9e3779b97f4a7c15ULL + b);
        h ^= h >> 30;
        h *= 0xbf58476d1ce4e5b9ULL;
        h ^= h >> 27;
        h *= 0x94d049bb133111ebULL;
        h ^= h >> 31;
        return h;
    }

    // Independent stream derived from a base seed; workers get
    // derive(base_seed, worker_id) so streams never overlap by use.
    static Rng derive(uint64_t base_seed, uint64_t stream) { return Rng(mix(base_seed, stream)); }

  private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace synth
