#pragma once

#include <string>
#include <vector>

namespace gpatch {

enum class FilterFamily { Adaptive, Heat, Bandpass, Shared, Ppr };
enum class Sigma { Identity, Relu };

const char *filter_family_name(FilterFamily f);
FilterFamily filter_family_from_name(const std::string &name);

/// Description of one extractor family with its parameters. Only the
/// fields relevant to `family` are read.
struct FilterSpec {
    FilterFamily family = FilterFamily::Adaptive;
    int K = 10;
    Sigma sigma = Sigma::Identity;

    // adaptive: scalar weight per power k = 1..K; optionally full
    // per-eigenvalue weight vectors instead (vector_weights[k-1] length n).
    std::vector<double> weights;
    std::vector<std::vector<double>> vector_weights;
    // optional k = 0 coefficient; used by the truncated-series PPR
    // equivalence where the k = 0 term is (1-c)I.
    bool use_constant_term = false;
    double constant_term = 0.0;

    // heat: schedule t_k = k * heat_t0.
    double heat_t0 = 0.1;

    // bandpass: K equal-width bands partitioning [band_low, band_high].
    double band_low = -1.0;
    double band_high = 1.0;

    // shared: single scalar applied to every power.
    double shared_w = 1.0;

    // ppr.
    double ppr_c = 0.5;
    double ppr_tol = 1e-8;
    int ppr_max_steps = 1000;

    /// Stable string form used as part of the patch-cache key.
    std::string cache_key() const;

    static FilterSpec adaptive(std::vector<double> w);
    static FilterSpec heat(int K, double t0 = 0.1);
    static FilterSpec bandpass(int K, double low = -1.0, double high = 1.0);
    static FilterSpec shared(int K, double w = 1.0);
    static FilterSpec ppr(double c = 0.5, double tol = 1e-8, int max_steps = 1000);

    /// Geometric weights w_k = (1-c)c^k for k = 1..K with constant term
    /// (1-c); the polynomial form of a K-step personalized-walk score.
    static FilterSpec geometric(double c, int K);
};

/// Per-eigenvalue filter response g(lambda_i), same order as `lambdas`.
struct FrequencyResponse {
    std::vector<double> g;
    FilterFamily family = FilterFamily::Adaptive;
};

/// Evaluates the family's response at each eigenvalue:
///   adaptive  sum_k sigma(w_k * lambda^k)   (+ sigma(w_0) when enabled)
///   heat      sum_k sigma(exp(-t_k lambda))
///   bandpass  sum_k sigma(indicator of band k)
///   shared    sum_k sigma(w * lambda^k)
///   ppr       (1-c) / (1 - c*lambda), the closed-form walk response
/// Bands are half-open except the last, so every point of [low, high]
/// belongs to exactly one band. Throws InvalidBand when low >= high.
FrequencyResponse frequency_response(const FilterSpec &spec, const std::vector<double> &lambdas);

} // namespace gpatch
