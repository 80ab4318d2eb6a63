#include "gpatch/filters.hpp"

#include <cmath>
#include <cstdio>

#include "gpatch/error.hpp"

namespace gpatch {

const char *filter_family_name(FilterFamily f) {
    switch (f) {
    case FilterFamily::Adaptive: return "adaptive";
    case FilterFamily::Heat: return "heat";
    case FilterFamily::Bandpass: return "bandpass";
    case FilterFamily::Shared: return "shared";
    case FilterFamily::Ppr: return "ppr";
    }
    return "?";
}

FilterFamily filter_family_from_name(const std::string &name) {
    if (name == "adaptive") return FilterFamily::Adaptive;
    if (name == "heat") return FilterFamily::Heat;
    if (name == "bandpass") return FilterFamily::Bandpass;
    if (name == "shared") return FilterFamily::Shared;
    if (name == "ppr") return FilterFamily::Ppr;
    throw Error(ErrorCode::InvalidArgument, "unknown filter family: " + name);
}

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double apply_sigma(Sigma s, double x) { return s == Sigma::Relu && x < 0.0 ? 0.0 : x; }

} // namespace

std::string FilterSpec::cache_key() const {
    std::string key = filter_family_name(family);
    key += ":K=" + std::to_string(K);
    key += sigma == Sigma::Relu ? ":relu" : ":id";
    switch (family) {
    case FilterFamily::Adaptive:
        key += ":w=";
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (i) key += ",";
            key += num(weights[i]);
        }
        if (!vector_weights.empty()) {
            key += ":vw=";
            for (const auto &wk : vector_weights)
                for (double v : wk) key += num(v) + ",";
        }
        if (use_constant_term) key += ":w0=" + num(constant_term);
        break;
    case FilterFamily::Heat:
        key += ":t0=" + num(heat_t0);
        break;
    case FilterFamily::Bandpass:
        key += ":l=" + num(band_low) + ":h=" + num(band_high);
        break;
    case FilterFamily::Shared:
        key += ":w=" + num(shared_w);
        break;
    case FilterFamily::Ppr:
        key += ":c=" + num(ppr_c) + ":tol=" + num(ppr_tol) + ":steps=" + std::to_string(ppr_max_steps);
        break;
    }
    return key;
}

FilterSpec FilterSpec::adaptive(std::vector<double> w) {
    FilterSpec s;
    s.family = FilterFamily::Adaptive;
    s.K = static_cast<int>(w.size());
    s.weights = std::move(w);
    return s;
}

FilterSpec FilterSpec::heat(int K, double t0) {
    FilterSpec s;
    s.family = FilterFamily::Heat;
    s.K = K;
    s.heat_t0 = t0;
    return s;
}

FilterSpec FilterSpec::bandpass(int K, double low, double high) {
    FilterSpec s;
    s.family = FilterFamily::Bandpass;
    s.K = K;
    s.band_low = low;
    s.band_high = high;
    return s;
}

FilterSpec FilterSpec::shared(int K, double w) {
    FilterSpec s;
    s.family = FilterFamily::Shared;
    s.K = K;
    s.shared_w = w;
    return s;
}

FilterSpec FilterSpec::ppr(double c, double tol, int max_steps) {
    FilterSpec s;
    s.family = FilterFamily::Ppr;
    s.K = 0;
    s.ppr_c = c;
    s.ppr_tol = tol;
    s.ppr_max_steps = max_steps;
    return s;
}

FilterSpec FilterSpec::geometric(double c, int K) {
    std::vector<double> w(static_cast<std::size_t>(K));
    double ck = 1.0;
    for (int k = 1; k <= K; ++k) {
        ck *= c;
        w[k - 1] = (1.0 - c) * ck;
    }
    FilterSpec s = adaptive(std::move(w));
    s.use_constant_term = true;
    s.constant_term = 1.0 - c;
    return s;
}

FrequencyResponse frequency_response(const FilterSpec &spec, const std::vector<double> &lambdas) {
    const int n = static_cast<int>(lambdas.size());
    FrequencyResponse out;
    out.family = spec.family;
    out.g.assign(static_cast<std::size_t>(n), 0.0);

    switch (spec.family) {
    case FilterFamily::Adaptive: {
        const bool vector_mode = !spec.vector_weights.empty();
        if (vector_mode) {
            if (static_cast<int>(spec.vector_weights.size()) != spec.K)
                throw Error(ErrorCode::ShapeMismatch, "adaptive filter: need K weight vectors");
            for (const auto &wk : spec.vector_weights)
                if (static_cast<int>(wk.size()) != n)
                    throw Error(ErrorCode::ShapeMismatch, "adaptive filter: weight vector length != n");
        } else if (static_cast<int>(spec.weights.size()) != spec.K) {
            throw Error(ErrorCode::ShapeMismatch, "adaptive filter: need K scalar weights");
        }
        for (int i = 0; i < n; ++i) {
            double pow_l = 1.0;
            double s = spec.use_constant_term ? apply_sigma(spec.sigma, spec.constant_term) : 0.0;
            for (int k = 1; k <= spec.K; ++k) {
                pow_l *= lambdas[i];
                const double w = vector_mode ? spec.vector_weights[k - 1][i] : spec.weights[k - 1];
                s += apply_sigma(spec.sigma, w * pow_l);
            }
            out.g[i] = s;
        }
        break;
    }
    case FilterFamily::Heat:
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = 1; k <= spec.K; ++k)
                s += apply_sigma(spec.sigma, std::exp(-(k * spec.heat_t0) * lambdas[i]));
            out.g[i] = s;
        }
        break;
    case FilterFamily::Bandpass: {
        if (spec.band_low >= spec.band_high)
            throw Error(ErrorCode::InvalidBand, "bandpass: low >= high");
        const double width = (spec.band_high - spec.band_low) / spec.K;
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = 1; k <= spec.K; ++k) {
                const double lo = spec.band_low + (k - 1) * width;
                const double hi = k == spec.K ? spec.band_high : spec.band_low + k * width;
                const bool in = k == spec.K ? (lambdas[i] >= lo && lambdas[i] <= hi)
                                            : (lambdas[i] >= lo && lambdas[i] < hi);
                s += apply_sigma(spec.sigma, in ? 1.0 : 0.0);
            }
            out.g[i] = s;
        }
        break;
    }
    case FilterFamily::Shared:
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            double pow_l = 1.0;
            for (int k = 1; k <= spec.K; ++k) {
                pow_l *= lambdas[i];
                s += apply_sigma(spec.sigma, spec.shared_w * pow_l);
            }
            out.g[i] = s;
        }
        break;
    case FilterFamily::Ppr:
        for (int i = 0; i < n; ++i)
            out.g[i] = (1.0 - spec.ppr_c) / (1.0 - spec.ppr_c * lambdas[i]);
        break;
    }
    return out;
}

} // namespace gpatch
