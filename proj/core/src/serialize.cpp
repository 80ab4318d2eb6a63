#include "gpatch/serialize.hpp"

#include "gpatch/error.hpp"

namespace gpatch {

nlohmann::json filter_spec_to_json(const FilterSpec &spec) {
    nlohmann::json j;
    j["family"] = filter_family_name(spec.family);
    j["K"] = spec.K;
    j["sigma"] = spec.sigma == Sigma::Relu ? "relu" : "identity";
    switch (spec.family) {
    case FilterFamily::Adaptive:
        j["weights"] = spec.weights;
        if (!spec.vector_weights.empty()) j["vector_weights"] = spec.vector_weights;
        if (spec.use_constant_term) j["constant_term"] = spec.constant_term;
        break;
    case FilterFamily::Heat:
        j["t0"] = spec.heat_t0;
        break;
    case FilterFamily::Bandpass:
        j["low"] = spec.band_low;
        j["high"] = spec.band_high;
        break;
    case FilterFamily::Shared:
        j["w"] = spec.shared_w;
        break;
    case FilterFamily::Ppr:
        j["c"] = spec.ppr_c;
        j["tol"] = spec.ppr_tol;
        j["max_steps"] = spec.ppr_max_steps;
        break;
    }
    return j;
}

FilterSpec filter_spec_from_json(const nlohmann::json &j) {
    FilterSpec spec;
    spec.family = filter_family_from_name(j.at("family").get<std::string>());
    spec.K = j.value("K", spec.K);
    if (j.value("sigma", "identity") == std::string("relu")) spec.sigma = Sigma::Relu;
    switch (spec.family) {
    case FilterFamily::Adaptive:
        spec.weights = j.value("weights", spec.weights);
        if (j.contains("vector_weights"))
            spec.vector_weights = j.at("vector_weights").get<std::vector<std::vector<double>>>();
        if (j.contains("constant_term")) {
            spec.use_constant_term = true;
            spec.constant_term = j.at("constant_term").get<double>();
        }
        if (spec.weights.empty() && spec.vector_weights.empty())
            throw Error(ErrorCode::ParseError, "adaptive filter spec: missing weights");
        if (!spec.weights.empty()) spec.K = static_cast<int>(spec.weights.size());
        break;
    case FilterFamily::Heat:
        spec.heat_t0 = j.value("t0", spec.heat_t0);
        break;
    case FilterFamily::Bandpass:
        spec.band_low = j.value("low", spec.band_low);
        spec.band_high = j.value("high", spec.band_high);
        break;
    case FilterFamily::Shared:
        spec.shared_w = j.value("w", spec.shared_w);
        break;
    case FilterFamily::Ppr:
        spec.ppr_c = j.value("c", spec.ppr_c);
        spec.ppr_tol = j.value("tol", spec.ppr_tol);
        spec.ppr_max_steps = j.value("max_steps", spec.ppr_max_steps);
        break;
    }
    return spec;
}

} // namespace gpatch
