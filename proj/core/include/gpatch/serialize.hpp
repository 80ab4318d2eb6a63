#pragma once

#include <json.hpp>

#include "gpatch/filters.hpp"

namespace gpatch {

nlohmann::json filter_spec_to_json(const FilterSpec &spec);
FilterSpec filter_spec_from_json(const nlohmann::json &j);

} // namespace gpatch
