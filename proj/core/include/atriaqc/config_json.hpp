#pragma once

#include <nlohmann/json.hpp>

#include "atriaqc/augment.hpp"
#include "atriaqc/detector.hpp"
#include "atriaqc/optim.hpp"
#include "atriaqc/phantom.hpp"
#include "atriaqc/qa_models.hpp"

// JSON views of the configuration structs. `merge` overlays the keys present
// in `j` onto an existing value and rejects unknown keys with a Config error,
// so partial config files override defaults field by field.
namespace atriaqc {

nlohmann::json to_json(const PhantomConfig& c);
nlohmann::json to_json(const DetectorConfig& c);
nlohmann::json to_json(const AugmentConfig& c);
nlohmann::json to_json(const LarsConfig& c);
nlohmann::json to_json(const ContrastiveConfig& c);
nlohmann::json to_json(const QANetConfig& c);

void merge(PhantomConfig& c, const nlohmann::json& j);
void merge(DetectorConfig& c, const nlohmann::json& j);
void merge(AugmentConfig& c, const nlohmann::json& j);
void merge(LarsConfig& c, const nlohmann::json& j);
void merge(ContrastiveConfig& c, const nlohmann::json& j);
void merge(QANetConfig& c, const nlohmann::json& j);

std::string_view strategy_name(Strategy s);
Strategy strategy_from_name(std::string_view name);

}  // namespace atriaqc
