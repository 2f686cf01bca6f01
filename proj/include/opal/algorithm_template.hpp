#pragma once

// A vetted algorithm offered by a repository: the algorithm text, the schema
// it runs against, the repository it targets, and the vetting signatures that
// make it trustworthy. The signing view excludes the vetting signatures so
// any number of vetters can sign the same bytes.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "opal/decimal.hpp"
#include "opal/envelope.hpp"
#include "opal/error.hpp"
#include "opal/principal.hpp"
#include "opal/schema.hpp"
#include "opal/time.hpp"
#include "opal/uuid.hpp"

namespace opal {

struct AlgorithmTemplate {
  Uuid template_id;
  Uuid algorithm_id;
  std::string description;
  std::string algorithm_source;
  Uuid target_repository_id;
  DataSchema data_schema;
  Decimal cost_to_querier;  // non-negative, abstract units
  std::string terms_of_use;
  PrincipalId publisher;
  std::vector<SignatureEnvelope> vetting_signatures;  // length >= 1 once vetted

  bool operator==(const AlgorithmTemplate&) const = default;

  // Everything except the vetting signatures.
  nlohmann::json signing_view() const {
    return {{"template_id", template_id.str()},
            {"algorithm_id", algorithm_id.str()},
            {"description", description},
            {"algorithm_source", algorithm_source},
            {"target_repository_id", target_repository_id.str()},
            {"data_schema", data_schema.to_json()},
            {"cost_to_querier", cost_to_querier.to_double()},
            {"terms_of_use", terms_of_use},
            {"publisher", publisher.to_json()}};
  }

  nlohmann::json to_json() const {
    nlohmann::json j = signing_view();
    nlohmann::json sigs = nlohmann::json::array();
    for (const auto& s : vetting_signatures) sigs.push_back(s.to_json());
    j["vetting_signatures"] = sigs;
    return j;
  }

  static AlgorithmTemplate from_json(const nlohmann::json& j) {
    AlgorithmTemplate t;
    t.template_id = Uuid::parse(j.at("template_id").get<std::string>());
    t.algorithm_id = Uuid::parse(j.at("algorithm_id").get<std::string>());
    t.description = j.at("description").get<std::string>();
    t.algorithm_source = j.at("algorithm_source").get<std::string>();
    t.target_repository_id = Uuid::parse(j.at("target_repository_id").get<std::string>());
    t.data_schema = DataSchema::from_json(j.at("data_schema"));
    t.cost_to_querier = Decimal::from_double(j.at("cost_to_querier").get<double>());
    if (t.cost_to_querier.micros < 0) throw ProtocolError("cost_to_querier must be non-negative");
    t.terms_of_use = j.at("terms_of_use").get<std::string>();
    t.publisher = PrincipalId::from_json(j.at("publisher"));
    for (const auto& s : j.at("vetting_signatures"))
      t.vetting_signatures.push_back(SignatureEnvelope::from_json(s));
    return t;
  }
};

}  // namespace opal
