#pragma once

#include <span>
#include <string>

#include <json.hpp>

#include "copula_rank/estimators.hpp"
#include "copula_rank/geometry.hpp"
#include "copula_rank/mc.hpp"
#include "copula_rank/models.hpp"

namespace copula_rank {

using Json = nlohmann::ordered_json;

Json to_json(const Vector& v);
Json to_json(const Matrix& m);

/// {"family": ..., "p": ..., "q": ..., "constraint": ..., "generators": ...}.
/// Throws ConfigError naming the offending field.
ModelDescriptor descriptor_from_json(const Json& j);
Json descriptor_to_json(const ModelDescriptor& d);

/// Reads an experiment config; `theta_true` may be a single vector, and
/// `theta_grid` a list of vectors (or of scalars when k = 1).
McConfig config_from_json(const Json& j);
Json config_to_json(const McConfig& cfg);

Json estimate_to_json(const EstimateResult& r);
Json diagnostic_to_json(const DiagnosticReport& r);
Json assumption_to_json(const Assumption1Report& r);
Json report_to_json(const McReport& r);
Json summary_to_json(std::span<const SummaryRow> rows);

/// Writes report.json, errors.csv and summary.csv into `dir` (created if
/// missing).
void write_outputs(const std::string& dir, const McConfig& cfg,
                   std::span<const McReport> reports);

Json read_json_file(const std::string& path);

}  // namespace copula_rank
