#pragma once

#include <string>

#include <json.hpp>

#include "otclust/coclust.hpp"
#include "otclust/em.hpp"
#include "otclust/mixture.hpp"
#include "otclust/sinkhorn.hpp"
#include "otclust/twogauss.hpp"

namespace otclust {

using Json = nlohmann::json;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// CSV with a header row; numeric columns become coordinates, an optional
/// integer column named `label` becomes true_labels.
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const std::string& path, const Dataset& data);

/// Plain numeric matrix CSV (no header).
Matrix read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const Matrix& m);

Json to_json(const MixtureParams& params);
MixtureParams params_from_json(const Json& j);
MixtureParams read_params_json(const std::string& path);

Json to_json(const SinkhornSolution& solution);
Json to_json(const FitReport& report, bool include_trajectory = false);
Json to_json(const BlockModel& model);
Json to_json(const PopulationIterates& iterates);

void write_text(const std::string& path, const std::string& text);
void write_json(const std::string& path, const Json& j);

const char* kind_name(VarianceKind kind);
VarianceKind parse_kind(const std::string& name);

}  // namespace otclust
