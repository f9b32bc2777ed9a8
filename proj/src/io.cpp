#include "otclust/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace otclust {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = cell.find_first_not_of(' ');
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b));
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw IoError("bad number '" + s + "' in " + where);
  return v;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Json vector_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Matrix json_matrix(const Json& j) {
  if (!j.is_array() || j.empty()) throw IoError("expected a non-empty array of rows");
  const Index r = Index(j.size());
  const Index c = Index(j[0].size());
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    if (Index(j[i].size()) != c) throw IoError("ragged matrix in JSON");
    for (Index k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

Vector json_vector(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), Index(v.size()));
}

}  // namespace

const char* kind_name(VarianceKind kind) {
  switch (kind) {
    case VarianceKind::SphericalShared: return "spherical_shared";
    case VarianceKind::SphericalPerComponent: return "spherical";
    case VarianceKind::DiagonalPerComponent: return "diagonal";
  }
  return "?";
}

VarianceKind parse_kind(const std::string& name) {
  if (name == "spherical_shared" || name == "shared") return VarianceKind::SphericalShared;
  if (name == "spherical") return VarianceKind::SphericalPerComponent;
  if (name == "diagonal") return VarianceKind::DiagonalPerComponent;
  throw InvalidArgument("unknown variance kind '" + name + "'");
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty file " + path);
  const auto header = split(line, ',');
  Index label_col = -1;
  for (Index c = 0; c < Index(header.size()); ++c)
    if (header[c] == "label") label_col = c;

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) throw IoError("row width mismatch in " + path);
    std::vector<double> row;
    for (Index c = 0; c < Index(cells.size()); ++c) {
      if (c == label_col)
        labels.push_back(int(parse_double(cells[c], path)));
      else
        row.push_back(parse_double(cells[c], path));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows[0].empty()) throw IoError("no data in " + path);
  Dataset d;
  d.points.resize(Index(rows.size()), Index(rows[0].size()));
  for (Index i = 0; i < d.points.rows(); ++i)
    for (Index j = 0; j < d.points.cols(); ++j) d.points(i, j) = rows[i][j];
  if (label_col >= 0) d.true_labels = std::move(labels);
  d.validate();
  return d;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ostringstream out;
  for (Index j = 0; j < data.dims(); ++j) out << (j ? "," : "") << "x" << j;
  if (data.true_labels) out << ",label";
  out << "\n";
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dims(); ++j) out << (j ? "," : "") << format_double(data.points(i, j));
    if (data.true_labels) out << "," << (*data.true_labels)[i];
    out << "\n";
  }
  write_text(path, out.str());
}

Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    for (const auto& c : split(line, ',')) row.push_back(parse_double(c, path));
    if (!rows.empty() && row.size() != rows[0].size()) throw IoError("ragged matrix in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("no data in " + path);
  Matrix m(Index(rows.size()), Index(rows[0].size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ostringstream out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << "\n";
  }
  write_text(path, out.str());
}

Json to_json(const MixtureParams& params) {
  Json j;
  j["locations"] = matrix_json(params.locations);
  j["variances"] = matrix_json(params.variances.values);
  j["weights"] = vector_json(params.weights);
  j["kind"] = kind_name(params.variances.kind);
  j["fixed_variance"] = params.variances.fixed;
  return j;
}

MixtureParams params_from_json(const Json& j) {
  MixtureParams p;
  p.locations = json_matrix(j.at("locations"));
  const Index k = p.locations.rows(), d = p.locations.cols();
  p.variances.kind = parse_kind(j.value("kind", std::string("spherical_shared")));
  p.variances.fixed = j.value("fixed_variance", true);
  const Json& v = j.at("variances");
  if (v.is_number()) {
    p.variances.values = Matrix::Constant(k, d, v.get<double>());
  } else if (v.is_array() && !v.empty() && v[0].is_number()) {
    const Vector vv = json_vector(v);
    if (vv.size() != k) throw IoError("variance vector must have K entries");
    p.variances.values = vv.replicate(1, d);
  } else {
    p.variances.values = json_matrix(v);
  }
  p.weights = j.contains("weights") ? json_vector(j.at("weights")) : Vector::Constant(k, 1.0 / double(k));
  p.validate();
  return p;
}

MixtureParams read_params_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return params_from_json(j);
}

Json to_json(const SinkhornSolution& s) {
  Json j;
  j["omega"] = vector_json(s.potentials);
  j["tilted_weights"] = vector_json(s.tilted_weights);
  j["marginal_error"] = s.marginal_error;
  j["iterations"] = s.iterations;
  return j;
}

Json to_json(const FitReport& r, bool include_trajectory) {
  Json j;
  j["final_params"] = to_json(r.final_params);
  Json trace = Json::array();
  for (const auto& p : r.loss_trace) {
    Json e;
    e["ell"] = std::isnan(p.ell) ? Json(nullptr) : Json(p.ell);
    e["L"] = std::isnan(p.entropic) ? Json(nullptr) : Json(p.entropic);
    trace.push_back(e);
  }
  j["loss_trace"] = trace;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["seed"] = r.seed;
  j["elapsed_ms"] = r.elapsed_ms;
  j["sinkhorn_nonconverged"] = r.sinkhorn_nonconverged;
  j["max_marginal_error"] = r.max_marginal_error;
  if (include_trajectory) {
    Json t = Json::array();
    for (const auto& p : r.trajectory) t.push_back(to_json(p));
    j["trajectory"] = t;
  }
  return j;
}

Json to_json(const BlockModel& m) {
  Json j;
  j["means"] = matrix_json(m.means);
  j["variances"] = matrix_json(m.variances);
  j["row_weights"] = vector_json(m.row_weights);
  j["col_weights"] = vector_json(m.col_weights);
  return j;
}

Json to_json(const PopulationIterates& it) {
  Json j;
  j["method"] = it.method == Method::SEM ? "sem" : "em";
  j["theta"] = it.theta_trace;
  j["rho_bound"] = it.rho_bound;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace otclust
