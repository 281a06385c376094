#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ssnst/model.hpp"
#include "ssnst/network.hpp"

namespace ssnst {

/// Plain comma-separated table with the source line of every row kept for
/// error messages. No quoting.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws SchemaError naming the column when absent.
  std::size_t column(std::string_view name) const;
  bool blank(std::size_t row, std::size_t col) const;
  /// Throws ParseError with file, line and column.
  double number(std::size_t row, std::size_t col) const;
  int integer(std::size_t row, std::size_t col) const;
};

CsvTable read_csv(const std::string& path);
/// Shortest representation that parses back to the same double.
std::string format_double(double v);

std::vector<Segment> read_network_json(const std::string& path);
void write_network_json(const std::string& path, std::span<const Segment> segments);

std::vector<Site> read_sites_csv(const std::string& path);
void write_sites_csv(const std::string& path, std::span<const Site> sites);

/// Long-format observations `site_id,t,y,<covariates>` reshaped to S x T.
/// Sites keep their order of first appearance, times are sorted.
struct ObservationTable {
  std::vector<int> site_ids;
  std::vector<int> times;
  Eigen::MatrixXd y;  // NaN where missing
  BoolMatrix observed;
  std::vector<std::string> covariate_names;
  std::map<std::string, Eigen::MatrixXd> covariates;  // S x T each

  CovariateTable covariate_table() const;
  /// Rows reordered to `site_ids` (every id must be present).
  ObservationTable reordered(std::span<const int> site_ids) const;
};

ObservationTable read_observations_csv(const std::string& path);
void write_observations_csv(const std::string& path, const ObservationTable& table);

/// Prediction sites `site_id,segment_id,updist,x,y,t,<covariates>`.
struct PredictionSites {
  std::vector<Site> sites;
  std::vector<int> times;
  std::vector<std::string> covariate_names;
  std::map<std::string, Eigen::MatrixXd> covariates;  // P x T each

  CovariateTable covariate_table() const;
};

PredictionSites read_prediction_sites_csv(const std::string& path);
void write_prediction_sites_csv(const std::string& path, const PredictionSites& sites);

void write_matrix_csv(const std::string& path, std::span<const std::string> header, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::string& path, std::vector<std::string>* header = nullptr);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace ssnst
