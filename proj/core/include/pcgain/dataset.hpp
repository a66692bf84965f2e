#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcgain/csv.hpp"

namespace pcgain {

enum class ColumnKind { Numerical, Categorical };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Numerical;
  std::vector<std::string> vocabulary;  // categorical only; sorted, duplicate-free
  double scale_min = 0.0;               // numerical only; fitted from observed cells
  double scale_max = 0.0;

  int encoded_width() const {
    return kind == ColumnKind::Categorical ? static_cast<int>(vocabulary.size()) : 1;
  }
};

// Typed table. `values` stores the numerical value or the vocabulary index of
// a categorical cell; missing cells hold NaN and have mask 0.
struct Dataset {
  Eigen::MatrixXd values;
  Eigen::MatrixXd mask;  // {0,1}; 0 = missing
  std::vector<ColumnSpec> schema;
  std::optional<Eigen::MatrixXd> ground_truth;  // pre-masking values, fully observed

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

// Network-facing view: min-max scaled numericals and one-hot categoricals,
// all in [0,1], with 0 placeholders where the mask is 0.
struct EncodedMatrix {
  Eigen::MatrixXd data;
  Eigen::MatrixXd mask;
  std::vector<int> group_of;                    // encoded column -> raw variable
  std::vector<std::pair<int, int>> group_span;  // raw variable -> (first encoded column, width)
  std::vector<std::uint8_t> categorical;        // per encoded column: 1 = one-hot coordinate
  long clamped_cells = 0;  // observed values outside the fitted bounds, clamped into [0,1]

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
};

// Column-kind overrides by column name; unlisted columns are inferred
// (numerical when every observed field parses as a finite number).
using SchemaHint = std::map<std::string, ColumnKind>;

Dataset dataset_from_table(const CsvTable& table, const SchemaHint& hint = {});
Dataset load_csv(const std::string& path, const SchemaHint& hint = {});

// Independently hides each cell with probability `rate`, moving the original
// fully observed values into ground_truth. Deterministic given the seed.
Dataset apply_mcar(const Dataset& dataset, double rate, std::uint64_t seed);

// Refits numerical scale bounds from the observed cells of `rows` (all rows
// when empty). A column with no observed cell among them is an error.
void fit_scaling(Dataset& dataset, const std::vector<int>& rows = {});

EncodedMatrix encode(const Dataset& dataset);
Dataset decode(const EncodedMatrix& encoded, const std::vector<ColumnSpec>& schema);

// Fraction of entries equal to 0 in a row of the mask.
double missing_rate(const Eigen::RowVectorXd& mask_row);
Eigen::VectorXd missing_rates(const Dataset& dataset);

// Indices of the ceil(lambda*N) rows with the smallest missing fraction,
// ties broken by original row order.
std::vector<int> select_pretrain_subset(const Dataset& dataset, double lambda);

Dataset take_rows(const Dataset& dataset, const std::vector<int>& rows);
EncodedMatrix take_rows(const EncodedMatrix& mat, const std::vector<int>& rows);

int encoded_width(const std::vector<ColumnSpec>& schema);

}  // namespace pcgain
