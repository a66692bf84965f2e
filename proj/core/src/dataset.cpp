#include "pcgain/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "pcgain/errors.hpp"
#include "pcgain/rng.hpp"

namespace pcgain {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trimmed(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

bool is_missing_marker(const std::string& field) { return field.empty() || field == "NA"; }

int vocab_index(const ColumnSpec& spec, const std::string& value) {
  auto it = std::lower_bound(spec.vocabulary.begin(), spec.vocabulary.end(), value);
  if (it == spec.vocabulary.end() || *it != value) {
    throw DataError("column '" + spec.name + "': value '" + value + "' not in vocabulary");
  }
  return static_cast<int>(it - spec.vocabulary.begin());
}

}  // namespace

int encoded_width(const std::vector<ColumnSpec>& schema) {
  int w = 0;
  for (const auto& c : schema) w += c.encoded_width();
  return w;
}

Dataset dataset_from_table(const CsvTable& table, const SchemaHint& hint) {
  const auto N = static_cast<Eigen::Index>(table.n_rows());
  const auto d = static_cast<Eigen::Index>(table.n_cols());
  if (N < 1 || d < 1) throw DataError("dataset: need at least one row and one column");

  for (const auto& [name, kind] : hint) {
    (void)kind;
    if (std::find(table.header.begin(), table.header.end(), name) == table.header.end())
      throw DataError("schema hint names unknown column '" + name + "'");
  }

  // Pass 1: per column, decide the kind and collect the vocabulary.
  std::vector<ColumnSpec> schema(d);
  std::vector<std::vector<std::string>> cells(d, std::vector<std::string>(N));
  for (Eigen::Index c = 0; c < d; ++c) {
    ColumnSpec& spec = schema[c];
    spec.name = trimmed(table.header[c]);

    auto hint_it = hint.find(spec.name);
    bool forced_categorical = hint_it != hint.end() && hint_it->second == ColumnKind::Categorical;
    bool forced_numerical = hint_it != hint.end() && hint_it->second == ColumnKind::Numerical;

    bool numeric = !forced_categorical;
    long observed = 0;
    std::set<std::string> vocab;
    for (Eigen::Index r = 0; r < N; ++r) {
      std::string field = trimmed(table.rows[r][c]);
      cells[c][r] = field;
      if (is_missing_marker(field)) continue;
      ++observed;
      double v;
      // Non-finite parses ("nan", "inf") are treated as text so that NaN in
      // the value grid always means "missing".
      if (numeric && (!parse_double(field, v) || !std::isfinite(v))) {
        if (forced_numerical)
          throw DataError("column '" + spec.name + "': field '" + field +
                          "' is not numeric but the schema hint demands it");
        numeric = false;
      }
      vocab.insert(field);
    }
    if (observed == 0)
      throw DataError("column '" + spec.name + "' has no observed cells; cannot infer its kind");
    spec.kind = numeric ? ColumnKind::Numerical : ColumnKind::Categorical;
    if (spec.kind == ColumnKind::Categorical)
      spec.vocabulary.assign(vocab.begin(), vocab.end());
  }

  // Pass 2: fill the value grid.
  Dataset ds;
  ds.values.setConstant(N, d, kNaN);
  ds.mask.setZero(N, d);
  ds.schema = std::move(schema);
  for (Eigen::Index c = 0; c < d; ++c) {
    const ColumnSpec& spec = ds.schema[c];
    for (Eigen::Index r = 0; r < N; ++r) {
      const std::string& field = cells[c][r];
      if (is_missing_marker(field)) continue;
      if (spec.kind == ColumnKind::Numerical) {
        double v;
        parse_double(field, v);
        ds.values(r, c) = v;
      } else {
        ds.values(r, c) = vocab_index(spec, field);
      }
      ds.mask(r, c) = 1.0;
    }
  }
  fit_scaling(ds);
  return ds;
}

Dataset load_csv(const std::string& path, const SchemaHint& hint) {
  return dataset_from_table(read_csv(path), hint);
}

Dataset apply_mcar(const Dataset& dataset, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("mcar rate must lie in [0,1]");
  if ((dataset.mask.array() != 1.0).any())
    throw DataError("apply_mcar: input already has missing cells");

  Dataset out = dataset;
  out.ground_truth = dataset.values;
  Rng rng(seed);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      if (rng.bernoulli(rate)) {
        out.values(r, c) = kNaN;
        out.mask(r, c) = 0.0;
      }
    }
  }
  return out;
}

void fit_scaling(Dataset& dataset, const std::vector<int>& rows) {
  std::vector<int> all;
  const std::vector<int>* use = &rows;
  if (rows.empty()) {
    all.resize(static_cast<std::size_t>(dataset.rows()));
    std::iota(all.begin(), all.end(), 0);
    use = &all;
  }
  for (Eigen::Index c = 0; c < dataset.cols(); ++c) {
    ColumnSpec& spec = dataset.schema[static_cast<std::size_t>(c)];
    if (spec.kind != ColumnKind::Numerical) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int r : *use) {
      if (dataset.mask(r, c) != 1.0) continue;
      double v = dataset.values(r, c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(lo <= hi))
      throw DataError("column '" + spec.name + "' has no observed cells in the scaling rows");
    spec.scale_min = lo;
    spec.scale_max = hi;
  }
}

EncodedMatrix encode(const Dataset& dataset) {
  const Eigen::Index N = dataset.rows();
  const Eigen::Index d = dataset.cols();

  EncodedMatrix enc;
  enc.group_span.reserve(static_cast<std::size_t>(d));
  int dp = 0;
  for (Eigen::Index c = 0; c < d; ++c) {
    const ColumnSpec& spec = dataset.schema[static_cast<std::size_t>(c)];
    int w = spec.encoded_width();
    enc.group_span.emplace_back(dp, w);
    for (int k = 0; k < w; ++k) {
      enc.group_of.push_back(static_cast<int>(c));
      enc.categorical.push_back(spec.kind == ColumnKind::Categorical ? 1 : 0);
    }
    dp += w;
  }
  enc.data.setZero(N, dp);
  enc.mask.setZero(N, dp);

  for (Eigen::Index c = 0; c < d; ++c) {
    const ColumnSpec& spec = dataset.schema[static_cast<std::size_t>(c)];
    const auto [start, width] = enc.group_span[static_cast<std::size_t>(c)];
    for (Eigen::Index r = 0; r < N; ++r) {
      if (dataset.mask(r, c) != 1.0) continue;
      enc.mask.block(r, start, 1, width).setOnes();
      if (spec.kind == ColumnKind::Numerical) {
        const double range = spec.scale_max - spec.scale_min;
        double v = range == 0.0 ? 0.0 : (dataset.values(r, c) - spec.scale_min) / range;
        if (v < 0.0 || v > 1.0) {
          ++enc.clamped_cells;
          v = std::clamp(v, 0.0, 1.0);
        }
        enc.data(r, start) = v;
      } else {
        int idx = static_cast<int>(dataset.values(r, c));
        if (idx < 0 || idx >= width)
          throw DataError("column '" + spec.name + "': category index out of range");
        enc.data(r, start + idx) = 1.0;
      }
    }
  }
  return enc;
}

Dataset decode(const EncodedMatrix& encoded, const std::vector<ColumnSpec>& schema) {
  const Eigen::Index N = encoded.rows();
  const auto d = static_cast<Eigen::Index>(schema.size());
  if (encoded.cols() != encoded_width(schema) ||
      encoded.group_span.size() != schema.size())
    throw DataError("decode: encoded shape does not match the schema");

  Dataset ds;
  ds.values.setConstant(N, d, kNaN);
  ds.mask.setZero(N, d);
  ds.schema = schema;
  for (Eigen::Index c = 0; c < d; ++c) {
    const ColumnSpec& spec = schema[static_cast<std::size_t>(c)];
    const auto [start, width] = encoded.group_span[static_cast<std::size_t>(c)];
    for (Eigen::Index r = 0; r < N; ++r) {
      if (encoded.mask(r, start) != 1.0) continue;
      ds.mask(r, c) = 1.0;
      if (spec.kind == ColumnKind::Numerical) {
        ds.values(r, c) =
            spec.scale_min + encoded.data(r, start) * (spec.scale_max - spec.scale_min);
      } else {
        int best = 0;
        for (int k = 1; k < width; ++k)
          if (encoded.data(r, start + k) > encoded.data(r, start + best)) best = k;
        ds.values(r, c) = best;
      }
    }
  }
  return ds;
}

double missing_rate(const Eigen::RowVectorXd& mask_row) {
  if (mask_row.size() == 0) throw ConfigError("missing_rate: empty mask row");
  return 1.0 - mask_row.sum() / static_cast<double>(mask_row.size());
}

Eigen::VectorXd missing_rates(const Dataset& dataset) {
  const double d = static_cast<double>(dataset.cols());
  return (1.0 - dataset.mask.rowwise().sum().array() / d).matrix();
}

std::vector<int> select_pretrain_subset(const Dataset& dataset, double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in (0,1]");
  const Eigen::Index N = dataset.rows();
  Eigen::VectorXd rates = missing_rates(dataset);
  std::vector<int> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rates[a] < rates[b]; });
  auto count = static_cast<std::size_t>(std::ceil(lambda * static_cast<double>(N)));
  count = std::min(count, order.size());
  order.resize(count);
  return order;
}

Dataset take_rows(const Dataset& dataset, const std::vector<int>& rows) {
  Dataset out;
  out.schema = dataset.schema;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.values.resize(n, dataset.cols());
  out.mask.resize(n, dataset.cols());
  if (dataset.ground_truth) out.ground_truth.emplace(n, dataset.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values.row(i) = dataset.values.row(rows[static_cast<std::size_t>(i)]);
    out.mask.row(i) = dataset.mask.row(rows[static_cast<std::size_t>(i)]);
    if (dataset.ground_truth)
      out.ground_truth->row(i) = dataset.ground_truth->row(rows[static_cast<std::size_t>(i)]);
  }
  return out;
}

EncodedMatrix take_rows(const EncodedMatrix& mat, const std::vector<int>& rows) {
  EncodedMatrix out;
  out.group_of = mat.group_of;
  out.group_span = mat.group_span;
  out.categorical = mat.categorical;
  out.clamped_cells = mat.clamped_cells;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.data.resize(n, mat.cols());
  out.mask.resize(n, mat.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.data.row(i) = mat.data.row(rows[static_cast<std::size_t>(i)]);
    out.mask.row(i) = mat.mask.row(rows[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace pcgain
