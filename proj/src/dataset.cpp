#include "cs3vm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cs3vm/rng.hpp"
#include "json.hpp"

namespace cs3vm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN";
}

double parse_number(const std::string& cell, std::size_t row, const std::string& col) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0') {
    throw std::runtime_error("load_csv: cannot parse '" + cell + "' at row " +
                             std::to_string(row) + ", column '" + col + "'");
  }
  return v;
}

}  // namespace

RawDataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: no rows in '" + path + "'");
  const std::vector<std::string> header = split_csv_line(line);

  int label_col = -1;
  std::vector<int> feature_cols;
  RawDataset raw;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string name = trim(header[j]);
    if (name == label_column) {
      label_col = static_cast<int>(j);
    } else {
      feature_cols.push_back(static_cast<int>(j));
      raw.feature_names.push_back(name);
    }
  }
  if (label_col < 0) {
    throw std::runtime_error("load_csv: label column '" + label_column + "' not found in '" + path + "'");
  }
  raw.feature_dim = static_cast<int>(feature_cols.size());

  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("load_csv: row " + std::to_string(row_no) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    }
    RawDataset::Row row;
    row.features.reserve(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const std::string cell = trim(cells[feature_cols[k]]);
      if (is_missing(cell)) {
        row.features.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        row.features.push_back(parse_number(cell, row_no, raw.feature_names[k]));
      }
    }
    const std::string label_cell = trim(cells[label_col]);
    if (!is_missing(label_cell)) {
      const double v = parse_number(label_cell, row_no, label_column);
      if (std::abs(v - std::llround(v)) > 1e-9) {
        throw std::runtime_error("load_csv: non-integer class label '" + label_cell +
                                 "' at row " + std::to_string(row_no));
      }
      row.label = static_cast<int>(std::llround(v));
    }
    raw.rows.push_back(std::move(row));
  }
  if (raw.rows.empty()) throw std::runtime_error("load_csv: no rows in '" + path + "'");

  std::size_t slash = path.find_last_of('/');
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  std::size_t dot = base.find_last_of('.');
  raw.name = dot == std::string::npos ? base : base.substr(0, dot);
  return raw;
}

Dataset preprocess(const RawDataset& raw, std::optional<int> positive_label) {
  if (raw.rows.empty()) throw std::runtime_error("preprocess: empty input");

  // Keep only complete rows.
  std::vector<const RawDataset::Row*> kept;
  for (const auto& row : raw.rows) {
    if (!row.label.has_value()) continue;
    bool missing = false;
    for (double v : row.features) {
      if (std::isnan(v)) { missing = true; break; }
    }
    if (!missing) kept.push_back(&row);
  }
  if (kept.empty()) throw std::runtime_error("preprocess: all rows dropped");

  std::set<int> classes;
  for (const auto* row : kept) classes.insert(*row->label);
  if (classes.size() > 3) {
    throw std::runtime_error("preprocess: more than 3 distinct class labels (" +
                             std::to_string(classes.size()) + ")");
  }

  int positive;
  if (classes.size() == 3) {
    if (!classes.count(1)) {
      throw std::runtime_error("preprocess: 3 classes but no class labeled 1");
    }
    positive = 1;
  } else if (positive_label.has_value()) {
    positive = *positive_label;
  } else {
    positive = classes.count(1) ? 1 : *classes.rbegin();
  }

  Dataset ds;
  ds.name = raw.name;
  std::set<std::pair<std::vector<double>, int>> seen;
  for (const auto* row : kept) {
    const int y = (*row->label == positive) ? +1 : -1;
    if (!seen.insert({row->features, y}).second) continue;  // duplicate row
    ds.points.push_back(row->features);
    ds.labels.push_back(y);
  }
  return ds;
}

Dataset rescale(const Dataset& ds) {
  if (ds.size() == 0) throw std::runtime_error("rescale: empty dataset");
  const double bound = 100.0;  // [v_lo, v_hi] = [-100, 100]
  Dataset out = ds;
  const int d = ds.dim();
  for (int j = 0; j < d; ++j) {
    double lo = ds.points[0][j], hi = ds.points[0][j];
    for (const auto& x : ds.points) {
      lo = std::min(lo, x[j]);
      hi = std::max(hi, x[j]);
    }
    const double mid = 0.5 * (lo + hi);
    if (hi == lo) {
      for (auto& x : out.points) x[j] = 0.0;
      continue;
    }
    const double lo_c = lo - mid, hi_c = hi - mid;
    if (lo_c < -bound || hi_c > bound) {
      for (auto& x : out.points) {
        x[j] = 2.0 * bound * ((x[j] - mid) - lo_c) / (hi_c - lo_c) - bound;
      }
    } else {
      for (auto& x : out.points) x[j] -= mid;
    }
  }
  return out;
}

namespace {

Sample finish_sample(const Dataset& ds, std::vector<int> labeled, SampleKind kind,
                     std::uint64_t seed) {
  std::vector<char> is_labeled(ds.size(), 0);
  for (int i : labeled) is_labeled[i] = 1;
  Sample s;
  s.kind = kind;
  s.seed = seed;
  s.labeled_idx = std::move(labeled);
  std::sort(s.labeled_idx.begin(), s.labeled_idx.end());
  for (int i = 0; i < ds.size(); ++i) {
    if (!is_labeled[i]) {
      s.unlabeled_idx.push_back(i);
      if (ds.labels[i] > 0) ++s.tau;
    }
  }
  s.labels.reserve(s.labeled_idx.size());
  for (int i : s.labeled_idx) s.labels.push_back(ds.labels[i]);
  return s;
}

int sample_size(const Dataset& ds, double fraction) {
  const int n = static_cast<int>(std::llround(fraction * ds.size()));
  if (n <= 0 || n >= ds.size()) {
    throw std::runtime_error("sampling: labeled fraction leaves n=" + std::to_string(n) +
                             " of N=" + std::to_string(ds.size()));
  }
  return n;
}

}  // namespace

Sample draw_biased_sample(const Dataset& ds, double fraction, double p_pos,
                          std::uint64_t seed) {
  std::vector<int> pos, neg;
  for (int i = 0; i < ds.size(); ++i) (ds.labels[i] > 0 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) {
    throw std::runtime_error("draw_biased_sample: need at least one point of each class");
  }
  const int n = sample_size(ds, fraction);

  Rng rng(seed);
  std::vector<int> labeled;
  labeled.reserve(n);
  for (int k = 0; k < n; ++k) {
    const bool want_pos = rng.uniform01() < p_pos;
    std::vector<int>* pool = want_pos ? &pos : &neg;
    if (pool->empty()) pool = want_pos ? &neg : &pos;
    const std::size_t j = rng.uniform_index(pool->size());
    labeled.push_back((*pool)[j]);
    (*pool)[j] = pool->back();
    pool->pop_back();
  }
  return finish_sample(ds, std::move(labeled), SampleKind::Biased, seed);
}

Sample draw_srs_sample(const Dataset& ds, double fraction, std::uint64_t seed) {
  const int n = sample_size(ds, fraction);
  Rng rng(seed);
  std::vector<int> pool(ds.size());
  for (int i = 0; i < ds.size(); ++i) pool[i] = i;
  std::vector<int> labeled;
  labeled.reserve(n);
  for (int k = 0; k < n; ++k) {
    const std::size_t j = rng.uniform_index(pool.size());
    labeled.push_back(pool[j]);
    pool[j] = pool.back();
    pool.pop_back();
  }
  return finish_sample(ds, std::move(labeled), SampleKind::Srs, seed);
}

std::string dataset_to_json(const Dataset& ds) {
  nlohmann::json j;
  j["name"] = ds.name;
  j["points"] = ds.points;
  j["labels"] = ds.labels;
  return j.dump(2);
}

Dataset dataset_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Dataset ds;
  ds.name = j.at("name").get<std::string>();
  ds.points = j.at("points").get<std::vector<std::vector<double>>>();
  ds.labels = j.at("labels").get<std::vector<int>>();
  if (ds.points.size() != ds.labels.size()) {
    throw std::runtime_error("dataset_from_json: points/labels size mismatch");
  }
  return ds;
}

std::string sample_to_json(const Sample& s) {
  nlohmann::json j;
  j["labeled_idx"] = s.labeled_idx;
  j["unlabeled_idx"] = s.unlabeled_idx;
  j["labels"] = s.labels;
  j["tau"] = s.tau;
  j["seed"] = s.seed;
  j["kind"] = s.kind == SampleKind::Biased ? "biased" : "srs";
  return j.dump(2);
}

Sample sample_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Sample s;
  s.labeled_idx = j.at("labeled_idx").get<std::vector<int>>();
  s.unlabeled_idx = j.at("unlabeled_idx").get<std::vector<int>>();
  s.labels = j.at("labels").get<std::vector<int>>();
  s.tau = j.at("tau").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "biased") {
    s.kind = SampleKind::Biased;
  } else if (kind == "srs") {
    s.kind = SampleKind::Srs;
  } else {
    throw std::runtime_error("sample_from_json: unknown kind '" + kind + "'");
  }
  return s;
}

}  // namespace cs3vm
