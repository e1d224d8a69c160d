#ifndef CS3VM_DATASET_HPP
#define CS3VM_DATASET_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cs3vm {

/// Raw rows as parsed from CSV. Missing feature cells are stored as NaN and
/// rows without a usable label keep label == nullopt; both are dropped by
/// preprocess().
struct RawDataset {
  struct Row {
    std::vector<double> features;
    std::optional<int> label;
  };
  std::vector<Row> rows;
  int feature_dim = 0;
  std::string name;
  std::vector<std::string> feature_names;
};

/// Cleaned binary-classification data: deduplicated rows, labels in {-1,+1}.
struct Dataset {
  std::vector<std::vector<double>> points;
  std::vector<int> labels;  // +1 / -1, aligned with points
  std::string name;

  int size() const { return static_cast<int>(points.size()); }
  int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
};

enum class SampleKind { Biased, Srs };

/// A labeled/unlabeled partition of a Dataset with the cardinality target.
/// tau is the exact number of true positives among the unlabeled points.
struct Sample {
  std::vector<int> labeled_idx;
  std::vector<int> unlabeled_idx;
  std::vector<int> labels;  // labels of labeled_idx, aligned
  int tau = 0;
  std::uint64_t seed = 0;
  SampleKind kind = SampleKind::Biased;

  int num_labeled() const { return static_cast<int>(labeled_idx.size()); }
  int num_unlabeled() const { return static_cast<int>(unlabeled_idx.size()); }
};

RawDataset load_csv(const std::string& path, const std::string& label_column);

/// Drops rows with missing values, removes exact duplicates, and maps class
/// labels to {-1,+1}. With three classes the class labeled 1 is positive;
/// with two classes positive_label designates the positive class (defaults
/// to 1 when present, otherwise the larger label value).
Dataset preprocess(const RawDataset& raw,
                   std::optional<int> positive_label = std::nullopt);

/// Centers every coordinate and affinely maps coordinates whose centered
/// range still exceeds [-100, 100] onto that interval. Constant coordinates
/// become 0. Idempotent up to floating-point noise.
Dataset rescale(const Dataset& ds);

/// Sequentially draws n = round(fraction*N) labeled points without
/// replacement, preferring the positive class with probability p_pos per
/// draw (falling through to the other class when one is exhausted).
Sample draw_biased_sample(const Dataset& ds, double fraction, double p_pos,
                          std::uint64_t seed);

/// Simple random sample: n = round(fraction*N) labeled points drawn
/// uniformly without replacement.
Sample draw_srs_sample(const Dataset& ds, double fraction, std::uint64_t seed);

std::string dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const std::string& text);
std::string sample_to_json(const Sample& s);
Sample sample_from_json(const std::string& text);

}  // namespace cs3vm

#endif
