// Copyright 2026 The Fusearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Synthetic multimodal sequences with planted cross-modal structure, and the
// preprocessing pipeline applied to them.
//
// Generative rule. Each example draws latent codes z, b in [0, groups) and
// has label y = z * groups + b (num_classes = groups^2).
//   * categorical tokens carry z. With probability 1 - lambda they also carry
//     b; otherwise they carry an independent decoy code in its place.
//   * continuous features carry b: feature b is raised by `signal` standard
//     deviations. Raw values use per-feature offsets and scales, occasional
//     gross outliers, and missing measurements.
//   * notes carry a noisy copy of z.
//   * context is an age-like scalar, independent of the label.
// At lambda = 0 the categorical modality alone determines the label; at
// lambda = 1 the label needs both categorical and continuous evidence.
//
// Events are timestamped in hours, grouped into fixed-length bags, and empty
// bags are dropped. The most recent `length` bags are kept; shorter histories
// are left-padded with empty bags. Continuous bag means are z-scored with
// training-split statistics, clamped to [-10, 10], and gaps are filled with
// the last observed value (leading gaps with 0).

#ifndef FUSEARCH_DATA_H_
#define FUSEARCH_DATA_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fusearch {

struct DatasetSpec {
  int num_examples = 2000;
  int groups = 8;               // latent code count; classes = groups^2
  int length = 8;               // bags kept per example
  int days = 12;                // raw history span, in bags
  double bag_hours = 24.0;
  double day_presence = 0.75;   // probability a raw day has any events
  int categorical_vocab = 64;   // >= 2 * groups
  int notes_vocab = 48;         // >= groups
  int tokens_per_bag = 3;
  int continuous_features = 8;  // >= groups
  double missing_rate = 0.3;
  double signal = 1.0;          // continuous signal, in noise deviations
  double lambda = 1.0;
  std::uint64_t seed = 1;

  int num_classes() const { return groups * groups; }
  // Throws std::invalid_argument when inconsistent.
  void Validate() const;
  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct MultimodalExample {
  std::vector<std::vector<int>> categorical;  // token ids per bag
  std::vector<std::vector<float>> continuous; // normalised values per bag
  std::vector<std::vector<std::uint8_t>> observed;
  std::vector<std::vector<int>> notes;
  std::vector<float> context;
  int label = 0;
  friend bool operator==(const MultimodalExample&, const MultimodalExample&) = default;
};

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  friend bool operator==(const FeatureStats&, const FeatureStats&) = default;
};

struct Dataset {
  DatasetSpec spec;
  FeatureStats stats;  // from the training split only
  std::vector<MultimodalExample> train, validation, test;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Raw, pre-bagging record.
struct Event {
  enum class Kind { kCategorical, kContinuous, kNote };
  double time = 0.0;  // hours
  Kind kind = Kind::kCategorical;
  int id = 0;         // token id or feature index
  double value = 0.0; // continuous only
};

struct Bag {
  std::vector<int> categorical;
  std::vector<int> notes;
  std::vector<double> continuous;      // per-feature mean, 0 where missing
  std::vector<std::uint8_t> observed;  // per-feature
};

// Groups events into [k * bag_length, (k + 1) * bag_length) windows, in time
// order; continuous values are averaged per feature and token lists are
// merged in event order. Empty windows are dropped.
std::vector<Bag> BagAggregate(const std::vector<Event>& events, double bag_length,
                              int continuous_features);

// Two-pass mean and population standard deviation of the observed values.
FeatureStats ComputeStats(const std::vector<std::vector<double>>& values_per_feature);

// (x - mean) / std clipped to [-10, 10]; std == 0 maps to 0.
double ZScoreClamp(double x, double mean, double stddev);

// Last-observation-carried-forward; leading gaps become 0.
std::vector<double> LocfImpute(const std::vector<double>& series,
                               const std::vector<std::uint8_t>& observed);

// Raw events per example plus labels, before any split or normalisation.
struct RawExample {
  std::vector<Event> events;
  std::vector<float> context;
  int label = 0;
};
std::vector<RawExample> GenerateRaw(const DatasetSpec& spec);

// Full pipeline: generate, split 8:1:1 by seeded shuffle, bag, normalise with
// training statistics, impute. Deterministic per spec. Throws
// std::invalid_argument for fewer than 10 examples.
Dataset Generate(const DatasetSpec& spec);

// Text format, see data.cc. Write(Generate(s)) is byte-identical across runs.
void WriteDataset(const Dataset& data, std::ostream& out);
Dataset ReadDataset(std::istream& in);

}  // namespace fusearch

#endif  // FUSEARCH_DATA_H_
