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

// Dataset file layout (text, one record per line):
//
//   fusearch-dataset 1
//   spec <key>=<value> ...            every DatasetSpec field
//   stats mean=<d,...> std=<d,...>
//   split <train|validation|test> <count>
//   example label=<y> context=<f,...>
//   bag c=<ids> n=<ids> x=<f,...> o=<0|1,...>     `length` lines per example
//
// Lists are comma-separated and may be empty. Doubles use 17 significant
// digits and floats 9, so values round-trip exactly.

#include "fusearch/data.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fusearch/errors.h"

namespace fusearch {

void DatasetSpec::Validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("dataset spec: ") + what);
  };
  require(num_examples >= 10, "num_examples must be at least 10 so every split is non-empty");
  require(groups >= 2, "groups must be at least 2");
  require(length >= 1 && days >= 1, "length and days must be positive");
  require(bag_hours > 0, "bag_hours must be positive");
  require(day_presence > 0 && day_presence <= 1, "day_presence must be in (0, 1]");
  require(categorical_vocab >= 2 * groups, "categorical_vocab must be >= 2 * groups");
  require(notes_vocab >= groups, "notes_vocab must be >= groups");
  require(tokens_per_bag >= 1, "tokens_per_bag must be positive");
  require(continuous_features >= groups, "continuous_features must be >= groups");
  require(missing_rate >= 0 && missing_rate < 1, "missing_rate must be in [0, 1)");
  require(lambda >= 0 && lambda <= 1, "lambda must be in [0, 1]");
}

std::vector<Bag> BagAggregate(const std::vector<Event>& events, double bag_length,
                              int continuous_features) {
  if (!(bag_length > 0)) throw std::invalid_argument("bag length must be positive");
  std::vector<Event> sorted = events;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Event& a, const Event& b) { return a.time < b.time; });
  std::map<long long, std::pair<Bag, std::vector<int>>> windows;
  for (const Event& e : sorted) {
    const long long key = static_cast<long long>(std::floor(e.time / bag_length));
    auto [it, fresh] = windows.try_emplace(key);
    auto& [bag, counts] = it->second;
    if (fresh) {
      bag.continuous.assign(continuous_features, 0.0);
      bag.observed.assign(continuous_features, 0);
      counts.assign(continuous_features, 0);
    }
    switch (e.kind) {
      case Event::Kind::kCategorical: bag.categorical.push_back(e.id); break;
      case Event::Kind::kNote: bag.notes.push_back(e.id); break;
      case Event::Kind::kContinuous:
        if (e.id < 0 || e.id >= continuous_features) {
          throw std::invalid_argument("continuous feature index out of range");
        }
        bag.continuous[e.id] += e.value;
        ++counts[e.id];
        break;
    }
  }
  std::vector<Bag> bags;
  for (auto& [key, entry] : windows) {
    auto& [bag, counts] = entry;
    for (int f = 0; f < continuous_features; ++f) {
      if (counts[f] > 0) {
        bag.continuous[f] /= counts[f];
        bag.observed[f] = 1;
      }
    }
    bags.push_back(std::move(bag));
  }
  return bags;
}

FeatureStats ComputeStats(const std::vector<std::vector<double>>& values_per_feature) {
  FeatureStats s;
  for (const auto& v : values_per_feature) {
    double mean = 0;
    for (double x : v) mean += x;
    mean = v.empty() ? 0.0 : mean / v.size();
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    s.mean.push_back(mean);
    s.stddev.push_back(v.empty() ? 0.0 : std::sqrt(ss / v.size()));
  }
  return s;
}

double ZScoreClamp(double x, double mean, double stddev) {
  if (stddev == 0.0) return 0.0;
  return std::clamp((x - mean) / stddev, -10.0, 10.0);
}

std::vector<double> LocfImpute(const std::vector<double>& series,
                               const std::vector<std::uint8_t>& observed) {
  if (series.size() != observed.size()) {
    throw std::invalid_argument("series and mask lengths differ");
  }
  std::vector<double> out(series.size());
  double last = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (observed[i]) last = series[i];
    out[i] = last;
  }
  return out;
}

std::vector<RawExample> GenerateRaw(const DatasetSpec& spec) {
  spec.Validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform_int = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  // Per-feature raw units, like laboratory values on different scales.
  const int F = spec.continuous_features;
  std::vector<double> offset(F), scale(F);
  for (int f = 0; f < F; ++f) {
    offset[f] = 100.0 * unit(rng);
    scale[f] = 0.5 + 20.0 * unit(rng);
  }

  const int G = spec.groups;
  std::vector<RawExample> out(spec.num_examples);
  for (RawExample& ex : out) {
    const int z = uniform_int(0, G - 1);
    const int b = uniform_int(0, G - 1);
    const int carried = unit(rng) < spec.lambda ? uniform_int(0, G - 1) : b;
    ex.label = z * G + b;
    ex.context = {static_cast<float>((20.0 + 70.0 * unit(rng) - 55.0) / 20.0)};

    for (int d = 0; d < spec.days; ++d) {
      // The most recent day is always present, so no history is empty.
      if (d + 1 < spec.days && unit(rng) >= spec.day_presence) continue;
      auto stamp = [&] { return spec.bag_hours * (d + unit(rng)); };
      for (int i = 0; i < spec.tokens_per_bag; ++i) {
        const double r = unit(rng);
        int tok;
        if (r < 0.4) {
          tok = z;
        } else if (r < 0.7) {
          tok = G + carried;
        } else {
          // Noise tokens; with no spare vocabulary, any signal token.
          tok = spec.categorical_vocab > 2 * G
                    ? uniform_int(2 * G, spec.categorical_vocab - 1)
                    : uniform_int(0, 2 * G - 1);
        }
        ex.events.push_back({stamp(), Event::Kind::kCategorical, tok, 0.0});
      }
      for (int i = 0; i < 2; ++i) {
        const double r = unit(rng);
        const int tok = r < 0.3   ? z
                        : r < 0.4 ? uniform_int(0, G - 1)
                                  : uniform_int(0, spec.notes_vocab - 1);
        ex.events.push_back({stamp(), Event::Kind::kNote, tok, 0.0});
      }
      for (int f = 0; f < F; ++f) {
        if (unit(rng) < spec.missing_rate) continue;
        const int measurements = unit(rng) < 0.5 ? 1 : 2;
        for (int k = 0; k < measurements; ++k) {
          double s = (f == b ? spec.signal : 0.0) + normal(rng);
          if (unit(rng) < 0.01) s += unit(rng) < 0.5 ? -15.0 : 15.0;  // gross outlier
          ex.events.push_back({stamp(), Event::Kind::kContinuous, f, offset[f] + scale[f] * s});
        }
      }
    }
  }
  return out;
}

namespace {

// Bags for one example, trimmed to the most recent `length` and left-padded.
std::vector<Bag> FixedLengthBags(const RawExample& ex, const DatasetSpec& spec) {
  std::vector<Bag> bags = BagAggregate(ex.events, spec.bag_hours, spec.continuous_features);
  if (static_cast<int>(bags.size()) > spec.length) {
    bags.erase(bags.begin(), bags.end() - spec.length);
  }
  Bag empty;
  empty.continuous.assign(spec.continuous_features, 0.0);
  empty.observed.assign(spec.continuous_features, 0);
  bags.insert(bags.begin(), spec.length - bags.size(), empty);
  return bags;
}

MultimodalExample Finish(const RawExample& raw, const std::vector<Bag>& bags,
                         const FeatureStats& stats, int F) {
  MultimodalExample ex;
  ex.label = raw.label;
  ex.context = raw.context;
  const int L = static_cast<int>(bags.size());
  ex.continuous.assign(L, std::vector<float>(F));
  ex.observed.assign(L, std::vector<std::uint8_t>(F));
  for (const Bag& bag : bags) {
    ex.categorical.push_back(bag.categorical);
    ex.notes.push_back(bag.notes);
  }
  for (int f = 0; f < F; ++f) {
    std::vector<double> series(L);
    std::vector<std::uint8_t> mask(L);
    for (int t = 0; t < L; ++t) {
      mask[t] = bags[t].observed[f];
      series[t] = mask[t] ? ZScoreClamp(bags[t].continuous[f], stats.mean[f], stats.stddev[f])
                          : 0.0;
    }
    const std::vector<double> filled = LocfImpute(series, mask);
    for (int t = 0; t < L; ++t) {
      ex.continuous[t][f] = static_cast<float>(filled[t]);
      ex.observed[t][f] = mask[t];
    }
  }
  return ex;
}

}  // namespace

Dataset Generate(const DatasetSpec& spec) {
  const std::vector<RawExample> raw = GenerateRaw(spec);
  const int n = spec.num_examples;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(spec.seed ^ 0x5851f42d4c957f2dULL);
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[i], order[std::uniform_int_distribution<int>(0, i)(shuffle_rng)]);
  }
  const int n_train = n * 8 / 10, n_val = n / 10;

  std::vector<std::vector<Bag>> bags(n);
  for (int i = 0; i < n; ++i) bags[i] = FixedLengthBags(raw[i], spec);

  const int F = spec.continuous_features;
  std::vector<std::vector<double>> train_values(F);
  for (int i = 0; i < n_train; ++i) {
    for (const Bag& bag : bags[order[i]]) {
      for (int f = 0; f < F; ++f) {
        if (bag.observed[f]) train_values[f].push_back(bag.continuous[f]);
      }
    }
  }
  Dataset data;
  data.spec = spec;
  data.stats = ComputeStats(train_values);
  for (int i = 0; i < n; ++i) {
    const int idx = order[i];
    MultimodalExample ex = Finish(raw[idx], bags[idx], data.stats, F);
    auto& split = i < n_train ? data.train : i < n_train + n_val ? data.validation : data.test;
    split.push_back(std::move(ex));
  }
  return data;
}

// ---------------------------------------------------------------------------
// File format

namespace {

std::string Num(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

template <typename V>
std::string Join(const std::vector<V>& v, int digits = 0) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<V>) {
      s += Num(v[i], digits);
    } else {
      s += std::to_string(static_cast<long long>(v[i]));
    }
  }
  return s;
}

template <typename V>
std::vector<V> Split(const std::string& s) {
  std::vector<V> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<V>) {
        out.push_back(static_cast<V>(std::stod(item, &used)));
      } else {
        out.push_back(static_cast<V>(std::stoll(item, &used)));
      }
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw FormatError("dataset: bad number '" + item + "'");
    }
  }
  return out;
}

std::map<std::string, std::string> Fields(std::istringstream& line) {
  std::map<std::string, std::string> kv;
  std::string tok;
  while (line >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError("dataset: expected key=value, got " + tok);
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

std::string Need(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("dataset: missing field " + key);
  return it->second;
}

}  // namespace

void WriteDataset(const Dataset& data, std::ostream& out) {
  const DatasetSpec& s = data.spec;
  out << "fusearch-dataset 1\n";
  out << "spec num_examples=" << s.num_examples << " groups=" << s.groups
      << " length=" << s.length << " days=" << s.days << " bag_hours=" << Num(s.bag_hours, 17)
      << " day_presence=" << Num(s.day_presence, 17)
      << " categorical_vocab=" << s.categorical_vocab << " notes_vocab=" << s.notes_vocab
      << " tokens_per_bag=" << s.tokens_per_bag
      << " continuous_features=" << s.continuous_features
      << " missing_rate=" << Num(s.missing_rate, 17) << " signal=" << Num(s.signal, 17)
      << " lambda=" << Num(s.lambda, 17) << " seed=" << s.seed << "\n";
  out << "stats mean=" << Join(data.stats.mean, 17) << " std=" << Join(data.stats.stddev, 17)
      << "\n";
  for (auto [name, split] : {std::pair{"train", &data.train},
                             std::pair{"validation", &data.validation},
                             std::pair{"test", &data.test}}) {
    out << "split " << name << " " << split->size() << "\n";
    for (const MultimodalExample& ex : *split) {
      out << "example label=" << ex.label << " context=" << Join(ex.context, 9) << "\n";
      for (std::size_t t = 0; t < ex.categorical.size(); ++t) {
        out << "bag c=" << Join(ex.categorical[t]) << " n=" << Join(ex.notes[t])
            << " x=" << Join(ex.continuous[t], 9) << " o=" << Join(ex.observed[t]) << "\n";
      }
    }
  }
}

Dataset ReadDataset(std::istream& in) {
  std::string line;
  auto next = [&](const std::string& tag) {
    if (!std::getline(in, line)) throw FormatError("dataset: truncated, expected " + tag);
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head != tag) throw FormatError("dataset: expected '" + tag + "', got '" + head + "'");
    return ls;
  };
  {
    auto ls = next("fusearch-dataset");
    int version = 0;
    ls >> version;
    if (version != 1) throw FormatError("dataset: unsupported version");
  }
  Dataset data;
  {
    auto ls = next("spec");
    const auto kv = Fields(ls);
    DatasetSpec& s = data.spec;
    try {
      s.num_examples = std::stoi(Need(kv, "num_examples"));
      s.groups = std::stoi(Need(kv, "groups"));
      s.length = std::stoi(Need(kv, "length"));
      s.days = std::stoi(Need(kv, "days"));
      s.bag_hours = std::stod(Need(kv, "bag_hours"));
      s.day_presence = std::stod(Need(kv, "day_presence"));
      s.categorical_vocab = std::stoi(Need(kv, "categorical_vocab"));
      s.notes_vocab = std::stoi(Need(kv, "notes_vocab"));
      s.tokens_per_bag = std::stoi(Need(kv, "tokens_per_bag"));
      s.continuous_features = std::stoi(Need(kv, "continuous_features"));
      s.missing_rate = std::stod(Need(kv, "missing_rate"));
      s.signal = std::stod(Need(kv, "signal"));
      s.lambda = std::stod(Need(kv, "lambda"));
      s.seed = std::stoull(Need(kv, "seed"));
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError(std::string("dataset: bad spec value: ") + e.what());
    }
    if (kv.size() != 14) throw FormatError("dataset: unexpected spec fields");
  }
  {
    auto ls = next("stats");
    const auto kv = Fields(ls);
    data.stats.mean = Split<double>(Need(kv, "mean"));
    data.stats.stddev = Split<double>(Need(kv, "std"));
  }
  for (auto [name, split] : {std::pair{"train", &data.train},
                             std::pair{"validation", &data.validation},
                             std::pair{"test", &data.test}}) {
    auto ls = next("split");
    std::string got;
    std::size_t count = 0;
    ls >> got >> count;
    if (got != name) throw FormatError("dataset: expected split " + std::string(name));
    for (std::size_t i = 0; i < count; ++i) {
      auto es = next("example");
      const auto ekv = Fields(es);
      MultimodalExample ex;
      ex.label = static_cast<int>(Split<long long>(Need(ekv, "label")).at(0));
      ex.context = Split<float>(Need(ekv, "context"));
      for (int t = 0; t < data.spec.length; ++t) {
        auto bs = next("bag");
        const auto bkv = Fields(bs);
        ex.categorical.push_back(Split<int>(Need(bkv, "c")));
        ex.notes.push_back(Split<int>(Need(bkv, "n")));
        ex.continuous.push_back(Split<float>(Need(bkv, "x")));
        ex.observed.push_back(Split<std::uint8_t>(Need(bkv, "o")));
      }
      split->push_back(std::move(ex));
    }
  }
  return data;
}

}  // namespace fusearch
