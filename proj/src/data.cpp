/*
 * Copyright 2026 The maskfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "maskfed/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "maskfed/errors.hpp"
#include "maskfed/rng.hpp"
#include "maskfed/tensor_io.hpp"

namespace maskfed {

Tensor Dataset::image(std::int64_t i) const {
  const auto per = images.numel() / images.dim(0);
  auto src = images.data();
  std::vector<double> values(src.begin() + i * per, src.begin() + (i + 1) * per);
  return Tensor::from({channels(), height(), width()}, std::move(values), images.dtype());
}

Tensor Dataset::gather(std::span<const std::int64_t> indices) const {
  const auto per = images.numel() / images.dim(0);
  auto src = images.data();
  std::vector<double> values;
  values.reserve(indices.size() * static_cast<std::size_t>(per));
  for (auto i : indices) {
    if (i < 0 || i >= size()) throw DimensionError("dataset index out of range");
    values.insert(values.end(), src.begin() + i * per, src.begin() + (i + 1) * per);
  }
  return Tensor::from({static_cast<std::int64_t>(indices.size()), channels(), height(), width()},
                      std::move(values), images.dtype());
}

std::vector<int> Dataset::gather_labels(std::span<const std::int64_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

std::vector<std::uint8_t> class_template(int cls, std::int64_t grid_h, std::int64_t grid_w) {
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(grid_h * grid_w));
  const auto width = static_cast<std::int64_t>(1 + cls / 4);
  for (std::int64_t i = 0; i < grid_h; ++i) {
    for (std::int64_t j = 0; j < grid_w; ++j) {
      bool on = false;
      switch (cls % 4) {
        case 0: on = (i / width) % 2 == 0; break;
        case 1: on = (j / width) % 2 == 0; break;
        case 2: on = ((i / width) + (j / width)) % 2 == 0; break;
        default:
          on = i < width || j < width || i >= grid_h - width || j >= grid_w - width;
          break;
      }
      cells[static_cast<std::size_t>(i * grid_w + j)] = on ? 1 : 0;
    }
  }
  // Keep templates distinct and non-constant; fall back to a fixed hash.
  bool repeats = std::all_of(cells.begin(), cells.end(), [&](auto c) { return c == cells[0]; });
  for (int other = 0; other < cls && !repeats; ++other) {
    repeats = class_template(other, grid_h, grid_w) == cells;
  }
  if (repeats) {
    auto rng = make_stream(0x7e3a11ULL, StreamPurpose::kData, static_cast<std::uint64_t>(cls));
    std::bernoulli_distribution bit(0.5);
    for (auto& c : cells) c = bit(rng) ? 1 : 0;
  }
  return cells;
}

namespace {

Dataset render_split(const ToyDatasetSpec& spec, int per_class, std::mt19937_64& rng) {
  const auto gh = spec.image_h / spec.patch;
  const auto gw = spec.image_w / spec.patch;
  const auto per_image = spec.channels * spec.image_h * spec.image_w;
  std::vector<std::vector<std::uint8_t>> templates;
  for (int c = 0; c < spec.classes; ++c) templates.push_back(class_template(c, gh, gw));
  std::normal_distribution<double> noise(0.0, spec.noise > 0 ? spec.noise : 1.0);
  Dataset ds;
  ds.num_classes = spec.classes;
  std::vector<double> pixels;
  pixels.reserve(static_cast<std::size_t>(spec.classes * per_class * per_image));
  for (int c = 0; c < spec.classes; ++c) {
    for (int s = 0; s < per_class; ++s) {
      for (std::int64_t ch = 0; ch < spec.channels; ++ch) {
        for (std::int64_t y = 0; y < spec.image_h; ++y) {
          for (std::int64_t x = 0; x < spec.image_w; ++x) {
            const auto cell = (y / spec.patch) * gw + x / spec.patch;
            double v = templates[c][static_cast<std::size_t>(cell)];
            if (spec.noise > 0) v += noise(rng);
            pixels.push_back(v);
          }
        }
      }
      ds.labels.push_back(c);
    }
  }
  ds.images = Tensor::from({static_cast<std::int64_t>(ds.labels.size()), spec.channels,
                            spec.image_h, spec.image_w},
                           std::move(pixels), DType::kFloat32);
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> make_toy_dataset(const ToyDatasetSpec& spec, std::mt19937_64& rng) {
  if (spec.classes < 1 || spec.train_per_class < 1 || spec.test_per_class < 1) {
    throw ConfigError("dataset: class and sample counts must be at least 1");
  }
  if (spec.image_h % spec.patch != 0 || spec.image_w % spec.patch != 0) {
    throw ConfigError("dataset.patch_size: image size is not divisible by the patch size");
  }
  const std::uint64_t train_seed = rng();
  const std::uint64_t test_seed = rng() ^ 0x5bd1e995ULL;
  std::mt19937_64 train_rng(train_seed), test_rng(test_seed);
  return {render_split(spec, spec.train_per_class, train_rng),
          render_split(spec, spec.test_per_class, test_rng)};
}

Dataset load_binary_dataset(const std::filesystem::path& path, int num_classes) {
  const auto bytes = wire::read_file(path);
  wire::Reader r(bytes);
  const auto count = r.u32();
  const auto channels = r.u32();
  const auto h = r.u32();
  const auto w = r.u32();
  if (count == 0 || channels == 0 || h == 0 || w == 0) {
    throw FormatError(path.string() + ": empty dataset header");
  }
  const std::size_t per = static_cast<std::size_t>(channels) * h * w;
  Dataset ds;
  ds.num_classes = num_classes;
  std::vector<double> pixels;
  pixels.reserve(per * count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const int label = r.u8();
    if (label >= num_classes) {
      throw LabelError(path.string() + ": label " + std::to_string(label) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
    ds.labels.push_back(label);
    for (std::size_t j = 0; j < per; ++j) pixels.push_back(r.f32());
  }
  if (!r.done()) throw FormatError(path.string() + ": trailing bytes after last sample");
  ds.images = Tensor::from({count, channels, h, w}, std::move(pixels), DType::kFloat32);
  return ds;
}

void save_binary_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::vector<std::uint8_t> out;
  wire::put_u32(out, static_cast<std::uint32_t>(dataset.size()));
  wire::put_u32(out, static_cast<std::uint32_t>(dataset.channels()));
  wire::put_u32(out, static_cast<std::uint32_t>(dataset.height()));
  wire::put_u32(out, static_cast<std::uint32_t>(dataset.width()));
  const auto per = dataset.images.numel() / dataset.size();
  auto data = dataset.images.data();
  for (std::int64_t i = 0; i < dataset.size(); ++i) {
    wire::put_u8(out, static_cast<std::uint8_t>(dataset.labels[static_cast<std::size_t>(i)]));
    for (std::int64_t j = 0; j < per; ++j) {
      wire::put_f32(out, static_cast<float>(data[static_cast<std::size_t>(i * per + j)]));
    }
  }
  wire::write_file(path, out);
}

std::vector<std::vector<std::int64_t>> PartitionSpec::client_indices() const {
  std::vector<std::vector<std::int64_t>> out(static_cast<std::size_t>(num_clients));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    out[static_cast<std::size_t>(assignment[i])].push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

PartitionSpec dirichlet_partition(std::span<const int> labels, int num_clients, double beta,
                                  std::uint64_t seed) {
  if (num_clients < 1) throw ConfigError("fl.k: client count must be at least 1");
  if (!(beta > 0.0)) throw ConfigError("fl.beta: Dirichlet concentration must be positive");
  PartitionSpec spec{beta, num_clients, seed, std::vector<int>(labels.size(), -1)};
  auto rng = make_stream(seed, StreamPurpose::kPartition);

  std::map<int, std::vector<std::int64_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(static_cast<std::int64_t>(i));
  }
  const auto k = static_cast<std::size_t>(num_clients);
  std::gamma_distribution<double> gamma(beta, 1.0);
  for (auto& [cls, members] : by_class) {
    std::vector<double> props(k);
    double total = 0.0;
    for (auto& p : props) total += (p = gamma(rng));
    if (!(total > 0.0)) {
      // every draw underflowed; the mass goes to one client
      std::fill(props.begin(), props.end(), 0.0);
      props[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
      total = 1.0;
    }
    const auto n = static_cast<double>(members.size());
    std::vector<std::int64_t> counts(k);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::int64_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double exact = props[c] / total * n;
      counts[c] = static_cast<std::int64_t>(std::floor(exact));
      assigned += counts[c];
      remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < static_cast<std::int64_t>(members.size()); ++i, ++assigned) {
      ++counts[remainders[i % k].second];
    }
    std::shuffle(members.begin(), members.end(), rng);
    std::size_t pos = 0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::int64_t j = 0; j < counts[c]; ++j) {
        spec.assignment[static_cast<std::size_t>(members[pos++])] = static_cast<int>(c);
      }
    }
  }
  return spec;
}

std::vector<ClientDataset> make_client_datasets(const PartitionSpec& partition,
                                                std::span<const int> labels) {
  auto indices = partition.client_indices();
  std::vector<ClientDataset> out;
  for (int k = 0; k < partition.num_clients; ++k) {
    ClientDataset cd;
    cd.client_id = k;
    cd.indices = std::move(indices[static_cast<std::size_t>(k)]);
    for (auto i : cd.indices) ++cd.class_counts[labels[static_cast<std::size_t>(i)]];
    out.push_back(std::move(cd));
  }
  return out;
}

std::string partition_csv(const std::vector<ClientDataset>& clients, int num_classes) {
  std::ostringstream os;
  os << "client,n_k,c_k";
  for (int c = 0; c < num_classes; ++c) os << ",class_" << c;
  os << '\n';
  for (const auto& cd : clients) {
    os << cd.client_id << ',' << cd.size() << ',' << cd.distinct_classes();
    for (int c = 0; c < num_classes; ++c) {
      auto it = cd.class_counts.find(c);
      os << ',' << (it == cd.class_counts.end() ? 0 : it->second);
    }
    os << '\n';
  }
  return os.str();
}

double mean_tv_distance(const std::vector<ClientDataset>& clients, int num_classes) {
  std::vector<double> pooled(static_cast<std::size_t>(num_classes), 0.0);
  double total = 0.0;
  for (const auto& cd : clients) {
    for (auto [c, n] : cd.class_counts) pooled[static_cast<std::size_t>(c)] += static_cast<double>(n);
    total += static_cast<double>(cd.size());
  }
  if (total == 0.0) return 0.0;
  for (auto& p : pooled) p /= total;
  double sum = 0.0;
  int used = 0;
  for (const auto& cd : clients) {
    if (cd.size() == 0) continue;
    double tv = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      auto it = cd.class_counts.find(c);
      const double p = it == cd.class_counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(cd.size());
      tv += std::abs(p - pooled[static_cast<std::size_t>(c)]);
    }
    sum += 0.5 * tv;
    ++used;
  }
  return used ? sum / used : 0.0;
}

Tensor apply_augment(const Tensor& image, const AugmentDraw& draw, std::int64_t pad) {
  if (image.rank() != 3) throw DimensionError("augment: expects [channels, h, w]");
  if (std::abs(draw.shift_y) > pad || std::abs(draw.shift_x) > pad) {
    throw DimensionError("augment: crop shift exceeds padding");
  }
  const auto ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  auto src = image.data();
  std::vector<double> out(src.size(), 0.0);
  for (std::int64_t c = 0; c < ch; ++c) {
    for (std::int64_t y = 0; y < h; ++y) {
      const auto sy = y + draw.shift_y;
      if (sy < 0 || sy >= h) continue;  // padded region
      for (std::int64_t x = 0; x < w; ++x) {
        const auto cx = draw.flip ? w - 1 - x : x;
        const auto sx = cx + draw.shift_x;
        if (sx < 0 || sx >= w) continue;
        out[static_cast<std::size_t>((c * h + y) * w + x)] =
            src[static_cast<std::size_t>((c * h + sy) * w + sx)] * draw.brightness;
      }
    }
  }
  return Tensor::from(image.shape(), std::move(out), image.dtype());
}

AugmentDraw draw_augment(std::mt19937_64& rng, const AugmentOptions& options) {
  std::uniform_int_distribution<std::int64_t> shift(-options.pad, options.pad);
  std::bernoulli_distribution flip(0.5);
  std::uniform_real_distribution<double> brightness(0.8, 1.2);
  AugmentDraw d;
  d.shift_y = shift(rng);
  d.shift_x = shift(rng);
  d.flip = flip(rng);
  d.brightness = brightness(rng);
  return d;
}

Tensor augment(const Tensor& image, std::mt19937_64& rng, const AugmentOptions& options) {
  if (!options.enabled) return image;
  return apply_augment(image, draw_augment(rng, options), options.pad);
}

std::vector<std::vector<std::int64_t>> batches(std::span<const std::int64_t> indices,
                                               int batch_size, std::mt19937_64& rng) {
  if (batch_size < 1) throw ConfigError("train.batch_size: must be at least 1");
  std::vector<std::int64_t> order(indices.begin(), indices.end());
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::int64_t>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace maskfed
