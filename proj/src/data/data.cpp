#include "vaut/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "vaut/random.hpp"
#include "vaut/serialize.hpp"

namespace vaut {

namespace fs = std::filesystem;

void SyntheticSpec::validate() const {
  if (n_videos == 0 || frames_per_video == 0 || image_size == 0) {
    throw ConfigError("data.n_videos, data.frames_per_video and data.image_size must be positive");
  }
  if (on_min == 0 || off_min == 0 || on_max < on_min || off_max < off_min) {
    throw ConfigError("data segment ranges need 1 <= min <= max");
  }
  if (!(noise_std >= 0.0) || !(blob_sigma > 0.0) || !std::isfinite(blob_amplitude)) {
    throw ConfigError("data.noise_std must be >= 0, data.blob_sigma > 0, data.blob_amplitude finite");
  }
  if (!(mask_fraction >= 0.0 && mask_fraction < 1.0)) throw ConfigError("data.mask_fraction must be in [0, 1)");
}

std::pair<double, double> unit_center(std::size_t unit, std::size_t image_size) {
  const double s = static_cast<double>(image_size);
  return {(static_cast<double>(unit % 4) + 0.5) * s / 4.0, (static_cast<double>(unit / 4) + 0.5) * s / 3.0};
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  for (const auto& v : videos) out.push_back(v.id);
  return out;
}

Dataset Dataset::subset(const std::vector<std::string>& wanted) const {
  std::map<std::string, const Video*> index;
  for (const auto& v : videos) index[v.id] = &v;
  Dataset out;
  for (const auto& id : wanted) {
    const auto it = index.find(id);
    if (it == index.end()) throw UsageError("dataset has no video '" + id + "'");
    out.videos.push_back(*it->second);
  }
  return out;
}

std::size_t Dataset::total_frames() const {
  std::size_t n = 0;
  for (const auto& v : videos) n += v.length();
  return n;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t s = spec.image_size;
  const std::size_t plane = s * s;

  // Per-unit blob images, computed once.
  std::vector<std::vector<float>> blobs(kNumAUs, std::vector<float>(plane));
  for (std::size_t j = 0; j < kNumAUs; ++j) {
    const auto [cx, cy] = unit_center(j, s);
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        blobs[j][y * s + x] = static_cast<float>(
            spec.blob_amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * spec.blob_sigma * spec.blob_sigma)));
      }
    }
  }

  Rng root(spec.seed);
  Dataset ds;
  for (std::size_t v = 0; v < spec.n_videos; ++v) {
    Rng rng = root.fork();
    const std::size_t n = spec.frames_per_video;
    char id[32];
    std::snprintf(id, sizeof id, "v%03zu", v);

    std::vector<AULabelFrame> truth(n);
    for (std::size_t j = 0; j < kNumAUs; ++j) {
      bool on = rng.bernoulli(0.5);
      std::size_t f = 0;
      while (f < n) {
        const auto len = static_cast<std::size_t>(
            on ? rng.integer(spec.on_min, spec.on_max) : rng.integer(spec.off_min, spec.off_max));
        for (std::size_t e = std::min(n, f + len); f < e; ++f) truth[f][j] = on ? 1 : 0;
        on = !on;
      }
    }

    Tensor<float> frames({n, 3, s, s}, 0.0f);
    auto pix = frames.mutable_values();
    for (std::size_t f = 0; f < n; ++f) {
      for (std::size_t c = 0; c < 3; ++c) {
        float* out = pix.data() + (f * 3 + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) out[i] = static_cast<float>(rng.normal(0.0, spec.noise_std));
        for (std::size_t j = c; j < kNumAUs; j += 3) {
          if (truth[f][j] != 1) continue;
          for (std::size_t i = 0; i < plane; ++i) out[i] += blobs[j][i];
        }
      }
    }

    std::vector<AULabelFrame> labels = truth;
    for (auto& frame : labels) {
      for (auto& code : frame) {
        if (rng.bernoulli(spec.mask_fraction)) code = -1;
      }
    }
    ds.videos.push_back({id, std::move(frames), std::move(labels)});
  }
  return ds;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::string manifest;
  for (const auto& v : dataset.videos) {
    const fs::path vdir = dir / v.id;
    fs::create_directories(vdir, ec);
    if (ec) throw IoError("cannot create " + vdir.string() + ": " + ec.message());
    save_tensor(vdir / "frames.vaut", v.frames);
    write_text(vdir / "labels.csv", label_csv(v.labels));
    manifest += v.id + " " + std::to_string(v.length()) + "\n";
  }
  write_text(dir / "manifest.txt", manifest);
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.txt";
  std::istringstream manifest(read_text(manifest_path));
  Dataset ds;
  std::string line;
  std::size_t row = 0;
  while (std::getline(manifest, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id;
    std::size_t frames = 0;
    std::string extra;
    if (!(fields >> id >> frames) || (fields >> extra) || frames == 0) {
      throw ParseError(manifest_path.string() + ":" + std::to_string(row) + ": expected '<video_id> <frames>'");
    }
    const fs::path labels_path = dir / id / "labels.csv";
    Video v{id, load_tensor<float>(dir / id / "frames.vaut"), parse_label_csv(read_text(labels_path),
                                                                                labels_path.string())};
    if (v.frames.rank() != 4 || v.frames.dim(1) != 3 || v.frames.dim(0) != frames) {
      throw ParseError((dir / id / "frames.vaut").string() + ": expected [" + std::to_string(frames) +
                       ",3,H,W], got " + shape_str(v.frames.shape()));
    }
    if (v.labels.size() != frames) {
      throw ParseError(labels_path.string() + ": " + std::to_string(v.labels.size()) + " label rows, manifest says " +
                       std::to_string(frames));
    }
    ds.videos.push_back(std::move(v));
  }
  if (ds.videos.empty()) throw ParseError(manifest_path.string() + ": no videos listed");
  return ds;
}

std::pair<Dataset, Dataset> split_by_video(const Dataset& dataset, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("validation fraction must be in (0, 1)");
  const std::size_t n = dataset.videos.size();
  if (n < 2) throw ConfigError("a train/val split needs at least two videos");
  auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::string> ids = dataset.ids();
  Rng rng(seed);
  rng.shuffle(ids);
  std::vector<std::string> val(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::string> train(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {dataset.subset(train), dataset.subset(val)};
}

std::vector<Clip> chunk_video(const Video& video, std::size_t seq_len, std::size_t stride) {
  if (seq_len == 0) throw ConfigError("seq_len must be positive");
  if (stride == 0) stride = seq_len;
  const std::size_t n = video.length();
  const std::size_t frame_size = video.frames.numel() / video.frames.dim(0);
  Shape frame_shape = video.frames.shape();
  frame_shape[0] = seq_len;
  std::vector<Clip> clips;
  for (std::size_t start = 0; start < n; start += stride) {
    Clip c;
    c.video_id = video.id;
    c.offset = start;
    c.n_real = std::min(seq_len, n - start);
    c.frames = Tensor<float>(frame_shape, 0.0f);
    c.labels = Tensor<float>({seq_len, kNumAUs}, static_cast<float>(-1));
    c.padding.assign(seq_len, 1);
    const auto src = video.frames.values();
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(start * frame_size),
              src.begin() + static_cast<std::ptrdiff_t>((start + c.n_real) * frame_size),
              c.frames.mutable_values().begin());
    auto lab = c.labels.mutable_values();
    for (std::size_t f = 0; f < c.n_real; ++f) {
      c.padding[f] = 0;
      for (std::size_t a = 0; a < kNumAUs; ++a) lab[f * kNumAUs + a] = video.labels[start + f][a];
    }
    clips.push_back(std::move(c));
  }
  return clips;
}

std::vector<Clip> load_and_chunk(const Dataset& dataset, std::size_t seq_len, std::size_t stride) {
  std::vector<Clip> clips;
  for (const auto& v : dataset.videos) {
    auto part = chunk_video(v, seq_len, stride);
    std::move(part.begin(), part.end(), std::back_inserter(clips));
  }
  return clips;
}

std::vector<Clip> load_and_chunk(const fs::path& dir, std::size_t seq_len, std::size_t stride) {
  return load_and_chunk(load_dataset(dir), seq_len, stride);
}

ClipBatch make_batch(const std::vector<Clip>& clips, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("empty batch");
  const Clip& first = clips.at(indices.front());
  Shape fshape = first.frames.shape();
  fshape.insert(fshape.begin(), indices.size());
  ClipBatch b;
  b.frames = Tensor<float>(fshape);
  b.labels = Tensor<float>({indices.size(), first.labels.dim(0), kNumAUs});
  auto fv = b.frames.mutable_values();
  auto lv = b.labels.mutable_values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Clip& c = clips.at(indices[i]);
    if (c.frames.shape() != first.frames.shape()) {
      throw DimensionError("batch clips disagree: " + shape_str(c.frames.shape()) + " vs " +
                           shape_str(first.frames.shape()));
    }
    std::copy(c.frames.values().begin(), c.frames.values().end(), fv.begin() + i * c.frames.numel());
    std::copy(c.labels.values().begin(), c.labels.values().end(), lv.begin() + i * c.labels.numel());
    b.video_ids.push_back(c.video_id);
    b.offsets.push_back(c.offset);
    b.padding.insert(b.padding.end(), c.padding.begin(), c.padding.end());
  }
  return b;
}

}  // namespace vaut
