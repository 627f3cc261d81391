#include "ceemkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "ceemkit/layers.hpp"

namespace fs = std::filesystem;

namespace ceemkit {

LabeledDataset load_dir(const std::string &root, std::size_t target_size) {
  if (!fs::is_directory(root))
    throw IoError("dataset root is not a directory: " + root);

  std::vector<std::string> class_names;
  for (const auto &entry : fs::directory_iterator(root))
    if (entry.is_directory())
      class_names.push_back(entry.path().filename().string());
  std::sort(class_names.begin(), class_names.end());
  if (class_names.empty())
    throw IoError("dataset root has no class directories: " + root);

  std::vector<std::pair<std::string, std::size_t>> files;  // path, label
  for (std::size_t cls = 0; cls < class_names.size(); ++cls) {
    std::vector<std::string> paths;
    for (const auto &entry :
         fs::directory_iterator(fs::path(root) / class_names[cls]))
      if (entry.is_regular_file())
        paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty())
      throw IoError("empty class directory: " + class_names[cls]);
    for (auto &p : paths)
      files.emplace_back(std::move(p), cls);
  }

  LabeledDataset ds;
  ds.class_names = class_names;
  ds.images = Tensor({files.size(), target_size, target_size, 1});
  const std::size_t plane = target_size * target_size;
  for (std::size_t i = 0; i < files.size(); ++i) {
    GrayImage img = decode_image(files[i].first);
    img = resize_bilinear(img, target_size, target_size);
    std::copy(img.pixels.begin(), img.pixels.end(),
              ds.images.data() + i * plane);
    ds.labels.push_back(files[i].second);
    ds.provenance.push_back(files[i].first);
  }
  return ds;
}

LabeledDataset synth_generate(const SynthSpec &spec) {
  if (spec.class_names.size() != spec.counts.size())
    throw ValueError("synth spec: class name and count lists differ");
  const std::size_t S = spec.image_size;
  std::size_t total = 0;
  for (auto c : spec.counts)
    total += c;

  LabeledDataset ds;
  ds.class_names = spec.class_names;
  ds.images = Tensor({total, S, S, 1});
  const double cx = (static_cast<double>(S) - 1) / 2;

  std::size_t n = 0;
  for (std::size_t cls = 0; cls < spec.counts.size(); ++cls) {
    const double theta = static_cast<double>(cls) * 30.0 * std::numbers::pi /
                         180.0;
    const double dirx = std::cos(theta), diry = std::sin(theta);
    // class-specific blob placement around the image center
    const double phi = static_cast<double>(cls) * 60.0 * std::numbers::pi /
                       180.0;
    const double bx0 = cx + 0.25 * S * std::cos(phi);
    const double by0 = cx + 0.25 * S * std::sin(phi);
    const double blob_opacity = 30.0 + 20.0 * static_cast<double>(cls);

    for (std::size_t i = 0; i < spec.counts[cls]; ++i, ++n) {
      Rng rng(seed_for(spec.seed, "synth/" + std::to_string(cls) + "/" +
                                      std::to_string(i)));
      const double amp = 70.0 * rng.uniform(0.9, 1.1);
      const double bx = bx0 + rng.uniform(-2.0, 2.0);
      const double by = by0 + rng.uniform(-2.0, 2.0);
      const double sigma = static_cast<double>(S) / 6.0;
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
          const double u = dirx * static_cast<double>(x) +
                           diry * static_cast<double>(y);
          double v = 127.5 +
                     amp * std::sin(2.0 * std::numbers::pi * 3.0 * u /
                                    static_cast<double>(S));
          const double dx = static_cast<double>(x) - bx;
          const double dy = static_cast<double>(y) - by;
          v += blob_opacity *
               std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
          v += rng.uniform(-spec.noise_level, spec.noise_level);
          ds.images.at(n, y, x, 0) = std::clamp(v, 0.0, 255.0);
        }
      ds.labels.push_back(cls);
      ds.provenance.push_back("synthetic");
    }
  }
  return ds;
}

void write_dataset(const LabeledDataset &ds, const std::string &root) {
  const std::size_t H = ds.images.dim(1), W = ds.images.dim(2);
  fs::create_directories(root);
  std::vector<std::size_t> counter(ds.class_names.size(), 0);
  for (const auto &name : ds.class_names)
    fs::create_directories(fs::path(root) / name);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    const std::size_t cls = ds.labels[i];
    GrayImage img;
    img.height = H;
    img.width = W;
    img.pixels.assign(ds.images.data() + i * H * W,
                      ds.images.data() + (i + 1) * H * W);
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%04zu.pgm",
                  ds.class_names[cls].c_str(), counter[cls]++);
    write_pgm((fs::path(root) / ds.class_names[cls] / name).string(), img);
  }
}

std::vector<EnhanceOp> parse_enhance_ops(const std::string &csv) {
  std::vector<EnhanceOp> ops;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    const std::string tok =
        csv.substr(start, comma == std::string::npos ? std::string::npos
                                                     : comma - start);
    if (tok == "negative")
      ops.push_back(EnhanceOp::negative);
    else if (tok == "maxpool")
      ops.push_back(EnhanceOp::maxpool);
    else if (tok == "maxminpool")
      ops.push_back(EnhanceOp::maxminpool);
    else if (tok == "twomaxmin" || tok == "twomaxminpool")
      ops.push_back(EnhanceOp::twomaxminpool);
    else
      throw ValueError("unknown enhancement op: " + tok);
    if (comma == std::string::npos)
      break;
    start = comma + 1;
  }
  return ops;
}

Tensor enhance_apply(const Tensor &image, const std::vector<EnhanceOp> &ops,
                     std::size_t pool, std::size_t stride) {
  Tensor t = image;
  for (auto op : ops) {
    switch (op) {
    case EnhanceOp::negative:
      t = negative_forward(t, 255.0);
      break;
    case EnhanceOp::maxpool:
      t = pool_forward(t, {PoolKind::max, pool, pool, stride});
      break;
    case EnhanceOp::maxminpool:
      t = pool_forward(t, {PoolKind::maxmin, pool, pool, stride});
      break;
    case EnhanceOp::twomaxminpool:
      t = pool_forward(t, {PoolKind::twomaxmin, pool, pool, stride});
      break;
    }
  }
  return t;
}

void enhance_preview(const std::string &input_path,
                     const std::string &output_path,
                     const std::vector<EnhanceOp> &ops, std::size_t pool,
                     std::size_t stride) {
  GrayImage img = decode_image(input_path);
  Tensor t = enhance_apply(image_to_tensor(img), ops, pool, stride);
  // linear rescale to [0,255] for display; constant images stay put
  double lo = t[0], hi = t[0];
  for (std::size_t i = 0; i < t.size(); ++i) {
    lo = std::min(lo, t[i]);
    hi = std::max(hi, t[i]);
  }
  if (hi > lo)
    for (std::size_t i = 0; i < t.size(); ++i)
      t[i] = (t[i] - lo) / (hi - lo) * 255.0;
  else
    for (std::size_t i = 0; i < t.size(); ++i)
      t[i] = std::clamp(t[i], 0.0, 255.0);
  write_image(output_path, tensor_to_image(t));
}

} // namespace ceemkit
