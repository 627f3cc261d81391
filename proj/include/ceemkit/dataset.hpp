#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ceemkit/tensor.hpp"

namespace ceemkit {

// Single-channel image, values in [0,255] as doubles.
struct GrayImage {
  std::size_t height = 0, width = 0;
  std::vector<double> pixels;  // row-major

  double &at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const {
    return pixels[y * width + x];
  }
};

// Decoders: binary PGM (P5, maxval 255) and PNG (8-bit grayscale or RGB,
// non-interlaced; chunks IHDR/IDAT/IEND honored, others skipped). RGB is
// luma-converted with ITU-R 601 weights.
GrayImage decode_image(const std::string &path);
GrayImage decode_pgm(const std::vector<unsigned char> &bytes,
                     const std::string &origin);
GrayImage decode_png(const std::vector<unsigned char> &bytes,
                     const std::string &origin);

void write_pgm(const std::string &path, const GrayImage &img);
void write_png(const std::string &path, const GrayImage &img);
void write_image(const std::string &path, const GrayImage &img);  // by ext

// Bilinear with half-pixel centers; identity at equal size.
GrayImage resize_bilinear(const GrayImage &img, std::size_t out_h,
                          std::size_t out_w);

struct LabeledDataset {
  Tensor images;  // [N,H,W,1], values in [0,255]
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> provenance;  // file path or "synthetic"
};

// root/<class_name>/<file>.png|pgm; sorted class-name order defines labels,
// sorted file order within a class.
LabeledDataset load_dir(const std::string &root, std::size_t target_size);

struct SynthSpec {
  std::vector<std::string> class_names = {"BP",     "Covid", "LO",
                                          "Normal", "TB",    "VP"};
  std::vector<std::size_t> counts = {39, 51, 84, 143, 10, 19};
  std::size_t image_size = 64;
  double noise_level = 20.0;
  std::uint64_t seed = 0;
};

// Each class is an oriented sinusoidal grating (angle k*30 degrees) plus a
// class-positioned blob, with additive noise clipped to [0,255]. Fully
// deterministic per seed.
LabeledDataset synth_generate(const SynthSpec &spec);

// Writes dataset as root/<class>/<class>_<i>.pgm.
void write_dataset(const LabeledDataset &ds, const std::string &root);

enum class EnhanceOp { negative, maxpool, maxminpool, twomaxminpool };

std::vector<EnhanceOp> parse_enhance_ops(const std::string &csv);

// Applies the op pipeline to a [1,H,W,1] tensor; raw values, no rescale.
Tensor enhance_apply(const Tensor &image, const std::vector<EnhanceOp> &ops,
                     std::size_t pool, std::size_t stride);

// Decode, apply, linearly rescale to [0,255] for display, write.
void enhance_preview(const std::string &input_path,
                     const std::string &output_path,
                     const std::vector<EnhanceOp> &ops, std::size_t pool,
                     std::size_t stride);

Tensor image_to_tensor(const GrayImage &img);
GrayImage tensor_to_image(const Tensor &t);  // [1,H,W,1]

} // namespace ceemkit
