#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pat/rng.hpp"
#include "pat/tensor.hpp"

namespace pat {

// One person image; pixels are h*w*3 row-major RGB in [0,1].
struct PersonImage {
  int h = 0;
  int w = 0;
  std::vector<float> pixels;
  int identity = -1;
  int camera = 0;
  bool occluded = false;
  // Manifest override of the query/gallery split: -1 = none (fall back to
  // the occluded flag), 0 = gallery, 1 = query.
  int split_override = -1;

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
  bool is_query() const { return split_override >= 0 ? split_override == 1 : occluded; }
};

template <typename S>
Tensor<S> image_tensor(const PersonImage& img);

struct SynthConfig {
  int num_identities = 16;
  int images_per_identity = 12;
  int height = 64;
  int width = 32;
  double occlusion_prob = 0.5;
  double occluder_min = 0.25;  // occluder extent range, fractions of H and W
  double occluder_max = 0.55;
  int num_cameras = 2;
  std::uint64_t seed = 7;

  void validate() const;
};

struct Dataset {
  std::vector<PersonImage> images;
  int num_identities = 0;
};

// Pixel provenance for the generator's ground truth.
enum class Region : std::uint8_t { Background = 0, Signature = 1, Occluder = 2 };

struct RegionMap {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> kind;  // h*w entries of Region

  Region at(int y, int x) const {
    return static_cast<Region>(kind[static_cast<std::size_t>(y) * w + x]);
  }
};

struct SynthDataset {
  Dataset dataset;
  std::vector<RegionMap> regions;  // parallel to dataset.images
};

// Each identity gets a signature of 3-5 colored body bands plus a
// "belonging" patch, jittered per image; occluders are gray-noise blocks.
// Fully determined by the config seed.
SynthDataset synth_generate(const SynthConfig& cfg);

// ------------------------------------------------------------- image io

// Binary P6, maxval 255.
PersonImage load_ppm(const std::string& path);
void save_ppm(const std::string& path, const PersonImage& img);

// Binary P5, maxval 255; map values expected in [0,1], h*w grays.
void save_pgm(const std::string& path, int h, int w, const float* gray);
void save_pgm(const std::string& path, const Tensor<float>& map);

// --------------------------------------------------------- augmentation

int augment_pad_amount(int h);  // 10 * (h/256), rounded

PersonImage hflip(const PersonImage& img);

// Zero-pad by `pad` on every side, then crop back to the original extents
// at offset (oy, ox) in [0, 2*pad].
PersonImage pad_crop(const PersonImage& img, int pad, int oy, int ox);

struct EraseRect {
  int y0 = 0, x0 = 0, h = 0, w = 0;
};

// Rectangle with area fraction in [0.02, 0.2] of the image.
EraseRect sample_erase_rect(int h, int w, Rng& rng);

void erase_with_noise(PersonImage& img, const EraseRect& rect, Rng& rng);

// Random horizontal flip (p = 0.5), zero-pad + random crop, random
// erasing (p = 0.5) filled with uniform noise.
PersonImage augment(const PersonImage& img, Rng& rng);

// ------------------------------------------------------------- sampling

struct Batch {
  std::vector<int> indices;  // into Dataset::images
  std::vector<int> labels;
};

// One epoch of PK batches: every batch holds exactly P distinct
// identities with K images each, and every identity appears in at least
// one batch. Identities short of K images are resampled with replacement.
std::vector<Batch> pk_batches(const Dataset& data, int p, int k_imgs,
                              Rng& rng);

// ------------------------------------------------------ directory layout

// Layout: <root>/<identity>/<camera>_<index>.ppm plus manifest.csv with
// columns path,identity,camera,occluded[,split].
void write_dataset_dir(const Dataset& data, const std::string& root);
Dataset load_dataset_dir(const std::string& root);

}  // namespace pat
