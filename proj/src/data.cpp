#include "pat/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "pat/errors.hpp"

namespace fs = std::filesystem;

namespace pat {

template <typename S>
Tensor<S> image_tensor(const PersonImage& img) {
  std::vector<S> values(img.pixels.begin(), img.pixels.end());
  return Tensor<S>::from({img.h, img.w, 3}, std::move(values));
}

template Tensor<float> image_tensor<float>(const PersonImage&);
template Tensor<double> image_tensor<double>(const PersonImage&);

void SynthConfig::validate() const {
  if (num_identities < 1 || images_per_identity < 1)
    throw ConfigError("synth corpus must have at least one identity/image");
  if (height < 8 || width < 8)
    throw ConfigError("synth image extents must be at least 8x8");
  if (occlusion_prob < 0.0 || occlusion_prob > 1.0)
    throw ConfigError("occlusion_prob must lie in [0,1]");
  if (occluder_min <= 0.0 || occluder_max >= 1.0 ||
      occluder_min > occluder_max)
    throw ConfigError("occluder size fractions must satisfy 0 < min <= max < 1");
  if (num_cameras < 1) throw ConfigError("need at least one camera");
}

namespace {

struct Signature {
  int bands = 0;
  std::vector<float> colors;   // bands * 3
  std::vector<double> splits;  // bands+1 fractions of the band span
  bool patch_left = false;
  float patch_color[3] = {0, 0, 0};
  double patch_y = 0.5;  // vertical center, fraction of H
};

Signature draw_signature(Rng& rng) {
  Signature sig;
  sig.bands = 3 + rng.uniform_int(3);
  sig.colors.resize(static_cast<std::size_t>(sig.bands) * 3);
  for (auto& c : sig.colors) c = static_cast<float>(rng.uniform(0.05, 0.95));
  std::vector<double> weights(sig.bands);
  double total = 0;
  for (auto& w : weights) {
    w = 0.5 + rng.uniform();
    total += w;
  }
  sig.splits.assign(sig.bands + 1, 0.0);
  double acc = 0;
  for (int i = 0; i < sig.bands; ++i) {
    acc += weights[i] / total;
    sig.splits[i + 1] = acc;
  }
  sig.patch_left = rng.uniform() < 0.5;
  for (auto& c : sig.patch_color) c = static_cast<float>(rng.uniform(0.05, 0.95));
  sig.patch_y = rng.uniform(0.30, 0.70);
  return sig;
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int h = cfg.height, w = cfg.width;

  std::vector<Signature> signatures;
  signatures.reserve(cfg.num_identities);
  for (int id = 0; id < cfg.num_identities; ++id)
    signatures.push_back(draw_signature(rng));

  SynthDataset out;
  out.dataset.num_identities = cfg.num_identities;
  for (int id = 0; id < cfg.num_identities; ++id) {
    const Signature& sig = signatures[id];
    for (int n = 0; n < cfg.images_per_identity; ++n) {
      PersonImage img;
      img.h = h;
      img.w = w;
      img.identity = id;
      img.camera = n % cfg.num_cameras;
      img.pixels.resize(static_cast<std::size_t>(h) * w * 3);
      RegionMap region;
      region.h = h;
      region.w = w;
      region.kind.assign(static_cast<std::size_t>(h) * w,
                         static_cast<std::uint8_t>(Region::Background));

      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c)
            img.at(y, x, c) =
                static_cast<float>(0.82 + rng.uniform(-0.04, 0.04));

      // Viewpoint jitter: band span, vertical shift, color wobble.
      const double dy = rng.uniform(-0.04, 0.04) * h;
      const int x0 = static_cast<int>(std::lround((0.15 + rng.uniform(-0.05, 0.05)) * w));
      const int x1 = static_cast<int>(std::lround((0.85 + rng.uniform(-0.05, 0.05)) * w));
      const int band_top = static_cast<int>(std::lround(0.08 * h + dy));
      const int band_bot = static_cast<int>(std::lround(0.92 * h + dy));
      for (int b = 0; b < sig.bands; ++b) {
        float color[3];
        for (int c = 0; c < 3; ++c)
          color[c] = std::clamp(
              sig.colors[static_cast<std::size_t>(b) * 3 + c] +
                  static_cast<float>(rng.uniform(-0.05, 0.05)),
              0.0f, 1.0f);
        const int yb0 = band_top + static_cast<int>(std::lround(
                                       sig.splits[b] * (band_bot - band_top)));
        const int yb1 = band_top + static_cast<int>(std::lround(
                                       sig.splits[b + 1] * (band_bot - band_top)));
        for (int y = std::max(0, yb0); y < std::min(h, yb1); ++y)
          for (int x = std::max(0, x0); x < std::min(w, x1); ++x) {
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
            region.kind[static_cast<std::size_t>(y) * w + x] =
                static_cast<std::uint8_t>(Region::Signature);
          }
      }

      // Belonging patch hanging off one side of the person.
      const int ph = std::max(2, static_cast<int>(std::lround(0.18 * h)));
      const int pw = std::max(2, static_cast<int>(std::lround(0.16 * w)));
      const int py = std::clamp(
          static_cast<int>(std::lround(sig.patch_y * h + dy)) - ph / 2, 0,
          h - ph);
      const int px =
          sig.patch_left ? std::max(0, x0 - pw + 1) : std::min(w - pw, x1 - 1);
      for (int y = py; y < py + ph; ++y)
        for (int x = px; x < px + pw; ++x) {
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = sig.patch_color[c];
          region.kind[static_cast<std::size_t>(y) * w + x] =
              static_cast<std::uint8_t>(Region::Signature);
        }

      if (rng.uniform() < cfg.occlusion_prob) {
        img.occluded = true;
        const int oh = std::max(1, static_cast<int>(std::lround(
                                       rng.uniform(cfg.occluder_min,
                                                   cfg.occluder_max) * h)));
        const int ow = std::max(1, static_cast<int>(std::lround(
                                       rng.uniform(cfg.occluder_min,
                                                   cfg.occluder_max) * w)));
        const int oy = rng.uniform_int(h - oh + 1);
        const int ox = rng.uniform_int(w - ow + 1);
        for (int y = oy; y < oy + oh; ++y)
          for (int x = ox; x < ox + ow; ++x) {
            const float g = static_cast<float>(0.5 + rng.uniform(-0.15, 0.15));
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = g;
            region.kind[static_cast<std::size_t>(y) * w + x] =
                static_cast<std::uint8_t>(Region::Occluder);
          }
      }

      for (auto& p : img.pixels) p = std::clamp(p, 0.0f, 1.0f);
      out.dataset.images.push_back(std::move(img));
      out.regions.push_back(std::move(region));
    }
  }
  return out;
}

// ---------------------------------------------------------------- PPM/PGM

namespace {

// Skips whitespace and '#' comments, then parses a decimal integer.
int parse_pnm_int(const std::string& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= buf.size() || !std::isdigit(static_cast<unsigned char>(buf[pos])))
    throw ParseError("expected integer in PNM header", pos);
  long v = 0;
  while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
    v = v * 10 + (buf[pos] - '0');
    if (v > 1 << 30) throw ParseError("PNM header value overflow", pos);
    ++pos;
  }
  return static_cast<int>(v);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

PersonImage load_ppm(const std::string& path) {
  const std::string buf = read_file(path);
  std::size_t pos = 0;
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '6')
    throw ParseError("not a binary PPM (missing P6 magic) in " + path, 0);
  pos = 2;
  const int w = parse_pnm_int(buf, pos);
  const int h = parse_pnm_int(buf, pos);
  const int maxval = parse_pnm_int(buf, pos);
  if (w < 1 || h < 1) throw ParseError("non-positive PPM extents", pos);
  if (maxval != 255)
    throw ParseError("unsupported PPM maxval " + std::to_string(maxval), pos);
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
    throw ParseError("missing separator after PPM header", pos);
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (buf.size() - pos < need)
    throw ParseError("truncated PPM payload in " + path +
                         ": need " + std::to_string(need) + " bytes, have " +
                         std::to_string(buf.size() - pos),
                     buf.size());
  PersonImage img;
  img.h = h;
  img.w = w;
  img.pixels.resize(need);
  for (std::size_t i = 0; i < need; ++i)
    img.pixels[i] =
        static_cast<float>(static_cast<unsigned char>(buf[pos + i])) / 255.0f;
  return img;
}

namespace {

unsigned char to_byte(float v) {
  long b = std::lround(static_cast<double>(v) * 255.0);
  return static_cast<unsigned char>(std::clamp(b, 0L, 255L));
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace

void save_ppm(const std::string& path, const PersonImage& img) {
  std::string bytes;
  bytes += "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) +
           "\n255\n";
  bytes.reserve(bytes.size() + img.pixels.size());
  for (float v : img.pixels) bytes.push_back(static_cast<char>(to_byte(v)));
  write_file(path, bytes);
}

void save_pgm(const std::string& path, int h, int w, const float* gray) {
  std::string bytes;
  bytes += "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i)
    bytes.push_back(static_cast<char>(to_byte(gray[i])));
  write_file(path, bytes);
}

void save_pgm(const std::string& path, const Tensor<float>& map) {
  if (map.rank() != 2)
    throw DimensionError("save_pgm expects an [h,w] map, got " +
                         shape_str(map.shape()));
  save_pgm(path, map.extent(0), map.extent(1), map.data());
}

// ------------------------------------------------------------ augmentation

int augment_pad_amount(int h) {
  return static_cast<int>(std::lround(10.0 * h / 256.0));
}

PersonImage hflip(const PersonImage& img) {
  PersonImage out = img;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.w - 1 - x, c);
  return out;
}

PersonImage pad_crop(const PersonImage& img, int pad, int oy, int ox) {
  if (pad < 0 || oy < 0 || ox < 0 || oy > 2 * pad || ox > 2 * pad)
    throw ContractError("pad_crop offsets must lie in [0, 2*pad]");
  PersonImage out = img;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const int sy = y + oy - pad;
      const int sx = x + ox - pad;
      const bool inside = sy >= 0 && sy < img.h && sx >= 0 && sx < img.w;
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = inside ? img.at(sy, sx, c) : 0.0f;
    }
  return out;
}

EraseRect sample_erase_rect(int h, int w, Rng& rng) {
  const double area_lo = 0.02 * h * w;
  const double area_hi = 0.2 * h * w;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double area = rng.uniform(0.02, 0.2) * h * w;
    const double aspect = std::exp(rng.uniform(std::log(0.3), std::log(1.0 / 0.3)));
    const int eh = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    const int ew = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    if (eh < 1 || ew < 1 || eh > h || ew > w) continue;
    const double got = static_cast<double>(eh) * ew;
    if (got < area_lo || got > area_hi) continue;
    EraseRect r;
    r.h = eh;
    r.w = ew;
    r.y0 = rng.uniform_int(h - eh + 1);
    r.x0 = rng.uniform_int(w - ew + 1);
    return r;
  }
  // Square fallback near 10% area; always inside the bounds above.
  EraseRect r;
  r.h = std::clamp(static_cast<int>(std::lround(std::sqrt(0.1 * h * w))), 1, h);
  r.w = std::clamp(static_cast<int>(std::lround(0.1 * h * w / r.h)), 1, w);
  r.y0 = rng.uniform_int(h - r.h + 1);
  r.x0 = rng.uniform_int(w - r.w + 1);
  return r;
}

void erase_with_noise(PersonImage& img, const EraseRect& rect, Rng& rng) {
  for (int y = rect.y0; y < rect.y0 + rect.h; ++y)
    for (int x = rect.x0; x < rect.x0 + rect.w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>(rng.uniform());
}

PersonImage augment(const PersonImage& img, Rng& rng) {
  PersonImage out = rng.uniform() < 0.5 ? hflip(img) : img;
  const int pad = augment_pad_amount(img.h);
  if (pad > 0) {
    const int oy = rng.uniform_int(2 * pad + 1);
    const int ox = rng.uniform_int(2 * pad + 1);
    out = pad_crop(out, pad, oy, ox);
  }
  if (rng.uniform() < 0.5) {
    EraseRect rect = sample_erase_rect(img.h, img.w, rng);
    erase_with_noise(out, rect, rng);
  }
  return out;
}

// ---------------------------------------------------------------- sampling

std::vector<Batch> pk_batches(const Dataset& data, int p, int k_imgs,
                              Rng& rng) {
  if (p < 2 || k_imgs < 2)
    throw SamplingError("PK sampling needs P >= 2 and K >= 2 for triplets");
  if (data.num_identities < p)
    throw SamplingError("dataset has " + std::to_string(data.num_identities) +
                        " identities, need at least " + std::to_string(p));
  std::vector<std::vector<int>> by_id(data.num_identities);
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const int id = data.images[i].identity;
    if (id < 0 || id >= data.num_identities)
      throw ContractError("image identity " + std::to_string(id) +
                          " outside [0," +
                          std::to_string(data.num_identities) + ")");
    by_id[id].push_back(static_cast<int>(i));
  }
  for (int id = 0; id < data.num_identities; ++id)
    if (by_id[id].empty())
      throw SamplingError("identity " + std::to_string(id) + " has no images");

  std::vector<int> order(data.num_identities);
  for (int i = 0; i < data.num_identities; ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += p) {
    std::vector<int> group(order.begin() + start,
                           order.begin() + std::min(order.size(), start + p));
    // Top up a short tail group with identities not already in it.
    for (std::size_t probe = 0; group.size() < static_cast<std::size_t>(p);
         ++probe) {
      const int candidate = order[probe % order.size()];
      if (std::find(group.begin(), group.end(), candidate) == group.end())
        group.push_back(candidate);
    }
    Batch batch;
    for (int id : group) {
      const auto& pool = by_id[id];
      std::vector<int> perm = pool;
      rng.shuffle(perm.begin(), perm.end());
      for (int j = 0; j < k_imgs; ++j) {
        const int idx = static_cast<int>(perm.size()) > j
                            ? perm[j]
                            : pool[rng.uniform_int(static_cast<int>(pool.size()))];
        batch.indices.push_back(idx);
        batch.labels.push_back(id);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

// ----------------------------------------------------------- directories

void write_dataset_dir(const Dataset& data, const std::string& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root + ": " + ec.message());

  std::vector<int> per_id_counter(data.num_identities, 0);
  std::ostringstream manifest;
  manifest << "path,identity,camera,occluded\n";
  for (const auto& img : data.images) {
    const std::string dir = root + "/" + std::to_string(img.identity);
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    const int index = per_id_counter[img.identity]++;
    const std::string rel = std::to_string(img.identity) + "/" +
                            std::to_string(img.camera) + "_" +
                            std::to_string(index) + ".ppm";
    save_ppm(root + "/" + rel, img);
    manifest << rel << "," << img.identity << "," << img.camera << ","
             << (img.occluded ? 1 : 0) << "\n";
  }
  std::ofstream mf(root + "/manifest.csv", std::ios::binary);
  if (!mf) throw IoError("cannot write manifest in " + root);
  mf << manifest.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

Dataset load_from_manifest(const std::string& root,
                           const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path);
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("empty manifest " + manifest_path, 0);
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "path")
    throw ParseError("manifest header must start with path,identity,camera,occluded", 0);
  const bool has_split = header.size() >= 5 && header[4] == "split";

  Dataset data;
  std::map<long, int> dense;  // original label -> dense index
  std::vector<std::pair<long, PersonImage>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < 4)
      throw ParseError("manifest row with fewer than 4 fields: " + line, 0);
    PersonImage img = load_ppm(root + "/" + f[0]);
    const long label = std::stol(f[1]);
    img.camera = std::stoi(f[2]);
    img.occluded = std::stoi(f[3]) != 0;
    if (has_split && f.size() >= 5 && !f[4].empty()) {
      if (f[4] == "query") img.split_override = 1;
      else if (f[4] == "gallery") img.split_override = 0;
      else throw ParseError("manifest split must be query or gallery, got " + f[4], 0);
    }
    dense.emplace(label, 0);
    rows.emplace_back(label, std::move(img));
  }
  int next = 0;
  for (auto& [label, idx] : dense) idx = next++;
  for (auto& [label, img] : rows) {
    img.identity = dense[label];
    data.images.push_back(std::move(img));
  }
  data.num_identities = next;
  return data;
}

}  // namespace

Dataset load_dataset_dir(const std::string& root) {
  if (!fs::exists(root)) throw IoError("dataset directory missing: " + root);
  const std::string manifest = root + "/manifest.csv";
  if (fs::exists(manifest)) return load_from_manifest(root, manifest);

  // Fall back to the directory layout; occlusion flags are unknown there.
  std::map<long, std::vector<fs::path>> by_label;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    long label;
    try {
      label = std::stol(entry.path().filename().string());
    } catch (...) {
      continue;
    }
    for (const auto& file : fs::directory_iterator(entry.path()))
      if (file.path().extension() == ".ppm") by_label[label].push_back(file.path());
  }
  if (by_label.empty())
    throw IoError("no <identity>/<camera>_<index>.ppm files under " + root);
  Dataset data;
  int next = 0;
  for (auto& [label, files] : by_label) {
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      PersonImage img = load_ppm(file.string());
      img.identity = next;
      const std::string stem = file.stem().string();
      const auto us = stem.find('_');
      if (us != std::string::npos) {
        try {
          img.camera = std::stoi(stem.substr(0, us));
        } catch (...) {
          img.camera = 0;
        }
      }
      data.images.push_back(std::move(img));
    }
    ++next;
  }
  data.num_identities = next;
  return data;
}

}  // namespace pat
