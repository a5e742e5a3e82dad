#include "bridgekd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bridgekd/rng.hpp"

namespace bridgekd {

namespace fs = std::filesystem;

const char* split_name(Split s) {
  switch (s) {
    case Split::kPrivate: return "private";
    case Split::kPublic: return "public";
    case Split::kTarget: return "target";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "private") return Split::kPrivate;
  if (name == "public") return Split::kPublic;
  if (name == "target") return Split::kTarget;
  throw std::invalid_argument("unknown split name '" + name + "'");
}

double identity_distance(const IdentityParams& a, const IdentityParams& b) {
  if (a.blobs.size() != b.blobs.size())
    throw std::invalid_argument("identity_distance: blob counts differ");
  double sq = 0.0;
  for (size_t i = 0; i < a.blobs.size(); ++i) {
    const BlobParams& x = a.blobs[i];
    const BlobParams& y = b.blobs[i];
    const double d[5] = {x.cx - y.cx, x.cy - y.cy, x.sx - y.sx, x.sy - y.sy,
                         x.amplitude - y.amplitude};
    for (double v : d) sq += v * v;
  }
  return std::sqrt(sq);
}

namespace {

constexpr int kBlobCount = 6;

IdentityParams draw_identity(int id, Rng& rng) {
  IdentityParams p;
  p.id = id;
  p.texture_seed = rng.next();
  for (int i = 0; i < kBlobCount; ++i) {
    BlobParams b;
    b.cx = rng.uniform(0.2, 0.8);
    b.cy = rng.uniform(0.2, 0.8);
    b.sx = rng.uniform(0.06, 0.16);
    b.sy = rng.uniform(0.06, 0.16);
    double mag = rng.uniform(0.35, 0.8);
    b.amplitude = (rng.next() & 1) ? mag : -mag;
    p.blobs.push_back(b);
  }
  return p;
}

struct Wave {
  double amp, freq, theta, phase;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void write_raw_f32(const fs::path& path, const Tensor<float>& img) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("datagen: cannot write '" + path.string() + "'");
  os.write(reinterpret_cast<const char*>(img.data()),
           static_cast<std::streamsize>(sizeof(float) * img.numel()));
  if (!os) throw std::runtime_error("datagen: short write to '" + path.string() + "'");
}

}  // namespace

std::vector<IdentityParams> synth_identities(int n, uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("synth_identities: n must be positive");
  Rng rng(derive_seed(seed, "identities"));
  std::vector<IdentityParams> out;
  out.reserve(static_cast<size_t>(n));
  int attempts = 0;
  const int max_attempts = 10000 * n;
  while (static_cast<int>(out.size()) < n) {
    if (++attempts > max_attempts)
      throw std::runtime_error("synth_identities: cannot satisfy the separation margin for " +
                               std::to_string(n) + " identities");
    IdentityParams cand = draw_identity(static_cast<int>(out.size()), rng);
    bool ok = true;
    for (const auto& prev : out)
      if (identity_distance(cand, prev) < kIdentityMargin) {
        ok = false;
        break;
      }
    if (ok) out.push_back(std::move(cand));
  }
  return out;
}

Tensor<float> render_hr(const IdentityParams& identity, uint64_t nuisance_seed, int size) {
  if (size < 8) throw std::invalid_argument("render_hr: size too small");
  Rng rng(nuisance_seed);
  const double shift_x = rng.uniform(-0.02, 0.02);
  const double shift_y = rng.uniform(-0.02, 0.02);
  const double contrast = rng.uniform(0.85, 1.15);

  Rng trng(identity.texture_seed);
  Wave waves[3];
  for (Wave& w : waves) {
    w.amp = trng.uniform(0.02, 0.05);
    w.freq = trng.uniform(2.0, 5.0);
    w.theta = trng.uniform(0.0, 3.14159265358979323846);
    w.phase = trng.uniform(0.0, 6.28318530717958647692);
  }

  Tensor<float> img({1, size, size});
  float* px = img.data();
  const double inv = 1.0 / size;
  for (int y = 0; y < size; ++y) {
    const double v = (y + 0.5) * inv;
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) * inv;
      double val = 0.5;
      for (const Wave& w : waves)
        val += w.amp * std::cos(6.28318530717958647692 * w.freq *
                                    (u * std::cos(w.theta) + v * std::sin(w.theta)) +
                                w.phase);
      for (const BlobParams& b : identity.blobs) {
        const double du = u - (b.cx + shift_x);
        const double dv = v - (b.cy + shift_y);
        val += b.amplitude *
               std::exp(-(du * du / (2.0 * b.sx * b.sx) + dv * dv / (2.0 * b.sy * b.sy)));
      }
      val = 0.5 + (val - 0.5) * contrast + 0.02 * rng.normal();
      px[y * size + x] = static_cast<float>(std::clamp(val, 0.0, 1.0));
    }
  }
  return img;
}

Tensor<float> shift_bilinear(const Tensor<float>& img, double dx, double dy) {
  if (img.rank() != 3 || img.dim(0) != 1)
    throw std::invalid_argument("shift_bilinear: expected (1,H,W)");
  const int H = img.dim(1), W = img.dim(2);
  Tensor<float> out({1, H, W});
  auto sample = [&](int y, int x) {
    y = std::clamp(y, 0, H - 1);
    x = std::clamp(x, 0, W - 1);
    return static_cast<double>(img.data()[y * W + x]);
  };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double sy = y - dy;
      const double sx = x - dx;
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0;
      const double fx = sx - x0;
      const double v = (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                       fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
      out.data()[y * W + x] = static_cast<float>(v);
    }
  return out;
}

Tensor<float> area_resample(const Tensor<float>& img, int out_h, int out_w) {
  if (img.rank() != 3 || img.dim(0) != 1)
    throw std::invalid_argument("area_resample: expected (1,H,W)");
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("area_resample: bad output size");
  const int H = img.dim(1), W = img.dim(2);
  Tensor<float> out({1, out_h, out_w});
  const double ry = static_cast<double>(H) / out_h;
  const double rx = static_cast<double>(W) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    const double y0 = oy * ry, y1 = (oy + 1) * ry;
    for (int ox = 0; ox < out_w; ++ox) {
      const double x0 = ox * rx, x1 = (ox + 1) * rx;
      double acc = 0.0;
      for (int iy = static_cast<int>(std::floor(y0)); iy < static_cast<int>(std::ceil(y1)); ++iy) {
        const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
        if (wy <= 0) continue;
        for (int ix = static_cast<int>(std::floor(x0)); ix < static_cast<int>(std::ceil(x1));
             ++ix) {
          const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
          if (wx <= 0) continue;
          acc += wy * wx * img.data()[std::min(iy, H - 1) * W + std::min(ix, W - 1)];
        }
      }
      out.data()[oy * out_w + ox] = static_cast<float>(acc / (ry * rx));
    }
  }
  return out;
}

Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma) {
  if (img.rank() != 3 || img.dim(0) != 1)
    throw std::invalid_argument("gaussian_blur: expected (1,H,W)");
  if (sigma < 0) throw std::invalid_argument("gaussian_blur: negative sigma");
  if (sigma < 1e-12) return img.clone();
  const int H = img.dim(1), W = img.dim(2);
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w(static_cast<size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    w[static_cast<size_t>(i + r)] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    sum += w[static_cast<size_t>(i + r)];
  }
  for (double& v : w) v /= sum;

  Tensor<float> tmp({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += w[static_cast<size_t>(i + r)] * img.data()[y * W + std::clamp(x + i, 0, W - 1)];
      tmp.data()[y * W + x] = static_cast<float>(acc);
    }
  Tensor<float> out({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += w[static_cast<size_t>(i + r)] * tmp.data()[std::clamp(y + i, 0, H - 1) * W + x];
      out.data()[y * W + x] = static_cast<float>(acc);
    }
  return out;
}

std::vector<DegradedImage> degrade(const Tensor<float>& hr, const DegradeConfig& cfg,
                                   uint64_t seed) {
  if (hr.rank() != 3 || hr.dim(0) != 1)
    throw std::invalid_argument("degrade: expected (1,H,W) source");
  if (cfg.count <= 0) throw std::invalid_argument("degrade: count must be positive");
  if (cfg.blur_sigma_min > cfg.blur_sigma_max || cfg.gain_min > cfg.gain_max)
    throw std::invalid_argument("degrade: empty parameter range");
  if (cfg.target_resolution <= 0 || cfg.target_resolution > hr.dim(1))
    throw std::invalid_argument("degrade: target resolution must be in (0, source size]");

  std::vector<DegradedImage> out;
  out.reserve(static_cast<size_t>(cfg.count));
  for (int v = 0; v < cfg.count; ++v) {
    Rng rng(derive_seed(seed, "degrade-variant", static_cast<uint64_t>(v)));
    const double dx = rng.uniform(-cfg.jitter_px, cfg.jitter_px);
    const double dy = rng.uniform(-cfg.jitter_px, cfg.jitter_px);
    const double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
    const double gain = rng.uniform(cfg.gain_min, cfg.gain_max);

    Tensor<float> img = (dx == 0.0 && dy == 0.0) ? hr.clone() : shift_bilinear(hr, dx, dy);
    img = area_resample(img, cfg.target_resolution, cfg.target_resolution);
    img = gaussian_blur(img, sigma);
    for (int64_t i = 0; i < img.numel(); ++i)
      img.data()[i] = std::clamp(static_cast<float>(img.data()[i] * gain), 0.0f, 1.0f);

    DegradedImage d;
    d.image = std::move(img);
    d.descriptor = "j=" + fmt(dx) + "," + fmt(dy) + "|s=" + fmt(sigma) + "|g=" + fmt(gain);
    out.push_back(std::move(d));
  }
  return out;
}

IdentitySplits make_splits(int num_identities, const SplitFractions& fractions, uint64_t seed) {
  const double sum = fractions.private_f + fractions.public_f + fractions.target_f;
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("make_splits: fractions sum to " + std::to_string(sum) +
                                ", expected 1");
  const int n_priv = static_cast<int>(std::lround(fractions.private_f * num_identities));
  const int n_pub = static_cast<int>(std::lround(fractions.public_f * num_identities));
  const int n_target = num_identities - n_priv - n_pub;
  if (n_priv < 1 || n_pub < 1 || n_target < 1)
    throw std::invalid_argument("make_splits: every split needs at least one identity (got " +
                                std::to_string(n_priv) + "/" + std::to_string(n_pub) + "/" +
                                std::to_string(n_target) + ")");

  std::vector<int> ids(static_cast<size_t>(num_identities));
  for (int i = 0; i < num_identities; ++i) ids[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(seed, "splits"));
  rng.shuffle(ids);

  IdentitySplits out;
  out.private_ids.assign(ids.begin(), ids.begin() + n_priv);
  out.public_ids.assign(ids.begin() + n_priv, ids.begin() + n_priv + n_pub);
  out.target_ids.assign(ids.begin() + n_priv + n_pub, ids.end());
  std::sort(out.private_ids.begin(), out.private_ids.end());
  std::sort(out.public_ids.begin(), out.public_ids.end());
  std::sort(out.target_ids.begin(), out.target_ids.end());
  return out;
}

std::vector<VerificationPair> verification_pairs(const std::vector<int>& ids, int samples_per_id,
                                                 int n_pos, int n_neg, uint64_t seed) {
  if (ids.size() < 2) throw std::invalid_argument("verification_pairs: need at least 2 identities");
  if (samples_per_id < 2)
    throw std::invalid_argument("verification_pairs: need at least 2 samples per identity");
  if (n_pos < 0 || n_neg < 0) throw std::invalid_argument("verification_pairs: negative count");
  const int64_t ni = static_cast<int64_t>(ids.size());
  const int64_t sp = samples_per_id;
  const int64_t max_pos = ni * (sp * (sp - 1) / 2);
  const int64_t max_neg = ni * (ni - 1) / 2 * sp * sp;
  if (n_pos > max_pos || n_neg > max_neg)
    throw std::invalid_argument("verification_pairs: request exceeds distinct pair count");

  Rng rng(derive_seed(seed, "verification-pairs"));
  std::set<std::tuple<int, int, int, int>> seen;
  std::vector<VerificationPair> out;
  out.reserve(static_cast<size_t>(n_pos + n_neg));

  auto emit = [&](int ia, int sa, int ib, int sb, bool same) {
    // Normalize so (a,b) and (b,a) count as the same pairing.
    if (std::tie(ia, sa) > std::tie(ib, sb)) {
      std::swap(ia, ib);
      std::swap(sa, sb);
    }
    if (!seen.insert({ia, sa, ib, sb}).second) return false;
    out.push_back({ia, sa, ib, sb, same});
    return true;
  };

  int made = 0;
  while (made < n_pos) {
    const int id = ids[static_cast<size_t>(rng.uniform_int(static_cast<int>(ids.size())))];
    const int sa = rng.uniform_int(samples_per_id);
    int sb = rng.uniform_int(samples_per_id);
    if (sa == sb) continue;
    if (emit(id, sa, id, sb, true)) ++made;
  }
  made = 0;
  while (made < n_neg) {
    const int ia = rng.uniform_int(static_cast<int>(ids.size()));
    int ib = rng.uniform_int(static_cast<int>(ids.size()));
    if (ia == ib) continue;
    if (emit(ids[static_cast<size_t>(ia)], rng.uniform_int(samples_per_id),
             ids[static_cast<size_t>(ib)], rng.uniform_int(samples_per_id), false))
      ++made;
  }
  return out;
}

// ----- on-disk dataset -----

DatasetIndex::DatasetIndex(std::string dir, std::vector<ManifestEntry> entries)
    : dir_(std::move(dir)), entries_(std::move(entries)) {}

std::vector<int> DatasetIndex::identities(Split s) const {
  std::set<int> ids;
  for (const auto& e : entries_)
    if (e.split == s) ids.insert(e.identity);
  return {ids.begin(), ids.end()};
}

int DatasetIndex::samples_per_identity() const {
  int max_sample = -1;
  for (const auto& e : entries_) max_sample = std::max(max_sample, e.sample);
  return max_sample + 1;
}

std::vector<const ManifestEntry*> DatasetIndex::originals(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries_)
    if (e.split == s && e.variant == -1) out.push_back(&e);
  std::sort(out.begin(), out.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
    return std::tie(a->identity, a->sample) < std::tie(b->identity, b->sample);
  });
  return out;
}

std::vector<const ManifestEntry*> DatasetIndex::degraded(Split s, int resolution) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries_)
    if (e.split == s && e.variant >= 0 && e.resolution == resolution) out.push_back(&e);
  std::sort(out.begin(), out.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
    return std::tie(a->identity, a->sample, a->variant) <
           std::tie(b->identity, b->sample, b->variant);
  });
  return out;
}

Tensor<float> DatasetIndex::load_image(const ManifestEntry& e) const {
  const fs::path path = fs::path(dir_) / e.path;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: cannot open image '" + path.string() + "'");
  Tensor<float> img({1, e.resolution, e.resolution});
  is.read(reinterpret_cast<char*>(img.data()),
          static_cast<std::streamsize>(sizeof(float) * img.numel()));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(float) * img.numel()))
    throw std::runtime_error("dataset: image '" + path.string() + "' is truncated");
  return img;
}

namespace {

std::string image_rel_path(const ManifestEntry& e) {
  char buf[96];
  if (e.variant < 0)
    std::snprintf(buf, sizeof(buf), "images/%s/id%04d/hr_%02d.f32", split_name(e.split),
                  e.identity, e.sample);
  else
    std::snprintf(buf, sizeof(buf), "images/%s/id%04d/lr%d_%02d_%d.f32", split_name(e.split),
                  e.identity, e.resolution, e.sample, e.variant);
  return buf;
}

}  // namespace

DatasetIndex write_dataset(const std::string& dir, const DatasetConfig& cfg, uint64_t seed) {
  if (cfg.samples_per_identity < 2)
    throw std::invalid_argument("write_dataset: need at least 2 samples per identity");
  for (int r : cfg.resolutions)
    if (r <= 0 || r > cfg.hr_size)
      throw std::invalid_argument("write_dataset: resolution " + std::to_string(r) +
                                  " outside (0, hr_size]");

  const auto identities = synth_identities(cfg.identities, seed);
  const auto splits = make_splits(cfg.identities, cfg.fractions, seed);
  auto split_of = [&](int id) {
    if (std::binary_search(splits.private_ids.begin(), splits.private_ids.end(), id))
      return Split::kPrivate;
    if (std::binary_search(splits.public_ids.begin(), splits.public_ids.end(), id))
      return Split::kPublic;
    return Split::kTarget;
  };

  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const auto& ident : identities) {
    const Split split = split_of(ident.id);
    for (int s = 0; s < cfg.samples_per_identity; ++s) {
      const uint64_t render_seed =
          derive_seed(seed, "render", (static_cast<uint64_t>(ident.id) << 20) | static_cast<uint64_t>(s));
      Tensor<float> hr = render_hr(ident, render_seed, cfg.hr_size);

      ManifestEntry he;
      he.identity = ident.id;
      he.split = split;
      he.resolution = cfg.hr_size;
      he.sample = s;
      he.variant = -1;
      he.lineage = "-";
      he.path = image_rel_path(he);
      write_raw_f32(fs::path(dir) / he.path, hr);
      entries.push_back(he);

      if (split == Split::kPrivate) continue;  // the teacher's world is high-resolution only
      for (size_t ri = 0; ri < cfg.resolutions.size(); ++ri) {
        DegradeConfig dc = cfg.degrade;
        dc.target_resolution = cfg.resolutions[ri];
        const uint64_t dseed = derive_seed(
            seed, "degrade",
            ((static_cast<uint64_t>(ident.id) << 28) | (static_cast<uint64_t>(s) << 8) | ri));
        auto views = degrade(hr, dc, dseed);
        for (int v = 0; v < static_cast<int>(views.size()); ++v) {
          ManifestEntry le;
          le.identity = ident.id;
          le.split = split;
          le.resolution = dc.target_resolution;
          le.sample = s;
          le.variant = v;
          le.lineage = he.path + "|" + views[static_cast<size_t>(v)].descriptor;
          le.path = image_rel_path(le);
          write_raw_f32(fs::path(dir) / le.path, views[static_cast<size_t>(v)].image);
          entries.push_back(le);
        }
      }
    }
  }

  std::ostringstream manifest;
  for (const auto& e : entries)
    manifest << e.identity << " " << split_name(e.split) << " " << e.resolution << " " << e.sample
             << " " << e.variant << " " << e.path << " " << e.lineage << "\n";
  const std::string text = manifest.str();
  std::ofstream os(fs::path(dir) / "manifest", std::ios::binary);
  if (!os) throw std::runtime_error("write_dataset: cannot write manifest");
  os << text;
  os.close();

  DatasetIndex index(dir, std::move(entries));
  index.set_manifest_hash(fnv1a64(text.data(), text.size()));
  return index;
}

DatasetIndex load_dataset(const std::string& dir) {
  const fs::path mpath = fs::path(dir) / "manifest";
  std::ifstream is(mpath, std::ios::binary);
  if (!is)
    throw std::runtime_error("dataset: no manifest at '" + mpath.string() +
                             "' (generate the dataset first)");
  std::stringstream buffer;
  buffer << is.rdbuf();
  const std::string text = buffer.str();

  std::vector<ManifestEntry> entries;
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    ManifestEntry e;
    std::string split;
    if (!(fields >> e.identity >> split >> e.resolution >> e.sample >> e.variant >> e.path >>
          e.lineage))
      throw std::runtime_error("dataset: malformed manifest line " + std::to_string(lineno));
    e.split = split_from_name(split);
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw std::runtime_error("dataset: manifest is empty");

  DatasetIndex index(dir, std::move(entries));
  index.set_manifest_hash(fnv1a64(text.data(), text.size()));
  return index;
}

}  // namespace bridgekd
