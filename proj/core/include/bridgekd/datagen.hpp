#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridgekd/tensor.hpp"

namespace bridgekd {

// Synthetic face-like data. Each identity is a fixed constellation of
// Gaussian blobs over a textured background; samples of an identity re-render
// the constellation under nuisance variation (small shift, contrast, pixel
// noise). Low-resolution views come from a parametric degradation chain that
// mimics surveillance imagery: alignment jitter, downsampling, blur, gain.

enum class Split { kPrivate, kPublic, kTarget };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct BlobParams {
  double cx, cy;    // center, unit coordinates
  double sx, sy;    // Gaussian widths
  double amplitude; // signed contrast against the background
};

struct IdentityParams {
  int id = 0;
  std::vector<BlobParams> blobs;
  uint64_t texture_seed = 0;  // fixes the identity's background pattern
};

// L2 distance between the flattened blob parameter vectors. Identities are
// rejection-sampled so every pair stays at least kIdentityMargin apart,
// which keeps classes separable at high resolution.
inline constexpr double kIdentityMargin = 0.6;
double identity_distance(const IdentityParams& a, const IdentityParams& b);

// Draws n well-separated identities. Throws if the margin cannot be met
// (too many identities for the parameter space).
std::vector<IdentityParams> synth_identities(int n, uint64_t seed);

// Renders one high-resolution sample (1,size,size) in [0,1]. The nuisance
// seed controls shift, contrast and noise; the same (identity, seed, size)
// always renders identical pixels.
Tensor<float> render_hr(const IdentityParams& identity, uint64_t nuisance_seed, int size = 64);

struct DegradeConfig {
  int count = 4;                 // degraded views per source image
  double jitter_px = 3.0;        // max |shift| at source resolution
  double blur_sigma_min = 0.0;   // Gaussian sigma range, target-pixel units
  double blur_sigma_max = 1.0;
  double gain_min = 0.7;         // illumination multiplier range
  double gain_max = 1.3;
  int target_resolution = 16;
};

struct DegradedImage {
  Tensor<float> image;
  std::string descriptor;  // "j=<dx>,<dy>|s=<sigma>|g=<gain>"
};

// Applies jitter -> area downsample -> blur -> gain -> clip, `count` times
// with independent draws. With target resolution equal to the source size,
// zero jitter, zero blur and unit gain the output equals the input.
std::vector<DegradedImage> degrade(const Tensor<float>& hr, const DegradeConfig& cfg,
                                   uint64_t seed);

// Plane utilities used by the degradation chain (and directly testable).
// All take and return (1,H,W) tensors.
Tensor<float> shift_bilinear(const Tensor<float>& img, double dx, double dy);
Tensor<float> area_resample(const Tensor<float>& img, int out_h, int out_w);
Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma);

struct SplitFractions {
  double private_f = 1.0 / 3.0;
  double public_f = 1.0 / 2.0;
  double target_f = 1.0 / 6.0;
};

struct IdentitySplits {
  std::vector<int> private_ids;
  std::vector<int> public_ids;
  std::vector<int> target_ids;
};

// Disjoint identity partition: |private| = round(private_f * n),
// |public| = round(public_f * n), target takes the rest. Fractions must sum
// to 1 and every split must be non-empty.
IdentitySplits make_splits(int num_identities, const SplitFractions& fractions, uint64_t seed);

struct VerificationPair {
  int id_a = 0;
  int sample_a = 0;
  int id_b = 0;
  int sample_b = 0;
  bool same_identity = false;
};

// Balanced genuine/impostor pairs over (identity, sample) references. No
// sample pairing repeats; throws if the request is infeasible.
std::vector<VerificationPair> verification_pairs(const std::vector<int>& ids, int samples_per_id,
                                                 int n_pos, int n_neg, uint64_t seed);

// ----- on-disk dataset -----
//
// <dir>/manifest            text, one record per image:
//                           id split res sample variant path lineage
//                           (variant -1 and lineage "-" for originals)
// <dir>/images/...          raw little-endian f32 pixels, res*res per file

struct DatasetConfig {
  int identities = 60;
  int samples_per_identity = 40;
  int hr_size = 64;
  SplitFractions fractions;
  std::vector<int> resolutions = {32, 16};  // low-res views for public/target
  DegradeConfig degrade;                    // target_resolution is overridden per entry
};

struct ManifestEntry {
  int identity = 0;
  Split split = Split::kPrivate;
  int resolution = 0;
  int sample = 0;
  int variant = -1;  // -1 = original, otherwise index of the degraded view
  std::string path;  // relative to the dataset directory
  std::string lineage;
};

class DatasetIndex {
 public:
  DatasetIndex() = default;
  DatasetIndex(std::string dir, std::vector<ManifestEntry> entries);

  const std::string& dir() const { return dir_; }
  const std::vector<ManifestEntry>& entries() const { return entries_; }

  std::vector<int> identities(Split s) const;  // sorted, unique
  int samples_per_identity() const;

  // Original (full-resolution) entries of a split, ordered by (id, sample).
  std::vector<const ManifestEntry*> originals(Split s) const;
  // Degraded entries of a split at a resolution, ordered by (id, sample, variant).
  std::vector<const ManifestEntry*> degraded(Split s, int resolution) const;

  Tensor<float> load_image(const ManifestEntry& e) const;

  // Hash of the manifest bytes; seeds evaluation-side draws so every model
  // trained against this dataset sees identical pairs.
  uint64_t manifest_hash() const { return manifest_hash_; }
  void set_manifest_hash(uint64_t h) { manifest_hash_ = h; }

 private:
  std::string dir_;
  std::vector<ManifestEntry> entries_;
  uint64_t manifest_hash_ = 0;
};

// Generates and writes a dataset; rerunning with the same config and seed
// produces byte-identical files. Returns the index of what was written.
DatasetIndex write_dataset(const std::string& dir, const DatasetConfig& cfg, uint64_t seed);

DatasetIndex load_dataset(const std::string& dir);

}  // namespace bridgekd
