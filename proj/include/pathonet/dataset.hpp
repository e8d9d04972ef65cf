#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pathonet/tensor.hpp"

namespace pathonet {

/// Axis-aligned pixel rectangle with optional label and score.
struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
    std::string label;
    float score = -1.0f; // < 0 means unset
};

inline bool boxes_overlap(const Box& a, const Box& b) {
    const int ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    const int iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    return ix > 0 && iy > 0;
}

struct AnnotatedImage {
    Tensor<float> pixels; // (C,H,W) in [0,1]
    std::vector<Box> boxes;
    std::string source; // image path or synthetic id
};

struct PatchProvenance {
    std::string source;
    int x = 0;         // window top-left in the source image
    int y = 0;
    int transform = 0; // dihedral element 0..7, 0 = identity
};

/// Labeled square patches, stored as one (N,C,s,s) tensor.
struct PatchSet {
    int patch_size = 0;
    int channels = 0;
    Tensor<float> data; // (N,C,s,s); empty when count()==0
    std::vector<std::uint8_t> labels;
    std::vector<PatchProvenance> provenance;

    std::int64_t count() const { return static_cast<std::int64_t>(labels.size()); }
    Tensor<float> patch(std::int64_t i) const;
    void append(const Tensor<float>& patch, std::uint8_t label, PatchProvenance prov);
    std::int64_t positives() const;

    /// Copies the rows at `indices` into a (B,C,s,s) batch tensor.
    Tensor<float> gather(const std::vector<std::int64_t>& indices) const;
};

/// JSON-lines annotation file: one {"image": ..., "boxes": [...]} record
/// per line. Image paths are resolved relative to the annotation file.
/// Out-of-bounds boxes are errors (reported with their line number).
std::vector<AnnotatedImage> load_annotations(const std::string& path);

/// Writes images as PPM/PGM plus an annotations.jsonl into `dir`;
/// returns the annotation file path.
std::string write_annotations(const std::vector<AnnotatedImage>& images,
                              const std::string& dir);

/// One positive per annotation (window centered on the box center, crops
/// larger than the patch are bilinear-resampled down); negatives drawn
/// uniformly and rejected on any positive-area overlap with an annotation.
PatchSet extract_patches(const std::vector<AnnotatedImage>& images, int patch_size,
                         int neg_per_image, int max_neg_tries, std::uint64_t seed);

/// The 8-element dihedral group on square patches.
Tensor<float> dihedral_apply(const Tensor<float>& patch, int op);

/// Appends (multiplier-1) dihedral-transformed copies of every positive;
/// generated extras never use the identity. Negatives pass through.
PatchSet augment_positives(const PatchSet& patches, int multiplier, std::uint64_t seed);

/// Subsamples negatives (without replacement) so the positive fraction
/// lands as close to target as integer counts allow; positives untouched.
PatchSet rebalance(const PatchSet& patches, double target_pos_fraction, std::uint64_t seed);

struct SynthConfig {
    int width = 100;
    int height = 100;
    int channels = 3;
    int blobs_min = 1;
    int blobs_max = 4;
    double sigma_min = 3.0;     // blob Gaussian radius, pixels
    double sigma_max = 5.0;
    double intensity_min = 0.55;
    double intensity_max = 0.9;
    double ecc_min = 0.8;       // minor/major axis ratio
    double ecc_max = 1.0;
    double background = 0.10;
    double noise = 0.03;
    int box_min = 12;           // annotation boxes never smaller than this
    int margin = 12;            // blob centers stay this far from edges
    std::uint64_t seed = 42;
};

/// Dark noisy background with bright tinted elliptical Gaussian blobs;
/// every blob gets a tight centered annotation box. Per-image seeds are
/// derived from (seed, index), so the stream is order-independent.
std::vector<AnnotatedImage> generate_synthetic(const SynthConfig& cfg, int image_count);

/// Seeded split grouped by source image (no image contributes to both
/// sides). Test side receives whole images until it holds at least
/// test_fraction of the patches.
std::pair<PatchSet, PatchSet> split(const PatchSet& patches, double test_fraction,
                                    std::uint64_t seed);

// PST1 archive
std::vector<std::uint8_t> serialize_patchset(const PatchSet& ps);
PatchSet deserialize_patchset(const std::vector<std::uint8_t>& bytes, const std::string& what);
void save_patchset(const PatchSet& ps, const std::string& path);
PatchSet load_patchset(const std::string& path);

} // namespace pathonet
