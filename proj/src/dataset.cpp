#include "pathonet/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "pathonet/raster.hpp"
#include "pathonet/rng.hpp"
#include "pathonet/serial.hpp"

namespace pathonet {

namespace fs = std::filesystem;
using nlohmann::json;

Tensor<float> PatchSet::patch(std::int64_t i) const {
    Tensor<float> out({channels, patch_size, patch_size});
    const std::int64_t n = out.numel();
    std::copy_n(data.data() + i * n, n, out.data());
    return out;
}

void PatchSet::append(const Tensor<float>& patch, std::uint8_t label, PatchProvenance prov) {
    if (patch.rank() != 3 || patch.extent(0) != channels || patch.extent(1) != patch_size ||
        patch.extent(2) != patch_size)
        throw ShapeError("PatchSet::append: patch " + patch.shape_str() + " does not match (" +
                         std::to_string(channels) + "," + std::to_string(patch_size) + "," +
                         std::to_string(patch_size) + ")");
    const std::int64_t n = patch.numel();
    if (data.empty() && labels.empty())
        data = Tensor<float>({1, channels, patch_size, patch_size});
    else
        data = Tensor<float>::from_data(
            {static_cast<int>(labels.size()) + 1, channels, patch_size, patch_size},
            [&] {
                std::vector<float> v = data.storage();
                v.resize(v.size() + static_cast<std::size_t>(n));
                return v;
            }());
    std::copy_n(patch.data(), n, data.data() + static_cast<std::int64_t>(labels.size()) * n);
    labels.push_back(label);
    provenance.push_back(std::move(prov));
}

std::int64_t PatchSet::positives() const {
    std::int64_t p = 0;
    for (std::uint8_t l : labels) p += l;
    return p;
}

Tensor<float> PatchSet::gather(const std::vector<std::int64_t>& indices) const {
    Tensor<float> batch(
        {static_cast<int>(indices.size()), channels, patch_size, patch_size});
    const std::int64_t n = static_cast<std::int64_t>(channels) * patch_size * patch_size;
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy_n(data.data() + indices[i] * n, n,
                    batch.data() + static_cast<std::int64_t>(i) * n);
    return batch;
}

namespace {

PatchSet make_empty_like(int patch_size, int channels) {
    PatchSet ps;
    ps.patch_size = patch_size;
    ps.channels = channels;
    return ps;
}

// Bulk builder: pre-counts rows to avoid PatchSet::append reallocation.
struct PatchBuilder {
    PatchSet ps;
    std::int64_t next = 0;

    PatchBuilder(int patch_size, int channels, std::int64_t capacity) {
        ps.patch_size = patch_size;
        ps.channels = channels;
        if (capacity > 0)
            ps.data = Tensor<float>(
                {static_cast<int>(capacity), channels, patch_size, patch_size});
        ps.labels.reserve(static_cast<std::size_t>(capacity));
        ps.provenance.reserve(static_cast<std::size_t>(capacity));
    }

    void push(const Tensor<float>& patch, std::uint8_t label, PatchProvenance prov) {
        const std::int64_t n = patch.numel();
        std::copy_n(patch.data(), n, ps.data.data() + next * n);
        ps.labels.push_back(label);
        ps.provenance.push_back(std::move(prov));
        ++next;
    }

    PatchSet take() {
        if (next == 0) return make_empty_like(ps.patch_size, ps.channels);
        if (next != static_cast<std::int64_t>(ps.data.empty() ? 0 : ps.data.extent(0))) {
            std::vector<float> v = ps.data.storage();
            v.resize(static_cast<std::size_t>(next) * ps.channels * ps.patch_size *
                     ps.patch_size);
            ps.data = Tensor<float>::from_data(
                {static_cast<int>(next), ps.channels, ps.patch_size, ps.patch_size},
                std::move(v));
        }
        return std::move(ps);
    }
};

} // namespace

std::vector<AnnotatedImage> load_annotations(const std::string& path) {
    const std::string text = read_text_file(path);
    const fs::path base = fs::path(path).parent_path();

    std::vector<AnnotatedImage> out;
    std::istringstream lines(text);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": malformed JSON: " +
                              e.what());
        }
        AnnotatedImage img;
        try {
            img.source = j.at("image").get<std::string>();
            for (const json& b : j.at("boxes")) {
                Box box;
                box.x = b.at("x").get<int>();
                box.y = b.at("y").get<int>();
                box.w = b.at("w").get<int>();
                box.h = b.at("h").get<int>();
                box.label = b.value("label", std::string());
                if (box.w <= 0 || box.h <= 0)
                    throw FormatError(path + ":" + std::to_string(line_no) +
                                      ": box with non-positive extent");
                img.boxes.push_back(std::move(box));
            }
        } catch (const json::exception& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": bad record: " +
                              e.what());
        }
        const fs::path img_path = base / img.source;
        if (!fs::exists(img_path))
            throw DataError(path + ":" + std::to_string(line_no) + ": missing image file " +
                            img_path.string());
        img.pixels = load_raster(img_path.string());
        const int h = img.pixels.extent(1), w = img.pixels.extent(2);
        for (const Box& b : img.boxes)
            if (b.x < 0 || b.y < 0 || b.x + b.w > w || b.y + b.h > h)
                throw DataError(path + ":" + std::to_string(line_no) + ": box (" +
                                std::to_string(b.x) + "," + std::to_string(b.y) + "," +
                                std::to_string(b.w) + "," + std::to_string(b.h) +
                                ") exceeds image " + std::to_string(w) + "x" +
                                std::to_string(h));
        out.push_back(std::move(img));
    }
    return out;
}

std::string write_annotations(const std::vector<AnnotatedImage>& images, const std::string& dir) {
    fs::create_directories(dir);
    std::string jsonl;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const AnnotatedImage& img = images[i];
        std::string name = img.source.empty()
                               ? "image_" + std::to_string(i) +
                                     (img.pixels.extent(0) == 1 ? ".pgm" : ".ppm")
                               : img.source;
        save_raster(img.pixels, (fs::path(dir) / name).string());
        json rec;
        rec["image"] = name;
        json boxes = json::array();
        for (const Box& b : img.boxes) {
            json jb = {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
            if (!b.label.empty()) jb["label"] = b.label;
            boxes.push_back(jb);
        }
        rec["boxes"] = boxes;
        jsonl += rec.dump() + "\n";
    }
    const std::string ann_path = (fs::path(dir) / "annotations.jsonl").string();
    write_text_file(ann_path, jsonl);
    return ann_path;
}

namespace {

// Bilinear sample at continuous coordinates, clamped to the image.
float bilinear_at(const Tensor<float>& img, int c, double y, double x) {
    const int h = img.extent(1), w = img.extent(2);
    const double yc = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const double xc = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const int y0 = static_cast<int>(std::floor(yc));
    const int x0 = static_cast<int>(std::floor(xc));
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double fy = yc - y0, fx = xc - x0;
    auto at = [&](int yy, int xx) {
        return static_cast<double>(img[(static_cast<std::int64_t>(c) * h + yy) * w + xx]);
    };
    return static_cast<float>((1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                              fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1)));
}

// Crops a square window (top-left wx, wy and side `side`) and resamples it
// to patch_size x patch_size. side == patch_size is a plain copy.
Tensor<float> crop_resample(const Tensor<float>& img, int wx, int wy, int side,
                            int patch_size) {
    const int c = img.extent(0);
    Tensor<float> out({c, patch_size, patch_size});
    if (side == patch_size) {
        const int h = img.extent(1), w = img.extent(2);
        for (int ic = 0; ic < c; ++ic)
            for (int y = 0; y < patch_size; ++y)
                for (int x = 0; x < patch_size; ++x)
                    out[(static_cast<std::int64_t>(ic) * patch_size + y) * patch_size + x] =
                        img[(static_cast<std::int64_t>(ic) * h + (wy + y)) * w + (wx + x)];
        return out;
    }
    const double scale = static_cast<double>(side) / patch_size;
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < patch_size; ++y)
            for (int x = 0; x < patch_size; ++x) {
                // map output pixel center into the window
                const double sy = wy + (y + 0.5) * scale - 0.5;
                const double sx = wx + (x + 0.5) * scale - 0.5;
                out[(static_cast<std::int64_t>(ic) * patch_size + y) * patch_size + x] =
                    bilinear_at(img, ic, sy, sx);
            }
    return out;
}

} // namespace

PatchSet extract_patches(const std::vector<AnnotatedImage>& images, int patch_size,
                         int neg_per_image, int max_neg_tries, std::uint64_t seed) {
    if (patch_size <= 0) throw ConfigError("extract_patches: patch_size must be positive");
    int channels = images.empty() ? 1 : images.front().pixels.extent(0);

    std::int64_t capacity = 0;
    for (const AnnotatedImage& img : images)
        capacity += static_cast<std::int64_t>(img.boxes.size()) + neg_per_image;
    PatchBuilder builder(patch_size, channels, capacity);

    for (std::size_t ii = 0; ii < images.size(); ++ii) {
        const AnnotatedImage& img = images[ii];
        const int h = img.pixels.extent(1), w = img.pixels.extent(2);
        if (img.pixels.extent(0) != channels)
            throw DataError("extract_patches: mixed channel counts across images");
        if (h < patch_size || w < patch_size) {
            std::cerr << "extract_patches: skipping " << img.source << " (" << w << "x" << h
                      << " smaller than patch " << patch_size << ")\n";
            continue;
        }
        Rng rng(mix_seed(seed, ii));

        // positives: one per annotation, window centered on the box center
        for (const Box& b : img.boxes) {
            const int side = std::max(patch_size, std::max(b.w, b.h));
            if (side > w || side > h) {
                std::cerr << "extract_patches: skipping oversized annotation in "
                          << img.source << "\n";
                continue;
            }
            int wx = b.x + b.w / 2 - side / 2;
            int wy = b.y + b.h / 2 - side / 2;
            wx = std::clamp(wx, 0, w - side);
            wy = std::clamp(wy, 0, h - side);
            builder.push(crop_resample(img.pixels, wx, wy, side, patch_size), 1,
                         {img.source, wx, wy, 0});
        }

        // negatives: uniform windows that miss every annotation
        int emitted = 0;
        std::int64_t tries = 0;
        const std::int64_t try_budget =
            static_cast<std::int64_t>(neg_per_image) * std::max(1, max_neg_tries);
        while (emitted < neg_per_image && tries < try_budget) {
            ++tries;
            const int wx = static_cast<int>(rng.uniform_int(w - patch_size + 1));
            const int wy = static_cast<int>(rng.uniform_int(h - patch_size + 1));
            const Box window{wx, wy, patch_size, patch_size, "", -1.0f};
            bool clear = true;
            for (const Box& b : img.boxes)
                if (boxes_overlap(window, b)) {
                    clear = false;
                    break;
                }
            if (!clear) continue;
            builder.push(crop_resample(img.pixels, wx, wy, patch_size, patch_size), 0,
                         {img.source, wx, wy, 0});
            ++emitted;
        }
        if (emitted < neg_per_image)
            std::cerr << "extract_patches: " << img.source << " under-filled (" << emitted
                      << "/" << neg_per_image << " negatives after " << tries << " tries)\n";
    }
    return builder.take();
}

Tensor<float> dihedral_apply(const Tensor<float>& patch, int op) {
    if (patch.rank() != 3 || patch.extent(1) != patch.extent(2))
        throw ShapeError("dihedral_apply: expected square (C,s,s), got " + patch.shape_str());
    if (op < 0 || op > 7) throw ConfigError("dihedral_apply: op must be in 0..7");
    const int c = patch.extent(0), s = patch.extent(1);
    Tensor<float> out(patch.shape());
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                int sy = y, sx = x;
                switch (op) {
                case 0: break;                          // identity
                case 1: sy = x; sx = s - 1 - y; break;  // rot 90 ccw source map
                case 2: sy = s - 1 - y; sx = s - 1 - x; break; // rot 180
                case 3: sy = s - 1 - x; sx = y; break;  // rot 270
                case 4: sx = s - 1 - x; break;          // horizontal flip
                case 5: sy = s - 1 - y; break;          // vertical flip
                case 6: sy = x; sx = y; break;          // transpose
                case 7: sy = s - 1 - x; sx = s - 1 - y; break; // anti-transpose
                }
                out[(static_cast<std::int64_t>(ic) * s + y) * s + x] =
                    patch[(static_cast<std::int64_t>(ic) * s + sy) * s + sx];
            }
    return out;
}

PatchSet augment_positives(const PatchSet& patches, int multiplier, std::uint64_t seed) {
    if (multiplier < 1) throw ConfigError("augment_positives: multiplier must be >= 1");
    if (multiplier == 1) return patches;

    const std::int64_t pos = patches.positives();
    PatchBuilder builder(patches.patch_size, patches.channels,
                         patches.count() + pos * (multiplier - 1));
    Rng rng(seed);
    for (std::int64_t i = 0; i < patches.count(); ++i) {
        const Tensor<float> p = patches.patch(i);
        builder.push(p, patches.labels[static_cast<std::size_t>(i)],
                     patches.provenance[static_cast<std::size_t>(i)]);
        if (patches.labels[static_cast<std::size_t>(i)] == 1) {
            for (int m = 1; m < multiplier; ++m) {
                const int op = 1 + static_cast<int>(rng.uniform_int(7)); // never identity
                PatchProvenance prov = patches.provenance[static_cast<std::size_t>(i)];
                prov.transform = op;
                builder.push(dihedral_apply(p, op), 1, std::move(prov));
            }
        }
    }
    return builder.take();
}

PatchSet rebalance(const PatchSet& patches, double target_pos_fraction, std::uint64_t seed) {
    if (target_pos_fraction <= 0 || target_pos_fraction >= 1)
        throw ConfigError("rebalance: target fraction must be in (0,1)");
    const std::int64_t pos = patches.positives();
    const std::int64_t neg = patches.count() - pos;
    if (pos == 0 || neg == 0)
        throw DataError("rebalance: need at least one positive and one negative");

    const std::int64_t want_neg = static_cast<std::int64_t>(std::llround(
        static_cast<double>(pos) * (1.0 - target_pos_fraction) / target_pos_fraction));
    if (want_neg > neg)
        throw DataError("rebalance: target fraction " + std::to_string(target_pos_fraction) +
                        " would require discarding positives (have " + std::to_string(neg) +
                        " negatives, need " + std::to_string(want_neg) + ")");

    std::vector<std::int64_t> neg_indices;
    for (std::int64_t i = 0; i < patches.count(); ++i)
        if (patches.labels[static_cast<std::size_t>(i)] == 0) neg_indices.push_back(i);
    Rng rng(seed);
    rng.shuffle(neg_indices);
    neg_indices.resize(static_cast<std::size_t>(want_neg));
    std::sort(neg_indices.begin(), neg_indices.end());

    std::vector<bool> keep(static_cast<std::size_t>(patches.count()), false);
    for (std::int64_t i = 0; i < patches.count(); ++i)
        if (patches.labels[static_cast<std::size_t>(i)] == 1) keep[static_cast<std::size_t>(i)] = true;
    for (std::int64_t i : neg_indices) keep[static_cast<std::size_t>(i)] = true;

    PatchBuilder builder(patches.patch_size, patches.channels, pos + want_neg);
    for (std::int64_t i = 0; i < patches.count(); ++i)
        if (keep[static_cast<std::size_t>(i)])
            builder.push(patches.patch(i), patches.labels[static_cast<std::size_t>(i)],
                         patches.provenance[static_cast<std::size_t>(i)]);
    return builder.take();
}

std::vector<AnnotatedImage> generate_synthetic(const SynthConfig& cfg, int image_count) {
    if (cfg.width <= 2 * cfg.margin || cfg.height <= 2 * cfg.margin)
        throw ConfigError("generate_synthetic: image too small for margin");
    if (cfg.channels != 1 && cfg.channels != 3)
        throw ConfigError("generate_synthetic: channels must be 1 or 3");

    // stain-like tint for the blobs vs a neutral dark background
    const double tint[3] = {1.0, 0.45, 0.85};

    std::vector<AnnotatedImage> out;
    out.reserve(static_cast<std::size_t>(image_count));
    for (int ii = 0; ii < image_count; ++ii) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(ii)));
        AnnotatedImage img;
        img.source = "synth_" + std::to_string(ii) + (cfg.channels == 1 ? ".pgm" : ".ppm");
        img.pixels = Tensor<float>({cfg.channels, cfg.height, cfg.width});

        const int blob_count =
            cfg.blobs_min +
            static_cast<int>(rng.uniform_int(cfg.blobs_max - cfg.blobs_min + 1));

        struct Blob {
            double cx, cy, sx, sy, angle, amp;
        };
        std::vector<Blob> blobs;
        for (int b = 0; b < blob_count; ++b) {
            // up to 40 placement tries; overlapping annotations are rejected
            for (int attempt = 0; attempt < 40; ++attempt) {
                Blob cand;
                cand.cx = rng.uniform(cfg.margin, cfg.width - 1 - cfg.margin);
                cand.cy = rng.uniform(cfg.margin, cfg.height - 1 - cfg.margin);
                cand.sx = rng.uniform(cfg.sigma_min, cfg.sigma_max);
                cand.sy = cand.sx * rng.uniform(cfg.ecc_min, cfg.ecc_max);
                cand.angle = rng.uniform(0.0, 3.141592653589793);
                cand.amp = rng.uniform(cfg.intensity_min, cfg.intensity_max);
                bool clear = true;
                for (const Blob& other : blobs) {
                    const double d = std::hypot(cand.cx - other.cx, cand.cy - other.cy);
                    if (d < 3.0 * (cand.sx + other.sx)) {
                        clear = false;
                        break;
                    }
                }
                if (clear) {
                    blobs.push_back(cand);
                    break;
                }
            }
        }

        // background noise
        for (std::int64_t i = 0; i < img.pixels.numel(); ++i) {
            const double v = cfg.background + cfg.noise * rng.normal();
            img.pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }

        for (const Blob& b : blobs) {
            const double ca = std::cos(b.angle), sa = std::sin(b.angle);
            // 2-sigma bounding box of the rotated ellipse, floored at box_min
            const double ex =
                2.0 * std::sqrt(b.sx * b.sx * ca * ca + b.sy * b.sy * sa * sa);
            const double ey =
                2.0 * std::sqrt(b.sx * b.sx * sa * sa + b.sy * b.sy * ca * ca);
            int bw = std::max(cfg.box_min, static_cast<int>(std::ceil(2 * ex)));
            int bh = std::max(cfg.box_min, static_cast<int>(std::ceil(2 * ey)));
            Box box;
            box.x = std::clamp(static_cast<int>(std::lround(b.cx)) - bw / 2, 0,
                               cfg.width - bw);
            box.y = std::clamp(static_cast<int>(std::lround(b.cy)) - bh / 2, 0,
                               cfg.height - bh);
            box.w = bw;
            box.h = bh;
            box.label = "blob";
            img.boxes.push_back(box);

            const int y0 = std::max(0, static_cast<int>(b.cy - 4 * b.sx));
            const int y1 = std::min(cfg.height - 1, static_cast<int>(b.cy + 4 * b.sx));
            const int x0 = std::max(0, static_cast<int>(b.cx - 4 * b.sx));
            const int x1 = std::min(cfg.width - 1, static_cast<int>(b.cx + 4 * b.sx));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double dx = x - b.cx, dy = y - b.cy;
                    const double u = ca * dx + sa * dy;
                    const double v = -sa * dx + ca * dy;
                    const double g = b.amp * std::exp(-0.5 * (u * u / (b.sx * b.sx) +
                                                              v * v / (b.sy * b.sy)));
                    for (int c = 0; c < cfg.channels; ++c) {
                        const double t = cfg.channels == 3 ? tint[c] : 1.0;
                        float& px = img.pixels[(static_cast<std::int64_t>(c) * cfg.height + y) *
                                                   cfg.width +
                                               x];
                        px = static_cast<float>(std::clamp(px + t * g, 0.0, 1.0));
                    }
                }
        }
        out.push_back(std::move(img));
    }
    return out;
}

std::pair<PatchSet, PatchSet> split(const PatchSet& patches, double test_fraction,
                                    std::uint64_t seed) {
    if (test_fraction <= 0 || test_fraction >= 1)
        throw ConfigError("split: test_fraction must be in (0,1)");

    std::vector<std::string> sources;
    std::map<std::string, std::vector<std::int64_t>> by_source;
    for (std::int64_t i = 0; i < patches.count(); ++i) {
        const std::string& s = patches.provenance[static_cast<std::size_t>(i)].source;
        auto [it, inserted] = by_source.try_emplace(s);
        if (inserted) sources.push_back(s);
        it->second.push_back(i);
    }
    if (sources.size() < 2)
        throw DataError("split: need at least 2 source images, have " +
                        std::to_string(sources.size()));

    Rng rng(seed);
    rng.shuffle(sources);

    const std::int64_t want_test = static_cast<std::int64_t>(
        std::llround(test_fraction * static_cast<double>(patches.count())));
    std::set<std::string> test_sources;
    std::int64_t test_count = 0;
    for (const std::string& s : sources) {
        if (test_count >= want_test) break;
        if (test_sources.size() + 1 == sources.size()) break; // keep train non-empty
        test_sources.insert(s);
        test_count += static_cast<std::int64_t>(by_source[s].size());
    }

    PatchBuilder train(patches.patch_size, patches.channels, patches.count() - test_count);
    PatchBuilder test(patches.patch_size, patches.channels, test_count);
    for (std::int64_t i = 0; i < patches.count(); ++i) {
        const auto& prov = patches.provenance[static_cast<std::size_t>(i)];
        PatchBuilder& dst = test_sources.count(prov.source) ? test : train;
        dst.push(patches.patch(i), patches.labels[static_cast<std::size_t>(i)], prov);
    }
    return {train.take(), test.take()};
}

std::vector<std::uint8_t> serialize_patchset(const PatchSet& ps) {
    ByteWriter w;
    w.magic("PST1");
    w.u16(static_cast<std::uint16_t>(ps.patch_size));
    w.u8(static_cast<std::uint8_t>(ps.channels));
    w.u32(static_cast<std::uint32_t>(ps.count()));
    for (std::uint8_t l : ps.labels) w.u8(l);
    if (ps.count() > 0) w.f32_array(ps.data.data(), static_cast<std::size_t>(ps.data.numel()));
    json prov = json::array();
    for (const PatchProvenance& p : ps.provenance)
        prov.push_back({{"source", p.source},
                        {"transform", p.transform},
                        {"x", p.x},
                        {"y", p.y}});
    const std::string trailer = prov.dump();
    w.raw(trailer.data(), trailer.size());
    return w.take();
}

PatchSet deserialize_patchset(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    ByteReader r(bytes, what);
    r.expect_magic("PST1", "PST1 patch archive");
    PatchSet ps;
    ps.patch_size = r.u16();
    ps.channels = r.u8();
    const std::uint32_t count = r.u32();
    if (ps.patch_size <= 0 || ps.channels <= 0)
        throw FormatError(what + ": bad patch geometry");
    ps.labels.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        ps.labels[i] = r.u8();
        if (ps.labels[i] > 1) throw FormatError(what + ": label byte not 0/1");
    }
    const std::int64_t n =
        static_cast<std::int64_t>(count) * ps.channels * ps.patch_size * ps.patch_size;
    if (count > 0) {
        std::vector<float> data(static_cast<std::size_t>(n));
        r.raw(data.data(), static_cast<std::size_t>(n) * sizeof(float));
        ps.data = Tensor<float>::from_data(
            {static_cast<int>(count), ps.channels, ps.patch_size, ps.patch_size},
            std::move(data));
    }
    std::string trailer(r.remaining(), '\0');
    r.raw(trailer.data(), trailer.size());
    try {
        const json prov = json::parse(trailer);
        for (const json& p : prov) {
            PatchProvenance pp;
            pp.source = p.at("source").get<std::string>();
            pp.x = p.at("x").get<int>();
            pp.y = p.at("y").get<int>();
            pp.transform = p.at("transform").get<int>();
            ps.provenance.push_back(std::move(pp));
        }
    } catch (const json::exception& e) {
        throw FormatError(what + ": bad provenance trailer: " + e.what());
    }
    if (ps.provenance.size() != ps.labels.size())
        throw FormatError(what + ": provenance count does not match patch count");
    return ps;
}

void save_patchset(const PatchSet& ps, const std::string& path) {
    write_file(path, serialize_patchset(ps));
}

PatchSet load_patchset(const std::string& path) {
    return deserialize_patchset(read_file(path), path);
}

} // namespace pathonet
