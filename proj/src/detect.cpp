#include "pathonet/detect.hpp"

#include <json.hpp>

#include <algorithm>
#include <thread>

#include "pathonet/raster.hpp"

namespace pathonet {

using nlohmann::json;

namespace {

std::vector<int> grid_positions(int image_extent, int window, int stride) {
    std::vector<int> pos;
    for (int p = 0; p + window <= image_extent; p += stride) pos.push_back(p);
    const int last = image_extent - window; // snap a final window flush to the edge
    if (pos.empty() || pos.back() != last) pos.push_back(last);
    return pos;
}

} // namespace

std::vector<WindowScore> score_windows(const Tensor<float>& image, const Model<float>& model,
                                       const DetectionConfig& cfg) {
    if (image.rank() != 3)
        throw ShapeError("score_windows: expected (C,H,W) image, got " + image.shape_str());
    Tensor<float> img = image;
    if (img.extent(0) == 1 && model.config.in_channels == 3) img = to_rgb(img);
    if (img.extent(0) != model.config.in_channels)
        throw ShapeError("score_windows: image channels " + std::to_string(img.extent(0)) +
                         " do not match model input " +
                         std::to_string(model.config.in_channels));
    if (model.config.in_height != cfg.window || model.config.in_width != cfg.window)
        throw ConfigError("score_windows: window " + std::to_string(cfg.window) +
                          " does not match model input " +
                          std::to_string(model.config.in_height));
    const int h = img.extent(1), w = img.extent(2);
    if (h < cfg.window || w < cfg.window)
        throw ShapeError("score_windows: image " + std::to_string(w) + "x" + std::to_string(h) +
                         " smaller than window " + std::to_string(cfg.window));
    if (cfg.stride < 1) throw ConfigError("score_windows: stride must be >= 1");

    const std::vector<int> xs = grid_positions(w, cfg.window, cfg.stride);
    const std::vector<int> ys = grid_positions(h, cfg.window, cfg.stride);

    std::vector<WindowScore> out;
    out.reserve(xs.size() * ys.size());
    for (int y : ys)
        for (int x : xs) out.push_back({x, y, 0.0f});

    const int c = img.extent(0);
    const std::int64_t window_numel =
        static_cast<std::int64_t>(c) * cfg.window * cfg.window;

    // Pure per-window scoring: any partition over workers gives identical
    // results, merged by index.
    auto score_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t start = lo; start < hi;
             start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(hi, start + static_cast<std::size_t>(cfg.batch));
            Tensor<float> batch(
                {static_cast<int>(end - start), c, cfg.window, cfg.window});
            for (std::size_t i = start; i < end; ++i) {
                float* dst = batch.data() + static_cast<std::int64_t>(i - start) * window_numel;
                for (int ic = 0; ic < c; ++ic)
                    for (int y = 0; y < cfg.window; ++y) {
                        const float* src =
                            img.data() +
                            (static_cast<std::int64_t>(ic) * h + out[i].y + y) * w + out[i].x;
                        std::copy_n(src, cfg.window,
                                    dst + (static_cast<std::int64_t>(ic) * cfg.window + y) *
                                              cfg.window);
                    }
            }
            Tensor<float> probs = forward(model, batch);
            for (std::size_t i = start; i < end; ++i)
                out[i].score = probs.at2(static_cast<int>(i - start), 1);
        }
    };

    const int workers = std::max(1, cfg.workers);
    if (workers == 1 || out.size() < 2 * static_cast<std::size_t>(cfg.batch)) {
        score_range(0, out.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (out.size() + workers - 1) / static_cast<std::size_t>(workers);
        for (int t = 0; t < workers; ++t) {
            const std::size_t lo = static_cast<std::size_t>(t) * chunk;
            const std::size_t hi = std::min(out.size(), lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(score_range, lo, hi);
        }
        for (std::thread& t : pool) t.join();
    }
    return out;
}

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
    return uni > 0 ? inter / uni : 0.0;
}

namespace {

bool detection_order(const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.y != b.box.y) return a.box.y < b.box.y;
    return a.box.x < b.box.x;
}

} // namespace

std::vector<Detection> nms(std::vector<Detection> candidates, float overlap_threshold) {
    std::sort(candidates.begin(), candidates.end(), detection_order);
    std::vector<Detection> kept;
    std::vector<bool> suppressed(candidates.size(), false);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (suppressed[i]) continue;
        kept.push_back(candidates[i]);
        for (std::size_t j = i + 1; j < candidates.size(); ++j) {
            if (suppressed[j]) continue;
            if (iou(candidates[i].box, candidates[j].box) > overlap_threshold)
                suppressed[j] = true;
        }
    }
    return kept;
}

std::vector<Detection> detect(const Tensor<float>& image, const Model<float>& model,
                              const DetectionConfig& cfg) {
    if (cfg.detection_threshold <= 0 || cfg.detection_threshold >= 1)
        throw ConfigError("detect: detection_threshold must be in (0,1)");
    if (cfg.overlap_threshold <= 0 || cfg.overlap_threshold >= 1)
        throw ConfigError("detect: overlap_threshold must be in (0,1)");

    std::vector<Detection> candidates;
    for (const WindowScore& ws : score_windows(image, model, cfg))
        if (ws.score >= cfg.detection_threshold)
            candidates.push_back(
                {Box{ws.x, ws.y, cfg.window, cfg.window, "", ws.score}, ws.score});
    return nms(std::move(candidates), cfg.overlap_threshold);
}

namespace {

void draw_outline(Tensor<float>& rgb, const Box& b, float r, float g, float bl) {
    const int h = rgb.extent(1), w = rgb.extent(2);
    auto plot = [&](int y, int x) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        rgb[(static_cast<std::int64_t>(0) * h + y) * w + x] = r;
        rgb[(static_cast<std::int64_t>(1) * h + y) * w + x] = g;
        rgb[(static_cast<std::int64_t>(2) * h + y) * w + x] = bl;
    };
    for (int x = b.x; x < b.x + b.w; ++x) {
        plot(b.y, x);
        plot(b.y + b.h - 1, x);
    }
    for (int y = b.y; y < b.y + b.h; ++y) {
        plot(y, b.x);
        plot(y, b.x + b.w - 1);
    }
}

} // namespace

void render_detections(const Tensor<float>& image, const std::vector<Detection>& detections,
                       const std::vector<Box>& truth, const std::string& path) {
    Tensor<float> rgb = to_rgb(image);
    for (const Box& b : truth) draw_outline(rgb, b, 1.0f, 1.0f, 1.0f);
    for (const Detection& d : detections) draw_outline(rgb, d.box, 1.0f, 0.0f, 0.0f);
    save_raster(rgb, path);
}

MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<Box>& truth, double match_iou) {
    std::vector<Detection> dets = detections;
    std::sort(dets.begin(), dets.end(), detection_order);

    MatchResult r;
    std::vector<bool> matched(truth.size(), false);
    for (const Detection& d : dets) {
        int best = -1;
        double best_v = 0;
        for (std::size_t t = 0; t < truth.size(); ++t) {
            if (matched[t]) continue;
            const double v = iou(d.box, truth[t]);
            if (v >= match_iou && v > best_v) { // ties keep the first truth box
                best_v = v;
                best = static_cast<int>(t);
            }
        }
        if (best >= 0) {
            matched[static_cast<std::size_t>(best)] = true;
            r.true_positives += 1;
        } else {
            r.false_positives += 1;
        }
    }
    for (bool m : matched)
        if (!m) r.false_negatives += 1;
    return r;
}

std::string detections_to_jsonl(const std::string& image_name,
                                const std::vector<Detection>& detections) {
    std::string out;
    for (const Detection& d : detections) {
        json j;
        j["image"] = image_name;
        j["x"] = d.box.x;
        j["y"] = d.box.y;
        j["w"] = d.box.w;
        j["h"] = d.box.h;
        j["score"] = d.score;
        out += j.dump() + "\n";
    }
    return out;
}

} // namespace pathonet
