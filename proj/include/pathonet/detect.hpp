#pragma once

#include <string>
#include <vector>

#include "pathonet/dataset.hpp"
#include "pathonet/net.hpp"

namespace pathonet {

struct DetectionConfig {
    int window = 20;
    int stride = 5; // default window/4
    float detection_threshold = 0.99f;
    float overlap_threshold = 0.3f;
    int batch = 256;
    int workers = 1;

    static DetectionConfig for_window(int window) {
        DetectionConfig cfg;
        cfg.window = window;
        cfg.stride = std::max(1, window / 4);
        return cfg;
    }
};

struct Detection {
    Box box; // window-sized
    float score = 0;
};

struct WindowScore {
    int x = 0;
    int y = 0;
    float score = 0;
};

/// Scores every stride-grid window, adding right/bottom edge-snapped rows
/// and columns so the last valid positions are covered. Grayscale images
/// are promoted when the model expects RGB.
std::vector<WindowScore> score_windows(const Tensor<float>& image, const Model<float>& model,
                                       const DetectionConfig& cfg);

/// Intersection over union of two positive-area boxes, in [0,1].
double iou(const Box& a, const Box& b);

/// Greedy NMS: repeatedly keep the best remaining candidate, drop those
/// overlapping it beyond the threshold. Ties break by (score desc, y asc,
/// x asc); output sorted the same way.
std::vector<Detection> nms(std::vector<Detection> candidates, float overlap_threshold);

/// score_windows -> threshold (score >= detection_threshold) -> nms.
std::vector<Detection> detect(const Tensor<float>& image, const Model<float>& model,
                              const DetectionConfig& cfg);

/// PPM overlay: truth boxes white, detections red (drawn last), 1-pixel
/// outlines clipped to bounds.
void render_detections(const Tensor<float>& image, const std::vector<Detection>& detections,
                       const std::vector<Box>& truth, const std::string& path);

struct MatchResult {
    int true_positives = 0;
    int false_positives = 0;
    int false_negatives = 0;
};

/// Greedy matching in descending score order; each truth box is matched
/// at most once, at IoU >= match_iou.
MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<Box>& truth, double match_iou = 0.3);

/// JSON-lines record per detection: {"image":..., "x","y","w","h","score"}.
std::string detections_to_jsonl(const std::string& image_name,
                                const std::vector<Detection>& detections);

} // namespace pathonet
