#pragma once

#include "msplat/camera.hpp"
#include "msplat/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace msplat {

/// One view plus its ground-truth maps. Maps that the dataset does not provide
/// stay empty; the trainer rejects enabled losses without ground truth.
struct FrameRecord {
    CameraView view;
    std::string rgb_path, depth_path, normal_path, sem_path;
    std::string split = "train";
    GridF rgb;      // W x H x 3 in [0,1]
    GridF depth;    // W x H meters
    GridF normal;   // W x H x 3 world-frame unit vectors
    GridU8 labels;  // W x H class indices
};

struct SceneDataset {
    int width = 0, height = 0;
    int num_classes = 0;
    std::vector<FrameRecord> frames;
    std::vector<Vec3> points;       // initial point cloud
    std::vector<Vec3> point_colors; // in [0,1]

    std::vector<int> train_indices() const;
    std::vector<int> test_indices() const;
};

/// Loads and fully validates a dataset rooted at a cameras.json manifest.
SceneDataset load_dataset(const std::string& root);

/// Writes the dataset (manifest, per-view maps, initial points) under root.
void save_dataset(const std::string& root, const SceneDataset& dataset);

struct TrainConfig;

/// Reads a JSON config file; unknown keys are rejected, missing keys keep the
/// documented defaults.
TrainConfig load_config(const std::string& path);

} // namespace msplat
