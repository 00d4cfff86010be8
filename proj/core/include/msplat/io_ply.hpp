#pragma once

#include "msplat/scene.hpp"

#include <string>
#include <vector>

namespace msplat {

/// Binary little-endian PLY with the usual splat properties (x,y,z; f_dc_*;
/// f_rest_*; opacity; scale_0..2; rot_0..3) extended with sem_0..C_o-1 and
/// grad_k. Written as float64 so save/load round-trips exactly; the reader
/// also accepts float32 files from other tools, defaulting missing semantics
/// to 0 and missing grad_k to 0.9.
void save_scene_ply(const std::string& path, const Scene& scene);
Scene load_scene_ply(const std::string& path);

/// Plain xyz + uint8 rgb point cloud.
void save_points_ply(const std::string& path, const std::vector<Vec3>& points,
                     const std::vector<Vec3>& colors);
void load_points_ply(const std::string& path, std::vector<Vec3>& points,
                     std::vector<Vec3>& colors);

} // namespace msplat
