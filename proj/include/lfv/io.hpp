#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lfv/camera.hpp"
#include "lfv/flow_field.hpp"
#include "lfv/image.hpp"
#include "lfv/pointcloud.hpp"
#include "lfv/tracks.hpp"

namespace lfv {

namespace fs = std::filesystem;

inline constexpr const char* kSequenceSchema = "lfv-sequence/1";
inline constexpr const char* kCalibrationSchema = "lfv-calibration/1";
inline constexpr const char* kDataRootVar = "LFV_DATA_ROOT";

// 8-bit PNG, gray or RGB. Values are scaled from/to [0, 1].
Image read_png(const fs::path& path);
void write_png(const Image& img, const fs::path& path);
void write_mask_png(const Mask& mask, const fs::path& path);
// Width and height from the PNG header only.
std::pair<int, int> png_size(const fs::path& path);

// Little-endian single channel PFM.
DepthMap read_pfm(const fs::path& path);
void write_pfm(const DepthMap& depth, const fs::path& path);

// ASCII PLY with object_id, point_id and a split 64-bit visibility mask.
PointCloud3D read_ply(const fs::path& path);
void write_ply(const PointCloud3D& cloud, const fs::path& path);

// Middlebury .flo. Invalid pixels are written as the 1e10 "unknown" value.
void write_flow(const FlowField& flow, const fs::path& path);
FlowField read_flow(const fs::path& path);

// One record per observation: track view object frame x y point keyframe.
void write_tracks(const TrackSet& tracks, const fs::path& path);
TrackSet read_tracks(const fs::path& path);

CameraArray read_calibration(const fs::path& path);
void write_calibration(const CameraArray& array, const fs::path& path);

struct SequenceManifest {
  int frames = 0;
  int views = 0;
  int width = 0;
  int height = 0;
  double frame_rate = 25.0;
  fs::path calibration;
  std::vector<std::vector<fs::path>> images;  // [frame][view]
  std::vector<std::vector<fs::path>> depths;  // optional, [frame][view]
  std::vector<fs::path> clouds;               // [frame]
};

// Replaces every "${LFV_DATA_ROOT}" with the environment variable; throws
// MissingFile when it is unset.
std::string expand_data_root(const std::string& raw);

// Parses and validates a manifest (schema, file existence, image sizes,
// calibration count) without loading pixel data. "${LFV_DATA_ROOT}" in any
// path is replaced by the environment variable of that name.
SequenceManifest load_manifest(const fs::path& manifest_path);

// Loads every frame, rectifies all views to the reference camera and computes
// per-view point visibility.
LightFieldSequence load_sequence(const fs::path& manifest_path);

// Writes a sequence (assumed already rectified) plus manifest; returns the
// manifest path.
fs::path save_sequence(const LightFieldSequence& seq, const fs::path& dir);

// Warps a raw-camera depth map onto the rectified reference plane.
DepthMap rectify_depth(const DepthMap& depth, const CameraCalibration& cam, const CameraCalibration& ref);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace lfv
