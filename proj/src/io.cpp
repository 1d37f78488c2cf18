#include "lfv/io.hpp"

#include <png.h>

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace lfv {

using nlohmann::json;

namespace {

void require_file(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::MissingFile, "missing file: " + path.string());
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string read_text(const fs::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) fail(ErrorCode::MissingFile, "cannot write " + path.string());
}

// ---------------------------------------------------------------- PNG

Image read_png(const fs::path& path) {
  require_file(path);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    fail(ErrorCode::ParseError, "cannot decode png " + path.string() + ": " + png.message);
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr))
    fail(ErrorCode::ParseError, "cannot decode png " + path.string() + ": " + png.message);
  Image img(static_cast<int>(png.width), static_cast<int>(png.height), gray ? 1 : 3);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data()[i] = buf[i] / 255.0f;
  return img;
}

void write_png(const Image& img, const fs::path& path) {
  ensure_parent(path);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(img.data().size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data()[i], 0.0f, 1.0f) * 255.0f));
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr))
    fail(ErrorCode::MissingFile, "cannot write png " + path.string() + ": " + png.message);
}

void write_mask_png(const Mask& mask, const fs::path& path) {
  Image img(mask.width(), mask.height(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) img.data()[i] = mask[i] ? 1.0f : 0.0f;
  write_png(img, path);
}

std::pair<int, int> png_size(const fs::path& path) {
  require_file(path);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    fail(ErrorCode::ParseError, "cannot decode png " + path.string());
  std::pair<int, int> size{static_cast<int>(png.width), static_cast<int>(png.height)};
  png_image_free(&png);
  return size;
}

// ---------------------------------------------------------------- PFM

DepthMap read_pfm(const fs::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  in.get();
  if (magic != "Pf") fail(ErrorCode::BadMagic, "not a single-channel PFM: " + path.string());
  if (!in || w <= 0 || h <= 0) fail(ErrorCode::TruncatedFile, "bad PFM header: " + path.string());
  if (scale >= 0) fail(ErrorCode::SchemaMismatch, "big-endian PFM not supported");
  DepthMap depth(w, h);
  std::vector<float> row(w);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(w * sizeof(float)));
    if (!in) fail(ErrorCode::TruncatedFile, "truncated PFM: " + path.string());
    for (int x = 0; x < w; ++x) depth(x, y) = row[x];
  }
  return depth;
}

void write_pfm(const DepthMap& depth, const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  out << "Pf\n" << depth.width() << ' ' << depth.height() << "\n-1\n";
  for (int y = depth.height() - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(&depth(0, y)),
              static_cast<std::streamsize>(depth.width() * sizeof(float)));
  if (!out) fail(ErrorCode::MissingFile, "cannot write " + path.string());
}

// ---------------------------------------------------------------- PLY

PointCloud3D read_ply(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t count = 0;
  int line_no = 0;
  std::vector<std::string> props;
  bool header_done = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line != "ply") fail(ErrorCode::BadMagic, "not a PLY file: " + path.string());
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") fail(ErrorCode::SchemaMismatch, "only ascii PLY supported");
    } else if (tok == "element") {
      std::string name;
      ls >> name >> count;
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (tok == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) fail(ErrorCode::ParseError, "PLY header not terminated: " + path.string());
  auto col = [&](const std::string& name) {
    auto it = std::find(props.begin(), props.end(), name);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int ix = col("x"), iy = col("y"), iz = col("z");
  if (ix < 0 || iy < 0 || iz < 0) fail(ErrorCode::SchemaMismatch, "PLY lacks x/y/z");
  const int iobj = col("object_id"), iid = col("point_id");
  const int ilo = col("visibility_lo"), ihi = col("visibility_hi");

  PointCloud3D cloud;
  std::vector<std::string> fields(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) fail(ErrorCode::TruncatedFile, "PLY ends early: " + path.string());
    ++line_no;
    std::istringstream ls(line);
    for (auto& f : fields)
      if (!(ls >> f)) fail(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no));
    try {
      const Vec3 p(std::stod(fields[ix]), std::stod(fields[iy]), std::stod(fields[iz]));
      std::uint64_t vis = 0;
      if (ilo >= 0) vis |= std::stoull(fields[ilo]);
      if (ihi >= 0) vis |= std::stoull(fields[ihi]) << 32;
      cloud.push_back(p, vis, iobj >= 0 ? std::stoi(fields[iobj]) : 0,
                      iid >= 0 ? std::stoll(fields[iid]) : static_cast<std::int64_t>(i));
    } catch (const std::logic_error&) {
      fail(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no));
    }
  }
  return cloud;
}

void write_ply(const PointCloud3D& cloud, const fs::path& path) {
  std::ostringstream out;
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property int object_id\nproperty int point_id\n"
      << "property uint visibility_lo\nproperty uint visibility_hi\nend_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << ' '
        << cloud.object_ids[i] << ' ' << cloud.point_ids[i] << ' '
        << (cloud.visibility[i] & 0xffffffffu) << ' ' << (cloud.visibility[i] >> 32) << '\n';
  }
  write_text(path, out.str());
}

// ---------------------------------------------------------------- .flo

namespace {

constexpr float kUnknownFlow = 1e10f;
constexpr float kUnknownThreshold = 1e9f;

template <typename T>
void put_le(std::string& buf, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <typename T>
T get_le(const std::string& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

}  // namespace

void write_flow(const FlowField& flow, const fs::path& path) {
  std::string buf = "PIEH";
  put_le<std::int32_t>(buf, flow.width());
  put_le<std::int32_t>(buf, flow.height());
  buf.reserve(12 + flow.u.size() * 8);
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      const bool ok = flow.valid(x, y) != 0;
      if (ok && !(std::isfinite(flow.u(x, y)) && std::isfinite(flow.v(x, y))))
        fail(ErrorCode::InvalidArgument, "non-finite flow on a valid pixel");
      put_le<float>(buf, ok ? flow.u(x, y) : kUnknownFlow);
      put_le<float>(buf, ok ? flow.v(x, y) : kUnknownFlow);
    }
  write_text(path, buf);
}

FlowField read_flow(const fs::path& path) {
  const std::string buf = read_text(path);
  if (buf.size() < 4) fail(ErrorCode::TruncatedFile, "flo shorter than magic: " + path.string());
  if (buf.compare(0, 4, "PIEH") != 0) fail(ErrorCode::BadMagic, "bad .flo magic: " + path.string());
  if (buf.size() < 12) fail(ErrorCode::TruncatedFile, "flo header truncated: " + path.string());
  const auto w = get_le<std::int32_t>(buf, 4);
  const auto h = get_le<std::int32_t>(buf, 8);
  if (w < 0 || h < 0) fail(ErrorCode::ParseError, "negative .flo size");
  if (buf.size() < 12 + static_cast<std::size_t>(w) * h * 8)
    fail(ErrorCode::TruncatedFile, "flo payload truncated: " + path.string());
  FlowField flow(w, h);
  std::size_t off = 12;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x, off += 8) {
      const float u = get_le<float>(buf, off);
      const float v = get_le<float>(buf, off + 4);
      const bool unknown = std::abs(u) > kUnknownThreshold || std::abs(v) > kUnknownThreshold;
      flow.u(x, y) = unknown ? 0.0f : u;
      flow.v(x, y) = unknown ? 0.0f : v;
      flow.valid(x, y) = unknown ? 0 : 1;
    }
  return flow;
}

// ---------------------------------------------------------------- tracks

void write_tracks(const TrackSet& tracks, const fs::path& path) {
  std::ostringstream out;
  out << "# lfv-tracks 1\n# track view object frame x y point keyframe\n";
  for (const auto& t : tracks.tracks) {
    if (t.observations.empty()) {
      // Keeps empty tracks round-trippable.
      out << t.id << ' ' << t.view << ' ' << t.object << " -1 0 0 -1 " << t.keyframe << '\n';
      continue;
    }
    for (const auto& [frame, obs] : t.observations)
      out << t.id << ' ' << t.view << ' ' << t.object << ' ' << frame << ' '
          << format_double(obs.pixel.x()) << ' ' << format_double(obs.pixel.y()) << ' '
          << obs.point_id << ' ' << t.keyframe << '\n';
  }
  write_text(path, out.str());
}

TrackSet read_tracks(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  int line_no = 0;
  TrackSet set;
  std::map<int, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int id, view, object, frame, keyframe;
    double x, y;
    long long point;
    std::string extra;
    if (!(ls >> id >> view >> object >> frame >> x >> y >> point >> keyframe) || (ls >> extra))
      fail(ErrorCode::ParseError, path.string() + ": line " + std::to_string(line_no));
    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, set.tracks.size()).first;
      set.tracks.push_back(Track{id, keyframe, view, object, {}});
    }
    Track& t = set.tracks[it->second];
    if (t.view != view || t.object != object || t.keyframe != keyframe)
      fail(ErrorCode::ParseError,
           path.string() + ": line " + std::to_string(line_no) + " contradicts track header");
    if (frame >= 0) t.observations[frame] = TrackObservation{Vec2(x, y), point};
  }
  return set;
}

// ---------------------------------------------------------------- calibration

namespace {

json mat_to_json(const Eigen::MatrixXd& m) {
  json arr = json::array();
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  return arr;
}

template <int R, int C>
Eigen::Matrix<double, R, C> json_to_mat(const json& j, const char* what) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(R * C))
    fail(ErrorCode::SchemaMismatch, std::string("bad field ") + what);
  Eigen::Matrix<double, R, C> m;
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) m(r, c) = j[r * C + c].get<double>();
  return m;
}

}  // namespace

CameraArray read_calibration(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  if (j.value("schema", "") != kCalibrationSchema)
    fail(ErrorCode::SchemaMismatch, "unsupported calibration schema in " + path.string());
  try {
    std::vector<CameraCalibration> cams;
    for (const auto& jc : j.at("cameras")) {
      CameraCalibration c;
      c.intrinsics = json_to_mat<3, 3>(jc.at("K"), "K");
      c.rotation = json_to_mat<3, 3>(jc.at("R"), "R");
      c.translation = json_to_mat<3, 1>(jc.at("t"), "t");
      if (jc.contains("distortion")) {
        const auto d = json_to_mat<5, 1>(jc.at("distortion"), "distortion");
        c.distortion = Distortion{d[0], d[1], d[2], d[3], d[4]};
      }
      c.grid = GridPos{jc.at("grid").at(0).get<int>(), jc.at("grid").at(1).get<int>()};
      cams.push_back(c);
    }
    return CameraArray(std::move(cams), j.at("rows").get<int>(), j.at("cols").get<int>(),
                       j.at("reference").get<int>());
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
}

void write_calibration(const CameraArray& array, const fs::path& path) {
  json j;
  j["schema"] = kCalibrationSchema;
  j["rows"] = array.rows();
  j["cols"] = array.cols();
  j["reference"] = array.reference();
  j["cameras"] = json::array();
  for (const auto& c : array.cameras()) {
    const auto& d = c.distortion;
    j["cameras"].push_back({{"grid", {c.grid.row, c.grid.col}},
                            {"K", mat_to_json(c.intrinsics)},
                            {"R", mat_to_json(c.rotation)},
                            {"t", mat_to_json(c.translation)},
                            {"distortion", {d.k1, d.k2, d.k3, d.p1, d.p2}}});
  }
  write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- manifest

std::string expand_data_root(const std::string& raw) {
  std::string s = raw;
  const std::string token = std::string("${") + kDataRootVar + "}";
  for (auto pos = s.find(token); pos != std::string::npos; pos = s.find(token)) {
    const char* root = std::getenv(kDataRootVar);
    if (!root) fail(ErrorCode::MissingFile, std::string(kDataRootVar) + " is not set but used in " + raw);
    s.replace(pos, token.size(), root);
  }
  return s;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& raw) {
  fs::path p(expand_data_root(raw));
  return p.is_absolute() ? p : base / p;
}

}  // namespace

SequenceManifest load_manifest(const fs::path& manifest_path) {
  json j;
  try {
    j = json::parse(read_text(manifest_path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, manifest_path.string() + ": " + e.what());
  }
  if (j.value("schema", "") != kSequenceSchema)
    fail(ErrorCode::SchemaMismatch, "unsupported manifest schema in " + manifest_path.string());
  const fs::path base = manifest_path.parent_path();
  SequenceManifest m;
  try {
    m.frames = j.at("frames").get<int>();
    m.views = j.at("views").get<int>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.frame_rate = j.value("frame_rate", 25.0);
    m.calibration = resolve(base, j.at("calibration").get<std::string>());
    for (const auto& frame : j.at("images")) {
      auto& row = m.images.emplace_back();
      for (const auto& p : frame) row.push_back(resolve(base, p.get<std::string>()));
    }
    if (j.contains("depths"))
      for (const auto& frame : j.at("depths")) {
        auto& row = m.depths.emplace_back();
        for (const auto& p : frame) row.push_back(resolve(base, p.get<std::string>()));
      }
    if (j.contains("clouds"))
      for (const auto& p : j.at("clouds")) m.clouds.push_back(resolve(base, p.get<std::string>()));
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, manifest_path.string() + ": " + e.what());
  }

  if (static_cast<int>(m.images.size()) != m.frames)
    fail(ErrorCode::SchemaMismatch, "images list does not match frame count");
  if (!m.depths.empty() && static_cast<int>(m.depths.size()) != m.frames)
    fail(ErrorCode::SchemaMismatch, "depths list does not match frame count");
  if (!m.clouds.empty() && static_cast<int>(m.clouds.size()) != m.frames)
    fail(ErrorCode::SchemaMismatch, "clouds list does not match frame count");
  require_file(m.calibration);
  for (int f = 0; f < m.frames; ++f) {
    if (static_cast<int>(m.images[f].size()) != m.views)
      fail(ErrorCode::SchemaMismatch, "frame " + std::to_string(f) + " view count mismatch");
    for (const auto& p : m.images[f]) {
      const auto [w, h] = png_size(p);
      if (w != m.width || h != m.height)
        fail(ErrorCode::SchemaMismatch, "image size mismatch: " + p.string());
    }
    if (!m.depths.empty())
      for (const auto& p : m.depths[f]) require_file(p);
    if (!m.clouds.empty()) require_file(m.clouds[f]);
  }
  const CameraArray array = read_calibration(m.calibration);
  if (array.size() != m.views)
    fail(ErrorCode::CalibrationCountMismatch, "calibration has " + std::to_string(array.size()) +
                                                  " cameras, manifest lists " + std::to_string(m.views));
  return m;
}

DepthMap rectify_depth(const DepthMap& depth, const CameraCalibration& cam, const CameraCalibration& ref) {
  const CameraCalibration rect = rectified_calibration(cam, ref);
  DepthMap out(depth.width(), depth.height(), 0.0f);
  const Mat3 rot = cam.rotation * ref.rotation.transpose();
  const Mat3 k_ref_inv = ref.intrinsics.inverse();
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) {
      const Vec3 ray = rot * (k_ref_inv * Vec3(x, y, 1.0));
      if (!(ray.z() > 0.0)) continue;
      const Vec2 d = cam.distortion.apply(Vec2(ray.x() / ray.z(), ray.y() / ray.z()));
      const Vec3 src = cam.intrinsics * Vec3(d.x(), d.y(), 1.0);
      float z = 0.0f;
      if (!sample_nearest(depth, src.x(), src.y(), z) || !(z > 0.0f)) continue;
      const Vec3 world = backproject_pixel(Vec2(src.x(), src.y()), z, cam);
      const auto p = try_project(world, rect);
      if (p) out(x, y) = static_cast<float>(p->depth);
    }
  return out;
}

LightFieldSequence load_sequence(const fs::path& manifest_path) {
  const SequenceManifest m = load_manifest(manifest_path);
  const CameraArray raw = read_calibration(m.calibration);
  LightFieldSequence seq;
  seq.array = rectified_array(raw);
  seq.width = m.width;
  seq.height = m.height;
  seq.frame_rate = m.frame_rate;
  seq.frames.resize(m.frames);
  const auto& ref = raw.reference_camera();
  for (int f = 0; f < m.frames; ++f) {
    LightFieldFrame& frame = seq.frames[f];
    if (!m.clouds.empty()) frame.cloud = read_ply(m.clouds[f]);
    for (int v = 0; v < m.views; ++v) {
      frame.views.push_back(rectify_to_reference(read_png(m.images[f][v]), raw.camera(v), ref).image);
      if (!m.depths.empty())
        frame.depths.push_back(rectify_depth(read_pfm(m.depths[f][v]), raw.camera(v), ref));
      else
        frame.depths.push_back(splat_depth(frame.cloud, seq.array.camera(v), m.width, m.height));
    }
    compute_visibility(frame.cloud, seq.array, frame.depths);
  }
  return seq;
}

fs::path save_sequence(const LightFieldSequence& seq, const fs::path& dir) {
  fs::create_directories(dir);
  write_calibration(seq.array, dir / "calibration.json");
  json j;
  j["schema"] = kSequenceSchema;
  j["frames"] = seq.num_frames();
  j["views"] = seq.num_views();
  j["width"] = seq.width;
  j["height"] = seq.height;
  j["frame_rate"] = seq.frame_rate;
  j["calibration"] = "calibration.json";
  j["images"] = json::array();
  j["depths"] = json::array();
  j["clouds"] = json::array();
  for (int f = 0; f < seq.num_frames(); ++f) {
    char frame_dir[32];
    std::snprintf(frame_dir, sizeof frame_dir, "frames/%04d", f);
    json imgs = json::array(), deps = json::array();
    for (int v = 0; v < seq.num_views(); ++v) {
      char name[32];
      std::snprintf(name, sizeof name, "/view%02d", v);
      const std::string stem = std::string(frame_dir) + name;
      write_png(seq.frames[f].views[v], dir / (stem + ".png"));
      imgs.push_back(stem + ".png");
      if (!seq.frames[f].depths.empty()) {
        write_pfm(seq.frames[f].depths[v], dir / (stem + ".pfm"));
        deps.push_back(stem + ".pfm");
      }
    }
    j["images"].push_back(imgs);
    j["depths"].push_back(deps);
    write_ply(seq.frames[f].cloud, dir / (std::string(frame_dir) + "/cloud.ply"));
    j["clouds"].push_back(std::string(frame_dir) + "/cloud.ply");
  }
  const fs::path manifest = dir / "manifest.json";
  write_text(manifest, j.dump(2) + "\n");
  return manifest;
}

}  // namespace lfv
