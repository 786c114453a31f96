#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geometry.hpp"
#include "graph_init.hpp"
#include "link_gae.hpp"
#include "mesh_builder.hpp"
#include "reconstruction.hpp"
#include "skeleton_optimizer.hpp"

namespace skelmesh {

/// Malformed or unreadable input. line() is 0 when the error has no line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                           what),
        path_(path),
        line_(line) {}

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw ParseError(path, 0, "read failure");
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error(path + ": write failure");
}

/// Lines of `text` with their 1-based numbers; a trailing '\r' is dropped.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const std::size_t end = std::min(text_.find('\n', pos_), text_.size());
    line = text_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++number_;
    return true;
  }
  std::size_t number() const { return number_; }
  std::size_t offset() const { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t number_ = 0;
};

inline std::string lowercase_extension(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

inline Points parse_xyz(const std::string& path, std::string_view text) {
  std::vector<Vec3> pts;
  LineReader lines(text);
  std::string_view line;
  while (lines.next(line)) {
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3) {
      throw ParseError(path, lines.number(),
                       "expected 3 coordinates, found " + std::to_string(tok.size()) + " fields");
    }
    Vec3 p;
    for (int k = 0; k < 3; ++k) {
      if (!parse_number(tok[static_cast<std::size_t>(k)], p[k])) {
        throw ParseError(path, lines.number(),
                         "malformed number '" + std::string(tok[static_cast<std::size_t>(k)]) + "'");
      }
      if (!std::isfinite(p[k])) throw ParseError(path, lines.number(), "non-finite coordinate");
    }
    pts.push_back(p);
  }
  return to_points(pts);
}

struct PlyProperty {
  std::string name;
  std::size_t size = 0;
  char kind = 'f';  // 'i' signed, 'u' unsigned, 'f' floating
};

inline bool ply_type(std::string_view t, PlyProperty& p) {
  static const std::map<std::string_view, std::pair<std::size_t, char>> types = {
      {"char", {1, 'i'}},   {"int8", {1, 'i'}},    {"uchar", {1, 'u'}},   {"uint8", {1, 'u'}},
      {"short", {2, 'i'}},  {"int16", {2, 'i'}},   {"ushort", {2, 'u'}},  {"uint16", {2, 'u'}},
      {"int", {4, 'i'}},    {"int32", {4, 'i'}},   {"uint", {4, 'u'}},    {"uint32", {4, 'u'}},
      {"float", {4, 'f'}},  {"float32", {4, 'f'}}, {"double", {8, 'f'}},  {"float64", {8, 'f'}}};
  const auto it = types.find(t);
  if (it == types.end()) return false;
  p.size = it->second.first;
  p.kind = it->second.second;
  return true;
}

inline double read_binary_le(const char* data, const PlyProperty& p) {
  unsigned char b[8];
  std::memcpy(b, data, p.size);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + p.size);
  switch (p.kind) {
    case 'f':
      if (p.size == 4) {
        float v;
        std::memcpy(&v, b, 4);
        return v;
      } else {
        double v;
        std::memcpy(&v, b, 8);
        return v;
      }
    case 'i': {
      std::int64_t v = 0;
      std::memcpy(&v, b, p.size);
      const int shift = 64 - 8 * static_cast<int>(p.size);
      return static_cast<double>((v << shift) >> shift);
    }
    default: {
      std::uint64_t v = 0;
      std::memcpy(&v, b, p.size);
      return static_cast<double>(v);
    }
  }
}

/// Vertex positions of an ascii or binary_little_endian PLY whose first
/// element is `vertex`. Extra scalar properties and later elements are
/// ignored.
inline Points parse_ply(const std::string& path, std::string_view text) {
  LineReader lines(text);
  std::string_view line;
  if (!lines.next(line) || line != "ply") throw ParseError(path, 1, "missing 'ply' magic");

  bool binary = false, have_format = false, in_vertex = false;
  std::size_t vertex_count = 0, element_index = 0;
  std::vector<PlyProperty> props;
  for (;;) {
    if (!lines.next(line)) throw ParseError(path, lines.number(), "unterminated PLY header");
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() != 3) throw ParseError(path, lines.number(), "malformed format line");
      if (tok[1] == "ascii") {
        binary = false;
      } else if (tok[1] == "binary_little_endian") {
        binary = true;
      } else {
        throw ParseError(path, lines.number(), "unsupported PLY format '" + std::string(tok[1]) + "'");
      }
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError(path, lines.number(), "malformed element line");
      in_vertex = tok[1] == "vertex";
      if (in_vertex && element_index != 0) {
        throw ParseError(path, lines.number(), "vertex must be the first element");
      }
      if (in_vertex && !parse_number(tok[2], vertex_count)) {
        throw ParseError(path, lines.number(), "malformed vertex count");
      }
      ++element_index;
    } else if (tok[0] == "property") {
      if (!in_vertex) continue;
      if (tok.size() != 3) {
        throw ParseError(path, lines.number(), "unsupported vertex property (lists are not allowed)");
      }
      PlyProperty p;
      p.name = std::string(tok[2]);
      if (!ply_type(tok[1], p)) {
        throw ParseError(path, lines.number(), "unknown property type '" + std::string(tok[1]) + "'");
      }
      props.push_back(p);
    } else {
      throw ParseError(path, lines.number(), "unexpected header line");
    }
  }
  if (!have_format) throw ParseError(path, lines.number(), "missing format line");

  int slot[3] = {-1, -1, -1};
  for (std::size_t k = 0; k < props.size(); ++k) {
    for (int c = 0; c < 3; ++c) {
      if (props[k].name == std::string(1, static_cast<char>('x' + c))) slot[c] = static_cast<int>(k);
    }
  }
  if (slot[0] < 0 || slot[1] < 0 || slot[2] < 0) {
    throw ParseError(path, lines.number(), "vertex element lacks x, y, z properties");
  }

  Points pts(static_cast<Eigen::Index>(vertex_count), 3);
  if (binary) {
    std::size_t stride = 0;
    std::vector<std::size_t> offset;
    for (const auto& p : props) {
      offset.push_back(stride);
      stride += p.size;
    }
    const std::size_t start = lines.offset();
    if (text.size() < start || (text.size() - start) / std::max<std::size_t>(stride, 1) < vertex_count) {
      throw ParseError(path, 0, "binary vertex data truncated");
    }
    for (std::size_t i = 0; i < vertex_count; ++i) {
      const char* rec = text.data() + start + i * stride;
      for (int c = 0; c < 3; ++c) {
        const auto k = static_cast<std::size_t>(slot[c]);
        const double v = read_binary_le(rec + offset[k], props[k]);
        if (!std::isfinite(v)) {
          throw ParseError(path, 0, "non-finite coordinate in vertex " + std::to_string(i));
        }
        pts(static_cast<Eigen::Index>(i), c) = v;
      }
    }
    return pts;
  }

  for (std::size_t i = 0; i < vertex_count; ++i) {
    if (!lines.next(line)) throw ParseError(path, lines.number(), "vertex data truncated");
    const auto tok = split_ws(line);
    if (tok.size() != props.size()) {
      throw ParseError(path, lines.number(),
                       "expected " + std::to_string(props.size()) + " vertex fields");
    }
    for (int c = 0; c < 3; ++c) {
      const auto k = static_cast<std::size_t>(slot[c]);
      double v;
      if (!parse_number(tok[k], v)) {
        throw ParseError(path, lines.number(), "malformed number '" + std::string(tok[k]) + "'");
      }
      if (!std::isfinite(v)) throw ParseError(path, lines.number(), "non-finite coordinate");
      pts(static_cast<Eigen::Index>(i), c) = v;
    }
  }
  return pts;
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace detail

/// Loads an XYZ (.xyz, .txt, .pts) or PLY (.ply) point file.
inline PointCloud load_points(const std::string& path) {
  const std::string ext = detail::lowercase_extension(path);
  const std::string text = detail::read_file(path);
  PointCloud cloud;
  cloud.source_id = path;
  if (ext == ".ply") {
    cloud.points = detail::parse_ply(path, text);
  } else if (ext == ".xyz" || ext == ".txt" || ext == ".pts") {
    cloud.points = detail::parse_xyz(path, text);
  } else {
    throw ParseError(path, 0, "unrecognized point file extension '" + ext + "'");
  }
  if (cloud.size() < kMinCloudSize) {
    throw ParseError(path, 0,
                     "need at least " + std::to_string(kMinCloudSize) + " points, found " +
                         std::to_string(cloud.size()));
  }
  return cloud;
}

inline std::string format_points_xyz(const Points& pts) {
  std::string out;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    out += detail::format_real(pts(i, 0)) + ' ' + detail::format_real(pts(i, 1)) + ' ' +
           detail::format_real(pts(i, 2)) + '\n';
  }
  return out;
}

inline void save_points_xyz(const Points& pts, const std::string& path) {
  detail::write_file(path, format_points_xyz(pts));
}

inline void save_points_ply(const Points& pts, const std::string& path) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(pts.rows()) +
                    "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  out += format_points_xyz(pts);
  detail::write_file(path, out);
}

/// SKEL text: "SKEL 1", "V n" + n "x y z r", "E m" + m "i j", "F k" + k "i j k".
inline std::string format_skel(const SkeletalMesh& mesh) {
  std::string out = "SKEL 1\nV " + std::to_string(mesh.spheres.size()) + '\n';
  for (const auto& s : mesh.spheres) {
    out += detail::format_real(s.center.x()) + ' ' + detail::format_real(s.center.y()) + ' ' +
           detail::format_real(s.center.z()) + ' ' + detail::format_real(s.radius) + '\n';
  }
  out += "E " + std::to_string(mesh.edges.size()) + '\n';
  for (const auto& e : mesh.edges) out += std::to_string(e[0]) + ' ' + std::to_string(e[1]) + '\n';
  out += "F " + std::to_string(mesh.faces.size()) + '\n';
  for (const auto& f : mesh.faces) {
    out += std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' + std::to_string(f[2]) + '\n';
  }
  return out;
}

inline void save_skel(const SkeletalMesh& mesh, const std::string& path) {
  mesh.validate();
  detail::write_file(path, format_skel(mesh));
}

/// Parses SKEL text. Format errors raise ParseError; a well-formed file
/// describing an invalid mesh raises std::invalid_argument.
inline SkeletalMesh parse_skel(const std::string& path, std::string_view text) {
  detail::LineReader lines(text);
  std::string_view line;
  auto next_fields = [&](std::size_t expected, const char* what) {
    if (!lines.next(line)) throw ParseError(path, lines.number() + 1, std::string("missing ") + what);
    auto tok = detail::split_ws(line);
    if (tok.size() != expected) {
      throw ParseError(path, lines.number(),
                       std::string("expected ") + std::to_string(expected) + " fields in " + what);
    }
    return tok;
  };
  auto count_line = [&](const char* tag) {
    const auto tok = next_fields(2, tag);
    std::size_t n = 0;
    if (tok[0] != tag || !detail::parse_number(tok[1], n)) {
      throw ParseError(path, lines.number(), std::string("expected '") + tag + " <count>'");
    }
    return n;
  };
  auto index = [&](std::string_view s) {
    std::size_t v = 0;
    if (!detail::parse_number(s, v)) {
      throw ParseError(path, lines.number(), "malformed index '" + std::string(s) + "'");
    }
    return v;
  };

  const auto header = next_fields(2, "header");
  if (header[0] != "SKEL" || header[1] != "1") throw ParseError(path, 1, "expected header 'SKEL 1'");

  SkeletalMesh mesh;
  const std::size_t nv = count_line("V");
  for (std::size_t i = 0; i < nv; ++i) {
    const auto tok = next_fields(4, "vertex record");
    double v[4];
    for (std::size_t k = 0; k < 4; ++k) {
      if (!detail::parse_number(tok[k], v[k]) || !std::isfinite(v[k])) {
        throw ParseError(path, lines.number(), "malformed number '" + std::string(tok[k]) + "'");
      }
    }
    mesh.spheres.push_back({Vec3(v[0], v[1], v[2]), v[3]});
  }
  const std::size_t ne = count_line("E");
  for (std::size_t i = 0; i < ne; ++i) {
    const auto tok = next_fields(2, "edge record");
    mesh.edges.push_back({index(tok[0]), index(tok[1])});
  }
  const std::size_t nf = count_line("F");
  for (std::size_t i = 0; i < nf; ++i) {
    const auto tok = next_fields(3, "face record");
    mesh.faces.push_back({index(tok[0]), index(tok[1]), index(tok[2])});
  }
  while (lines.next(line)) {
    if (!detail::split_ws(line).empty()) throw ParseError(path, lines.number(), "trailing content");
  }
  try {
    mesh.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return mesh;
}

inline SkeletalMesh load_skel(const std::string& path) {
  return parse_skel(path, detail::read_file(path));
}

/// Skeleton OBJ: v per sphere center, l per curve edge (on no face), f per
/// face. Indices are 1-based.
inline std::string format_obj(const SkeletalMesh& mesh) {
  if (mesh.empty()) throw std::invalid_argument("export_obj: empty mesh");
  std::string out;
  for (const auto& s : mesh.spheres) {
    out += "v " + detail::format_real(s.center.x()) + ' ' + detail::format_real(s.center.y()) + ' ' +
           detail::format_real(s.center.z()) + '\n';
  }
  for (const auto& [e, faces] : edge_face_counts(mesh)) {
    if (faces == 0) out += "l " + std::to_string(e[0] + 1) + ' ' + std::to_string(e[1] + 1) + '\n';
  }
  for (const auto& f : mesh.faces) {
    out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' +
           std::to_string(f[2] + 1) + '\n';
  }
  return out;
}

/// Envelope OBJ: point vertices only.
inline std::string format_obj(const Points& pts) {
  if (pts.rows() == 0) throw std::invalid_argument("export_obj: no points");
  std::string out;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    out += "v " + detail::format_real(pts(i, 0)) + ' ' + detail::format_real(pts(i, 1)) + ' ' +
           detail::format_real(pts(i, 2)) + '\n';
  }
  return out;
}

inline void export_obj(const SkeletalMesh& mesh, const std::string& path) {
  detail::write_file(path, format_obj(mesh));
}

inline void export_obj(const EnvelopeSamples& env, const std::string& path) {
  detail::write_file(path, format_obj(env.points));
}

/// All pipeline settings, read from and written to flat key=value text.
struct RunConfig {
  std::string input;
  std::string output;
  OptimizerConfig optimizer;
  PriorConfig prior;
  GAEConfig gae;
  MeshBuildConfig mesh;

  /// Sets one key. Throws std::invalid_argument on an unknown key or a
  /// malformed value. `seed` sets both the optimizer and the GAE seed.
  void set(const std::string& key, const std::string& value) {
    auto as_size = [&](std::size_t& dst) {
      if (!detail::parse_number(value, dst)) bad(key, value);
    };
    auto as_u64 = [&](std::uint64_t& dst) {
      if (!detail::parse_number(value, dst)) bad(key, value);
    };
    auto as_real = [&](double& dst) {
      if (!detail::parse_number(value, dst) || !std::isfinite(dst)) bad(key, value);
    };

    if (key == "input") {
      input = value;
    } else if (key == "output") {
      output = value;
    } else if (key == "seed") {
      as_u64(optimizer.seed);
      gae.seed = optimizer.seed;
    } else if (key == "skeletal_count") {
      as_size(optimizer.skeletal_count);
    } else if (key == "downsample_count") {
      as_size(optimizer.downsample_count);
    } else if (key == "lambda1") {
      as_real(optimizer.lambda1);
    } else if (key == "lambda2") {
      as_real(optimizer.lambda2);
    } else if (key == "pretrain_iters") {
      as_size(optimizer.pretrain_iters);
    } else if (key == "main_iters") {
      as_size(optimizer.main_iters);
    } else if (key == "learning_rate") {
      as_real(optimizer.learning_rate);
    } else if (key == "beta1") {
      as_real(optimizer.beta1);
    } else if (key == "beta2") {
      as_real(optimizer.beta2);
    } else if (key == "epsilon") {
      as_real(optimizer.epsilon);
    } else if (key == "init_scale") {
      as_real(optimizer.init_scale);
    } else if (key == "optimizer_seed") {
      as_u64(optimizer.seed);
    } else if (key == "residual_mode") {
      if (value == "signed") {
        optimizer.residual_mode = ResidualMode::kSigned;
      } else if (value == "squared") {
        optimizer.residual_mode = ResidualMode::kSquared;
      } else {
        bad(key, value);
      }
    } else if (key == "k_far") {
      as_size(prior.k_far);
    } else if (key == "gae_iterations") {
      as_size(gae.iterations);
    } else if (key == "gae_learning_rate") {
      as_real(gae.learning_rate);
    } else if (key == "gae_seed") {
      as_u64(gae.seed);
    } else if (key == "gcn_layers") {
      as_size(gae.architecture.layers);
    } else if (key == "gcn_hidden") {
      as_size(gae.architecture.hidden);
    } else if (key == "gcn_latent") {
      as_size(gae.architecture.latent);
    } else if (key == "link_threshold") {
      as_real(gae.link_threshold);
      mesh.link_threshold = gae.link_threshold;
    } else if (key == "max_loop") {
      as_size(mesh.max_loop);
    } else if (key == "fill_point_threshold") {
      as_size(mesh.fill_point_threshold);
    } else if (key == "radius_distance") {
      if (value == "simplex") {
        mesh.radius_distance = RadiusDistance::kSimplex;
      } else if (value == "vertex") {
        mesh.radius_distance = RadiusDistance::kVertex;
      } else {
        bad(key, value);
      }
    } else {
      throw std::invalid_argument("unknown configuration key '" + key + "'");
    }
  }

  void validate() const {
    optimizer.validate();
    gae.validate();
    mesh.validate();
  }

  /// Every key with its current value, one "key=value" per line.
  std::string to_text() const {
    const auto r = detail::format_real;
    std::string out;
    auto put = [&](const std::string& k, const std::string& v) { out += k + '=' + v + '\n'; };
    if (!input.empty()) put("input", input);
    if (!output.empty()) put("output", output);
    put("optimizer_seed", std::to_string(optimizer.seed));
    put("skeletal_count", std::to_string(optimizer.skeletal_count));
    put("downsample_count", std::to_string(optimizer.downsample_count));
    put("lambda1", r(optimizer.lambda1));
    put("lambda2", r(optimizer.lambda2));
    put("pretrain_iters", std::to_string(optimizer.pretrain_iters));
    put("main_iters", std::to_string(optimizer.main_iters));
    put("learning_rate", r(optimizer.learning_rate));
    put("beta1", r(optimizer.beta1));
    put("beta2", r(optimizer.beta2));
    put("epsilon", r(optimizer.epsilon));
    put("init_scale", r(optimizer.init_scale));
    put("residual_mode", optimizer.residual_mode == ResidualMode::kSigned ? "signed" : "squared");
    put("k_far", std::to_string(prior.k_far));
    put("gae_iterations", std::to_string(gae.iterations));
    put("gae_learning_rate", r(gae.learning_rate));
    put("gae_seed", std::to_string(gae.seed));
    put("gcn_layers", std::to_string(gae.architecture.layers));
    put("gcn_hidden", std::to_string(gae.architecture.hidden));
    put("gcn_latent", std::to_string(gae.architecture.latent));
    put("link_threshold", r(gae.link_threshold));
    put("max_loop", std::to_string(mesh.max_loop));
    put("fill_point_threshold", std::to_string(mesh.fill_point_threshold));
    put("radius_distance", mesh.radius_distance == RadiusDistance::kSimplex ? "simplex" : "vertex");
    return out;
  }

 private:
  [[noreturn]] static void bad(const std::string& key, const std::string& value) {
    throw std::invalid_argument("invalid value '" + value + "' for key '" + key + "'");
  }
};

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

/// Applies key=value lines to `config`. Blank lines and '#' comments are
/// skipped.
inline void parse_run_config(const std::string& path, std::string_view text, RunConfig& config) {
  detail::LineReader lines(text);
  std::string_view line;
  while (lines.next(line)) {
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(path, lines.number(), "expected key=value");
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw ParseError(path, lines.number(), e.what());
    }
  }
}

inline RunConfig load_run_config(const std::string& path) {
  RunConfig config;
  parse_run_config(path, detail::read_file(path), config);
  return config;
}

}  // namespace skelmesh
