#include "uaopose/synthetic.hpp"

#include <zlib.h>

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <queue>
#include <random>
#include <sstream>

#include "json.hpp"
#include "uaopose/errors.hpp"

namespace uaopose {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_default_skeleton(const SkeletonGraph& g) {
  static const SkeletonGraph def = default_h36m_skeleton();
  return g.joint_count() == def.joint_count() && g.edges() == def.edges();
}

Eigen::Vector3d sample_in_cone(const Eigen::Vector3d& axis, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> cos_theta(std::cos(std::numbers::pi / 3.0), 1.0);
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * std::numbers::pi);
  const double c = cos_theta(rng);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double phi = azimuth(rng);
  const Eigen::Vector3d a = axis.normalized();
  const Eigen::Vector3d helper =
      std::abs(a.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d e1 = a.cross(helper).normalized();
  const Eigen::Vector3d e2 = a.cross(e1);
  return (c * a + s * std::cos(phi) * e1 + s * std::sin(phi) * e2).normalized();
}

void append_rows(std::string& out, const char* key, const double* data, Eigen::Index rows,
                 Eigen::Index cols) {
  out += '"';
  out += key;
  out += "\":[";
  for (Eigen::Index r = 0; r < rows; ++r) {
    out += r ? ",[" : "[";
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (c) out += ',';
      out += format_real(data[r * cols + c]);
    }
    out += ']';
  }
  out += ']';
}

template <int Cols>
Eigen::Matrix<double, Eigen::Dynamic, Cols, Eigen::RowMajor> parse_rows(const nlohmann::json& j,
                                                                         const char* key,
                                                                         std::size_t line) {
  if (!j.contains(key)) throw ParseError(std::string("missing \"") + key + "\" field", line);
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw ParseError(std::string("\"") + key + "\" must be an array", line);
  Eigen::Matrix<double, Eigen::Dynamic, Cols, Eigen::RowMajor> m(static_cast<Eigen::Index>(arr.size()),
                                                                 Cols);
  for (std::size_t r = 0; r < arr.size(); ++r) {
    if (!arr[r].is_array() || arr[r].size() != Cols)
      throw ParseError(std::string("\"") + key + "\" rows must hold " + std::to_string(Cols) +
                           " numbers",
                       line);
    for (int c = 0; c < Cols; ++c) {
      if (!arr[r][c].is_number())
        throw ParseError(std::string("\"") + key + "\" holds a non-number", line);
      m(static_cast<Eigen::Index>(r), c) = arr[r][c].get<double>();
    }
  }
  if (!m.allFinite()) throw ParseError(std::string("\"") + key + "\" holds non-finite values", line);
  return m;
}

}  // namespace

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> default_bone_lengths() {
  return {0.10, 0.30, 0.30,          // right leg
          0.10, 0.30, 0.30,          // left leg
          0.15, 0.15, 0.08, 0.10,    // spine, thorax, neck, head
          0.10, 0.22, 0.19,          // left arm
          0.10, 0.22, 0.19};         // right arm
}

std::vector<Eigen::Vector3d> default_rest_directions() {
  const Eigen::Vector3d up(0, 1, 0), down(0, -1, 0), left(1, 0, 0), right(-1, 0, 0);
  return {right, down, down, left, down, down, up, up, up, up, left, down, down, right, down, down};
}

Pose3D sample_pose(const SkeletonGraph& graph, std::span<const double> bone_lengths,
                   std::uint64_t seed, std::span<const Eigen::Vector3d> rest_directions) {
  if (!graph.is_tree()) throw ContractError("sample_pose: forward kinematics needs a tree skeleton");
  const auto& edges = graph.edges();
  if (bone_lengths.size() != edges.size())
    throw ContractError("sample_pose: need one bone length per edge");
  for (double len : bone_lengths)
    if (!(len > 0.0)) throw ContractError("sample_pose: bone lengths must be positive");

  std::vector<Eigen::Vector3d> dirs(rest_directions.begin(), rest_directions.end());
  if (dirs.empty())
    dirs = is_default_skeleton(graph) ? default_rest_directions()
                                      : std::vector<Eigen::Vector3d>(edges.size(), Eigen::Vector3d::UnitY());
  if (dirs.size() != edges.size()) throw ContractError("sample_pose: need one rest direction per edge");

  std::mt19937_64 rng(seed);
  const std::size_t k = graph.joint_count();
  Pose3D pose = Pose3D::Zero(static_cast<Eigen::Index>(k), 3);
  std::vector<bool> placed(k, false);
  placed[0] = true;
  // Edges in listed order, each attached once its parent is placed.
  std::vector<bool> used(edges.size(), false);
  for (std::size_t done = 0; done < edges.size();) {
    bool progressed = false;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (used[e]) continue;
      auto [a, b] = edges[e];
      if (!placed[a] && !placed[b]) continue;
      const std::size_t parent = placed[a] ? a : b, child = placed[a] ? b : a;
      const Eigen::Vector3d rest = parent == a ? dirs[e] : Eigen::Vector3d(-dirs[e]);
      const Eigen::Vector3d u = sample_in_cone(rest, rng);
      pose.row(static_cast<Eigen::Index>(child)) =
          pose.row(static_cast<Eigen::Index>(parent)) + bone_lengths[e] * u.transpose();
      placed[child] = true;
      used[e] = true;
      ++done;
      progressed = true;
    }
    if (!progressed) throw ContractError("sample_pose: skeleton not reachable from joint 0");
  }
  return pose;
}

Eigen::VectorXd uniform_noise(std::size_t joints, double sigma) {
  if (!(sigma >= 0.0)) throw ContractError("noise sigma must be non-negative");
  return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(joints), sigma);
}

Eigen::VectorXd limb_end_noise(double sigma) {
  Eigen::VectorXd s = uniform_noise(17, sigma);
  for (int j : {3, 6, 13, 16}) s(j) = 2.0 * sigma;
  for (int j : {2, 5, 12, 15}) s(j) = 1.5 * sigma;
  return s;
}

PoseSample make_sample(const Eigen::VectorXd& noise_scale, std::uint64_t seed, std::size_t index) {
  static const SkeletonGraph graph = default_h36m_skeleton();
  static const std::vector<double> lengths = default_bone_lengths();
  if (static_cast<std::size_t>(noise_scale.size()) != graph.joint_count())
    throw ShapeError("noise profile has " + std::to_string(noise_scale.size()) + " entries, need " +
                     std::to_string(graph.joint_count()));
  for (Eigen::Index j = 0; j < noise_scale.size(); ++j)
    if (!(noise_scale(j) >= 0.0)) throw ContractError("noise sigma must be non-negative");

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  const std::uint64_t pose_seed = rng();
  const std::uint64_t camera_seed = rng();

  PoseSample s;
  s.j3d = sample_pose(graph, lengths, pose_seed);
  s.p = sample_camera(camera_seed);
  s.j2d_clean = project(s.j3d, s.p);
  s.noise_scale = noise_scale;
  s.j2d = *s.j2d_clean;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index j = 0; j < s.j2d.rows(); ++j) {
    const double sigma = noise_scale(j);
    if (sigma == 0.0) continue;
    double du, dv;
    do {  // truncate the joint's 2-D displacement at 6 sigma
      du = unit(rng);
      dv = unit(rng);
    } while (du * du + dv * dv > 36.0);
    s.j2d(j, 0) += sigma * du;
    s.j2d(j, 1) += sigma * dv;
  }
  return s;
}

std::vector<PoseSample> make_dataset(std::size_t n, const Eigen::VectorXd& noise_scale,
                                     std::uint64_t seed) {
  if (n == 0) throw ContractError("make_dataset: n must be at least 1");
  std::vector<PoseSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_sample(noise_scale, seed, i));
  return out;
}

std::string format_sample(const PoseSample& s) {
  std::string out = "{";
  append_rows(out, "j3d", s.j3d.data(), s.j3d.rows(), 3);
  out += ',';
  append_rows(out, "j2d", s.j2d.data(), s.j2d.rows(), 2);
  if (s.j2d_clean) {
    out += ',';
    append_rows(out, "j2d_clean", s.j2d_clean->data(), s.j2d_clean->rows(), 2);
  }
  out += ',';
  const Eigen::Matrix<double, 3, 2, Eigen::RowMajor> p = s.p.matrix();
  append_rows(out, "P", p.data(), 3, 2);
  out += ",\"noise_scale\":[";
  for (Eigen::Index j = 0; j < s.noise_scale.size(); ++j) {
    if (j) out += ',';
    out += format_real(s.noise_scale(j));
  }
  out += "]}";
  return out;
}

PoseSample parse_sample(const std::string& line, std::size_t line_number, std::size_t expected_joints) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_number);
  }
  if (!j.is_object()) throw ParseError("expected a JSON object", line_number);
  PoseSample s;
  s.j3d = parse_rows<3>(j, "j3d", line_number);
  s.j2d = parse_rows<2>(j, "j2d", line_number);
  if (j.contains("j2d_clean")) s.j2d_clean = parse_rows<2>(j, "j2d_clean", line_number);
  const auto p = parse_rows<2>(j, "P", line_number);
  if (p.rows() != 3) throw ParseError("\"P\" must have 3 rows", line_number);
  try {
    s.p = ProjectionMatrix(p);
  } catch (const ContractError& e) {
    throw ParseError(std::string("\"P\": ") + e.what(), line_number);
  }
  if (!j.contains("noise_scale") || !j["noise_scale"].is_array())
    throw ParseError("missing \"noise_scale\" array", line_number);
  const auto& ns = j["noise_scale"];
  s.noise_scale.resize(static_cast<Eigen::Index>(ns.size()));
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (!ns[i].is_number()) throw ParseError("\"noise_scale\" holds a non-number", line_number);
    s.noise_scale(static_cast<Eigen::Index>(i)) = ns[i].get<double>();
  }

  auto check = [&](Eigen::Index rows, const char* what) {
    if (static_cast<std::size_t>(rows) != expected_joints)
      throw ShapeError("line " + std::to_string(line_number) + ": \"" + what + "\" has " +
                       std::to_string(rows) + " joints, skeleton has " + std::to_string(expected_joints));
  };
  check(s.j3d.rows(), "j3d");
  check(s.j2d.rows(), "j2d");
  if (s.j2d_clean) check(s.j2d_clean->rows(), "j2d_clean");
  check(s.noise_scale.size(), "noise_scale");
  return s;
}

std::string read_text(const std::string& path) {
  if (ends_with(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot read " + path);
    std::string text;
    char buf[1 << 16];
    int got;
    while ((got = gzread(f, buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(got));
    const bool failed = got < 0;
    gzclose(f);
    if (failed) throw IoError("corrupt gzip stream in " + path);
    return text;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (ends_with(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot write " + path);
    const int wrote = text.empty() ? 0 : gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    const bool failed = gzclose(f) != Z_OK || (!text.empty() && wrote <= 0);
    if (failed) throw IoError("gzip write failed for " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("short write to " + path);
}

void save_dataset(const std::vector<PoseSample>& samples, const std::string& path) {
  std::string text;
  for (const auto& s : samples) {
    text += format_sample(s);
    text += '\n';
  }
  write_text(path, text);
}

std::vector<PoseSample> load_dataset(const std::string& path, std::size_t expected_joints) {
  const std::string text = read_text(path);
  std::vector<PoseSample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_sample(line, number, expected_joints));
  }
  return out;
}

}  // namespace uaopose
