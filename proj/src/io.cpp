#include "nfpose/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nfpose {

namespace {

[[noreturn]] void fail(const fs::path& path, const std::string& what) {
  throw Error(ErrorCode::IoError, path.string() + ": " + what);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  return out;
}

template <class M>
Json flat(const M& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  }
  return a;
}

template <class M>
M unflat(const Json& a, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != rows * cols) {
    throw Error(ErrorCode::IoError, std::string("field '") + name + "' has the wrong length");
  }
  M m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a[static_cast<std::size_t>(r * cols + c)].get<double>();
  }
  return m;
}

const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw Error(ErrorCode::IoError, std::string("missing field '") + name + "'");
  return j.at(name);
}

}  // namespace

Json read_json(const fs::path& path) {
  std::ifstream in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(path, e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) fail(path, "write failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json vec_to_json(const VecX& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VecX vec_from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorCode::IoError, "expected a number array");
  VecX v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Json model_to_json(const BodyModel& m) {
  Json j;
  j["num_joints"] = m.num_joints();
  j["num_shapes"] = m.num_shapes();
  j["num_vertices"] = m.num_vertices();
  j["representation"] = std::string(to_string(m.representation));
  j["parents"] = m.parents;
  j["rest_offsets"] = flat(m.rest_offsets);
  j["shape_joint_dirs"] = flat(m.shape_joint_dirs);
  j["shape_vertex_dirs"] = flat(m.shape_vertex_dirs);
  j["template_vertices"] = flat(m.template_vertices);
  j["skinning"] = flat(m.skinning);
  j["part_labels"] = m.part_labels;
  return j;
}

BodyModel model_from_json(const Json& j) {
  try {
    BodyModel m;
    m.parents = field(j, "parents").get<std::vector<int>>();
    const Eigen::Index nj = static_cast<Eigen::Index>(m.parents.size());
    const Eigen::Index ns = field(j, "num_shapes").get<Eigen::Index>();
    const Eigen::Index nv = field(j, "num_vertices").get<Eigen::Index>();
    m.representation = representation_from_string(field(j, "representation").get<std::string>());
    m.rest_offsets = unflat<Points3>(field(j, "rest_offsets"), nj, 3, "rest_offsets");
    m.shape_joint_dirs = unflat<MatX>(field(j, "shape_joint_dirs"), ns, 3 * nj, "shape_joint_dirs");
    m.shape_vertex_dirs = unflat<MatX>(field(j, "shape_vertex_dirs"), ns, 3 * nv, "shape_vertex_dirs");
    m.template_vertices = unflat<Points3>(field(j, "template_vertices"), nv, 3, "template_vertices");
    m.skinning = unflat<MatX>(field(j, "skinning"), nv, nj, "skinning");
    m.part_labels = field(j, "part_labels").get<std::vector<int>>();
    m.finalize();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("body model: ") + e.what());
  }
}

void save_model(const fs::path& path, const BodyModel& model) { write_json(path, model_to_json(model)); }

BodyModel load_model(const fs::path& path) {
  const Json j = read_json(path);
  try {
    return model_from_json(j);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) fail(path, e.what());
    throw;
  }
}

void save_flow(const fs::path& path, const FlowModel& flow, Representation rep, Json header) {
  const FlowArchitecture& a = flow.architecture();
  header["format"] = "nfpose-flow";
  header["architecture"] = to_string(a.kind);
  header["dim"] = a.dim;
  header["blocks"] = a.blocks;
  header["hidden"] = a.hidden;
  header["representation"] = std::string(to_string(rep));
  header["param_count"] = flow.parameter_count();
  std::ofstream out = open_out(path);
  out << header.dump() << '\n';
  const std::vector<double> p = flow.parameters();
  std::vector<char> blob(p.size() * 8);
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(p[i]);
    for (int b = 0; b < 8; ++b) blob[8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) fail(path, "write failed");
}

Json read_flow_header(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(path, "empty checkpoint");
  try {
    return Json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("bad checkpoint header: ") + e.what());
  }
}

FlowCheckpoint load_flow(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(path, "empty checkpoint");
  FlowCheckpoint ck;
  try {
    ck.header = Json::parse(line);
    FlowArchitecture a;
    a.kind = flow_kind_from_string(field(ck.header, "architecture").get<std::string>());
    a.dim = field(ck.header, "dim").get<int>();
    a.blocks = field(ck.header, "blocks").get<int>();
    a.hidden = field(ck.header, "hidden").get<int>();
    ck.representation = representation_from_string(field(ck.header, "representation").get<std::string>());
    ck.flow = FlowModel(a, 0);
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("bad checkpoint header: ") + e.what());
  } catch (const Error& e) {
    fail(path, e.what());
  }
  const std::size_t n = ck.flow.parameter_count();
  std::vector<char> blob(n * 8);
  in.read(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (static_cast<std::size_t>(in.gcount()) != blob.size()) fail(path, "truncated parameter blob");
  if (in.peek() != std::char_traits<char>::eof()) fail(path, "trailing bytes after parameter blob");
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[8 * i + b])) << (8 * b);
    p[i] = std::bit_cast<double>(bits);
  }
  ck.flow.set_parameters(p);
  return ck;
}

Json gmm_to_json(const GmmPrior& gmm) {
  Json j;
  j["format"] = "nfpose-gmm";
  j["dim"] = gmm.dim();
  j["modes"] = gmm.num_modes();
  Json w = Json::array(), mu = Json::array(), cov = Json::array();
  for (const auto& m : gmm.modes()) {
    w.push_back(m.weight);
    mu.push_back(vec_to_json(m.mean));
    cov.push_back(flat(m.covariance));
  }
  j["weights"] = w;
  j["means"] = mu;
  j["covariances"] = cov;
  return j;
}

GmmPrior gmm_from_json(const Json& j) {
  try {
    const int d = field(j, "dim").get<int>();
    const Json& w = field(j, "weights");
    const Json& mu = field(j, "means");
    const Json& cov = field(j, "covariances");
    if (w.size() != mu.size() || w.size() != cov.size()) throw Error(ErrorCode::IoError, "mixture field lengths");
    std::vector<GmmMode> modes;
    for (std::size_t k = 0; k < w.size(); ++k) {
      GmmMode m;
      m.weight = w[k].get<double>();
      m.mean = vec_from_json(mu[k]);
      if (m.mean.size() != d) throw Error(ErrorCode::IoError, "mixture mean length");
      m.covariance = unflat<MatX>(cov[k], d, d, "covariances");
      modes.push_back(std::move(m));
    }
    return GmmPrior(std::move(modes));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("mixture: ") + e.what());
  }
}

namespace {

std::string comment_line(const std::string& comment) {
  if (comment.empty()) return {};
  if (comment.find('\n') != std::string::npos) throw Error(ErrorCode::IoError, "comment spans several lines");
  return "# " + comment + '\n';
}

bool is_comment(const std::string& line) { return !line.empty() && line[0] == '#'; }

}  // namespace

void write_samples_csv(const fs::path& path, const MatX& samples, const std::string& comment) {
  std::string s = comment_line(comment);
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
      if (r) s += ',';
      s += format_double(samples(r, c));
    }
    s += '\n';
  }
  write_text(path, s);
}

namespace {

std::vector<double> parse_row(const std::string& line, const fs::path& path, int lineno) {
  std::vector<double> row;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const std::size_t end = std::min(line.find(',', pos), line.size());
    const std::string cell = line.substr(pos, end - pos);
    char* stop = nullptr;
    const double v = std::strtod(cell.c_str(), &stop);
    if (cell.empty() || stop == cell.c_str() || (*stop != '\0' && *stop != '\r')) {
      fail(path, "line " + std::to_string(lineno) + ": not a number: '" + cell + "'");
    }
    row.push_back(v);
    pos = end + 1;
  }
  return row;
}

}  // namespace

MatX read_samples_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r" || is_comment(line)) continue;
    rows.push_back(parse_row(line, path, lineno));
    if (rows.back().size() != rows.front().size()) fail(path, "ragged rows");
  }
  if (rows.empty()) return MatX(0, 0);
  MatX m(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    for (std::size_t r = 0; r < rows[c].size(); ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[c][r];
  }
  return m;
}

void write_keypoints_csv(const fs::path& path, const Points2& keypoints, const std::vector<double>& confidence,
                         const std::string& comment) {
  std::string s = comment_line(comment) + "joint_id,x,y,confidence\n";
  for (Eigen::Index i = 0; i < keypoints.rows(); ++i) {
    s += std::to_string(i) + ',' + format_double(keypoints(i, 0)) + ',' + format_double(keypoints(i, 1)) + ',' +
         format_double(confidence.at(static_cast<std::size_t>(i))) + '\n';
  }
  write_text(path, s);
}

void read_keypoints_csv(const fs::path& path, int num_joints, Points2& keypoints, std::vector<double>& confidence) {
  std::ifstream in = open_in(path);
  keypoints.setZero(num_joints, 2);
  confidence.assign(num_joints, 0.0);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r" || is_comment(line)) continue;
    if (line.rfind("joint_id", 0) == 0) continue;
    const std::vector<double> row = parse_row(line, path, lineno);
    if (row.size() != 4) fail(path, "line " + std::to_string(lineno) + ": expected 4 fields");
    const int id = static_cast<int>(row[0]);
    if (id != row[0] || id < 0 || id >= num_joints) fail(path, "line " + std::to_string(lineno) + ": bad joint id");
    keypoints(id, 0) = row[1];
    keypoints(id, 1) = row[2];
    confidence[id] = row[3];
  }
}

void write_pgm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& pixels,
               const std::string& comment) {
  if (pixels.size() != static_cast<std::size_t>(width) * height) fail(path, "raster size");
  const std::string c = comment_line(comment);
  std::ofstream out = open_out(path);
  out << "P5\n" << c << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) fail(path, "write failed");
}

void read_pgm(const fs::path& path, int& width, int& height, std::vector<std::uint8_t>& pixels) {
  std::ifstream in = open_in(path);
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t += c;
    }
    return t;
  };
  if (token() != "P5") fail(path, "not a binary PGM (P5)");
  int maxval = 0;
  try {
    width = std::stoi(token());
    height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    fail(path, "bad PGM header");
  }
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) fail(path, "unsupported PGM geometry or depth");
  pixels.resize(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != pixels.size()) fail(path, "truncated PGM raster");
}

std::string read_leading_comment(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  for (int i = 0; i < 2 && std::getline(in, line); ++i) {
    if (is_comment(line)) return line.size() >= 2 && line[1] == ' ' ? line.substr(2) : line.substr(1);
    if (line != "P5") break;
  }
  return {};
}

}  // namespace nfpose
