#pragma once

#include "nfpose/body.hpp"
#include "nfpose/flow.hpp"
#include "nfpose/prior.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace nfpose {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// All readers and writers throw IoError on file or format problems.

Json read_json(const fs::path& path);
// Pretty-printed, trailing newline.
void write_json(const fs::path& path, const Json& j);
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// "%.17g": round-trips every double.
std::string format_double(double v);

// Body model: parents, rest_offsets (N_j x 3), shape_joint_dirs, shape_vertex_dirs,
// template_vertices, skinning, part_labels, representation; matrices flat
// row-major with their shape in num_joints / num_shapes / num_vertices.
Json model_to_json(const BodyModel& model);
BodyModel model_from_json(const Json& j);
void save_model(const fs::path& path, const BodyModel& model);
BodyModel load_model(const fs::path& path);

// Flow checkpoint: a one-line JSON header, '\n', then parameter_count()
// little-endian float64 values in declared layer order.
struct FlowCheckpoint {
  FlowModel flow;
  Representation representation = Representation::AngleAxis;
  Json header;
};
// Adds architecture fields and param_count to `header`.
void save_flow(const fs::path& path, const FlowModel& flow, Representation rep, Json header);
FlowCheckpoint load_flow(const fs::path& path);
Json read_flow_header(const fs::path& path);

Json gmm_to_json(const GmmPrior& gmm);
GmmPrior gmm_from_json(const Json& j);

// Text writers below take an optional single-line comment, stored as a
// leading "# " line (after the magic number for PGM). Readers skip comments.

// One sample per line, comma separated. In memory columns are samples.
void write_samples_csv(const fs::path& path, const MatX& samples, const std::string& comment = {});
MatX read_samples_csv(const fs::path& path);

// Header `joint_id,x,y,confidence`, one row per joint.
void write_keypoints_csv(const fs::path& path, const Points2& keypoints, const std::vector<double>& confidence,
                         const std::string& comment = {});
// Joints missing from the file get confidence 0.
void read_keypoints_csv(const fs::path& path, int num_joints, Points2& keypoints, std::vector<double>& confidence);

// Binary 8-bit PGM (P5).
void write_pgm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& pixels,
               const std::string& comment = {});
void read_pgm(const fs::path& path, int& width, int& height, std::vector<std::uint8_t>& pixels);

// First comment line of a CSV or PGM file, without the "# " prefix; empty
// when there is none.
std::string read_leading_comment(const fs::path& path);

Json vec_to_json(const VecX& v);
VecX vec_from_json(const Json& j);

}  // namespace nfpose
