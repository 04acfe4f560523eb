#include "rumpl/dataset.hpp"

#include "rumpl/errors.hpp"

namespace rumpl {

namespace {

Json mat3_to_json(const Mat3& m) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

Mat3 mat3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw InvalidInput("expected a 3x3 matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) throw InvalidInput("expected a 3x3 matrix");
    for (int c = 0; c < 3; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

Json calib_to_json(const CameraCalib& calib) {
  return {{"K", mat3_to_json(calib.K)}, {"R", mat3_to_json(calib.R)}, {"T", {calib.T.x(), calib.T.y(), calib.T.z()}}};
}

CameraCalib calib_from_json(const Json& j) {
  CameraCalib c;
  c.K = mat3_from_json(j.at("K"));
  c.R = mat3_from_json(j.at("R"));
  const Json& t = j.at("T");
  if (!t.is_array() || t.size() != 3) throw InvalidInput("T must have 3 entries");
  c.T = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  c.validate();
  return c;
}

Json points_to_json(const Points3& points) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < points.rows(); ++r) rows.push_back({points(r, 0), points(r, 1), points(r, 2)});
  return rows;
}

Points3 points_from_json(const Json& j) {
  if (!j.is_array()) throw InvalidInput("expected an array of 3-vectors");
  Points3 p(static_cast<Eigen::Index>(j.size()), 3);
  for (size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != 3) throw InvalidInput("expected an array of 3-vectors");
    for (int c = 0; c < 3; ++c) p(r, c) = j[r][c].get<double>();
  }
  return p;
}

Json sample_to_json(const Sample& sample) {
  Json views = Json::array();
  for (const View& v : sample.views) {
    Json jv = calib_to_json(v.calib);
    Json px = Json::array();
    for (Eigen::Index r = 0; r < v.pose.pixels.rows(); ++r) px.push_back({v.pose.pixels(r, 0), v.pose.pixels(r, 1)});
    jv["pose2d"] = std::move(px);
    jv["conf"] = std::vector<double>(v.pose.conf.data(), v.pose.conf.data() + v.pose.conf.size());
    views.push_back(std::move(jv));
  }
  return {{"scene_id", sample.scene_id}, {"gt", points_to_json(sample.gt.joints)}, {"views", std::move(views)}};
}

Sample sample_from_json(const Json& j) {
  Sample s;
  s.scene_id = j.at("scene_id").get<std::string>();
  s.gt = Pose3D(points_from_json(j.at("gt")));
  s.gt.validate();
  const int m = s.gt.size();
  for (const Json& jv : j.at("views")) {
    View v;
    v.calib = calib_from_json(jv);
    const Json& px = jv.at("pose2d");
    const Json& conf = jv.at("conf");
    if (static_cast<int>(px.size()) != m || static_cast<int>(conf.size()) != m) {
      throw InvalidInput("view keypoint count differs from gt joint count");
    }
    v.pose = Pose2D(m);
    for (int r = 0; r < m; ++r) {
      if (!px[r].is_array() || px[r].size() != 2) throw InvalidInput("pose2d entries must be [u, v]");
      v.pose.pixels(r, 0) = px[r][0].get<double>();
      v.pose.pixels(r, 1) = px[r][1].get<double>();
      v.pose.conf(r) = conf[r].get<double>();
    }
    v.pose.validate();
    s.views.push_back(std::move(v));
  }
  if (s.views.empty()) throw InvalidInput("sample has no views");
  return s;
}

std::string serialize_sample(const Sample& sample) { return sample_to_json(sample).dump(); }

void write_dataset(std::span<const Sample> samples, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const Sample& s : samples) out << serialize_sample(s) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

DatasetReader::DatasetReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error("cannot open dataset " + path.string());
}

std::optional<Sample> DatasetReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Sample s = sample_from_json(Json::parse(line));
      ++index_;
      return s;
    } catch (const std::exception& e) {
      const std::string last = index_ == 0 ? "none" : std::to_string(index_ - 1);
      throw ParseError(path_.string() + ": malformed record " + std::to_string(index_) +
                           " (last complete record: " + last + "): " + e.what(),
                       index_);
    }
  }
  return std::nullopt;
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
  DatasetReader reader(path);
  std::vector<Sample> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

}  // namespace rumpl
