#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rumpl/synthgen.hpp"

namespace rumpl {

using Json = nlohmann::json;

/// {"K": [[3×3]], "R": [[3×3]], "T": [x, y, z]}, row-major.
Json calib_to_json(const CameraCalib& calib);
CameraCalib calib_from_json(const Json& j);

Json points_to_json(const Points3& points);
Points3 points_from_json(const Json& j);

/// {"scene_id", "gt": [[x,y,z]×M], "views": [{"K","R","T","pose2d","conf"}...]}
Json sample_to_json(const Sample& sample);
Sample sample_from_json(const Json& j);

/// One compact JSON object per line.
std::string serialize_sample(const Sample& sample);

void write_dataset(std::span<const Sample> samples, const std::filesystem::path& path);

/// Record-at-a-time reader over a JSON-lines dataset.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path);

  /// Next sample, or nullopt at end of file. Throws ParseError naming the
  /// failing record index and the last complete one.
  std::optional<Sample> next();
  long records_read() const { return index_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  long index_ = 0;
};

std::vector<Sample> read_dataset(const std::filesystem::path& path);

}  // namespace rumpl
