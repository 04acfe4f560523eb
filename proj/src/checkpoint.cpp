#include "rumpl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "rumpl/config.hpp"
#include "rumpl/errors.hpp"

namespace rumpl {

namespace {

constexpr const char* kMagic = "RUMPLCKPT";

struct Header {
  ModelConfig config;
  Json tensors;
};

Header read_header(std::ifstream& in, const std::filesystem::path& path) {
  std::string magic, header;
  if (!std::getline(in, magic) || magic != kMagic) throw ParseError(path.string() + ": not a checkpoint file");
  if (!std::getline(in, header)) throw ParseError(path.string() + ": truncated checkpoint header");
  try {
    const Json j = Json::parse(header);
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw ParseError(path.string() + ": unsupported checkpoint version");
    }
    return {model_config_from_json(j.at("config")), j.at("tensors")};
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": malformed checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(path.string() + ": invalid model config: " + e.what());
  }
}

std::ifstream open_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint not found: " + path.string());
  return in;
}

}  // namespace

template <typename S>
void save_checkpoint(const std::filesystem::path& path, LiftNet<S>& model) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian doubles");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  Json tensors = Json::array();
  const auto params = model.parameters();
  for (const Param<S>* p : params) {
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  const Json header = {{"version", kCheckpointVersion}, {"config", to_json(model.config())}, {"tensors", tensors}};

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out << kMagic << '\n' << header.dump() << '\n';
    for (const Param<S>* p : params) {
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> v = p->value.template cast<double>();
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename S>
std::unique_ptr<LiftNet<S>> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in = open_checkpoint(path);
  const Header header = read_header(in, path);
  auto model = make_model<S>(header.config);
  const auto params = model->parameters();
  if (!header.tensors.is_array() || header.tensors.size() != params.size()) {
    throw ParseError(path.string() + ": tensor count " + std::to_string(header.tensors.size()) +
                     " does not match model (" + std::to_string(params.size()) + ")");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const Json& t = header.tensors[i];
    Param<S>& p = *params[i];
    std::string name;
    long rows = -1, cols = -1;
    try {
      name = t.at("name").get<std::string>();
      rows = t.at("rows").get<long>();
      cols = t.at("cols").get<long>();
    } catch (const Json::exception& e) {
      throw ParseError(path.string() + ": malformed tensor table entry " + std::to_string(i) + ": " + e.what());
    }
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
      throw ParseError(path.string() + ": tensor '" + name + "' does not match '" + p.name +
                       "' of the configured model");
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> v(p.value.rows(), p.value.cols());
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw ParseError(path.string() + ": truncated tensor data for " + p.name);
    if (!v.allFinite()) throw ParseError(path.string() + ": non-finite values in " + p.name);
    p.value = v.template cast<S>();
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path.string() + ": trailing bytes after tensors");
  return model;
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream in = open_checkpoint(path);
  return read_header(in, path).config;
}

template void save_checkpoint<float>(const std::filesystem::path&, LiftNet<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, LiftNet<double>&);
template std::unique_ptr<LiftNet<float>> load_checkpoint<float>(const std::filesystem::path&);
template std::unique_ptr<LiftNet<double>> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace rumpl
