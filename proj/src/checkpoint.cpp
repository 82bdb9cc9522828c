#include "lbc/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace lbc {

namespace {
constexpr const char* kFormat = "lbc-mlp";
constexpr int kVersion = 1;
}  // namespace

nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint) {
  const MlpD& model = checkpoint.model;
  model.validate();
  nlohmann::json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["method"] = checkpoint.method;
  doc["role"] = checkpoint.role;
  doc["layer_dims"] = model.layer_dims;
  doc["head"] = std::string(head_name(model.head));
  doc["dropout"] = model.dropout;
  doc["seed"] = model.seed;
  doc["parameters"] = flatten_parameters(model);
  return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kFormat) {
    throw DataError("not an lbc-mlp checkpoint");
  }
  if (doc.at("version").get<int>() != kVersion) {
    throw DataError("unsupported checkpoint version");
  }
  Checkpoint checkpoint;
  checkpoint.method = doc.at("method").get<std::string>();
  checkpoint.role = doc.at("role").get<std::string>();
  MlpD model = zero_mlp<double>(doc.at("layer_dims").get<std::vector<Index>>(),
                                parse_head(doc.at("head").get<std::string>()));
  model.dropout = doc.at("dropout").get<double>();
  model.seed = doc.at("seed").get<std::uint64_t>();
  unflatten_parameters(model, doc.at("parameters").get<std::vector<double>>());
  model.validate();
  if (!model.all_finite()) throw NonFiniteError("checkpoint holds non-finite parameters");
  checkpoint.model = std::move(model);
  return checkpoint;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, checkpoint_to_json(checkpoint).dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return checkpoint_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot read checkpoint " + path.string() + ": " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace lbc
