#ifndef LBC_CHECKPOINT_HPP
#define LBC_CHECKPOINT_HPP

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "lbc/nn.hpp"

namespace lbc {

// A saved network plus the tags that say what it was trained for.
struct Checkpoint {
  MlpD model;
  std::string method;  // lbc, mse, hnn, mc_dropout
  std::string role;    // mean, width, gaussian
};

// JSON document: format tag, layer_dims, head, dropout, seed, method, role
// and the flattened parameters (see flatten_parameters). Doubles are written
// in shortest round-trip form, so a load reproduces every bit.
nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Write-to-temp then rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace lbc

#endif  // LBC_CHECKPOINT_HPP
