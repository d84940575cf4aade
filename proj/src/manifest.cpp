#include "pex/manifest.hpp"

#include "pex/errors.hpp"
#include "pex/rng.hpp"

namespace pex::manifest {

std::string file_hash(const std::filesystem::path& path) {
  return hash_hex(fnv1a64(read_file(path)));
}

RunManifest::RunManifest(std::filesystem::path run_dir)
    : run_dir_(std::move(run_dir)), manifest_path_(run_dir_ / "manifest.json") {
  if (std::filesystem::exists(manifest_path_)) {
    data_ = Json::parse(read_file(manifest_path_));
  } else {
    data_ = Json{{"tool_version", std::string(kToolVersion)},
                 {"stages", Json::object()}};
  }
}

Json RunManifest::hashes_of(
    const std::vector<std::filesystem::path>& paths) const {
  Json out = Json::object();
  for (const std::filesystem::path& p : paths) {
    // Keyed relative to the run dir so manifests survive moving the run.
    const std::string key =
        p.lexically_proximate(run_dir_).generic_string();
    out[key] = std::filesystem::exists(p) ? Json(file_hash(p)) : Json();
  }
  return out;
}

bool RunManifest::stage_up_to_date(
    const std::string& stage,
    const std::vector<std::filesystem::path>& inputs,
    const std::vector<std::filesystem::path>& outputs) const {
  const Json& stages = data_.at("stages");
  if (!stages.contains(stage)) return false;
  const Json& entry = stages.at(stage);
  for (const std::filesystem::path& p : outputs) {
    if (!std::filesystem::exists(p)) return false;
  }
  return entry.value("inputs", Json::object()) == hashes_of(inputs) &&
         entry.value("outputs", Json::object()) == hashes_of(outputs);
}

void RunManifest::record_stage(
    const std::string& stage,
    const std::vector<std::filesystem::path>& inputs,
    const std::vector<std::filesystem::path>& outputs, const Json& info) {
  Json entry;
  entry["inputs"] = hashes_of(inputs);
  entry["outputs"] = hashes_of(outputs);
  if (!info.empty()) entry["info"] = info;
  data_["stages"][stage] = entry;
  data_["tool_version"] = std::string(kToolVersion);
  save();
}

void RunManifest::save() const {
  atomic_write_file(manifest_path_, data_.dump(2) + "\n");
}

}  // namespace pex::manifest
