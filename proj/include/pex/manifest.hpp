#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pex/io.hpp"

namespace pex::manifest {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Content hash (FNV-1a 64, hex) of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

// Stage ledger for a run directory: records input/output content hashes per
// stage so re-running a stage with unchanged inputs is a no-op.
class RunManifest {
 public:
  explicit RunManifest(std::filesystem::path run_dir);

  bool stage_up_to_date(const std::string& stage,
                        const std::vector<std::filesystem::path>& inputs,
                        const std::vector<std::filesystem::path>& outputs) const;

  void record_stage(const std::string& stage,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs,
                    const Json& info = Json::object());

  const Json& data() const { return data_; }

 private:
  Json hashes_of(const std::vector<std::filesystem::path>& paths) const;
  void save() const;

  std::filesystem::path run_dir_;
  std::filesystem::path manifest_path_;
  Json data_;
};

}  // namespace pex::manifest
