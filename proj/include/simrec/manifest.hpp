#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace simrec {

/// FNV-1a 64 content hash as a fixed-width hex string.
std::string file_hash(const std::string& path);

/// Writes `<output>.manifest.json` recording the subcommand, its effective
/// configuration, and content hashes of all inputs and of the output, so a
/// run can be reproduced byte-for-byte from the manifest alone. No
/// timestamps: manifests of identical runs are identical.
void write_manifest(const std::string& output_path, const std::string& command,
                    const nlohmann::ordered_json& config,
                    const std::vector<std::string>& input_paths);

}  // namespace simrec
