#include "simrec/manifest.hpp"

#include "simrec/io.hpp"
#include "simrec/rng.hpp"

#include <cstdio>

namespace simrec {

std::string file_hash(const std::string& path) {
    const std::string bytes = read_file(path);
    const std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

void write_manifest(const std::string& output_path, const std::string& command,
                    const nlohmann::ordered_json& config,
                    const std::vector<std::string>& input_paths) {
    nlohmann::ordered_json manifest;
    manifest["tool"] = "simrec";
    manifest["version"] = "0.1.0";
    manifest["command"] = command;
    manifest["config"] = config;
    nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
    for (const auto& path : input_paths) inputs[path] = file_hash(path);
    manifest["inputs"] = inputs;
    manifest["output"] = {{"path", output_path}, {"hash", file_hash(output_path)}};
    write_file(output_path + ".manifest.json", manifest.dump(2) + "\n");
}

}  // namespace simrec
