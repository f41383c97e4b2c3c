#pragma once

// Shared test utilities: fixture lookup, scratch directories, tiny builders.

#include <atomic>
#include <filesystem>
#include <string>

#include "bvcs/workbook.hpp"

namespace testutil {

inline std::string fixture(const std::string& name) {
    return std::string(BVCS_FIXTURE_DIR) + "/" + name;
}

/// Fresh empty directory under the system temp root; unique per call.
inline std::string scratch_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() /
                   ("bvcs_" + tag + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

inline bvcs::Workbook wb_from_text(const std::string& json_text) {
    return bvcs::load_workbook_from_json(nlohmann::json::parse(json_text), "test");
}

}  // namespace testutil
