#pragma once

#include <cstdlib>
#include <string>

namespace testsupport {

inline std::string data_dir() {
    const char* env = std::getenv("PLESIM_DATA");
    return env != nullptr ? env : "data";
}

inline std::string data_file(const std::string& name) {
    return data_dir() + "/" + name;
}

}  // namespace testsupport
