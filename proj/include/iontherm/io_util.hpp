#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "iontherm/errors.hpp"

namespace iontherm {

/// Shortest round-trippable decimal form; keeps CSV output byte-stable for
/// identical inputs.
inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

} // namespace iontherm
