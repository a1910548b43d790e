#pragma once

#include <iostream>
#include <string_view>

namespace timbre::util {

inline void warn(std::string_view msg) { std::cerr << "warning: " << msg << '\n'; }
inline void info(std::string_view msg) { std::cerr << msg << '\n'; }

}  // namespace timbre::util
