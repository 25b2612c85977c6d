#pragma once

#include <string_view>

namespace tsgdr::log {

// Thin wrappers so that public headers do not pull in spdlog. The level is
// read once from the TSGDR_LOG environment variable (trace, debug, info,
// warn, error, off; default warn).
void debug(std::string_view message);
void info(std::string_view message);
void warn(std::string_view message);

void set_level(std::string_view level);

}  // namespace tsgdr::log
