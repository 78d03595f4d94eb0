// SPDX-License-Identifier: Apache-2.0

#ifndef PHRED_LOGGING_HPP
#define PHRED_LOGGING_HPP

#include <sstream>
#include <string>

namespace phred::logging {

enum class Level { error = 0, info = 1, debug = 2 };

// Read once from PHRED_LOG_LEVEL (error | info | debug); defaults to info.
Level threshold();
void set_threshold(Level level);
void write(Level level, const std::string& message);

template <class... Args>
void emit(Level level, const Args&... args) {
    if (level > threshold()) return;
    std::ostringstream out;
    (out << ... << args);
    write(level, out.str());
}

template <class... Args> void error(const Args&... args) { emit(Level::error, args...); }
template <class... Args> void info(const Args&... args) { emit(Level::info, args...); }
template <class... Args> void debug(const Args&... args) { emit(Level::debug, args...); }

}  // namespace phred::logging

#endif  // PHRED_LOGGING_HPP
