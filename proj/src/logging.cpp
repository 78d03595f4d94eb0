// SPDX-License-Identifier: Apache-2.0

#include "phred/logging.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>

namespace phred::logging {

namespace {

Level from_env() {
    const char* v = std::getenv("PHRED_LOG_LEVEL");
    if (v == nullptr) return Level::info;
    if (std::strcmp(v, "error") == 0) return Level::error;
    if (std::strcmp(v, "debug") == 0) return Level::debug;
    return Level::info;
}

std::atomic<int>& level_slot() {
    static std::atomic<int> level{static_cast<int>(from_env())};
    return level;
}

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

Level threshold() { return static_cast<Level>(level_slot().load(std::memory_order_relaxed)); }
void set_threshold(Level level) { level_slot().store(static_cast<int>(level), std::memory_order_relaxed); }

void write(Level level, const std::string& message) {
    static const char* names[] = {"error", "info", "debug"};
    std::lock_guard<std::mutex> lock(sink_mutex());
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace phred::logging
