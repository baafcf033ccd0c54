#include "hgp/log.hpp"

#include <iostream>
#include <mutex>

namespace hgp {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& current_sink() {
  static LogSink sink = [](LogLevel level, const std::string& msg) {
    if (level == LogLevel::warning) std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

void emit(LogLevel level, const std::string& msg) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  if (current_sink()) current_sink()(level, msg);
}

}  // namespace

LogSink set_log_sink(LogSink sink) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  LogSink old = std::move(current_sink());
  current_sink() = std::move(sink);
  return old;
}

void log_info(const std::string& msg) { emit(LogLevel::info, msg); }
void log_warning(const std::string& msg) { emit(LogLevel::warning, msg); }

}  // namespace hgp
