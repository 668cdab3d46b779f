#include "unifex/log.hpp"

#include <iostream>
#include <mutex>

namespace unifex {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& current_sink() {
  static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(sink_mutex());
  WarningSink previous = std::move(current_sink());
  current_sink() = sink ? std::move(sink) : [](const std::string&) {};
  return previous;
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  current_sink()(message);
}

}  // namespace unifex
