#include "cumix/log.hpp"

#include <iostream>
#include <utility>

namespace cumix {
namespace {

WarningSink& sink() {
  static WarningSink instance;
  return instance;
}

}  // namespace

void set_warning_sink(WarningSink s) { sink() = std::move(s); }

void warn(const std::string& message) {
  if (auto& s = sink()) {
    s(message);
    return;
  }
  std::cerr << "cumix: warning: " << message << '\n';
}

}  // namespace cumix
