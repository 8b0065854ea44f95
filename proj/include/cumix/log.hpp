#pragma once

#include <functional>
#include <string>

namespace cumix {

using WarningSink = std::function<void(const std::string&)>;

// Warnings go to stderr unless a sink is installed. Install the sink once at
// startup; it is not synchronized against concurrent warn() calls.
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace cumix
