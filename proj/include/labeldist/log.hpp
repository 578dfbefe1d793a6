#pragma once

#include <functional>
#include <string_view>

namespace labeldist {

/// Non-fatal diagnostics. The default handler writes "warning: ..." to stderr.
void warn(std::string_view message);

using WarningHandler = std::function<void(std::string_view)>;
/// Replaces the handler and returns the previous one.
WarningHandler set_warning_handler(WarningHandler handler);

}  // namespace labeldist
