#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pbench {

enum class ErrorCode {
  io = 1,          // filesystem / byte-level failures
  validation = 2,  // bundle or input contract violations
  config = 3,      // bad run configuration
  compute = 4,     // numerical failure (NaN loss, divergence, ...)
};

/// All library failures are reported through this exception type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Non-fatal diagnostics (fallbacks, dropped rows, ...) are routed here.
/// Default handler writes to stderr; tests install a capturing handler.
using WarnHandler = std::function<void(const std::string&)>;
void set_warn_handler(WarnHandler handler);
void warn(const std::string& msg);

/// Reads PERTURBENCH_THREADS; falls back to hardware_concurrency, min 1.
int effective_thread_count();

/// Formats a double with six significant digits ("%.6g"), the format used in
/// all report files so that repeated runs are byte-identical.
std::string format_g6(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace pbench
