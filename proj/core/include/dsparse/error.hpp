#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsparse {

enum class Errc {
  invalid_argument,
  resource_limit,
  dimension_mismatch,
  non_finite,
  singular_channel,
  shape_mismatch,
  degenerate,
  io_error,
};

std::string_view to_string(Errc code) noexcept;

// Single exception type for the library; `code()` lets callers (the CLI in
// particular) map failures onto exit statuses without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace dsparse
