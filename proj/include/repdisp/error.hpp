#pragma once

#include <stdexcept>
#include <string>

namespace repdisp {

enum class Errc {
  io,
  bad_magic,
  unsupported_dtype,
  truncated,
  non_finite,
  parse,
  duplicate_index,
  not_found,
  bad_shape,
  out_of_bounds,
  invalid_argument,
  degenerate,
  insufficient_pool,
  mismatch,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace repdisp
