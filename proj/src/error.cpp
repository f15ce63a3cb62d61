#include "repdisp/error.hpp"

namespace repdisp {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::io: return "io";
    case Errc::bad_magic: return "bad_magic";
    case Errc::unsupported_dtype: return "unsupported_dtype";
    case Errc::truncated: return "truncated";
    case Errc::non_finite: return "non_finite";
    case Errc::parse: return "parse";
    case Errc::duplicate_index: return "duplicate_index";
    case Errc::not_found: return "not_found";
    case Errc::bad_shape: return "bad_shape";
    case Errc::out_of_bounds: return "out_of_bounds";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::degenerate: return "degenerate";
    case Errc::insufficient_pool: return "insufficient_pool";
    case Errc::mismatch: return "mismatch";
  }
  return "unknown";
}

}  // namespace repdisp
