#pragma once

#include <stdexcept>
#include <string>

namespace stcd {

// Error categories. IO failures get distinct codes so callers can tell a
// truncated file from a checksum mismatch without parsing messages.
enum class errc {
  invalid_argument,
  shape_mismatch,
  bad_config,
  io_missing_file,
  io_bad_magic,
  io_bad_version,
  io_truncated,
  io_checksum_mismatch,
  io_bad_manifest,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::invalid_argument:     return "invalid_argument";
    case errc::shape_mismatch:       return "shape_mismatch";
    case errc::bad_config:           return "bad_config";
    case errc::io_missing_file:      return "io_missing_file";
    case errc::io_bad_magic:         return "io_bad_magic";
    case errc::io_bad_version:       return "io_bad_version";
    case errc::io_truncated:         return "io_truncated";
    case errc::io_checksum_mismatch: return "io_checksum_mismatch";
    case errc::io_bad_manifest:      return "io_bad_manifest";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

}  // namespace stcd
