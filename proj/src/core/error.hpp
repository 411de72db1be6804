#pragma once

#include <stdexcept>
#include <string>

namespace dvb {

enum class Errc {
  invalid_argument = 1,
  config,
  inadmissible_force,
  unstable,
  numeric,
  io,
  budget,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace dvb
