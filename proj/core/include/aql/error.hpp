#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aql {

enum class Errc {
  schema,       // schema violation, unknown attribute/column, type mismatch
  domain,       // coordinates or boxes outside the valid domain
  layout,       // operation requires a different chunk layout
  config,       // invalid configuration or operator parameter
  format,       // malformed chunk file or manifest
  io,           // filesystem failure
  mode,         // REBOX mode misuse
  shape,        // COMBINE shape mismatch
  unsupported,  // unsupported layout (e.g. non-aligned INNERDJOIN)
  catalog,      // unknown array
  contract,     // GLA contract violation
  dependency,   // benchmark phase prerequisite missing
  parse,        // plan-script syntax error
  cycle,        // plan-script reference cycle
  internal,
};

std::string_view to_string(Errc code);

/// Single exception type for the engine; `code()` classifies the failure.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + " error: " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace aql
