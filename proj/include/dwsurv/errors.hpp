#pragma once

#include <stdexcept>
#include <string>

namespace dwsurv {

// Machine-readable failure categories; the CLI maps these to exit codes
// and prints them on stderr as "error:<category>: <message>".
enum class ErrorCategory {
  schema,
  singular,
  positivity,
  no_information,
  degenerate_predictor,
  protocol,
  io,
  usage,
};

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::schema: return "schema";
    case ErrorCategory::singular: return "singular";
    case ErrorCategory::positivity: return "positivity";
    case ErrorCategory::no_information: return "no_information";
    case ErrorCategory::degenerate_predictor: return "degenerate_predictor";
    case ErrorCategory::protocol: return "protocol";
    case ErrorCategory::io: return "io";
    case ErrorCategory::usage: return "usage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace dwsurv
