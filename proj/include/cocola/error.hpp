#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace cocola {

/// Where an error came from: the file being read, the 1-based line (for
/// line-oriented formats) and the offending item (question id, tensor name).
struct ErrorContext {
  std::string file;
  std::optional<std::size_t> line;
  std::string item;
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message, ErrorContext context = {})
      : std::runtime_error(format(message, context)), message_(message), context_(std::move(context)) {}

  const std::string& message() const noexcept { return message_; }
  const ErrorContext& context() const noexcept { return context_; }

 private:
  static std::string format(const std::string& message, const ErrorContext& ctx) {
    std::string out;
    if (!ctx.file.empty()) {
      out += ctx.file;
      if (ctx.line) out += ":" + std::to_string(*ctx.line);
      out += ": ";
    } else if (ctx.line) {
      out += "line " + std::to_string(*ctx.line) + ": ";
    }
    if (!ctx.item.empty()) out += "[" + ctx.item + "] ";
    out += message;
    return out;
  }

  std::string message_;
  ErrorContext context_;
};

// Corpus and generation-log ingestion.
class IngestError : public Error {
  using Error::Error;
};

// Tensor container parsing and tensor diffing.
class ContainerError : public Error {
  using Error::Error;
};

// Naming-scheme configuration.
class SchemeError : public Error {
  using Error::Error;
};

// Freeze planning.
class PlanError : public Error {
  using Error::Error;
};

// Violated operation precondition (bad argument).
class PreconditionError : public Error {
  using Error::Error;
};

}  // namespace cocola
