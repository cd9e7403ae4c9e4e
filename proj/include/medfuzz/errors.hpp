#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace medfuzz {

// Root of every error the library raises. Callers that only need to report
// and exit can catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- corpus -------------------------------------------------------------

class CorpusFormatError : public Error {
 public:
  CorpusFormatError(std::size_t line, const std::string& what)
      : Error("corpus format error at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ItemValidationError : public Error {
 public:
  ItemValidationError(std::string item_id, std::string rule)
      : Error("item '" + item_id + "' invalid: " + rule),
        item_id_(std::move(item_id)),
        rule_(std::move(rule)) {}
  const std::string& item_id() const noexcept { return item_id_; }
  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string item_id_;
  std::string rule_;
};

class MappingError : public Error {
 public:
  using Error::Error;
};

// ---- gateway ------------------------------------------------------------

// Transport-level failure that is worth retrying (connection refused, 429, 5xx).
class TransientError : public Error {
 public:
  using Error::Error;
};

class GatewayUnavailableError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

class ScriptGapError : public Error {
 public:
  using Error::Error;
};

// ---- prompts ------------------------------------------------------------

class BindingError : public Error {
 public:
  BindingError(std::string placeholder, const std::string& template_id)
      : Error("template '" + template_id + "' is missing binding for {" + placeholder + "}"),
        placeholder_(std::move(placeholder)) {}
  const std::string& placeholder() const noexcept { return placeholder_; }

 private:
  std::string placeholder_;
};

class TemplateLookupError : public Error {
 public:
  using Error::Error;
};

class SelfLeakError : public Error {
 public:
  using Error::Error;
};

// ---- analysis -----------------------------------------------------------

class ExtractionError : public Error {
 public:
  // `reason` is a short stable code such as "answer-region-modified".
  ExtractionError(std::string reason, const std::string& what) : Error(what), reason_(std::move(reason)) {}
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

class InsufficientControlsError : public Error {
 public:
  InsufficientControlsError(int accepted, int requested)
      : Error("only " + std::to_string(accepted) + " of " + std::to_string(requested) +
              " control fuzzes accepted (shortfall " + std::to_string(requested - accepted) + ")"),
        accepted_(accepted),
        requested_(requested) {}
  int shortfall() const noexcept { return requested_ - accepted_; }

 private:
  int accepted_;
  int requested_;
};

class NotApplicableError : public Error {
 public:
  using Error::Error;
};

class UndefinedRateError : public Error {
 public:
  using Error::Error;
};

class UndefinedAccuracyError : public Error {
 public:
  using Error::Error;
};

// ---- run store ----------------------------------------------------------

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IncompleteRunError : public Error {
 public:
  using Error::Error;
};

}  // namespace medfuzz
