#pragma once

#include <stdexcept>
#include <string>

namespace strkm {

// Every error the library raises derives from one of these. The CLI maps the
// families onto process exit codes (validation 1, io 2, divergence 3).

class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

class DecompositionError : public ValidationError {
 public:
  DecompositionError(const std::string& what, std::size_t column)
      : ValidationError(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed file contents (CSV cells, IDX headers, model archives).
class FormatError : public IoError {
 public:
  explicit FormatError(const std::string& what) : IoError(what) {}
};

}  // namespace strkm
