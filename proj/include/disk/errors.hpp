#ifndef DISK_ERRORS_HPP
#define DISK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace disk {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class EmptyInput : public Error {
public:
  explicit EmptyInput(const std::string& what) : Error("empty input: " + what) {}
};

class UnknownKind : public Error {
public:
  explicit UnknownKind(const std::string& surface)
      : Error("UNKNOWN_KIND: cannot classify equation token '" + surface + "'"), surface_(surface) {}
  const std::string& surface() const { return surface_; }

private:
  std::string surface_;
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

// line is 1-based; 0 means "not line oriented" (e.g. a bracketed tree string).
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "parse error at line " + std::to_string(line) + ": " + what : "parse error: " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& what) : Error("validation error: " + what) {}
};

class NumericError : public Error {
public:
  explicit NumericError(const std::string& what) : Error("numeric error: " + what) {}
};

class RefuseOverwrite : public Error {
public:
  explicit RefuseOverwrite(const std::string& path)
      : Error("refusing to overwrite existing file " + path + " (use --force)") {}
};

} // namespace disk

#endif
