#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvnn {

/// Raised when an argument violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Two sample points share identical coordinates; the Voronoi partition is undefined.
class DuplicatePoint : public InvalidInput {
 public:
  DuplicatePoint(std::size_t first, std::size_t second)
      : InvalidInput("duplicate points at indices " + std::to_string(first) + " and " +
                     std::to_string(second)),
        first_(first),
        second_(second) {}

  std::size_t first() const noexcept { return first_; }
  std::size_t second() const noexcept { return second_; }

 private:
  std::size_t first_;
  std::size_t second_;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace cvnn
