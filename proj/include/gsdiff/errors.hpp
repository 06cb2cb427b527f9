#pragma once

#include <stdexcept>
#include <string>

namespace gsdiff {

// Error taxonomy. The CLI maps these onto distinct exit codes:
// ConfigError/usage -> 2, IoError/FormatError -> 3, everything else -> 1.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error("format: " + msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& msg) : Error("shape: " + msg) {}
};

struct DegenerateRotation : Error {
  explicit DegenerateRotation(const std::string& msg) : Error("rotation: " + msg) {}
};

struct InvalidTimestep : Error {
  explicit InvalidTimestep(const std::string& msg) : Error("timestep: " + msg) {}
};

struct InvalidRange : Error {
  explicit InvalidRange(const std::string& msg) : Error("range: " + msg) {}
};

struct EmptyMask : Error {
  explicit EmptyMask(const std::string& msg) : Error("mask: " + msg) {}
};

struct EmptyCloud : Error {
  explicit EmptyCloud(const std::string& msg) : Error("cloud: " + msg) {}
};

struct EmptySet : Error {
  explicit EmptySet(const std::string& msg) : Error("set: " + msg) {}
};

struct AllMasked : Error {
  explicit AllMasked(const std::string& msg) : Error("all rows masked: " + msg) {}
};

struct InsufficientViews : Error {
  explicit InsufficientViews(const std::string& msg) : Error("views: " + msg) {}
};

struct DivergedFit : Error {
  explicit DivergedFit(const std::string& msg) : Error("fit diverged: " + msg) {}
};

struct TooSmall : Error {
  explicit TooSmall(const std::string& msg) : Error("too small: " + msg) {}
};

}  // namespace gsdiff
