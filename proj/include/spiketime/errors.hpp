#pragma once

#include <stdexcept>
#include <string>

namespace spiketime {

// Caller violated a documented precondition (dimension mismatch, format
// mismatch, out-of-range label, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data outside its declared domain (pixel above i_max, ...).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file on disk does not match the format it claims to be in.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DownloadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChecksumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss or weight.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spiketime
