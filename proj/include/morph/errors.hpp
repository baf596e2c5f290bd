// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace morph {

// Malformed input data (corpus files, vocabulary, templates, checkpoints).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

// Invalid run configuration or command-line usage.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A required file is missing or unreadable.
class FileError : public std::runtime_error {
 public:
  explicit FileError(const std::string& what) : std::runtime_error(what) {}
};

// Training diverged (non-finite loss or parameters).
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace morph
