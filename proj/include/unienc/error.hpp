// Copyright 2026 The UniEnc Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace unienc {

// Root of every error thrown by the library. The CLI maps subclasses onto
// exit codes (see tools/cli.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatches and other caller bugs.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Inputs outside an operation's domain (empty LSE input, step 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Target cannot be laid out on the CTC trellis: T < U + repeats.
class CtcInfeasible : public Error {
 public:
  CtcInfeasible(std::size_t frames, std::size_t required)
      : Error("ctc: infeasible target, " + std::to_string(frames) +
              " frames but at least " + std::to_string(required) +
              " required"),
        frames_(frames),
        required_(required) {}
  std::size_t frames() const { return frames_; }
  std::size_t required() const { return required_; }

 private:
  std::size_t frames_;
  std::size_t required_;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed text or binary input. `position` is a byte offset for binary
// formats and a 1-based line number for text formats.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t position)
      : Error(what), position_(position) {}
  std::uint64_t position() const { return position_; }

 private:
  std::uint64_t position_;
};

// Data that parses but disagrees with itself (manifest vs feature header).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(const std::string& tensor, const std::string& what)
      : Error("dimension mismatch for '" + tensor + "': " + what),
        tensor_(tensor) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};

// Configuration keys and values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace unienc
