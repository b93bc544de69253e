// Copyright 2026 The learnjpeg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace ljpg {

/// Base of every error thrown by the library.  The C API maps each
/// subclass onto a stable status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed an argument outside its documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported image/bitstream data.  `marker` names the
/// JPEG segment being parsed when the failure happened (empty for PPM).
class FormatError : public Error {
 public:
  FormatError(std::string marker, const std::string& what)
      : Error(marker.empty() ? what : marker + ": " + what),
        marker_(std::move(marker)) {}

  const std::string& marker() const noexcept { return marker_; }

 private:
  std::string marker_;
};

/// Tensor operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ljpg
