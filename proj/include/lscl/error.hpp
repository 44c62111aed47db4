/* Copyright 2026 The LSCL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace lscl {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or image shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity appeared where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (bad magic, truncated payload, unparsable CSV).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A required file or directory does not exist.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied value is outside its documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace lscl
