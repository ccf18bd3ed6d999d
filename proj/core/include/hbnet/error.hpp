/* Copyright 2026 The hbnet Authors. All Rights Reserved.

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

namespace hbnet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (mismatched lengths, bad counts).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Tensor or layer shapes do not compose.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// L2 normalization of an all-zero feature vector.
class ZeroNormError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Malformed file: wrong magic, unknown tag, bad structured text.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File carries a format version this build cannot read.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Payload length or checksum does not match the header.
class ChecksumError : public Error {
 public:
  using Error::Error;
};

/// A file referenced by a manifest cannot be opened or decoded.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hbnet
