// Copyright 2026 The NanoQuant Authors.
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

#ifndef NANOQUANT_ERRORS_HPP
#define NANOQUANT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace nanoquant {

// Failure class decides the process exit code in the CLI:
// bad inputs exit 2, numerical breakdown exits 3.
enum class ErrorKind { kValidation, kNumerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& what)
      : Error(ErrorKind::kValidation, "dimension mismatch: " + what) {}
};

struct NotSymmetric : Error {
  explicit NotSymmetric(const std::string& what = "matrix is not symmetric")
      : Error(ErrorKind::kValidation, what) {}
};

struct NotPositiveDefinite : Error {
  explicit NotPositiveDefinite(
      const std::string& what = "matrix is not positive definite")
      : Error(ErrorKind::kNumerical, what) {}
};

struct ZeroMatrix : Error {
  explicit ZeroMatrix(const std::string& what = "matrix is identically zero")
      : Error(ErrorKind::kNumerical, what) {}
};

struct NonFiniteInput : Error {
  explicit NonFiniteInput(const std::string& what = "input contains non-finite values")
      : Error(ErrorKind::kValidation, what) {}
};

struct EmptyStats : Error {
  explicit EmptyStats(const std::string& what = "statistics hold no samples")
      : Error(ErrorKind::kValidation, what) {}
};

struct NonBinaryEntry : Error {
  explicit NonBinaryEntry(const std::string& what = "entry is not exactly +1 or -1")
      : Error(ErrorKind::kValidation, what) {}
};

struct CorruptPadding : Error {
  explicit CorruptPadding(const std::string& what = "padding bits beyond cols are set")
      : Error(ErrorKind::kValidation, what) {}
};

struct RankTooLarge : Error {
  explicit RankTooLarge(const std::string& what = "rank exceeds min(rows, cols)")
      : Error(ErrorKind::kValidation, what) {}
};

struct InvalidRank : Error {
  explicit InvalidRank(const std::string& what = "rank must be at least 1")
      : Error(ErrorKind::kValidation, what) {}
};

struct InvalidSalientCount : Error {
  explicit InvalidSalientCount(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

struct UnsupportedMethod : Error {
  explicit UnsupportedMethod(const std::string& what = "unsupported method")
      : Error(ErrorKind::kValidation, what) {}
};

struct TargetTooSmall : Error {
  explicit TargetTooSmall(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

struct NoTunableLayers : Error {
  explicit NoTunableLayers(const std::string& what = "chain has no tunable layer")
      : Error(ErrorKind::kValidation, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::kValidation, what) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error(ErrorKind::kValidation, what) {}
};

}  // namespace nanoquant

#endif  // NANOQUANT_ERRORS_HPP
