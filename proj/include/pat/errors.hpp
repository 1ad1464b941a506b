#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pat {

// Base type for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched tensor extents (matmul inner dims, concat widths, ...).
struct DimensionError : Error {
  using Error::Error;
};

// Invalid derived extents (conv output, stem divisibility).
struct ShapeError : Error {
  using Error::Error;
};

// API contract violated (non-scalar loss, label out of range, K < 2).
struct ContractError : Error {
  using Error::Error;
};

// Mathematically degenerate input (zero-norm vector under cosine).
struct DegenerateInputError : Error {
  using Error::Error;
};

// Batch does not satisfy the triplet-mining precondition.
struct SamplingError : Error {
  using Error::Error;
};

// Malformed file content; carries the byte offset of the defect.
struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t byte_offset)
      : Error(msg + " (byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset = 0;
};

struct IoError : Error {
  using Error::Error;
};

// Bad run/synth configuration (unknown key, unparsable value).
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite loss or gradient during training.
struct NumericError : Error {
  using Error::Error;
};

// Checkpoint magic/version/layout problems.
struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace pat
