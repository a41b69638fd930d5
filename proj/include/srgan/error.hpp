#pragma once

#include <stdexcept>
#include <string>

namespace srgan {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between tensors, layers, datasets or checkpoints.
struct DimensionError : Error {
  using Error::Error;
};

// NaN/Inf produced by an op, or a numerically undefined quantity (zero-norm cosine).
struct NumericError : Error {
  using Error::Error;
};

// Misuse of the differentiation graph.
struct GraphError : Error {
  using Error::Error;
};

// Malformed or inconsistent input files.
struct DataError : Error {
  using Error::Error;
};

// Checkpoint container problems: magic, version, truncation, checksum.
struct FormatError : Error {
  using Error::Error;
};

}  // namespace srgan
