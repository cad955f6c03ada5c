#pragma once

#include <stdexcept>
#include <string>

namespace himosa {

// Error categories. All derive from std::runtime_error so callers can catch
// broadly; the CLI maps any of them to a nonzero exit with a one-line cause.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-run numeric mode. f64 is the verification default; f32 rounds every
// forward result to float32-representable values for speed-oriented runs.
enum class Precision { f64, f32 };

void set_run_precision(Precision p);
Precision run_precision();

}  // namespace himosa
