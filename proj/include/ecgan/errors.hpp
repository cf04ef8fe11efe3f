#pragma once

#include <stdexcept>
#include <string>

namespace ecgan {

// Malformed or missing on-disk data (dataset index, checkpoint, landmark file).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/inf surfaced in a loss term or gradient. Carries the name of the
// offending term so logs and exit paths can point at it.
class NumericalInstabilityError : public std::runtime_error {
 public:
  explicit NumericalInstabilityError(const std::string& what)
      : std::runtime_error(what) {}
};

// Fewer than 3 landmark points, or all collinear: no usable face region.
class DegenerateLandmarksError : public std::invalid_argument {
 public:
  explicit DegenerateLandmarksError(const std::string& what)
      : std::invalid_argument(what) {}
};

// Instability during a training run. Remembers where the last intact
// checkpoint sits so callers can point the user at it.
class TrainingAborted : public NumericalInstabilityError {
 public:
  TrainingAborted(const std::string& what, std::string last_checkpoint,
                  long iteration)
      : NumericalInstabilityError(what),
        last_checkpoint_path(std::move(last_checkpoint)),
        aborted_at_iteration(iteration) {}

  std::string last_checkpoint_path;
  long aborted_at_iteration = 0;
};

}  // namespace ecgan
