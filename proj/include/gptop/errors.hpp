#pragma once

#include <stdexcept>
#include <string>

namespace gptop {

/// Shape or axis mismatch between operands.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error("dimension error: " + msg) {}
};

/// Invalid argument value (out-of-range constants, bad configuration).
struct ParameterError : std::runtime_error {
    explicit ParameterError(const std::string& msg) : std::runtime_error("parameter error: " + msg) {}
};

/// Runtime numerical failure (singular systems, failed bisection).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error("numerical error: " + msg) {}
};

/// Collocation-grid construction or stencil failure.
struct GridError : std::runtime_error {
    explicit GridError(const std::string& msg) : std::runtime_error("grid error: " + msg) {}
};

/// Gaussian-process conditioning failure (non-SPD covariance, duplicates).
struct ConditioningError : std::runtime_error {
    explicit ConditioningError(const std::string& msg) : std::runtime_error("conditioning error: " + msg) {}
};

/// Non-finite loss or gradient during training.
struct TrainingFault : std::runtime_error {
    explicit TrainingFault(const std::string& msg) : std::runtime_error("training fault: " + msg) {}
};

/// File system / serialization failure.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

/// Metric computation failure (degenerate thresholding input).
struct MetricError : std::runtime_error {
    explicit MetricError(const std::string& msg) : std::runtime_error("metric error: " + msg) {}
};

}  // namespace gptop
