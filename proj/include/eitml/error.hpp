#pragma once

#include <stdexcept>
#include <string>

namespace eitml {

/// Base class for every error raised by the toolkit. `kind()` is a stable
/// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& message) : Error("invalid_argument", message) {}
};

class MeshError : public Error {
public:
    explicit MeshError(const std::string& message) : Error("mesh_error", message) {}
};

class DegenerateElement : public Error {
public:
    DegenerateElement(int element, const std::string& message)
        : Error("degenerate_element", message), element_(element) {}
    int element() const noexcept { return element_; }

private:
    int element_;
};

class EllipticityError : public Error {
public:
    EllipticityError(double x, double y, const std::string& message)
        : Error("ellipticity_error", message), x_(x), y_(y) {}
    double x() const noexcept { return x_; }
    double y() const noexcept { return y_; }

private:
    double x_;
    double y_;
};

class PlacementError : public Error {
public:
    explicit PlacementError(const std::string& message) : Error("placement_error", message) {}
};

class SolverError : public Error {
public:
    explicit SolverError(const std::string& message) : Error("solver_error", message) {}
};

class SingularMatrix : public Error {
public:
    explicit SingularMatrix(const std::string& message) : Error("singular_matrix", message) {}
};

class ParseError : public Error {
public:
    ParseError(int line, const std::string& message)
        : Error("parse_error", message), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& message) : Error("training_error", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io_error", message) {}
};

}  // namespace eitml
