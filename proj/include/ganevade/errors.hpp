#pragma once

#include <stdexcept>
#include <string>

namespace ganevade {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Dimension/shape violation. axis() names the offending axis when known
// (-1 otherwise).
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what, int axis = -1)
        : Error(what), axis_(axis) {}
    int axis() const noexcept { return axis_; }

private:
    int axis_;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DetectorError : public Error {
public:
    using Error::Error;
};

class TrainError : public Error {
public:
    using Error::Error;
};

class PipelineError : public Error {
public:
    using Error::Error;
};

} // namespace ganevade
