#pragma once

#include <stdexcept>
#include <string>

namespace mtpd {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor or layer shape disagreement. The message names the offending layer.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Bad configuration: unknown keys, out-of-range knobs, unknown tap ids.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A pipeline stage was invoked before its inputs exist or the provenance chain is broken.
class DependencyError : public Error {
public:
    using Error::Error;
};

// NaN/Inf showed up in a loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Channel surgery would produce an inconsistent graph.
class StructuralError : public Error {
public:
    using Error::Error;
};

}  // namespace mtpd
