#pragma once

#include <stdexcept>
#include <string>

namespace spikesv {

// Thrown when inputs break a documented contract (dimensions, invariants,
// malformed configuration). Maps to exit code 2 in the CLI.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a computation cannot be completed reliably (degenerate
// spectra, ill-conditioned solves, solver failures). Exit code 3.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on file system and parse failures. Exit code 4.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spikesv
