#pragma once

#include <stdexcept>
#include <string>

namespace inter {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad arguments, bad configuration, or a missing input file. The CLI maps
// these to exit status 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed record in an input file or a corrupt binary artifact.
class FormatError : public Error {
public:
    using Error::Error;
};

class DuplicateIdError : public Error {
public:
    explicit DuplicateIdError(const std::string& id)
        : Error("duplicate id: " + id), id_(id) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

// Lookup of a document, query, or vector id that does not exist.
class NotFoundError : public Error {
public:
    using Error::Error;
};

// Network failure or unusable response from a remote service.
class TransportError : public Error {
public:
    using Error::Error;
};

class AuthError : public Error {
public:
    using Error::Error;
};

// Every sample returned by a generator was empty after cleanup.
class EmptyGenerationError : public Error {
public:
    using Error::Error;
};

}  // namespace inter
