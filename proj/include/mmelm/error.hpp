#pragma once

#include <stdexcept>
#include <string>

namespace mmelm {

/// Root of every error thrown by the library. `category()` drives CLI exit codes.
class Error : public std::runtime_error {
public:
    enum class Category { config, data, model_domain, io, internal };

    Error(Category category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    Category category() const noexcept { return category_; }

private:
    Category category_;
};

// Argument outside the domain an operation accepts (negative current, NaN input...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(Category::model_domain, what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(Category::data, what) {}
};

class NoOscillationError : public Error {
public:
    explicit NoOscillationError(const std::string& what) : Error(Category::model_domain, what) {}
};

class SingularityError : public Error {
public:
    explicit SingularityError(const std::string& what) : Error(Category::model_domain, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(Category::config, what) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(Category::data, what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class SplitError : public Error {
public:
    explicit SplitError(const std::string& what) : Error(Category::data, what) {}
};

// Virtual input dimension larger than the physical array can synthesize.
class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& what) : Error(Category::config, what) {}
};

class EvaluationError : public Error {
public:
    explicit EvaluationError(const std::string& what) : Error(Category::model_domain, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(Category::io, what) {}
};

}  // namespace mmelm
