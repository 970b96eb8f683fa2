#ifndef EFFMASS_ERRORS_HPP
#define EFFMASS_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace effmass {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: configuration documents, parameters, preset names.
class ConfigError : public Error
{
public:
  using Error::Error;
};

/// A physical parameter outside its domain; `field()` names the offender.
class DomainError : public ConfigError
{
public:
  DomainError(std::string field, const std::string& what)
    : ConfigError(field + ": " + what), field_(std::move(field)) { }

  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// The simulation box cannot resolve the requested wavepacket.
class SizingError : public ConfigError
{
public:
  SizingError(std::size_t required_cells, const std::string& what)
    : ConfigError(what), required_(required_cells) { }

  std::size_t required_cells() const noexcept { return required_; }

private:
  std::size_t required_;
};

/// Failures of the numerical machinery (as opposed to bad input).
class NumericalError : public Error
{
public:
  using Error::Error;
};

/// Two bands closer than the degeneracy tolerance where first-order theory needs a gap.
class DegeneracyError : public NumericalError
{
public:
  using NumericalError::NumericalError;
};

/// A grid (k path, quadrature, time sampling) is too coarse for the requested accuracy.
class ResolutionError : public NumericalError
{
public:
  using NumericalError::NumericalError;
};

class IoError : public Error
{
public:
  using Error::Error;
};

} // namespace effmass

#endif
