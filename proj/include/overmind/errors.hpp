#ifndef OVERMIND_ERRORS_HPP
#define OVERMIND_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace overmind {

// Base for all domain errors thrown by the toolchain.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// pade
class DegenerateFit : public Error {
public:
  explicit DegenerateFit(const std::string& what) : Error("DegenerateFit: " + what) {}
};
class PoleInRange : public Error {
public:
  explicit PoleInRange(const std::string& what) : Error("PoleInRange: " + what) {}
};
class TargetUnreachable : public Error {
public:
  explicit TargetUnreachable(const std::string& what) : Error("TargetUnreachable: " + what) {}
};

// graph
class ParseError : public Error {
public:
  explicit ParseError(const std::string& path, const std::string& what = "")
      : Error("ParseError(" + path + ")" + (what.empty() ? "" : ": " + what)), field_path(path) {}
  std::string field_path;
};
class UnknownOperator : public Error {
public:
  explicit UnknownOperator(const std::string& what) : Error("UnknownOperator: " + what) {}
};
class CyclicGraph : public Error {
public:
  explicit CyclicGraph(const std::string& what) : Error("CyclicGraph: " + what) {}
};

// refexec
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& what) : Error("ShapeError: " + what) {}
};
class MissingCalibration : public Error {
public:
  explicit MissingCalibration(const std::string& what) : Error("MissingCalibration: " + what) {}
};
class CalibrationError : public Error {
public:
  explicit CalibrationError(const std::string& what) : Error("CalibrationError: " + what) {}
};

// isa
class FormatError : public Error {
public:
  FormatError(std::size_t offset, const std::string& what)
      : Error("FormatError(offset " + std::to_string(offset) + "): " + what), offset(offset) {}
  std::size_t offset;
};

// compiler
class PlacementError : public Error {
public:
  explicit PlacementError(const std::string& what) : Error("PlacementError: " + what) {}
};

// machine
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error("ConfigError: " + what) {}
};
class SimulationFault : public Error {
public:
  explicit SimulationFault(const std::string& what) : Error("SimulationFault: " + what) {}
};

}  // namespace overmind

#endif
