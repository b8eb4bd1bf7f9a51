#pragma once

#include <stdexcept>
#include <string>

namespace fedhar {

// Every failure the library raises derives from Error so callers (the CLI in
// particular) can map the category onto a process exit code.
enum class ErrorKind {
  config,
  data,
  dimension,
  numeric_health,
  aggregation,
  partition,
  evaluation,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define FEDHAR_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

FEDHAR_DEFINE_ERROR(ConfigError, config)
FEDHAR_DEFINE_ERROR(DataError, data)
FEDHAR_DEFINE_ERROR(DimensionError, dimension)
FEDHAR_DEFINE_ERROR(NumericHealthError, numeric_health)
FEDHAR_DEFINE_ERROR(AggregationError, aggregation)
FEDHAR_DEFINE_ERROR(PartitionError, partition)
FEDHAR_DEFINE_ERROR(EvaluationError, evaluation)
FEDHAR_DEFINE_ERROR(IoError, io)

#undef FEDHAR_DEFINE_ERROR

}  // namespace fedhar
