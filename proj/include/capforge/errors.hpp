#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace capforge {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error {
  using Error::Error;
};

struct MalformedLine : Error {
  MalformedLine(size_t line_no, const std::string& detail)
      : Error("malformed line " + std::to_string(line_no) + ": " + detail),
        line_no(line_no) {}
  size_t line_no;
};

struct MissingField : Error {
  MissingField(size_t line_no, const std::string& field)
      : Error("line " + std::to_string(line_no) + ": missing field '" + field + "'"),
        line_no(line_no),
        field(field) {}
  size_t line_no;
  std::string field;
};

struct InconsistentPool : Error {
  explicit InconsistentPool(const std::string& entry_id)
      : Error("entry '" + entry_id + "' disagrees with pool order/size"),
        entry_id(entry_id) {}
  std::string entry_id;
};

struct EmptyCorpus : Error {
  EmptyCorpus() : Error("empty corpus") {}
};

struct NoValidClause : Error {
  NoValidClause() : Error("no clause satisfies the shear policy") {}
};

struct EmptyInput : Error {
  EmptyInput() : Error("empty input") {}
};

struct MissingShard : Error {
  explicit MissingShard(size_t index)
      : Error("shard output " + std::to_string(index) + " is missing"), index(index) {}
  size_t index;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct ProviderUnavailable : Error {
  using Error::Error;
};

struct NonFiniteInput : Error {
  using Error::Error;
};

struct DivergenceDetected : Error {
  using Error::Error;
};

struct EmptyEvalSet : Error {
  EmptyEvalSet() : Error("empty eval set") {}
};

}  // namespace capforge
