#pragma once

#include <stdexcept>
#include <string>

namespace botgraph {

/// Base class for every error raised by the pipeline. `stage()` names the
/// pipeline stage that failed so the CLI can report it.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

#define BOTGRAPH_DEFINE_ERROR(Name, Stage)                        \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(Stage, what) {} \
  }

// ingest
BOTGRAPH_DEFINE_ERROR(ParseError, "ingest");
BOTGRAPH_DEFINE_ERROR(DuplicateUser, "ingest");
BOTGRAPH_DEFINE_ERROR(MixedMetadata, "ingest");
BOTGRAPH_DEFINE_ERROR(FormatError, "ingest");
BOTGRAPH_DEFINE_ERROR(DataError, "ingest");
BOTGRAPH_DEFINE_ERROR(IoError, "io");

// features
BOTGRAPH_DEFINE_ERROR(MissingMetadata, "features");
BOTGRAPH_DEFINE_ERROR(EmptyInput, "features");

// graph / sage
BOTGRAPH_DEFINE_ERROR(DimensionError, "model");
BOTGRAPH_DEFINE_ERROR(BatchTooSmall, "model");
BOTGRAPH_DEFINE_ERROR(EmptyMask, "model");
BOTGRAPH_DEFINE_ERROR(ModelMismatch, "model");
BOTGRAPH_DEFINE_ERROR(ConfigError, "config");

// eval
BOTGRAPH_DEFINE_ERROR(DegenerateLabels, "eval");

#undef BOTGRAPH_DEFINE_ERROR

/// Non-finite loss during training. Carries the (1-based) epoch.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, const std::string& what)
      : Error("train", what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace botgraph
