#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace simedu {

enum class ErrorCode {
  CycleDetected,
  WeightOverflow,
  UnknownConcept,
  DuplicateEdge,
  MissingMastery,
  OutOfRange,
  InvalidSpec,
  StudySkillsAlreadyUsed,
  InvalidStructure,
  WeightNormalization,
  NoExamAtStep,
  IncompleteEpisode,
  IllegalAction,
  UnknownKey,
  DegenerateNormalizer,
  EmptyFeedback,
  MissingBelief,
  ShapeMismatch,
  EmptyBatch,
  EmptyMask,
  EmptyRows,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-checkable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace simedu
