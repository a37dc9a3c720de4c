#include "simedu/error.hpp"

namespace simedu {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::WeightOverflow: return "WeightOverflow";
    case ErrorCode::UnknownConcept: return "UnknownConcept";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::MissingMastery: return "MissingMastery";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::StudySkillsAlreadyUsed: return "StudySkillsAlreadyUsed";
    case ErrorCode::InvalidStructure: return "InvalidStructure";
    case ErrorCode::WeightNormalization: return "WeightNormalization";
    case ErrorCode::NoExamAtStep: return "NoExamAtStep";
    case ErrorCode::IncompleteEpisode: return "IncompleteEpisode";
    case ErrorCode::IllegalAction: return "IllegalAction";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::DegenerateNormalizer: return "DegenerateNormalizer";
    case ErrorCode::EmptyFeedback: return "EmptyFeedback";
    case ErrorCode::MissingBelief: return "MissingBelief";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::EmptyRows: return "EmptyRows";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace simedu
