#include "wildal/error.hpp"

namespace wildal {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::MissingFile: return "MissingFile";
        case Errc::MalformedRecord: return "MalformedRecord";
        case Errc::UnknownLabel: return "UnknownLabel";
        case Errc::DuplicateImageId: return "DuplicateImageId";
        case Errc::InvalidSpec: return "InvalidSpec";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::DegenerateBox: return "DegenerateBox";
        case Errc::NoPixels: return "NoPixels";
        case Errc::UnknownProvider: return "UnknownProvider";
        case Errc::MissingEmbedding: return "MissingEmbedding";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::CorruptStore: return "CorruptStore";
        case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::UnnormalizedScore: return "UnnormalizedScore";
        case Errc::EmptyMatrix: return "EmptyMatrix";
        case Errc::InvalidFractions: return "InvalidFractions";
        case Errc::EmptyDataset: return "EmptyDataset";
        case Errc::TooFewStations: return "TooFewStations";
        case Errc::DegenerateGridPoint: return "DegenerateGridPoint";
        case Errc::EmptyPool: return "EmptyPool";
        case Errc::NotQueriedOrUnknown: return "NotQueriedOrUnknown";
        case Errc::LabelConflict: return "LabelConflict";
        case Errc::NoLabels: return "NoLabels";
        case Errc::NoModel: return "NoModel";
        case Errc::IoFailure: return "IoFailure";
        case Errc::VersionMismatch: return "VersionMismatch";
        case Errc::CorruptState: return "CorruptState";
        case Errc::ProjectLocked: return "ProjectLocked";
        case Errc::BindFailure: return "BindFailure";
        case Errc::Conflict: return "Conflict";
    }
    return "Unknown";
}

bool is_validation_error(Errc code) noexcept {
    switch (code) {
        case Errc::MissingFile:
        case Errc::MalformedRecord:
        case Errc::UnknownLabel:
        case Errc::DuplicateImageId:
        case Errc::InvalidSpec:
        case Errc::InvalidArgument:
        case Errc::InvalidFractions:
        case Errc::TooFewStations:
        case Errc::NotQueriedOrUnknown:
        case Errc::LabelConflict:
        case Errc::UnknownProvider:
            return true;
        default:
            return false;
    }
}

}  // namespace wildal
