#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wildal {

enum class Errc {
    MissingFile,
    MalformedRecord,
    UnknownLabel,
    DuplicateImageId,
    InvalidSpec,
    InvalidArgument,
    DegenerateBox,
    NoPixels,
    UnknownProvider,
    MissingEmbedding,
    DimensionMismatch,
    CorruptStore,
    EmptyTrainingSet,
    LengthMismatch,
    UnnormalizedScore,
    EmptyMatrix,
    InvalidFractions,
    EmptyDataset,
    TooFewStations,
    DegenerateGridPoint,
    EmptyPool,
    NotQueriedOrUnknown,
    LabelConflict,
    NoLabels,
    NoModel,
    IoFailure,
    VersionMismatch,
    CorruptState,
    ProjectLocked,
    BindFailure,
    Conflict,
};

std::string_view to_string(Errc code) noexcept;

// Validation errors are caused by user input (bad files, flags, labels);
// everything else is a runtime failure.
bool is_validation_error(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace wildal
