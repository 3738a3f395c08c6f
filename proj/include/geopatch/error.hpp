#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geopatch {

enum class ErrorKind {
    InvalidShape,
    NonFiniteInput,
    DivergenceInfinite,
    MalformedVocab,
    MalformedMerges,
    UnknownToken,
    NoSharedPrefix,
    UnsupportedAsymmetry,
    MalformedArchive,
    MissingTensor,
    ShapeMismatch,
    InvalidConfig,
    InvalidPatch,
    NonFiniteActivation,
    WindowTooWide,
    SourceUnavailable,
    InvalidPlan,
    CorpusBuildError,
    NothingToRender,
    Io,
};

std::string_view to_string(ErrorKind kind);

// All library failures surface as this exception; kind() is what callers
// (and the CLI's machine-readable error line) switch on.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace geopatch
