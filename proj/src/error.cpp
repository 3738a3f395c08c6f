#include "geopatch/error.hpp"

namespace geopatch {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidShape: return "InvalidShape";
        case ErrorKind::NonFiniteInput: return "NonFiniteInput";
        case ErrorKind::DivergenceInfinite: return "DivergenceInfinite";
        case ErrorKind::MalformedVocab: return "MalformedVocab";
        case ErrorKind::MalformedMerges: return "MalformedMerges";
        case ErrorKind::UnknownToken: return "UnknownToken";
        case ErrorKind::NoSharedPrefix: return "NoSharedPrefix";
        case ErrorKind::UnsupportedAsymmetry: return "UnsupportedAsymmetry";
        case ErrorKind::MalformedArchive: return "MalformedArchive";
        case ErrorKind::MissingTensor: return "MissingTensor";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::InvalidPatch: return "InvalidPatch";
        case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
        case ErrorKind::WindowTooWide: return "WindowTooWide";
        case ErrorKind::SourceUnavailable: return "SourceUnavailable";
        case ErrorKind::InvalidPlan: return "InvalidPlan";
        case ErrorKind::CorpusBuildError: return "CorpusBuildError";
        case ErrorKind::NothingToRender: return "NothingToRender";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

} // namespace geopatch
