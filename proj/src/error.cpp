// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/error.hpp"

namespace logasset {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::TimestampOrderViolation: return "TimestampOrderViolation";
    case ErrorCode::UnknownCameraId: return "UnknownCameraId";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::InvalidCamera: return "InvalidCamera";
    case ErrorCode::OutOfImage: return "OutOfImage";
    case ErrorCode::RootFindFailure: return "RootFindFailure";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::CameraInsideTarget: return "CameraInsideTarget";
    case ErrorCode::CoeffCountMismatch: return "CoeffCountMismatch";
    case ErrorCode::BlockSizeMismatch: return "BlockSizeMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::EmptyViewSet: return "EmptyViewSet";
    case ErrorCode::EmptyRenderMask: return "EmptyRenderMask";
    case ErrorCode::EmptyGtMask: return "EmptyGtMask";
    case ErrorCode::NoForegroundPatches: return "NoForegroundPatches";
    case ErrorCode::ZeroEmbedding: return "ZeroEmbedding";
    case ErrorCode::InsufficientKeypoints: return "InsufficientKeypoints";
    case ErrorCode::NoCommonParts: return "NoCommonParts";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::MissingExternalOutputs: return "MissingExternalOutputs";
    case ErrorCode::AssetLoadError: return "AssetLoadError";
    case ErrorCode::NoHeldOutViews: return "NoHeldOutViews";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace logasset
