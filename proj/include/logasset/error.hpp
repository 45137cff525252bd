// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace logasset {

// Error codes shared by every module. Return states that are part of a
// normal result (Behind, OutOfFov, Culled, ...) are not errors and never
// appear here.
enum class ErrorCode {
    // logstore
    MissingFile,
    SchemaViolation,
    TimestampOrderViolation,
    UnknownCameraId,
    EmptyTrack,
    // camera
    InvalidCamera,
    OutOfImage,
    RootFindFailure,
    BehindCamera,
    // geometry
    CameraInsideTarget,
    // gaussians
    CoeffCountMismatch,
    BlockSizeMismatch,
    ShapeMismatch,
    CorruptHeader,
    TruncatedPayload,
    // flowmatch
    DimMismatch,
    NonFiniteState,
    EmptyViewSet,
    // metrics
    EmptyRenderMask,
    EmptyGtMask,
    NoForegroundPatches,
    ZeroEmbedding,
    InsufficientKeypoints,
    NoCommonParts,
    UnknownClass,
    TransportError,
    // pipeline
    MissingExternalOutputs,
    AssetLoadError,
    NoHeldOutViews,
    InvalidConfig,
    IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace logasset
