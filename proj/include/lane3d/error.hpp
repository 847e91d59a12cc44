#pragma once

#include <stdexcept>
#include <string>

namespace lane3d {

enum class ErrorKind {
    InvalidInput,
    DegenerateProjection,  // point at or above camera height
    NoGroundIntersection,  // pixel at or above the horizon
    BehindCamera,
    InvalidLane,
    DegenerateSegment,
    InsufficientPoints,
    IllConditioned,
    InvalidSpec,
    Diverged,
    Format,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Numeric failures (divergence, ill-conditioning) as opposed to bad input.
    bool is_numeric() const noexcept {
        return kind_ == ErrorKind::Diverged || kind_ == ErrorKind::IllConditioned;
    }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidInput: return "invalid-input";
        case ErrorKind::DegenerateProjection: return "degenerate-projection";
        case ErrorKind::NoGroundIntersection: return "no-ground-intersection";
        case ErrorKind::BehindCamera: return "behind-camera";
        case ErrorKind::InvalidLane: return "invalid-lane";
        case ErrorKind::DegenerateSegment: return "degenerate-segment";
        case ErrorKind::InsufficientPoints: return "insufficient-points";
        case ErrorKind::IllConditioned: return "ill-conditioned";
        case ErrorKind::InvalidSpec: return "invalid-spec";
        case ErrorKind::Diverged: return "diverged";
        case ErrorKind::Format: return "format";
    }
    return "unknown";
}

}  // namespace lane3d
