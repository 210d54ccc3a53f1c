// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "vpmap/core.hpp"

namespace vpmap {

struct TrackObservation {
    int frame = 0;
    double u = 0.0;
    double v = 0.0;
    bool visible = true;
};

/// Pixel positions of one static scene point across frames.
struct Trajectory2D {
    int id = 0;
    std::vector<TrackObservation> observations;

    /// Frame indices strictly increasing; visible positions inside the grid.
    void validate(const FrameGrid& grid) const;
};

}  // namespace vpmap
