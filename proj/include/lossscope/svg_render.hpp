#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "lossscope/landscape.hpp"

namespace lossscope {

enum class RenderKind { contour, heatmap, curve, trajectory_overlay };

std::string render_kind_name(RenderKind kind);
RenderKind render_kind_from_name(std::string_view name);

struct RenderSpec {
    RenderKind kind = RenderKind::heatmap;
    double color_cap = 3.0;  // values clip here for color/axis scaling only
    std::vector<double> contour_levels;  // strictly increasing; empty = derived from the cap
    int width = 480;
    int height = 480;

    void validate() const;
};

struct Polyline {
    std::vector<std::array<double, 2>> points;  // (alpha, beta) coordinates
    bool closed = false;
};

// Level curves of the sampled grid, linearly interpolated along cell edges
// and stitched into polylines. Adjacent cells compute shared crossings from
// the same inputs, so chains connect exactly.
std::vector<Polyline> marching_squares(const SurfaceGrid& grid, double level);

// Deterministic SVG. The optional trajectory is drawn in epoch order with
// start and end markers; surfaces anchored at theta1 mark (0,0) and the
// rollback point (-1,0) instead.
std::string render_surface_svg(const SurfaceGrid& grid, const RenderSpec& spec,
                               const TrajectoryProjection* overlay = nullptr);

struct CurvePlotEntry {
    const CurveSamples* curve = nullptr;
    std::string label;
    bool dashed = false;  // the paper draws training from scratch dashed
};

// One shared axis system; when scale_alpha_axis is set the x axis is
// alpha * axis_scale (parameter-space distance), the normalization used for
// flatness comparisons.
std::string render_curves_svg(std::span<const CurvePlotEntry> entries, const RenderSpec& spec,
                              bool scale_alpha_axis);

}  // namespace lossscope
