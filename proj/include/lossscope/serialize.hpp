#pragma once

#include <string>

#include "lossscope/landscape.hpp"

namespace lossscope {

// Grid file: one JSON header line (spec, kind, axes meta, origin meta,
// format version) followed by a CSV body of samples x samples values in
// row-major order (row = alpha index), 17 significant digits.
std::string surface_to_text(const SurfaceGrid& grid);
SurfaceGrid surface_from_text(const std::string& text);

// Curves and trajectories are CSV with a '#'-prefixed JSON meta line and a
// column header row.
std::string curve_to_csv(const CurveSamples& curve);
CurveSamples curve_from_csv(const std::string& text);

std::string trajectory_to_csv(const TrajectoryProjection& traj);
TrajectoryProjection trajectory_from_csv(const std::string& text);

std::string rollback_to_csv(const std::vector<RollbackRow>& rows);
std::vector<RollbackRow> rollback_from_csv(const std::string& text);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace lossscope
