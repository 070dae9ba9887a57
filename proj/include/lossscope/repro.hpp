#pragma once

#include <string>
#include <vector>

#include "lossscope/experiment.hpp"

namespace lossscope {

struct ManifestEntry {
    std::string path;  // relative to the figure directory
    std::string sha256;
};

struct ReproResult {
    std::string figure_id;
    std::string directory;
    std::vector<ManifestEntry> files;  // sorted by path; excludes the manifest itself
};

const std::vector<std::string>& known_figures();

// Builds (or reuses) the prerequisite runs and writes the figure's artifact
// files plus manifest.json into <out_dir>/<figure_id>/.
ReproResult repro_figure(const std::string& figure_id, Experiment& exp);

std::string manifest_to_json(const ReproResult& result);
ReproResult manifest_from_json(const std::string& text);

}  // namespace lossscope
