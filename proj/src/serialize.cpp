#include "lossscope/serialize.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lossscope/text_format.hpp"

namespace lossscope {

namespace {

constexpr const char* kGridFormat = "lossscope-grid";
constexpr const char* kCurveTag = "# lossscope-curve v1 ";
constexpr const char* kTrajectoryTag = "# lossscope-trajectory v1 ";

nlohmann::json spec_to_json(const GridSpec& spec) {
    return {{"alpha_min", spec.alpha_min}, {"alpha_max", spec.alpha_max}, {"beta_min", spec.beta_min},
            {"beta_max", spec.beta_max},   {"samples_per_axis", spec.samples_per_axis}};
}

GridSpec spec_from_json(const nlohmann::json& j) {
    GridSpec spec;
    j.at("alpha_min").get_to(spec.alpha_min);
    j.at("alpha_max").get_to(spec.alpha_max);
    j.at("beta_min").get_to(spec.beta_min);
    j.at("beta_max").get_to(spec.beta_max);
    j.at("samples_per_axis").get_to(spec.samples_per_axis);
    return spec;
}

std::vector<std::string_view> lines_of(const std::string& text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        lines.emplace_back(text.data() + start, end - start);
        start = end + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

// doubles inside JSON pass through nlohmann's shortest-round-trip printer,
// but NaN must be representable: encode it as a string
nlohmann::json json_number(double v) {
    if (std::isnan(v)) return "nan";
    return v;
}

double number_from_json(const nlohmann::json& j) {
    if (j.is_string()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

}  // namespace

std::string surface_to_text(const SurfaceGrid& grid) {
    const int n = grid.spec.samples_per_axis;
    if (grid.values.size() != std::size_t(n) * n) throw std::invalid_argument("surface values do not fill the grid");
    nlohmann::json header = {
        {"format", kGridFormat},
        {"version", 1},
        {"kind", surface_kind_name(grid.kind)},
        {"spec", spec_to_json(grid.spec)},
        {"axes",
         {{"delta1_id", grid.axes.delta1_id},
          {"delta2_id", grid.axes.delta2_id},
          {"delta1_norm", grid.axes.delta1_norm},
          {"cos_delta12", json_number(grid.axes.cos_delta12)},
          {"subsample", grid.axes.subsample}}},
        {"origin",
         {{"anchor_id", grid.origin.anchor_id},
          {"anchor_kind", grid.origin.anchor_kind},
          {"group_label", grid.origin.group_label}}},
    };
    std::string out = header.dump() + "\n";
    for (int ai = 0; ai < n; ++ai) {
        for (int bi = 0; bi < n; ++bi) {
            out += format_double(grid.at(ai, bi));
            out += (bi + 1 == n) ? '\n' : ',';
        }
    }
    return out;
}

SurfaceGrid surface_from_text(const std::string& text) {
    auto lines = lines_of(text);
    if (lines.empty()) throw std::runtime_error("grid file is empty");
    nlohmann::json header = nlohmann::json::parse(lines[0]);
    if (header.value("format", "") != kGridFormat) throw std::runtime_error("not a grid file");

    SurfaceGrid grid;
    grid.spec = spec_from_json(header.at("spec"));
    grid.spec.validate();
    grid.kind = surface_kind_from_name(header.at("kind").get<std::string>());
    const auto& axes = header.at("axes");
    grid.axes.delta1_id = axes.at("delta1_id").get<std::string>();
    grid.axes.delta2_id = axes.at("delta2_id").get<std::string>();
    grid.axes.delta1_norm = axes.at("delta1_norm").get<double>();
    grid.axes.cos_delta12 = number_from_json(axes.at("cos_delta12"));
    grid.axes.subsample = axes.at("subsample").get<long>();
    const auto& origin = header.at("origin");
    grid.origin.anchor_id = origin.at("anchor_id").get<std::string>();
    grid.origin.anchor_kind = origin.at("anchor_kind").get<std::string>();
    grid.origin.group_label = origin.at("group_label").get<std::string>();

    const int n = grid.spec.samples_per_axis;
    if (int(lines.size()) != 1 + n) throw std::runtime_error("grid body has the wrong number of rows");
    grid.values.reserve(std::size_t(n) * n);
    for (int ai = 0; ai < n; ++ai) {
        auto cells = split(lines[1 + ai], ',');
        if (int(cells.size()) != n) throw std::runtime_error("grid row has the wrong number of cells");
        for (const auto& cell : cells) grid.values.push_back(parse_double(cell));
    }
    return grid;
}

std::string curve_to_csv(const CurveSamples& curve) {
    nlohmann::json meta = {{"axis_scale", curve.axis_scale}};
    std::string out = kCurveTag + meta.dump() + "\nalpha,loss\n";
    for (std::size_t k = 0; k < curve.alphas.size(); ++k) {
        out += format_double(curve.alphas[k]) + "," + format_double(curve.losses[k]) + "\n";
    }
    return out;
}

CurveSamples curve_from_csv(const std::string& text) {
    auto lines = lines_of(text);
    if (lines.size() < 2 || !lines[0].starts_with(kCurveTag)) throw std::runtime_error("not a curve file");
    nlohmann::json meta = nlohmann::json::parse(lines[0].substr(std::string_view(kCurveTag).size()));
    if (lines[1] != "alpha,loss") throw std::runtime_error("bad curve header row");
    CurveSamples curve;
    curve.axis_scale = meta.at("axis_scale").get<double>();
    for (std::size_t i = 2; i < lines.size(); ++i) {
        auto cells = split(lines[i], ',');
        if (cells.size() != 2) throw std::runtime_error("bad curve row");
        curve.alphas.push_back(parse_double(cells[0]));
        curve.losses.push_back(parse_double(cells[1]));
    }
    return curve;
}

std::string trajectory_to_csv(const TrajectoryProjection& traj) {
    std::string out = std::string(kTrajectoryTag) + "{}\nepoch,d_alpha,d_beta,norm_ratio,v_cos\n";
    for (const TrajectoryPoint& pt : traj.points) {
        out += std::to_string(pt.epoch) + "," + format_double(pt.d_alpha) + "," + format_double(pt.d_beta) +
               "," + format_double(pt.norm_ratio) + "," + format_double(pt.v_cos) + "\n";
    }
    return out;
}

TrajectoryProjection trajectory_from_csv(const std::string& text) {
    auto lines = lines_of(text);
    if (lines.size() < 2 || !lines[0].starts_with(kTrajectoryTag)) throw std::runtime_error("not a trajectory file");
    if (lines[1] != "epoch,d_alpha,d_beta,norm_ratio,v_cos") throw std::runtime_error("bad trajectory header row");
    TrajectoryProjection traj;
    for (std::size_t i = 2; i < lines.size(); ++i) {
        auto cells = split(lines[i], ',');
        if (cells.size() != 5) throw std::runtime_error("bad trajectory row");
        TrajectoryPoint pt;
        pt.epoch = int(parse_long(cells[0]));
        pt.d_alpha = parse_double(cells[1]);
        pt.d_beta = parse_double(cells[2]);
        pt.norm_ratio = parse_double(cells[3]);
        pt.v_cos = parse_double(cells[4]);
        traj.points.push_back(pt);
    }
    return traj;
}

std::string rollback_to_csv(const std::vector<RollbackRow>& rows) {
    std::string out = "group,dev_accuracy,delta_vs_full\n";
    for (const RollbackRow& row : rows) {
        out += row.group + "," + format_double(row.dev_accuracy) + "," + format_double(row.delta_vs_full) + "\n";
    }
    return out;
}

std::vector<RollbackRow> rollback_from_csv(const std::string& text) {
    auto lines = lines_of(text);
    if (lines.empty() || lines[0] != "group,dev_accuracy,delta_vs_full") {
        throw std::runtime_error("not a rollback table");
    }
    std::vector<RollbackRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto cells = split(lines[i], ',');
        if (cells.size() != 3) throw std::runtime_error("bad rollback row");
        rows.push_back({std::string(cells[0]), parse_double(cells[1]), parse_double(cells[2])});
    }
    return rows;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("failed while writing file: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace lossscope
