#include "lossscope/svg_render.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace lossscope {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// compact viridis-like ramp
std::string color_for(double t) {
    static const int stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    t = std::clamp(t, 0.0, 1.0);
    double pos = t * 4.0;
    int lo = std::min(3, int(pos));
    double frac = pos - lo;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                  int(std::lround(stops[lo][0] + frac * (stops[lo + 1][0] - stops[lo][0]))),
                  int(std::lround(stops[lo][1] + frac * (stops[lo + 1][1] - stops[lo][1]))),
                  int(std::lround(stops[lo][2] + frac * (stops[lo + 1][2] - stops[lo][2]))));
    return buf;
}

const char* kCurveColors[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Frame {
    double x0, x1, y0, y1;  // data ranges
    double px0, px1, py0, py1;  // pixel corners (py grows downward)

    double x(double v) const { return px0 + (v - x0) / (x1 - x0) * (px1 - px0); }
    double y(double v) const { return py1 - (v - y0) / (y1 - y0) * (py1 - py0); }
};

void draw_axes(std::string& svg, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
    svg += "<rect x='" + fmt(f.px0) + "' y='" + fmt(f.py0) + "' width='" + fmt(f.px1 - f.px0) + "' height='" +
           fmt(f.py1 - f.py0) + "' fill='none' stroke='#333' stroke-width='1'/>\n";
    svg += "<text x='" + fmt((f.px0 + f.px1) / 2) + "' y='" + fmt(f.py1 + 28) +
           "' font-size='11' text-anchor='middle' fill='#333'>" + xlabel + "</text>\n";
    svg += "<text x='" + fmt(f.px0 - 30) + "' y='" + fmt((f.py0 + f.py1) / 2) +
           "' font-size='11' text-anchor='middle' fill='#333' transform='rotate(-90 " + fmt(f.px0 - 30) + " " +
           fmt((f.py0 + f.py1) / 2) + ")'>" + ylabel + "</text>\n";
    // corner tick labels
    svg += "<text x='" + fmt(f.px0) + "' y='" + fmt(f.py1 + 14) + "' font-size='9' text-anchor='middle' fill='#333'>" +
           fmt(f.x0) + "</text>\n";
    svg += "<text x='" + fmt(f.px1) + "' y='" + fmt(f.py1 + 14) + "' font-size='9' text-anchor='middle' fill='#333'>" +
           fmt(f.x1) + "</text>\n";
    svg += "<text x='" + fmt(f.px0 - 6) + "' y='" + fmt(f.py1 + 3) + "' font-size='9' text-anchor='end' fill='#333'>" +
           fmt(f.y0) + "</text>\n";
    svg += "<text x='" + fmt(f.px0 - 6) + "' y='" + fmt(f.py0 + 3) + "' font-size='9' text-anchor='end' fill='#333'>" +
           fmt(f.y1) + "</text>\n";
}

void draw_marker(std::string& svg, double cx, double cy, bool star, const char* fill) {
    if (!star) {
        svg += "<circle cx='" + fmt(cx) + "' cy='" + fmt(cy) + "' r='4' fill='" + fill +
               "' stroke='white' stroke-width='1'/>\n";
        return;
    }
    // five-point star
    std::string pts;
    for (int k = 0; k < 10; ++k) {
        double ang = -1.5707963267948966 + k * 0.6283185307179586;
        double r = (k % 2 == 0) ? 6.0 : 2.6;
        pts += fmt(cx + r * std::cos(ang)) + "," + fmt(cy + r * std::sin(ang));
        if (k != 9) pts += " ";
    }
    svg += "<polygon points='" + pts + "' fill='" + fill + "' stroke='white' stroke-width='1'/>\n";
}

std::string svg_open(int width, int height) {
    return "<svg xmlns='http://www.w3.org/2000/svg' width='" + std::to_string(width) + "' height='" +
           std::to_string(height) + "' viewBox='0 0 " + std::to_string(width) + " " + std::to_string(height) +
           "'>\n<rect width='100%' height='100%' fill='white'/>\n";
}

using PointKey = std::pair<std::uint64_t, std::uint64_t>;

PointKey key_of(const std::array<double, 2>& p) {
    return {std::bit_cast<std::uint64_t>(p[0]), std::bit_cast<std::uint64_t>(p[1])};
}

}  // namespace

std::string render_kind_name(RenderKind kind) {
    switch (kind) {
        case RenderKind::contour: return "contour";
        case RenderKind::heatmap: return "heatmap";
        case RenderKind::curve: return "curve";
        case RenderKind::trajectory_overlay: return "trajectory_overlay";
    }
    return "unknown";
}

RenderKind render_kind_from_name(std::string_view name) {
    if (name == "contour") return RenderKind::contour;
    if (name == "heatmap") return RenderKind::heatmap;
    if (name == "curve") return RenderKind::curve;
    if (name == "trajectory_overlay") return RenderKind::trajectory_overlay;
    throw std::invalid_argument("unknown render kind: '" + std::string(name) + "'");
}

void RenderSpec::validate() const {
    if (width < 64 || height < 64) throw std::invalid_argument("render: canvas too small");
    if (!(color_cap > 0.0)) throw std::invalid_argument("render: color cap must be positive");
    for (std::size_t i = 1; i < contour_levels.size(); ++i) {
        if (!(contour_levels[i] > contour_levels[i - 1])) {
            throw std::invalid_argument("render: contour levels must be strictly increasing");
        }
    }
}

std::vector<Polyline> marching_squares(const SurfaceGrid& grid, double level) {
    const int n = grid.spec.samples_per_axis;
    const auto alphas = grid.spec.alphas();
    const auto betas = grid.spec.betas();

    using Point = std::array<double, 2>;
    std::vector<std::pair<Point, Point>> segments;

    // canonical edge interpolation: always from the lower-index corner, so
    // both cells sharing an edge compute the same crossing bits
    auto interp = [](double ca, double cb, double va, double vb, double level_) {
        double t = (level_ - va) / (vb - va);
        return ca + t * (cb - ca);
    };
    // a level passing exactly through a corner yields zero-length segments in
    // the touching cells; the real chain comes from their neighbors
    auto push = [&segments](Point p, Point q) {
        if (p[0] == q[0] && p[1] == q[1]) return;
        segments.push_back({p, q});
    };

    for (int i = 0; i + 1 < n; ++i) {
        for (int j = 0; j + 1 < n; ++j) {
            // corners: a=(i,j) b=(i+1,j) c=(i+1,j+1) d=(i,j+1); x=alpha, y=beta
            const double va = grid.at(i, j), vb = grid.at(i + 1, j), vc = grid.at(i + 1, j + 1),
                         vd = grid.at(i, j + 1);
            int mask = (va > level ? 1 : 0) | (vb > level ? 2 : 0) | (vc > level ? 4 : 0) | (vd > level ? 8 : 0);
            if (mask == 0 || mask == 15) continue;

            // crossings on the four edges (valid only where used)
            auto bottom = [&] { return Point{interp(alphas[i], alphas[i + 1], va, vb, level), betas[j]}; };
            auto right = [&] { return Point{alphas[i + 1], interp(betas[j], betas[j + 1], vb, vc, level)}; };
            auto top = [&] { return Point{interp(alphas[i], alphas[i + 1], vd, vc, level), betas[j + 1]}; };
            auto left = [&] { return Point{alphas[i], interp(betas[j], betas[j + 1], va, vd, level)}; };

            switch (mask) {
                case 1: case 14: push(left(), bottom()); break;
                case 2: case 13: push(bottom(), right()); break;
                case 3: case 12: push(left(), right()); break;
                case 4: case 11: push(right(), top()); break;
                case 6: case 9: push(bottom(), top()); break;
                case 7: case 8: push(left(), top()); break;
                case 5: case 10: {
                    // saddle: split by the cell-center value
                    double center = 0.25 * (va + vb + vc + vd);
                    bool center_inside = center > level;
                    if ((mask == 5) == center_inside) {
                        push(left(), top());
                        push(bottom(), right());
                    } else {
                        push(left(), bottom());
                        push(right(), top());
                    }
                    break;
                }
                default: break;
            }
        }
    }

    // stitch segments into chains by exact endpoint identity
    std::map<PointKey, std::vector<std::size_t>> at_point;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        at_point[key_of(segments[s].first)].push_back(s);
        at_point[key_of(segments[s].second)].push_back(s);
    }
    std::vector<bool> used(segments.size(), false);
    std::vector<Polyline> lines;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        if (used[s]) continue;
        used[s] = true;
        std::vector<Point> chain = {segments[s].first, segments[s].second};
        // extend forward then backward
        for (int dir = 0; dir < 2; ++dir) {
            while (true) {
                Point& tip = dir == 0 ? chain.back() : chain.front();
                const auto it = at_point.find(key_of(tip));
                std::size_t next = segments.size();
                for (std::size_t cand : it->second) {
                    if (!used[cand]) {
                        next = cand;
                        break;
                    }
                }
                if (next == segments.size()) break;
                used[next] = true;
                Point other = key_of(segments[next].first) == key_of(tip) ? segments[next].second
                                                                          : segments[next].first;
                if (dir == 0) {
                    chain.push_back(other);
                } else {
                    chain.insert(chain.begin(), other);
                }
            }
        }
        Polyline line;
        line.closed = chain.size() > 2 && key_of(chain.front()) == key_of(chain.back());
        if (line.closed) chain.pop_back();
        line.points = std::move(chain);
        lines.push_back(std::move(line));
    }
    return lines;
}

namespace {

void draw_overlay_markers(std::string& svg, const SurfaceGrid& grid, const Frame& f,
                          const TrajectoryProjection* overlay) {
    if (overlay && !overlay->points.empty()) {
        std::string pts = fmt(f.x(0.0)) + "," + fmt(f.y(0.0));
        for (const auto& pt : overlay->points) pts += " " + fmt(f.x(pt.d_alpha)) + "," + fmt(f.y(pt.d_beta));
        svg += "<polyline points='" + pts + "' fill='none' stroke='#ffffff' stroke-width='2' opacity='0.9'/>\n";
        svg += "<polyline points='" + pts + "' fill='none' stroke='#e8413c' stroke-width='1.2'/>\n";
        for (const auto& pt : overlay->points) {
            svg += "<circle cx='" + fmt(f.x(pt.d_alpha)) + "' cy='" + fmt(f.y(pt.d_beta)) +
                   "' r='2' fill='#e8413c'/>\n";
        }
        draw_marker(svg, f.x(0.0), f.y(0.0), false, "#111111");
        draw_marker(svg, f.x(overlay->points.back().d_alpha), f.y(overlay->points.back().d_beta), true,
                    "#e8413c");
        return;
    }
    if (grid.origin.anchor_kind == "theta1") {
        // fine-tuned point and the group-rollback point
        draw_marker(svg, f.x(0.0), f.y(0.0), false, "#111111");
        draw_marker(svg, f.x(-1.0), f.y(0.0), true, "#e8413c");
    } else {
        // initialization and fine-tuned end point
        draw_marker(svg, f.x(0.0), f.y(0.0), false, "#111111");
        draw_marker(svg, f.x(1.0), f.y(0.0), true, "#e8413c");
    }
}

}  // namespace

std::string render_surface_svg(const SurfaceGrid& grid, const RenderSpec& spec,
                               const TrajectoryProjection* overlay) {
    spec.validate();
    if (grid.values.empty()) throw std::invalid_argument("render: empty grid");
    const int n = grid.spec.samples_per_axis;
    const double cap = grid.kind == SurfaceKind::dev_error ? std::min(spec.color_cap, 1.0) : spec.color_cap;

    Frame f;
    f.x0 = grid.spec.alpha_min;
    f.x1 = grid.spec.alpha_max;
    f.y0 = grid.spec.beta_min;
    f.y1 = grid.spec.beta_max;
    f.px0 = 48;
    f.px1 = spec.width - 16;
    f.py0 = 16;
    f.py1 = spec.height - 40;

    std::string svg = svg_open(spec.width, spec.height);

    if (spec.kind == RenderKind::heatmap || spec.kind == RenderKind::trajectory_overlay) {
        // one rect per sample, centered on the sample position
        const double cell_w = (f.px1 - f.px0) / double(n);
        const double cell_h = (f.py1 - f.py0) / double(n);
        const auto alphas = grid.spec.alphas();
        const auto betas = grid.spec.betas();
        for (int ai = 0; ai < n; ++ai) {
            for (int bi = 0; bi < n; ++bi) {
                double v = std::clamp(grid.at(ai, bi) / cap, 0.0, 1.0);
                double cx = f.x(alphas[ai]);
                double cy = f.y(betas[bi]);
                svg += "<rect x='" + fmt(cx - cell_w / 2) + "' y='" + fmt(cy - cell_h / 2) + "' width='" +
                       fmt(cell_w + 0.5) + "' height='" + fmt(cell_h + 0.5) + "' fill='" + color_for(v) +
                       "'/>\n";
            }
        }
    }

    if (spec.kind == RenderKind::contour || spec.kind == RenderKind::trajectory_overlay) {
        std::vector<double> levels = spec.contour_levels;
        if (levels.empty()) {
            for (int k = 1; k <= 9; ++k) levels.push_back(cap * k / 10.0);
        }
        for (double level : levels) {
            std::string color = spec.kind == RenderKind::contour ? color_for(std::clamp(level / cap, 0.0, 1.0))
                                                                 : std::string("#ffffff");
            for (const Polyline& line : marching_squares(grid, level)) {
                std::string pts;
                for (const auto& p : line.points) pts += fmt(f.x(p[0])) + "," + fmt(f.y(p[1])) + " ";
                if (!pts.empty()) pts.pop_back();
                const char* element = line.closed ? "polygon" : "polyline";
                svg += std::string("<") + element + " points='" + pts + "' fill='none' stroke='" + color +
                       "' stroke-width='1' opacity='0.8'/>\n";
            }
        }
    }

    draw_overlay_markers(svg, grid, f, overlay);
    draw_axes(svg, f, "alpha", "beta");
    svg += "<text x='" + fmt(f.px0) + "' y='12' font-size='10' fill='#333'>" + surface_kind_name(grid.kind) +
           (grid.origin.group_label.empty() ? "" : " [" + grid.origin.group_label + "]") + ", cap " + fmt(cap) +
           "</text>\n";
    svg += "</svg>\n";
    return svg;
}

std::string render_curves_svg(std::span<const CurvePlotEntry> entries, const RenderSpec& spec,
                              bool scale_alpha_axis) {
    spec.validate();
    if (entries.empty()) throw std::invalid_argument("render: no curves");
    for (const auto& entry : entries) {
        if (!entry.curve || entry.curve->alphas.empty()) throw std::invalid_argument("render: empty curve");
    }

    Frame f;
    f.x0 = std::numeric_limits<double>::infinity();
    f.x1 = -f.x0;
    double max_loss = 0.0;
    for (const auto& entry : entries) {
        double scale = scale_alpha_axis ? entry.curve->axis_scale : 1.0;
        f.x0 = std::min(f.x0, entry.curve->alphas.front() * scale);
        f.x1 = std::max(f.x1, entry.curve->alphas.back() * scale);
        for (double v : entry.curve->losses) max_loss = std::max(max_loss, v);
    }
    f.y0 = 0.0;
    f.y1 = std::min(max_loss, spec.color_cap);  // the axis clips like the paper's color bars
    if (f.y1 <= f.y0) f.y1 = f.y0 + 1.0;
    f.px0 = 48;
    f.px1 = spec.width - 16;
    f.py0 = 16;
    f.py1 = spec.height - 40;

    std::string svg = svg_open(spec.width, spec.height);
    for (std::size_t e = 0; e < entries.size(); ++e) {
        const CurveSamples& curve = *entries[e].curve;
        double scale = scale_alpha_axis ? curve.axis_scale : 1.0;
        std::string pts;
        for (std::size_t k = 0; k < curve.alphas.size(); ++k) {
            double y = std::min(curve.losses[k], f.y1);
            pts += fmt(f.x(curve.alphas[k] * scale)) + "," + fmt(f.y(y)) + " ";
        }
        pts.pop_back();
        svg += "<polyline points='" + pts + "' fill='none' stroke='" + kCurveColors[e % 6] + "' stroke-width='1.5'" +
               (entries[e].dashed ? " stroke-dasharray='6 4'" : "") + "/>\n";
        svg += "<text x='" + fmt(f.px1 - 6) + "' y='" + fmt(f.py0 + 14 + 13 * double(e)) +
               "' font-size='10' text-anchor='end' fill='" + kCurveColors[e % 6] + "'>" + entries[e].label +
               (entries[e].dashed ? " (dashed)" : "") + "</text>\n";
    }
    draw_axes(svg, f, scale_alpha_axis ? "alpha * |delta1|" : "alpha", "loss");
    svg += "</svg>\n";
    return svg;
}

}  // namespace lossscope
