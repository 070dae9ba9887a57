#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lossscope/svg_render.hpp"

using namespace lossscope;

namespace {

// quadratic bowl alpha^2 + beta^2 sampled on [-2, 2]^2
SurfaceGrid bowl_grid(int samples) {
    SurfaceGrid grid;
    grid.spec.alpha_min = -2;
    grid.spec.alpha_max = 2;
    grid.spec.beta_min = -2;
    grid.spec.beta_max = 2;
    grid.spec.samples_per_axis = samples;
    auto alphas = grid.spec.alphas();
    auto betas = grid.spec.betas();
    for (double a : alphas) {
        for (double b : betas) grid.values.push_back(a * a + b * b);
    }
    grid.origin.anchor_kind = "theta0";
    return grid;
}

}  // namespace

TEST_CASE("marching squares on the quadratic bowl gives one closed loop per level") {
    auto grid = bowl_grid(41);
    for (double level : {0.5, 1.0, 2.0, 3.5}) {
        auto lines = marching_squares(grid, level);
        REQUIRE(lines.size() == 1);  // concentric circles: one connected component
        CHECK(lines[0].closed);
        // every vertex sits on the level set within grid resolution
        for (const auto& p : lines[0].points) {
            double r2 = p[0] * p[0] + p[1] * p[1];
            CHECK(std::abs(r2 - level) < 0.05);
        }
        CHECK(lines[0].points.size() >= 8);
    }

    // level above the sampled range: no contours
    CHECK(marching_squares(grid, 9.0).empty());
    // level below the minimum: none either
    CHECK(marching_squares(grid, -1.0).empty());
}

TEST_CASE("open contours touch the grid boundary") {
    SurfaceGrid grid;
    grid.spec.alpha_min = 0;
    grid.spec.alpha_max = 1;
    grid.spec.beta_min = 0;
    grid.spec.beta_max = 1;
    grid.spec.samples_per_axis = 11;
    for (double a : grid.spec.alphas()) {
        for (double b : grid.spec.betas()) grid.values.push_back(a + b);
    }
    auto lines = marching_squares(grid, 1.0);  // diagonal line
    REQUIRE(lines.size() == 1);
    CHECK(!lines[0].closed);
    auto on_boundary = [](const std::array<double, 2>& p) {
        return p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
    };
    CHECK(on_boundary(lines[0].points.front()));
    CHECK(on_boundary(lines[0].points.back()));
}

TEST_CASE("surface svg is byte-deterministic and well-formed") {
    auto grid = bowl_grid(15);
    RenderSpec spec;
    spec.kind = RenderKind::heatmap;
    auto a = render_surface_svg(grid, spec);
    auto b = render_surface_svg(grid, spec);
    CHECK(a == b);
    CHECK(a.starts_with("<svg"));
    CHECK(a.find("</svg>") != std::string::npos);
    CHECK(a.find("<rect") != std::string::npos);

    spec.kind = RenderKind::contour;
    spec.contour_levels = {0.5, 1.0, 2.0};
    auto c = render_surface_svg(grid, spec);
    CHECK(c.find("polygon") != std::string::npos);  // closed level sets

    std::vector<double> bad = {2.0, 1.0};
    RenderSpec bad_spec;
    bad_spec.contour_levels = bad;
    CHECK_THROWS_AS(render_surface_svg(grid, bad_spec), std::invalid_argument);

    SurfaceGrid empty;
    CHECK_THROWS_AS(render_surface_svg(empty, spec), std::invalid_argument);
}

TEST_CASE("trajectory overlay draws the path with start and end markers") {
    auto grid = bowl_grid(15);
    RenderSpec spec;
    spec.kind = RenderKind::trajectory_overlay;
    TrajectoryProjection traj;
    traj.points = {{1, 0.3, 0.4, 0.5, 0.9}, {2, 0.8, 0.2, 0.85, 0.97}, {3, 1.0, 0.0, 1.0, 1.0}};
    auto svg = render_surface_svg(grid, spec, &traj);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(svg.find("circle") != std::string::npos);   // start marker
    CHECK(svg.find("polygon") != std::string::npos);  // star end marker
    auto again = render_surface_svg(grid, spec, &traj);
    CHECK(svg == again);
}

TEST_CASE("curve svg") {
    CurveSamples ft;
    ft.axis_scale = 2.0;
    CurveSamples scr;
    scr.axis_scale = 5.0;
    for (int k = -10; k <= 10; ++k) {
        double a = 0.2 * k;
        ft.alphas.push_back(a);
        ft.losses.push_back(0.2 + 0.3 * a * a);
        scr.alphas.push_back(a);
        scr.losses.push_back(0.2 + 2.0 * a * a);
    }
    std::vector<CurvePlotEntry> entries = {{&ft, "finetune", false}, {&scr, "scratch", true}};
    RenderSpec spec;
    spec.kind = RenderKind::curve;
    auto svg = render_curves_svg(entries, spec, true);
    CHECK(svg == render_curves_svg(entries, spec, true));
    CHECK(svg.find("stroke-dasharray") != std::string::npos);
    CHECK(svg.find("finetune") != std::string::npos);
    CHECK(svg.find("alpha * |delta1|") != std::string::npos);

    CHECK_THROWS_AS(render_curves_svg({}, spec, false), std::invalid_argument);
}

TEST_CASE("render kind names round-trip") {
    for (RenderKind kind : {RenderKind::contour, RenderKind::heatmap, RenderKind::curve,
                            RenderKind::trajectory_overlay}) {
        CHECK(render_kind_from_name(render_kind_name(kind)) == kind);
    }
    CHECK_THROWS_AS(render_kind_from_name("bitmap"), std::invalid_argument);
}
