#include "lossscope/repro.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "lossscope/serialize.hpp"
#include "lossscope/sha256.hpp"
#include "lossscope/svg_render.hpp"
#include "lossscope/text_format.hpp"

namespace lossscope {

namespace {

struct FigureBuilder {
    Experiment& exp;
    std::string dir;
    std::vector<std::string> written;

    void emit(const std::string& name, const std::string& content) {
        write_text_file(dir + "/" + name, content);
        written.push_back(name);
    }

    LossEvaluator train_loss_of(int task_idx, const ParamVector& theta1) {
        return LossEvaluator::train_loss(exp.model(), exp.task(task_idx).train, HeadKind::classification,
                                         theta1, exp.config().subsample);
    }

    SurfaceGrid run_surface(const TrainRun& target, const TrainRun& other, int task_idx) {
        auto loss = train_loss_of(task_idx, target.final().params);
        return surface_2d(target.initial().params, target.final().params, other.final().params, loss,
                          exp.config().grid, exp.workers());
    }

    SurfaceGrid run_error_surface(const TrainRun& target, const TrainRun& other, int task_idx) {
        return error_surface(target.initial().params, target.final().params, other.final().params, exp.model(),
                             exp.task(task_idx).dev, exp.config().grid, exp.workers(), exp.config().subsample);
    }

    RenderSpec surface_spec(RenderKind kind, double cap) const {
        RenderSpec spec;
        spec.kind = kind;
        spec.color_cap = cap;
        return spec;
    }

    // training loss surfaces, scratch (top row of the figure) vs fine-tuning
    void fig_surfaces(bool dev_error_kind) {
        for (int t = 0; t < 2; ++t) {
            int other = 1 - t;
            const TrainRun& ft = exp.finetune_run(t);
            const TrainRun& ft_other = exp.finetune_run(other);
            const TrainRun& scr = exp.scratch_run(t);
            const TrainRun& scr_other = exp.scratch_run(other);
            std::string task_tag = exp.task(t).name + std::to_string(t + 1);

            SurfaceGrid ft_grid = dev_error_kind ? run_error_surface(ft, ft_other, t) : run_surface(ft, ft_other, t);
            SurfaceGrid scr_grid =
                dev_error_kind ? run_error_surface(scr, scr_other, t) : run_surface(scr, scr_other, t);
            double cap = dev_error_kind ? 1.0 : 3.0;
            emit("finetune-" + task_tag + ".grid", surface_to_text(ft_grid));
            emit("finetune-" + task_tag + ".svg",
                 render_surface_svg(ft_grid, surface_spec(RenderKind::heatmap, cap)));
            emit("scratch-" + task_tag + ".grid", surface_to_text(scr_grid));
            emit("scratch-" + task_tag + ".svg",
                 render_surface_svg(scr_grid, surface_spec(RenderKind::heatmap, cap)));
        }
    }

    void fig1() { fig_surfaces(false); }

    void fig2() {
        std::vector<const TrainRun*> runs;
        for (int t = 0; t < 2; ++t) {
            runs.push_back(&exp.finetune_run(t));
            runs.push_back(&exp.scratch_run(t));
        }
        emit("learning-curves.csv", export_learning_curves(runs));

        // loss-vs-epoch lines, scratch dashed
        std::vector<CurveSamples> curves(runs.size());
        std::vector<CurvePlotEntry> entries;
        for (std::size_t r = 0; r < runs.size(); ++r) {
            curves[r].axis_scale = 1.0;
            for (const Checkpoint& c : runs[r]->checkpoints) {
                curves[r].alphas.push_back(double(c.epoch_index));
                curves[r].losses.push_back(c.train_loss);
            }
            entries.push_back({&curves[r], runs[r]->label, runs[r]->kind == RunKind::scratch});
        }
        RenderSpec spec;
        spec.kind = RenderKind::curve;
        spec.color_cap = 2.0;
        emit("learning-curves.svg", render_curves_svg(entries, spec, false));
    }

    void fig3() {
        // fine-tune for T epochs as suggested, then keep going; the surface
        // axes come from the suggested endpoint
        const int task_idx = 1;  // the smaller task
        const TrainRun& ext = exp.extended_run(task_idx);
        const TrainRun& other = exp.finetune_run(0);
        const ParamVector& theta0 = ext.initial().params;
        const ParamVector& theta1 = ext.checkpoints.at(exp.config().finetune_cfg.epochs).params;

        SurfaceGrid err = error_surface(theta0, theta1, other.final().params, exp.model(),
                                        exp.task(task_idx).dev, exp.config().grid, exp.workers(),
                                        exp.config().subsample);
        TrajectoryProjection traj = project_trajectory(ext, theta0, theta1);
        emit("error-surface.grid", surface_to_text(err));
        emit("trajectory.csv", trajectory_to_csv(traj));
        emit("overlay.svg", render_surface_svg(err, surface_spec(RenderKind::trajectory_overlay, 1.0), &traj));
    }

    void fig4() {
        for (int t = 0; t < 2; ++t) {
            int other = 1 - t;
            std::string task_tag = exp.task(t).name + std::to_string(t + 1);
            struct Row {
                const TrainRun* run;
                const TrainRun* other_run;
                const char* mode;
            } rows[2] = {{&exp.scratch_run(t), &exp.scratch_run(other), "scratch"},
                         {&exp.finetune_run(t), &exp.finetune_run(other), "finetune"}};
            for (const Row& row : rows) {
                SurfaceGrid grid = run_surface(*row.run, *row.other_run, t);
                TrajectoryProjection traj =
                    project_trajectory(*row.run, row.run->initial().params, row.run->final().params);
                std::string base = std::string(row.mode) + "-" + task_tag;
                emit(base + ".grid", surface_to_text(grid));
                emit(base + ".trajectory.csv", trajectory_to_csv(traj));
                emit(base + ".svg",
                     render_surface_svg(grid, surface_spec(RenderKind::trajectory_overlay, 3.0), &traj));
            }
        }
    }

    void fig5() { fig_surfaces(true); }

    void fig6() {
        std::string widths = "task,run,width,truncated_low,truncated_high\n";
        for (int t = 0; t < 2; ++t) {
            std::string task_tag = exp.task(t).name + std::to_string(t + 1);
            const TrainRun& ft = exp.finetune_run(t);
            const TrainRun& scr = exp.scratch_run(t);
            auto ft_curve = curve_1d(ft.initial().params, ft.final().params,
                                     train_loss_of(t, ft.final().params), exp.config().grid, exp.workers());
            auto scr_curve = curve_1d(scr.initial().params, scr.final().params,
                                      train_loss_of(t, scr.final().params), exp.config().grid, exp.workers());
            emit("curve-finetune-" + task_tag + ".csv", curve_to_csv(ft_curve));
            emit("curve-scratch-" + task_tag + ".csv", curve_to_csv(scr_curve));

            std::vector<CurvePlotEntry> entries = {{&ft_curve, "finetune", false}, {&scr_curve, "scratch", true}};
            RenderSpec spec;
            spec.kind = RenderKind::curve;
            emit("curves-" + task_tag + ".svg", render_curves_svg(entries, spec, true));

            for (auto [curve, mode] : {std::pair{&ft_curve, "finetune"}, std::pair{&scr_curve, "scratch"}}) {
                auto fw = flatness_width(*curve, 2.0);
                widths += task_tag + "," + std::string(mode) + "," + format_double(fw.width) + "," +
                          (fw.truncated_low ? "1" : "0") + "," + (fw.truncated_high ? "1" : "0") + "\n";
            }
        }
        emit("widths.csv", widths);
    }

    void fig7() {
        auto groups = default_layer_groups(exp.config().model.num_layers);
        for (int t = 0; t < 2; ++t) {
            int other = 1 - t;
            std::string task_tag = exp.task(t).name + std::to_string(t + 1);
            const TrainRun& ft = exp.finetune_run(t);
            const TrainRun& ft_other = exp.finetune_run(other);
            Direction d1 = diff(ft.final().params, ft.initial().params);
            Direction d2 = diff(ft_other.final().params, ft_other.initial().params);
            auto loss = train_loss_of(t, ft.final().params);
            for (const LayerGroup& g : groups) {
                SurfaceGrid grid =
                    layer_surface(ft.final().params, d1, d2, g, loss, exp.config().grid, exp.workers());
                std::string base = "layer-" + g.label + "-" + task_tag;
                emit(base + ".grid", surface_to_text(grid));
                emit(base + ".svg", render_surface_svg(grid, surface_spec(RenderKind::heatmap, 3.0)));
            }
        }
    }

    void table1() {
        auto thirds = default_layer_groups(exp.config().model.num_layers);
        std::vector<LayerGroup> groups = {{{}, "none"}};
        groups.insert(groups.end(), thirds.begin(), thirds.end());
        for (int t = 0; t < 2; ++t) {
            std::string task_tag = exp.task(t).name + std::to_string(t + 1);
            const TrainRun& ft = exp.finetune_run(t);
            auto rows = rollback_table(ft.final().params, ft.initial().params, groups, exp.model(),
                                       exp.task(t).dev, exp.workers());
            emit("rollback-" + task_tag + ".csv", rollback_to_csv(rows));
        }
    }
};

}  // namespace

const std::vector<std::string>& known_figures() {
    static const std::vector<std::string> ids = {"fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "table1"};
    return ids;
}

ReproResult repro_figure(const std::string& figure_id, Experiment& exp) {
    const auto& ids = known_figures();
    if (std::find(ids.begin(), ids.end(), figure_id) == ids.end()) {
        throw std::invalid_argument("unknown figure id: '" + figure_id + "' (expected fig1..fig7 or table1)");
    }
    std::string dir = exp.config().out_dir + "/" + figure_id;
    std::filesystem::create_directories(dir);

    FigureBuilder builder{exp, dir, {}};
    if (figure_id == "fig1") builder.fig1();
    else if (figure_id == "fig2") builder.fig2();
    else if (figure_id == "fig3") builder.fig3();
    else if (figure_id == "fig4") builder.fig4();
    else if (figure_id == "fig5") builder.fig5();
    else if (figure_id == "fig6") builder.fig6();
    else if (figure_id == "fig7") builder.fig7();
    else builder.table1();

    ReproResult result;
    result.figure_id = figure_id;
    result.directory = dir;
    std::sort(builder.written.begin(), builder.written.end());
    for (const std::string& name : builder.written) {
        result.files.push_back({name, sha256_file_hex(dir + "/" + name)});
    }
    write_text_file(dir + "/manifest.json", manifest_to_json(result));
    return result;
}

std::string manifest_to_json(const ReproResult& result) {
    nlohmann::json files = nlohmann::json::array();
    for (const ManifestEntry& f : result.files) {
        files.push_back({{"path", f.path}, {"sha256", f.sha256}});
    }
    nlohmann::json j = {{"format", "lossscope-manifest"}, {"version", 1}, {"figure", result.figure_id},
                        {"files", files}};
    return j.dump(2) + "\n";
}

ReproResult manifest_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("format", "") != "lossscope-manifest") throw std::runtime_error("not a manifest file");
    ReproResult result;
    result.figure_id = j.at("figure").get<std::string>();
    for (const auto& f : j.at("files")) {
        result.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
    }
    return result;
}

}  // namespace lossscope
