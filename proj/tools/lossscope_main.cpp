// lossscope: loss-landscape analysis over a small transformer training stack.
// Exit codes: 0 success, 1 usage error, 2 data/compute error. Diagnostics go
// to stderr; machine-readable results go to files only.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "lossscope/checkpoint_io.hpp"
#include "lossscope/experiment.hpp"
#include "lossscope/landscape.hpp"
#include "lossscope/parallel.hpp"
#include "lossscope/repro.hpp"
#include "lossscope/rng.hpp"
#include "lossscope/serialize.hpp"
#include "lossscope/svg_render.hpp"
#include "lossscope/synth_data.hpp"
#include "lossscope/text_format.hpp"
#include "lossscope/training.hpp"

namespace {

using namespace lossscope;

ExperimentConfig config_from(const std::string& path) {
    if (path.empty()) return default_experiment_config();
    return load_experiment_config(path);
}

struct EvalData {
    Batch batch;
    HeadKind head = HeadKind::classification;
    std::string label;
};

// a task jsonl (classification split) or a corpus jsonl (fixed masked batch)
EvalData load_eval_data(const std::string& path, const std::string& split, const ModelConfig& model) {
    std::string text = read_text_file(path);
    std::size_t eol = text.find('\n');
    std::string first = text.substr(0, eol == std::string::npos ? text.size() : eol);
    if (first.find("lossscope-task") != std::string::npos) {
        ClassificationTask task = task_from_jsonl(text);
        EvalData out;
        out.head = HeadKind::classification;
        if (split == "train") {
            out.batch = task.train;
        } else if (split == "dev") {
            out.batch = task.dev;
        } else {
            throw std::invalid_argument("split must be 'train' or 'dev', got '" + split + "'");
        }
        out.label = task.name + "/" + split;
        return out;
    }
    if (first.find("lossscope-corpus") != std::string::npos) {
        SyntheticCorpus corpus = corpus_from_jsonl(text);
        if (corpus.vocab_size != model.vocab_size) {
            throw std::runtime_error("corpus vocab does not match the checkpoint's model");
        }
        std::vector<std::size_t> all(corpus.sequences.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        EvalData out;
        out.head = HeadKind::masked_lm;
        out.batch = mask_sequences(corpus.sequences, all, 0.15, model.mask_token_id(),
                                   derive_seed(corpus.seed, 0xe7a1));
        out.label = "corpus";
        return out;
    }
    throw std::runtime_error("unrecognized data file (expected a task or corpus jsonl): " + path);
}

LoadedCheckpoint load_ckpt(const std::string& path) { return read_checkpoint(path); }

void require_same_model(const LoadedCheckpoint& a, const LoadedCheckpoint& b, const char* what) {
    if (!(a.model == b.model)) {
        throw std::runtime_error(std::string("checkpoint model configs differ (") + what + ")");
    }
}

LayerGroup group_by_name(const std::string& name, int num_layers) {
    for (const LayerGroup& g : default_layer_groups(num_layers)) {
        if (g.label == name) return g;
    }
    // comma-separated layer indices
    LayerGroup g;
    g.label = name;
    for (const auto& cell : split(name, ',')) {
        g.layer_indices.insert(int(parse_long(trim(cell))));
    }
    return g;
}

struct GridFlags {
    double alpha_min = -4.0, alpha_max = 4.0, beta_min = -4.0, beta_max = 4.0;
    int samples = 40;

    void attach(CLI::App* cmd) {
        cmd->add_option("--alpha-min", alpha_min, "grid alpha lower bound (default -4)");
        cmd->add_option("--alpha-max", alpha_max, "grid alpha upper bound (default 4)");
        cmd->add_option("--beta-min", beta_min, "grid beta lower bound (default -4)");
        cmd->add_option("--beta-max", beta_max, "grid beta upper bound (default 4)");
        cmd->add_option("--samples", samples, "samples per axis (default 40)");
    }
    GridSpec spec() const {
        GridSpec g{alpha_min, alpha_max, beta_min, beta_max, samples};
        g.validate();
        return g;
    }
};

int run_cli(int argc, char** argv) {
    CLI::App app{"loss-landscape analysis toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, data_path, split_name = "train";
    std::string theta0_path, theta1_path, theta2_path, run_path, init_path;
    std::string mode = "finetune", group_name = "low", figure_id, kind = "auto", overlay_path;
    long subsample = 0;
    int workers = 0, task_index = 1;
    double cap = 0.0;
    std::string levels_text;
    int width = 480, height = 480;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config file (sectioned key=value)");
    };
    auto add_workers = [&](CLI::App* cmd) {
        cmd->add_option("--workers", workers, "worker count (default: LOSSSCOPE_WORKERS or hardware)");
    };

    // ---- data generation and training ----
    auto* gen = app.add_subcommand("gen-data", "write corpus.jsonl, task1.jsonl, task2.jsonl");
    add_config(gen);
    gen->add_option("--out", out_path, "output directory")->required();
    gen->callback([&] {
        ExperimentConfig cfg = config_from(config_path);
        std::filesystem::create_directories(out_path);
        Experiment exp(cfg);
        write_text_file(out_path + "/corpus.jsonl", corpus_to_jsonl(exp.corpus()));
        write_text_file(out_path + "/task1.jsonl", task_to_jsonl(exp.task(0)));
        write_text_file(out_path + "/task2.jsonl", task_to_jsonl(exp.task(1)));
        std::cerr << "wrote corpus and tasks to " << out_path << "\n";
    });

    auto* pre = app.add_subcommand("pretrain", "masked-token pretraining; writes a run directory");
    add_config(pre);
    add_workers(pre);
    pre->add_option("--out", out_path, "run directory to write")->required();
    pre->callback([&] {
        ExperimentConfig cfg = config_from(config_path);
        if (workers > 0) cfg.workers = workers;
        Experiment exp(cfg);
        TrainConfig tc = exp.config().pretrain_cfg;
        tc.workers = exp.workers();
        TrainRun run = pretrain(exp.model(), exp.corpus(), tc);
        write_run_dir(out_path, run);
        std::cerr << "pretrained " << tc.epochs << " epochs; final train loss "
                  << format_double(run.final().train_loss) << "\n";
    });

    auto* tr = app.add_subcommand("train", "fine-tune from a checkpoint or train from scratch");
    add_config(tr);
    add_workers(tr);
    tr->add_option("--mode", mode, "finetune or scratch")->check(CLI::IsMember({"finetune", "scratch"}));
    tr->add_option("--task", task_index, "task index (1 or 2)")->check(CLI::Range(1, 2));
    tr->add_option("--init", init_path, "initialization checkpoint (finetune mode)");
    tr->add_option("--out", out_path, "run directory to write")->required();
    tr->callback([&] {
        ExperimentConfig cfg = config_from(config_path);
        if (workers > 0) cfg.workers = workers;
        Experiment exp(cfg);
        const ClassificationTask& task = exp.task(task_index - 1);
        TrainRun run = [&] {
            if (mode == "scratch") {
                TrainConfig tc = exp.config().scratch_cfg;
                tc.workers = exp.workers();
                return train_from_scratch(exp.model(), task, tc);
            }
            if (init_path.empty()) {
                throw std::invalid_argument("--init is required for finetune mode");
            }
            LoadedCheckpoint init = load_ckpt(init_path);
            if (!(init.model == exp.config().model)) {
                throw std::runtime_error("initialization checkpoint does not match the configured model");
            }
            TrainConfig tc = exp.config().finetune_cfg;
            tc.workers = exp.workers();
            return finetune(exp.model(), init.checkpoint.params, task, tc, init_path);
        }();
        write_run_dir(out_path, run);
        std::cerr << run.label << ": final dev error " << format_double(run.final().dev_error) << "\n";
    });

    // ---- landscape operations ----
    auto* cur = app.add_subcommand("curve", "1D interpolation loss curve between two checkpoints");
    GridFlags cur_grid;
    add_workers(cur);
    cur->add_option("--theta0", theta0_path, "initial checkpoint")->required();
    cur->add_option("--theta1", theta1_path, "fine-tuned checkpoint")->required();
    cur->add_option("--data", data_path, "task or corpus jsonl")->required();
    cur->add_option("--split", split_name, "train or dev (tasks only; default train)");
    cur->add_option("--subsample", subsample, "evaluate on the first N examples only");
    cur_grid.attach(cur);
    cur->add_option("--out", out_path, "output curve csv")->required();
    cur->callback([&] {
        auto t0 = load_ckpt(theta0_path);
        auto t1 = load_ckpt(theta1_path);
        require_same_model(t0, t1, "theta0 vs theta1");
        Model model(t1.model);
        EvalData data = load_eval_data(data_path, split_name, t1.model);
        auto loss = LossEvaluator::train_loss(model, data.batch, data.head, t1.checkpoint.params, subsample);
        auto curve =
            curve_1d(t0.checkpoint.params, t1.checkpoint.params, loss, cur_grid.spec(), resolve_workers(workers));
        write_text_file(out_path, curve_to_csv(curve));
        std::cerr << "curve over " << data.label << " written to " << out_path << "\n";
    });

    auto add_surface_like = [&](const char* name, const char* help, bool error_kind) {
        auto* cmd = app.add_subcommand(name, help);
        static std::map<std::string, GridFlags> grids;
        GridFlags& grid = grids[name];
        add_workers(cmd);
        cmd->add_option("--theta0", theta0_path, "initial checkpoint")->required();
        cmd->add_option("--theta1", theta1_path, "fine-tuned checkpoint (target task)")->required();
        cmd->add_option("--theta2", theta2_path, "fine-tuned checkpoint (other task)")->required();
        cmd->add_option("--data", data_path, "task or corpus jsonl")->required();
        cmd->add_option("--split", split_name, error_kind ? "dev split is used by default" : "train or dev");
        cmd->add_option("--subsample", subsample, "evaluate on the first N examples only");
        grid.attach(cmd);
        cmd->add_option("--out", out_path, "output grid file")->required();
        std::string cmd_name = name;
        cmd->callback([&, error_kind, cmd_name] {
            auto t0 = load_ckpt(theta0_path);
            auto t1 = load_ckpt(theta1_path);
            auto t2 = load_ckpt(theta2_path);
            require_same_model(t0, t1, "theta0 vs theta1");
            require_same_model(t0, t2, "theta0 vs theta2");
            Model model(t1.model);
            int w = resolve_workers(workers);
            SurfaceGrid result = [&] {
                if (error_kind) {
                    EvalData data = load_eval_data(data_path, "dev", t1.model);
                    if (data.head != HeadKind::classification) {
                        throw std::invalid_argument("error surfaces need a classification task file");
                    }
                    return error_surface(t0.checkpoint.params, t1.checkpoint.params, t2.checkpoint.params,
                                         model, data.batch, grid.spec(), w, subsample);
                }
                EvalData data = load_eval_data(data_path, split_name, t1.model);
                auto loss =
                    LossEvaluator::train_loss(model, data.batch, data.head, t1.checkpoint.params, subsample);
                return surface_2d(t0.checkpoint.params, t1.checkpoint.params, t2.checkpoint.params, loss,
                                  grid.spec(), w);
            }();
            write_text_file(out_path, surface_to_text(result));
            std::cerr << cmd_name << " written to " << out_path << "\n";
        });
    };
    add_surface_like("surface", "2D training-loss surface spanned by two fine-tuning directions", false);
    add_surface_like("error-surface", "2D dev-set classification error surface", true);

    auto* traj = app.add_subcommand("trajectory", "project a run's per-epoch displacement onto its surface axes");
    traj->add_option("--run", run_path, "run directory")->required();
    traj->add_option("--theta0", theta0_path, "override theta0 checkpoint (default: run epoch 0)");
    traj->add_option("--theta1", theta1_path, "override theta1 checkpoint (default: run final epoch)");
    traj->add_option("--out", out_path, "output trajectory csv")->required();
    traj->callback([&] {
        TrainRun run = read_run_dir(run_path);
        ParamVector theta0 = theta0_path.empty() ? run.initial().params : load_ckpt(theta0_path).checkpoint.params;
        ParamVector theta1 = theta1_path.empty() ? run.final().params : load_ckpt(theta1_path).checkpoint.params;
        auto projection = project_trajectory(run, theta0, theta1);
        write_text_file(out_path, trajectory_to_csv(projection));
        std::cerr << "projected " << projection.points.size() << " epochs to " << out_path << "\n";
    });

    auto* lsurf = app.add_subcommand("layer-surface", "loss surface of one layer group around the fine-tuned point");
    GridFlags lsurf_grid;
    add_workers(lsurf);
    lsurf->add_option("--theta0", theta0_path, "pretrained/initial checkpoint")->required();
    lsurf->add_option("--theta1", theta1_path, "fine-tuned checkpoint (target task)")->required();
    lsurf->add_option("--theta2", theta2_path, "fine-tuned checkpoint (other task)")->required();
    lsurf->add_option("--data", data_path, "task jsonl")->required();
    lsurf->add_option("--group", group_name, "low, middle, high, or comma-separated layer indices");
    lsurf->add_option("--subsample", subsample, "evaluate on the first N examples only");
    lsurf_grid.attach(lsurf);
    lsurf->add_option("--out", out_path, "output grid file")->required();
    lsurf->callback([&] {
        auto t0 = load_ckpt(theta0_path);
        auto t1 = load_ckpt(theta1_path);
        auto t2 = load_ckpt(theta2_path);
        require_same_model(t0, t1, "theta0 vs theta1");
        require_same_model(t0, t2, "theta0 vs theta2");
        Model model(t1.model);
        EvalData data = load_eval_data(data_path, split_name, t1.model);
        auto loss = LossEvaluator::train_loss(model, data.batch, data.head, t1.checkpoint.params, subsample);
        LayerGroup group = group_by_name(group_name, t1.model.num_layers);
        Direction d1 = diff(t1.checkpoint.params, t0.checkpoint.params);
        Direction d2 = diff(t2.checkpoint.params, t0.checkpoint.params);
        auto grid = layer_surface(t1.checkpoint.params, d1, d2, group, loss, lsurf_grid.spec(),
                                  resolve_workers(workers));
        write_text_file(out_path, surface_to_text(grid));
        std::cerr << "layer surface (" << group.label << ") written to " << out_path << "\n";
    });

    auto* rb = app.add_subcommand("rollback", "dev accuracy after rolling layer groups back to theta0");
    add_workers(rb);
    rb->add_option("--theta0", theta0_path, "pretrained/initial checkpoint")->required();
    rb->add_option("--theta1", theta1_path, "fine-tuned checkpoint")->required();
    rb->add_option("--data", data_path, "task jsonl")->required();
    rb->add_option("--out", out_path, "output csv")->required();
    rb->callback([&] {
        auto t0 = load_ckpt(theta0_path);
        auto t1 = load_ckpt(theta1_path);
        require_same_model(t0, t1, "theta0 vs theta1");
        Model model(t1.model);
        EvalData data = load_eval_data(data_path, "dev", t1.model);
        if (data.head != HeadKind::classification) {
            throw std::invalid_argument("rollback needs a classification task file");
        }
        std::vector<LayerGroup> groups = {{{}, "none"}};
        auto thirds = default_layer_groups(t1.model.num_layers);
        groups.insert(groups.end(), thirds.begin(), thirds.end());
        auto rows = rollback_table(t1.checkpoint.params, t0.checkpoint.params, groups, model, data.batch,
                                   resolve_workers(workers));
        write_text_file(out_path, rollback_to_csv(rows));
        std::cerr << "rollback table written to " << out_path << "\n";
    });

    // ---- rendering and recipes ----
    auto* ren = app.add_subcommand("render", "render a grid or curve file to SVG");
    ren->add_option("--in", data_path, "input .grid or curve .csv file")->required();
    ren->add_option("--kind", kind, "auto, heatmap, contour, trajectory_overlay, or curve");
    ren->add_option("--overlay", overlay_path, "trajectory csv drawn over the surface");
    ren->add_option("--cap", cap, "color/axis cap (default 3 for loss, 1 for error)");
    ren->add_option("--levels", levels_text, "comma-separated contour levels");
    ren->add_option("--width", width, "canvas width");
    ren->add_option("--height", height, "canvas height");
    ren->add_option("--out", out_path, "output svg")->required();
    ren->callback([&] {
        std::string text = read_text_file(data_path);
        if (text.empty()) throw std::runtime_error("input file is empty: " + data_path);
        RenderSpec spec;
        spec.width = width;
        spec.height = height;
        if (!levels_text.empty()) {
            for (const auto& cell : split(levels_text, ',')) spec.contour_levels.push_back(parse_double(trim(cell)));
        }
        std::string svg;
        if (text[0] == '{') {
            SurfaceGrid grid = surface_from_text(text);
            spec.color_cap = cap > 0.0 ? cap : (grid.kind == SurfaceKind::dev_error ? 1.0 : 3.0);
            TrajectoryProjection overlay;
            bool have_overlay = !overlay_path.empty();
            if (have_overlay) overlay = trajectory_from_csv(read_text_file(overlay_path));
            spec.kind = kind == "auto" ? (have_overlay ? RenderKind::trajectory_overlay : RenderKind::heatmap)
                                       : render_kind_from_name(kind);
            svg = render_surface_svg(grid, spec, have_overlay ? &overlay : nullptr);
        } else if (text.starts_with("# lossscope-curve")) {
            CurveSamples curve = curve_from_csv(text);
            spec.kind = RenderKind::curve;
            spec.color_cap = cap > 0.0 ? cap : 3.0;
            std::vector<CurvePlotEntry> entries = {{&curve, "curve", false}};
            svg = render_curves_svg(entries, spec, true);
        } else {
            throw std::runtime_error("unrecognized input format: " + data_path);
        }
        write_text_file(out_path, svg);
        std::cerr << "rendered " << data_path << " -> " << out_path << "\n";
    });

    auto* rep = app.add_subcommand("repro", "rebuild one of the paper-style figures end to end");
    add_config(rep);
    add_workers(rep);
    rep->add_option("figure", figure_id, "fig1..fig7 or table1")->required();
    rep->add_option("--out", out_path, "output directory (overrides the config's out_dir)");
    rep->callback([&] {
        ExperimentConfig cfg = config_from(config_path);
        if (!out_path.empty()) cfg.out_dir = out_path;
        if (workers > 0) cfg.workers = workers;
        Experiment exp(cfg);
        ReproResult result = repro_figure(figure_id, exp);
        std::cerr << result.figure_id << ": " << result.files.size() << " files in " << result.directory << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
