#include "lossscope/landscape.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "lossscope/parallel.hpp"
#include "lossscope/text_format.hpp"

namespace lossscope {

namespace {

Batch take_front(Batch data, long subsample) {
    if (subsample <= 0 || std::size_t(subsample) >= data.size()) return data;
    Batch out;
    out.token_ids.assign(data.token_ids.begin(), data.token_ids.begin() + subsample);
    if (!data.labels.empty()) out.labels.assign(data.labels.begin(), data.labels.begin() + subsample);
    if (!data.masks.empty()) out.masks.assign(data.masks.begin(), data.masks.begin() + subsample);
    return out;
}

Direction encoder_direction(const ParamVector& to, const ParamVector& from, const char* what) {
    Direction d = drop_task_head(diff(to, from));
    if (norm(d) == 0.0) {
        throw std::invalid_argument(std::string(what) + " is a zero direction (no encoder movement)");
    }
    return d;
}

}  // namespace

void GridSpec::validate() const {
    if (samples_per_axis < 2) throw std::invalid_argument("grid: need at least 2 samples per axis");
    if (!(alpha_max > alpha_min) || !(beta_max > beta_min)) {
        throw std::invalid_argument("grid: ranges must have positive width");
    }
}

std::vector<double> GridSpec::alphas() const {
    std::vector<double> out(samples_per_axis);
    const double stride = (alpha_max - alpha_min) / double(samples_per_axis - 1);
    for (int k = 0; k < samples_per_axis; ++k) out[k] = alpha_min + stride * k;
    return out;
}

std::vector<double> GridSpec::betas() const {
    std::vector<double> out(samples_per_axis);
    const double stride = (beta_max - beta_min) / double(samples_per_axis - 1);
    for (int k = 0; k < samples_per_axis; ++k) out[k] = beta_min + stride * k;
    return out;
}

std::string surface_kind_name(SurfaceKind kind) {
    return kind == SurfaceKind::train_loss ? "train_loss" : "dev_error";
}

SurfaceKind surface_kind_from_name(std::string_view name) {
    if (name == "train_loss") return SurfaceKind::train_loss;
    if (name == "dev_error") return SurfaceKind::dev_error;
    throw std::invalid_argument("unknown surface kind: '" + std::string(name) + "'");
}

LossEvaluator LossEvaluator::train_loss(const Model& model, Batch data, HeadKind head,
                                        const ParamVector& head_source, long subsample) {
    Batch use = take_front(std::move(data), subsample);
    long used = long(use.size());
    auto shared = std::make_shared<const Batch>(std::move(use));
    Model m = model;
    ParamVector src = head_source;
    Fn fn = [m, shared, head, src](const ParamVector& point) {
        return m.forward_loss(splice_task_head(point, src), *shared, head).loss;
    };
    return LossEvaluator(std::move(fn), "train_loss[" + head_kind_name(head) + ", n=" + std::to_string(used) + "]",
                         subsample > 0 ? subsample : 0);
}

LossEvaluator LossEvaluator::dev_error(const Model& model, Batch data, HeadKind head,
                                       const ParamVector& head_source, long subsample) {
    Batch use = take_front(std::move(data), subsample);
    long used = long(use.size());
    auto shared = std::make_shared<const Batch>(std::move(use));
    Model m = model;
    ParamVector src = head_source;
    Fn fn = [m, shared, head, src](const ParamVector& point) {
        return m.evaluate(splice_task_head(point, src), *shared, head).error_rate;
    };
    return LossEvaluator(std::move(fn), "dev_error[" + head_kind_name(head) + ", n=" + std::to_string(used) + "]",
                         subsample > 0 ? subsample : 0);
}

std::vector<double> eval_grid(std::span<const GridPoint> points,
                              const std::function<double(const GridPoint&)>& fn, int workers,
                              GridTiming* timing) {
    using Clock = std::chrono::steady_clock;
    std::vector<double> out(points.size(), 0.0);
    if (timing) timing->per_cell_seconds.assign(points.size(), 0.0);
    auto start = Clock::now();
    parallel_for(points.size(), workers, [&](std::size_t i) {
        auto cell_start = Clock::now();
        try {
            out[i] = fn(points[i]);
        } catch (const std::exception& e) {
            throw std::runtime_error("grid evaluation failed at cell (alpha=" + format_double(points[i].alpha) +
                                     ", beta=" + format_double(points[i].beta) + "): " + e.what());
        }
        if (timing) {
            timing->per_cell_seconds[i] = std::chrono::duration<double>(Clock::now() - cell_start).count();
        }
    });
    if (timing) timing->total_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return out;
}

CurveSamples curve_1d(const ParamVector& theta0, const ParamVector& theta1, const LossEvaluator& loss,
                      const GridSpec& spec, int workers) {
    spec.validate();
    Direction d1 = encoder_direction(theta1, theta0, "delta1 = theta1 - theta0");

    CurveSamples curve;
    curve.alphas = spec.alphas();
    curve.axis_scale = norm(d1);
    std::vector<GridPoint> points(curve.alphas.size());
    for (std::size_t k = 0; k < curve.alphas.size(); ++k) points[k] = {curve.alphas[k], 0.0};
    curve.losses = eval_grid(
        points,
        [&](const GridPoint& pt) { return loss(combine(theta0, {{pt.alpha, &d1}})); },
        workers);
    return curve;
}

namespace {

SurfaceGrid sample_surface(const ParamVector& anchor, const Direction& d1, const Direction& d2_rescaled,
                           const LossEvaluator& loss, const GridSpec& spec, SurfaceKind kind, int workers) {
    const auto alphas = spec.alphas();
    const auto betas = spec.betas();
    const int n = spec.samples_per_axis;
    std::vector<GridPoint> points;
    points.reserve(std::size_t(n) * n);
    for (int ai = 0; ai < n; ++ai) {
        for (int bi = 0; bi < n; ++bi) points.push_back({alphas[ai], betas[bi]});
    }
    SurfaceGrid grid;
    grid.spec = spec;
    grid.kind = kind;
    grid.values = eval_grid(
        points,
        [&](const GridPoint& pt) {
            return loss(combine(anchor, {{pt.alpha, &d1}, {pt.beta, &d2_rescaled}}));
        },
        workers);
    return grid;
}

}  // namespace

SurfaceGrid surface_2d(const ParamVector& theta0, const ParamVector& theta1, const ParamVector& theta2,
                       const LossEvaluator& loss, const GridSpec& spec, int workers) {
    spec.validate();
    Direction d1 = encoder_direction(theta1, theta0, "delta1 = theta1 - theta0");
    Direction d2 = encoder_direction(theta2, theta0, "delta2 = theta2 - theta0");
    double n1 = norm(d1);
    Direction d2r = rescale_to(d2, n1);

    SurfaceGrid grid = sample_surface(theta0, d1, d2r, loss, spec, SurfaceKind::train_loss, workers);
    grid.axes.delta1_id = d1.provenance().describe();
    grid.axes.delta2_id = d2r.provenance().describe();
    grid.axes.delta1_norm = n1;
    grid.axes.cos_delta12 = cosine(d1, d2);
    grid.axes.subsample = loss.subsample();
    grid.origin.anchor_id = theta0.id().empty() ? "<anon>" : theta0.id();
    grid.origin.anchor_kind = "theta0";
    return grid;
}

SurfaceGrid error_surface(const ParamVector& theta0, const ParamVector& theta1, const ParamVector& theta2,
                          const Model& model, const Batch& dev, const GridSpec& spec, int workers,
                          long subsample) {
    LossEvaluator err = LossEvaluator::dev_error(model, dev, HeadKind::classification, theta1, subsample);
    SurfaceGrid grid = surface_2d(theta0, theta1, theta2, err, spec, workers);
    grid.kind = SurfaceKind::dev_error;
    return grid;
}

TrajectoryProjection project_trajectory(const TrainRun& run, const ParamVector& theta0,
                                        const ParamVector& theta1) {
    if (run.checkpoints.empty()) throw std::invalid_argument("project_trajectory: run has no checkpoints");
    if (!equal_on_encoder(run.initial().params, theta0)) {
        throw std::invalid_argument("project_trajectory: run's checkpoint 0 differs from theta0 on encoder segments");
    }
    Direction d1 = encoder_direction(theta1, theta0, "delta1 = theta1 - theta0");
    const double s1 = dot(d1, d1);  // |delta1|^2 without the sqrt round-trip
    const double n1 = std::sqrt(s1);

    TrajectoryProjection traj;
    for (std::size_t i = 1; i < run.checkpoints.size(); ++i) {
        const Checkpoint& ckpt = run.checkpoints[i];
        Direction di = drop_task_head(diff(ckpt.params, theta0));
        const double si = dot(di, di);
        TrajectoryPoint pt;
        pt.epoch = ckpt.epoch_index;
        if (si == 0.0) {
            // the epoch did not move the encoder; cosine is undefined
            traj.points.push_back(pt);
            continue;
        }
        const double ni = std::sqrt(si);
        const double inner = dot(di, d1);
        pt.v_cos = inner / (ni * n1);
        pt.d_alpha = inner / s1;
        const double ratio_sq = si / s1;
        pt.norm_ratio = std::sqrt(ratio_sq);
        double rad = ratio_sq - pt.d_alpha * pt.d_alpha;
        if (rad < 0.0) rad = 0.0;
        pt.d_beta = std::sqrt(rad);
        traj.points.push_back(pt);
    }
    return traj;
}

SurfaceGrid layer_surface(const ParamVector& theta1, const Direction& delta1, const Direction& delta2,
                          const LayerGroup& group, const LossEvaluator& loss, const GridSpec& spec,
                          int workers) {
    spec.validate();
    if (!same_layout(theta1.layout(), delta1.layout()) || !same_layout(theta1.layout(), delta2.layout())) {
        throw std::invalid_argument("layer_surface: direction layouts do not match the anchor");
    }
    Direction d1g = mask_to_group(delta1, group);
    double n1 = norm(d1g);
    if (n1 == 0.0) {
        throw std::invalid_argument("layer_surface: delta1 masked to group '" + group.label +
                                    "' is zero; the group spans no moving parameters");
    }
    Direction d2g = mask_to_group(delta2, group);
    if (norm(d2g) == 0.0) {
        throw std::invalid_argument("layer_surface: delta2 masked to group '" + group.label +
                                    "' is zero; the group spans no moving parameters");
    }
    Direction d2r = rescale_to(d2g, n1);

    SurfaceGrid grid = sample_surface(theta1, d1g, d2r, loss, spec, SurfaceKind::train_loss, workers);
    grid.axes.delta1_id = d1g.provenance().describe();
    grid.axes.delta2_id = d2r.provenance().describe();
    grid.axes.delta1_norm = n1;
    grid.axes.cos_delta12 = cosine(d1g, d2g);
    grid.axes.subsample = loss.subsample();
    grid.origin.anchor_id = theta1.id().empty() ? "<anon>" : theta1.id();
    grid.origin.anchor_kind = "theta1";
    grid.origin.group_label = group.label;
    return grid;
}

std::vector<RollbackRow> rollback_table(const ParamVector& theta1, const ParamVector& theta0,
                                        std::span<const LayerGroup> groups, const Model& model,
                                        const Batch& dev, int workers) {
    if (groups.empty()) throw std::invalid_argument("rollback_table: no groups given");
    const double base_acc =
        1.0 - model.evaluate(theta1, dev, HeadKind::classification, workers).error_rate;
    std::vector<RollbackRow> rows;
    for (const LayerGroup& g : groups) {
        ParamVector rolled = splice_group(theta1, theta0, g);
        double acc = 1.0 - model.evaluate(rolled, dev, HeadKind::classification, workers).error_rate;
        rows.push_back({g.label, acc, acc - base_acc});
    }
    return rows;
}

FlatnessWidth flatness_width(const CurveSamples& curve, double threshold_ratio) {
    if (curve.alphas.size() < 2 || curve.alphas.size() != curve.losses.size()) {
        throw std::invalid_argument("flatness_width: need at least two samples");
    }
    if (!(threshold_ratio > 1.0)) throw std::invalid_argument("flatness_width: threshold_ratio must exceed 1");
    for (double v : curve.losses) {
        if (!std::isfinite(v)) throw std::invalid_argument("flatness_width: losses must be finite");
    }

    std::size_t min_idx = 0;
    for (std::size_t k = 1; k < curve.losses.size(); ++k) {
        if (curve.losses[k] < curve.losses[min_idx]) min_idx = k;
    }
    const double min_loss = curve.losses[min_idx];
    // a ratio threshold on a ~zero minimum is degenerate; fall back to an
    // absolute band
    const double threshold = min_loss < 1e-8 ? 0.01 : threshold_ratio * min_loss;

    auto cross = [&](std::size_t inside, std::size_t outside) {
        double a0 = curve.alphas[inside], a1 = curve.alphas[outside];
        double l0 = curve.losses[inside], l1 = curve.losses[outside];
        return a0 + (threshold - l0) / (l1 - l0) * (a1 - a0);
    };

    FlatnessWidth out;
    double left = curve.alphas.front();
    bool found_left = false;
    for (std::size_t k = min_idx; k-- > 0;) {
        if (curve.losses[k] > threshold) {
            left = cross(k + 1, k);
            found_left = true;
            break;
        }
    }
    out.truncated_low = !found_left;

    double right = curve.alphas.back();
    bool found_right = false;
    for (std::size_t k = min_idx + 1; k < curve.losses.size(); ++k) {
        if (curve.losses[k] > threshold) {
            right = cross(k - 1, k);
            found_right = true;
            break;
        }
    }
    out.truncated_high = !found_right;

    out.width = (right - left) * (curve.axis_scale > 0.0 ? curve.axis_scale : 1.0);
    return out;
}

}  // namespace lossscope
