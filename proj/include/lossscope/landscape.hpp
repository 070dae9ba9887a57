#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lossscope/model.hpp"
#include "lossscope/param_space.hpp"
#include "lossscope/training.hpp"

namespace lossscope {

struct GridSpec {
    double alpha_min = -4.0;
    double alpha_max = 4.0;
    double beta_min = -4.0;
    double beta_max = 4.0;
    int samples_per_axis = 40;

    void validate() const;
    std::vector<double> alphas() const;
    std::vector<double> betas() const;
    bool operator==(const GridSpec&) const = default;
};

enum class SurfaceKind { train_loss, dev_error };

std::string surface_kind_name(SurfaceKind kind);
SurfaceKind surface_kind_from_name(std::string_view name);

struct AxesMeta {
    std::string delta1_id;
    std::string delta2_id;
    double delta1_norm = 0.0;
    // cosine between the two (unnormalized) axis directions; reported as
    // measured, never asserted
    double cos_delta12 = std::numeric_limits<double>::quiet_NaN();
    long subsample = 0;  // 0 = full dataset
};

struct OriginMeta {
    std::string anchor_id;
    std::string anchor_kind;  // "theta0" or "theta1"
    std::string group_label;  // layer surfaces only
};

struct SurfaceGrid {
    GridSpec spec;
    SurfaceKind kind = SurfaceKind::train_loss;
    AxesMeta axes;
    OriginMeta origin;
    std::vector<double> values;  // row-major, row = alpha index

    double at(int ai, int bi) const { return values[std::size_t(ai) * spec.samples_per_axis + bi]; }
};

struct CurveSamples {
    std::vector<double> alphas;
    std::vector<double> losses;
    double axis_scale = 0.0;  // |delta1|, for parameter-distance axes
};

struct TrajectoryPoint {
    int epoch = 0;
    double d_alpha = 0.0;
    double d_beta = 0.0;   // magnitude: trajectories live in the half plane d_beta >= 0
    double norm_ratio = 0.0;  // |delta_i| / |delta_1|
    double v_cos = std::numeric_limits<double>::quiet_NaN();  // NaN when the epoch did not move
};

struct TrajectoryProjection {
    std::vector<TrajectoryPoint> points;  // epochs 1..T in order
};

// A pure loss(point) functional over parameter vectors. Factories bake in the
// dataset and hold the task head fixed to the head of the supplied fine-tuned
// parameters, so probes only move the encoder.
class LossEvaluator {
public:
    using Fn = std::function<double(const ParamVector&)>;

    LossEvaluator(Fn fn, std::string label, long subsample = 0)
        : fn_(std::move(fn)), label_(std::move(label)), subsample_(subsample) {}

    static LossEvaluator train_loss(const Model& model, Batch data, HeadKind head,
                                    const ParamVector& head_source, long subsample = 0);
    static LossEvaluator dev_error(const Model& model, Batch data, HeadKind head,
                                   const ParamVector& head_source, long subsample = 0);

    double operator()(const ParamVector& point) const { return fn_(point); }
    const std::string& label() const { return label_; }
    long subsample() const { return subsample_; }

private:
    Fn fn_;
    std::string label_;
    long subsample_ = 0;
};

struct GridPoint {
    double alpha = 0.0;
    double beta = 0.0;
};

struct GridTiming {
    double total_seconds = 0.0;
    std::vector<double> per_cell_seconds;
};

// Parallel work distribution for grid cells. Results are identical to
// sequential evaluation for every worker count; a failing cell aborts the
// grid with that cell's coordinates in the error.
std::vector<double> eval_grid(std::span<const GridPoint> points,
                              const std::function<double(const GridPoint&)>& fn, int workers,
                              GridTiming* timing = nullptr);

// f(alpha) = J(theta0 + alpha * (theta1 - theta0)), head segments excluded
// from the direction (the evaluator holds them fixed)
CurveSamples curve_1d(const ParamVector& theta0, const ParamVector& theta1, const LossEvaluator& loss,
                      const GridSpec& spec, int workers = 1);

// f(alpha, beta) = J(theta0 + alpha*delta1 + beta*delta2), delta2 rescaled to
// |delta1| before sampling
SurfaceGrid surface_2d(const ParamVector& theta0, const ParamVector& theta1, const ParamVector& theta2,
                       const LossEvaluator& loss, const GridSpec& spec, int workers = 1);

// same grid, dev-set classification error in [0, 1]
SurfaceGrid error_surface(const ParamVector& theta0, const ParamVector& theta1, const ParamVector& theta2,
                          const Model& model, const Batch& dev, const GridSpec& spec, int workers = 1,
                          long subsample = 0);

// per-epoch displacement of the run projected onto the plane spanned by
// delta1 (alpha axis) and its orthogonal complement (beta axis, magnitude)
TrajectoryProjection project_trajectory(const TrainRun& run, const ParamVector& theta0,
                                        const ParamVector& theta1);

// f(alpha, beta) = J(theta1 + alpha*delta1^G + beta*delta2^G), both directions
// masked to the layer group and delta2^G rescaled to |delta1^G|
SurfaceGrid layer_surface(const ParamVector& theta1, const Direction& delta1, const Direction& delta2,
                          const LayerGroup& group, const LossEvaluator& loss, const GridSpec& spec,
                          int workers = 1);

struct RollbackRow {
    std::string group;
    double dev_accuracy = 0.0;
    double delta_vs_full = 0.0;  // accuracy difference vs. the un-rollbacked model
};

std::vector<RollbackRow> rollback_table(const ParamVector& theta1, const ParamVector& theta0,
                                        std::span<const LayerGroup> groups, const Model& model,
                                        const Batch& dev, int workers = 1);

struct FlatnessWidth {
    double width = 0.0;  // parameter-space distance (alpha width times axis_scale)
    bool truncated_low = false;
    bool truncated_high = false;
};

// width of the contiguous interval around the curve minimum where loss stays
// below threshold_ratio * min (absolute fallback 0.01 when min < 1e-8),
// linearly interpolated at the boundary
FlatnessWidth flatness_width(const CurveSamples& curve, double threshold_ratio);

}  // namespace lossscope
