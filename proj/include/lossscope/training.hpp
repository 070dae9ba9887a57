#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lossscope/model.hpp"
#include "lossscope/synth_data.hpp"

namespace lossscope {

struct TrainConfig {
    int epochs = 4;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    HeadKind objective = HeadKind::classification;
    double mask_prob = 0.15;  // masked_lm only
    int workers = 1;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct Checkpoint {
    int epoch_index = 0;  // 0 holds the untrained initialization
    ParamVector params;
    double train_loss = 0.0;
    double dev_loss = 0.0;
    double dev_error = 0.0;
};

enum class RunKind { pretrain, finetune, scratch };

std::string run_kind_name(RunKind kind);
RunKind run_kind_from_name(std::string_view name);

struct TrainRun {
    RunKind kind = RunKind::scratch;
    std::string from_run;  // finetune: label of the run that produced the initialization
    std::string label;
    ModelConfig model;
    TrainConfig config;
    std::string task_name;
    std::vector<Checkpoint> checkpoints;  // epoch 0 .. epochs, no gaps

    const Checkpoint& initial() const { return checkpoints.front(); }
    const Checkpoint& final() const { return checkpoints.back(); }
};

// Masked-token pretraining over the corpus. The last tenth of the corpus is
// held out for dev metrics; masks on the training part are re-drawn per epoch.
TrainRun pretrain(const Model& model, const SyntheticCorpus& corpus, const TrainConfig& config);

// Supervised training from the given initialization with a freshly seeded
// classification head (seed + task id, shared with train_from_scratch).
TrainRun finetune(const Model& model, const ParamVector& init, const ClassificationTask& task,
                  const TrainConfig& config, std::string from_run = {});

TrainRun train_from_scratch(const Model& model, const ClassificationTask& task, const TrainConfig& config);

struct LearningCurveRow {
    std::string run;
    int epoch = 0;
    double train_loss = 0.0;
    double dev_error = 0.0;
};

std::string export_learning_curves(const std::vector<const TrainRun*>& runs);
std::vector<LearningCurveRow> parse_learning_curves(const std::string& csv);

}  // namespace lossscope
