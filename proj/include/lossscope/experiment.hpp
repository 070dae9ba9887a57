#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "lossscope/landscape.hpp"
#include "lossscope/model.hpp"
#include "lossscope/synth_data.hpp"
#include "lossscope/training.hpp"

namespace lossscope {

// Everything one experiment needs, parsed from a sectioned key-value file.
// Every key has a default; unknown sections or keys are an error.
struct ExperimentConfig {
    ModelConfig model;

    int corpus_size = 2048;
    std::array<TaskKind, 2> task_kinds = {TaskKind::regime, TaskKind::motif};
    std::array<int, 2> task_train = {256, 128};
    std::array<int, 2> task_dev = {256, 256};

    TrainConfig pretrain_cfg;
    TrainConfig finetune_cfg;
    TrainConfig scratch_cfg;
    int extend_factor = 5;  // extended fine-tuning runs T * extend_factor epochs

    GridSpec grid;
    long subsample = 0;  // grid evaluation subset; 0 = full split

    std::uint64_t seed = 0;
    int workers = 0;  // 0 = LOSSSCOPE_WORKERS or hardware parallelism
    std::string out_dir = "out";

    void validate() const;
    // re-derives the per-stage seeds and objectives from the master seed
    void bind_seeds();
};

ExperimentConfig default_experiment_config();
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

// Lazily builds (and disk-caches under <out_dir>/runs/) the corpus, tasks and
// training runs of one experiment seed. Deterministic training makes a cache
// hit equivalent to retraining.
class Experiment {
public:
    explicit Experiment(ExperimentConfig cfg);

    const ExperimentConfig& config() const { return cfg_; }
    const Model& model() const { return model_; }
    int workers() const { return workers_; }

    const SyntheticCorpus& corpus();
    const ClassificationTask& task(int idx);

    const TrainRun& pretrain_run();
    const TrainRun& finetune_run(int task_idx);
    const TrainRun& scratch_run(int task_idx);
    // fine-tuning continued for extend_factor * epochs, for the overfitting
    // experiment
    const TrainRun& extended_run(int task_idx);

    std::string runs_dir() const { return cfg_.out_dir + "/runs"; }

private:
    const TrainRun& cached_run(const std::string& name, const TrainConfig& wanted,
                               const std::function<TrainRun()>& build);

    ExperimentConfig cfg_;
    Model model_;
    int workers_ = 1;
    std::optional<SyntheticCorpus> corpus_;
    std::array<std::optional<ClassificationTask>, 2> tasks_;
    std::map<std::string, TrainRun> runs_;
};

}  // namespace lossscope
