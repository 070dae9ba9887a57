#include "lossscope/training.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "lossscope/rng.hpp"
#include "lossscope/text_format.hpp"

namespace lossscope {

namespace {

constexpr std::uint64_t kShuffleTag = 0x5f;
constexpr std::uint64_t kEpochMaskTag = 0x6a;
constexpr std::uint64_t kEvalMaskTag = 0x6b;

// train_loss metric evaluation is capped so that pretraining on large corpora
// does not spend more time on metrics than on steps
constexpr std::size_t kTrainEvalCap = 512;

struct AdamState {
    std::vector<double> m, v;
    long t = 0;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad, const TrainConfig& cfg) {
        ++t;
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, double(t));
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, double(t));
        for (std::size_t k = 0; k < params.size(); ++k) {
            m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * grad[k];
            v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * grad[k] * grad[k];
            double mhat = m[k] / bc1;
            double vhat = v[k] / bc2;
            params[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
};

// one epoch's batches as index lists into the training examples
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::uint64_t seed,
                                                    int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, kShuffleTag, std::uint64_t(epoch)));
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += std::size_t(batch_size)) {
        std::size_t end = std::min(n, start + std::size_t(batch_size));
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

Batch select_examples(const Batch& data, const std::vector<std::size_t>& indices) {
    Batch out;
    for (std::size_t i : indices) {
        out.token_ids.push_back(data.token_ids[i]);
        if (!data.labels.empty()) out.labels.push_back(data.labels[i]);
        if (!data.masks.empty()) out.masks.push_back(data.masks[i]);
    }
    return out;
}

// Shared loop: provides per-epoch batches and fixed evaluation sets.
struct TrainingData {
    std::function<Batch(const std::vector<std::size_t>&, int epoch)> make_batch;
    std::size_t train_size = 0;
    Batch train_eval;  // fixed set used for the train_loss metric
    Batch dev_eval;
};

TrainRun run_training(const Model& model, std::vector<double> init_values, const TrainingData& data,
                      const TrainConfig& config, RunKind kind, std::string label, std::string task_name,
                      std::string from_run) {
    config.validate();
    TrainRun run;
    run.kind = kind;
    run.from_run = std::move(from_run);
    run.label = std::move(label);
    run.model = model.config();
    run.config = config;
    run.task_name = std::move(task_name);

    std::vector<double> params = std::move(init_values);
    auto record = [&](int epoch) {
        ParamVector snapshot(model.layout(), params, run.label + "/epoch_" + std::to_string(epoch));
        Metrics train_m = model.evaluate(snapshot, data.train_eval, config.objective, config.workers);
        Metrics dev_m = model.evaluate(snapshot, data.dev_eval, config.objective, config.workers);
        run.checkpoints.push_back({epoch, std::move(snapshot), train_m.loss, dev_m.loss, dev_m.error_rate});
    };
    record(0);

    AdamState adam(params.size());
    std::vector<double> grad;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (const auto& indices : epoch_batches(data.train_size, config.batch_size, config.seed, epoch)) {
            Batch batch = data.make_batch(indices, epoch);
            ParamVector view(model.layout(), params);
            model.loss_and_grad(view, batch, config.objective, grad, config.workers);
            adam.step(params, grad, config);
        }
        record(epoch);
    }
    return run;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be positive");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
        throw std::invalid_argument("train config: betas must lie in (0, 1)");
    }
    if (!(adam_eps > 0.0)) throw std::invalid_argument("train config: adam_eps must be positive");
    if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw std::invalid_argument("train config: mask_prob must lie in (0, 1)");
}

std::string run_kind_name(RunKind kind) {
    switch (kind) {
        case RunKind::pretrain: return "pretrain";
        case RunKind::finetune: return "finetune";
        case RunKind::scratch: return "scratch";
    }
    return "unknown";
}

RunKind run_kind_from_name(std::string_view name) {
    if (name == "pretrain") return RunKind::pretrain;
    if (name == "finetune") return RunKind::finetune;
    if (name == "scratch") return RunKind::scratch;
    throw std::invalid_argument("unknown run kind: '" + std::string(name) + "'");
}

TrainRun pretrain(const Model& model, const SyntheticCorpus& corpus, const TrainConfig& config) {
    if (config.objective != HeadKind::masked_lm) {
        throw std::invalid_argument("pretrain: objective must be masked_lm");
    }
    if (corpus.sequences.empty()) throw std::invalid_argument("pretrain: empty corpus");
    if (corpus.vocab_size != model.config().vocab_size) {
        throw std::invalid_argument("pretrain: corpus vocab does not match model");
    }

    const std::size_t n = corpus.sequences.size();
    const std::size_t dev_count = std::max<std::size_t>(1, n / 10);
    // degenerate corpora reuse sequences for the dev metric rather than fail
    const std::size_t train_count = n > dev_count ? n - dev_count : n;
    const int mask_id = model.config().mask_token_id();

    std::vector<std::size_t> train_eval_idx(std::min(train_count, kTrainEvalCap));
    std::iota(train_eval_idx.begin(), train_eval_idx.end(), 0);
    std::vector<std::size_t> dev_idx;
    for (std::size_t i = (n > dev_count ? n - dev_count : 0); i < n; ++i) dev_idx.push_back(i);

    TrainingData data;
    data.train_size = train_count;
    data.train_eval = mask_sequences(corpus.sequences, train_eval_idx, config.mask_prob, mask_id,
                                     derive_seed(config.seed, kEvalMaskTag, 0));
    data.dev_eval = mask_sequences(corpus.sequences, dev_idx, config.mask_prob, mask_id,
                                   derive_seed(config.seed, kEvalMaskTag, 1));
    data.make_batch = [&corpus, &config, mask_id](const std::vector<std::size_t>& indices, int epoch) {
        return mask_sequences(corpus.sequences, indices, config.mask_prob, mask_id,
                              derive_seed(config.seed, kEpochMaskTag, std::uint64_t(epoch)));
    };

    auto init = model.init_params(config.seed);
    std::vector<double> values(init.values().begin(), init.values().end());
    std::string label = "pretrain-s" + std::to_string(config.seed);
    return run_training(model, std::move(values), data, config, RunKind::pretrain, label, "corpus", {});
}

namespace {

TrainRun run_classification(const Model& model, std::vector<double> init_values, const ClassificationTask& task,
                            const TrainConfig& config, RunKind kind, std::string from_run) {
    if (config.objective != HeadKind::classification) {
        throw std::invalid_argument(run_kind_name(kind) + ": objective must be classification");
    }
    if (task.train.empty() || task.dev.empty()) {
        throw std::invalid_argument(run_kind_name(kind) + ": task has an empty split");
    }
    model.reinit_cls_head(init_values, config.seed + std::uint64_t(task.task_id));

    TrainingData data;
    data.train_size = task.train.size();
    data.train_eval = task.train;
    data.dev_eval = task.dev;
    data.make_batch = [&task](const std::vector<std::size_t>& indices, int) {
        return select_examples(task.train, indices);
    };
    std::string label = run_kind_name(kind) + "-" + task.name + "-s" + std::to_string(config.seed);
    return run_training(model, std::move(init_values), data, config, kind, label, task.name,
                        std::move(from_run));
}

}  // namespace

TrainRun finetune(const Model& model, const ParamVector& init, const ClassificationTask& task,
                  const TrainConfig& config, std::string from_run) {
    if (!same_layout(init.layout(), model.layout())) {
        throw std::invalid_argument("finetune: initialization layout does not match model");
    }
    std::vector<double> values(init.values().begin(), init.values().end());
    return run_classification(model, std::move(values), task, config, RunKind::finetune, std::move(from_run));
}

TrainRun train_from_scratch(const Model& model, const ClassificationTask& task, const TrainConfig& config) {
    auto init = model.init_params(config.seed);
    std::vector<double> values(init.values().begin(), init.values().end());
    return run_classification(model, std::move(values), task, config, RunKind::scratch, {});
}

std::string export_learning_curves(const std::vector<const TrainRun*>& runs) {
    if (runs.empty()) throw std::invalid_argument("export_learning_curves: no runs");
    std::string out = "run,epoch,train_loss,dev_error\n";
    for (const TrainRun* run : runs) {
        for (const Checkpoint& c : run->checkpoints) {
            out += run->label + "," + std::to_string(c.epoch_index) + "," + format_double(c.train_loss) + "," +
                   format_double(c.dev_error) + "\n";
        }
    }
    return out;
}

std::vector<LearningCurveRow> parse_learning_curves(const std::string& csv) {
    std::vector<LearningCurveRow> rows;
    std::size_t start = 0;
    bool header = true;
    while (start < csv.size()) {
        std::size_t end = csv.find('\n', start);
        if (end == std::string::npos) end = csv.size();
        std::string_view line(csv.data() + start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        if (header) {
            if (line != "run,epoch,train_loss,dev_error") throw std::runtime_error("bad learning-curve header");
            header = false;
            continue;
        }
        auto cells = split(line, ',');
        if (cells.size() != 4) throw std::runtime_error("bad learning-curve row");
        rows.push_back({std::string(cells[0]), int(parse_long(cells[1])), parse_double(cells[2]),
                        parse_double(cells[3])});
    }
    return rows;
}

}  // namespace lossscope
