#include "lossscope/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "lossscope/checkpoint_io.hpp"
#include "lossscope/parallel.hpp"
#include "lossscope/text_format.hpp"

namespace lossscope {

void ExperimentConfig::validate() const {
    model.validate();
    pretrain_cfg.validate();
    finetune_cfg.validate();
    scratch_cfg.validate();
    grid.validate();
    if (corpus_size < 1) throw std::invalid_argument("experiment: corpus_size must be at least 1");
    for (int t = 0; t < 2; ++t) {
        if (task_train[t] < 1 || task_dev[t] < 1) {
            throw std::invalid_argument("experiment: task split sizes must be at least 1");
        }
    }
    if (extend_factor < 2) throw std::invalid_argument("experiment: extend_factor must be at least 2");
    if (subsample < 0) throw std::invalid_argument("experiment: subsample cannot be negative");
    if (out_dir.empty()) throw std::invalid_argument("experiment: out_dir cannot be empty");
}

void ExperimentConfig::bind_seeds() {
    pretrain_cfg.seed = seed;
    pretrain_cfg.objective = HeadKind::masked_lm;
    finetune_cfg.seed = seed;
    finetune_cfg.objective = HeadKind::classification;
    scratch_cfg.seed = seed;
    scratch_cfg.objective = HeadKind::classification;
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.pretrain_cfg.epochs = 4;
    cfg.pretrain_cfg.batch_size = 32;
    cfg.pretrain_cfg.learning_rate = 1e-3;
    cfg.finetune_cfg.epochs = 4;
    cfg.finetune_cfg.batch_size = 16;
    cfg.finetune_cfg.learning_rate = 1e-3;
    cfg.scratch_cfg.epochs = 8;
    cfg.scratch_cfg.batch_size = 16;
    cfg.scratch_cfg.learning_rate = 1e-3;
    cfg.bind_seeds();
    return cfg;
}

namespace {

struct IniEntry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;
};

std::vector<IniEntry> parse_ini(const std::string& text) {
    std::vector<IniEntry> entries;
    std::string section;
    int lineno = 0;
    std::istringstream stream(text);
    std::string raw;
    while (std::getline(stream, raw)) {
        ++lineno;
        std::string_view line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::runtime_error("config line " + std::to_string(lineno) + ": unterminated section header");
            }
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        }
        entries.push_back({section, std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))),
                           lineno});
    }
    return entries;
}

void apply_train_key(TrainConfig& cfg, const IniEntry& e) {
    if (e.key == "epochs") cfg.epochs = int(parse_long(e.value));
    else if (e.key == "batch_size") cfg.batch_size = int(parse_long(e.value));
    else if (e.key == "lr") cfg.learning_rate = parse_double(e.value);
    else if (e.key == "beta1") cfg.adam_beta1 = parse_double(e.value);
    else if (e.key == "beta2") cfg.adam_beta2 = parse_double(e.value);
    else if (e.key == "eps") cfg.adam_eps = parse_double(e.value);
    else if (e.key == "mask_prob") cfg.mask_prob = parse_double(e.value);
    else {
        throw std::runtime_error("config line " + std::to_string(e.line) + ": unknown key '" + e.key +
                                 "' in section [" + e.section + "]");
    }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
    ExperimentConfig cfg = default_experiment_config();
    for (const IniEntry& e : parse_ini(text)) {
        auto unknown = [&]() -> std::runtime_error {
            return std::runtime_error("config line " + std::to_string(e.line) + ": unknown key '" + e.key +
                                      "' in section [" + e.section + "]");
        };
        if (e.section == "model") {
            if (e.key == "layers") cfg.model.num_layers = int(parse_long(e.value));
            else if (e.key == "dim") cfg.model.model_dim = int(parse_long(e.value));
            else if (e.key == "heads") cfg.model.num_heads = int(parse_long(e.value));
            else if (e.key == "ffn") cfg.model.ffn_dim = int(parse_long(e.value));
            else if (e.key == "vocab") cfg.model.vocab_size = int(parse_long(e.value));
            else if (e.key == "seq_len") cfg.model.max_seq_len = int(parse_long(e.value));
            else if (e.key == "classes") cfg.model.num_classes = int(parse_long(e.value));
            else throw unknown();
        } else if (e.section == "data") {
            if (e.key == "corpus_size") cfg.corpus_size = int(parse_long(e.value));
            else if (e.key == "task1_kind") cfg.task_kinds[0] = task_kind_from_name(e.value);
            else if (e.key == "task1_train") cfg.task_train[0] = int(parse_long(e.value));
            else if (e.key == "task1_dev") cfg.task_dev[0] = int(parse_long(e.value));
            else if (e.key == "task2_kind") cfg.task_kinds[1] = task_kind_from_name(e.value);
            else if (e.key == "task2_train") cfg.task_train[1] = int(parse_long(e.value));
            else if (e.key == "task2_dev") cfg.task_dev[1] = int(parse_long(e.value));
            else throw unknown();
        } else if (e.section == "pretrain") {
            apply_train_key(cfg.pretrain_cfg, e);
        } else if (e.section == "finetune") {
            apply_train_key(cfg.finetune_cfg, e);
        } else if (e.section == "scratch") {
            apply_train_key(cfg.scratch_cfg, e);
        } else if (e.section == "landscape") {
            if (e.key == "alpha_min") cfg.grid.alpha_min = parse_double(e.value);
            else if (e.key == "alpha_max") cfg.grid.alpha_max = parse_double(e.value);
            else if (e.key == "beta_min") cfg.grid.beta_min = parse_double(e.value);
            else if (e.key == "beta_max") cfg.grid.beta_max = parse_double(e.value);
            else if (e.key == "samples") cfg.grid.samples_per_axis = int(parse_long(e.value));
            else if (e.key == "subsample") cfg.subsample = parse_long(e.value);
            else throw unknown();
        } else if (e.section == "run") {
            if (e.key == "seed") cfg.seed = std::uint64_t(parse_long(e.value));
            else if (e.key == "workers") cfg.workers = int(parse_long(e.value));
            else if (e.key == "out_dir") cfg.out_dir = e.value;
            else if (e.key == "extend_factor") cfg.extend_factor = int(parse_long(e.value));
            else throw unknown();
        } else {
            throw std::runtime_error("config line " + std::to_string(e.line) + ": unknown section [" + e.section +
                                     "]");
        }
    }
    cfg.bind_seeds();
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_experiment_config(buf.str());
}

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)), model_(cfg_.model) {
    cfg_.validate();
    workers_ = resolve_workers(cfg_.workers);
    cfg_.pretrain_cfg.workers = workers_;
    cfg_.finetune_cfg.workers = workers_;
    cfg_.scratch_cfg.workers = workers_;
}

const SyntheticCorpus& Experiment::corpus() {
    if (!corpus_) corpus_ = gen_corpus(cfg_.model, cfg_.seed, cfg_.corpus_size);
    return *corpus_;
}

const ClassificationTask& Experiment::task(int idx) {
    if (idx < 0 || idx > 1) throw std::invalid_argument("task index must be 0 or 1");
    if (!tasks_[idx]) {
        tasks_[idx] = gen_task(cfg_.task_kinds[idx], cfg_.model, cfg_.seed, cfg_.task_train[idx],
                               cfg_.task_dev[idx]);
        // distinct head seeds even if both tasks share a kind
        tasks_[idx]->task_id = idx;
        tasks_[idx]->name = task_kind_name(cfg_.task_kinds[idx]);
    }
    return *tasks_[idx];
}

const TrainRun& Experiment::cached_run(const std::string& name, const TrainConfig& wanted,
                                       const std::function<TrainRun()>& build) {
    auto it = runs_.find(name);
    if (it != runs_.end()) return it->second;

    std::string dir = runs_dir() + "/" + name;
    if (std::filesystem::exists(dir + "/run.json")) {
        try {
            TrainRun loaded = read_run_dir(dir);
            TrainConfig stored = loaded.config;
            stored.workers = wanted.workers;  // workers never affect results
            if (loaded.model == cfg_.model && stored == wanted) {
                return runs_.emplace(name, std::move(loaded)).first->second;
            }
        } catch (const std::exception&) {
            // fall through and retrain
        }
    }
    TrainRun fresh = build();
    write_run_dir(dir, fresh);
    return runs_.emplace(name, std::move(fresh)).first->second;
}

const TrainRun& Experiment::pretrain_run() {
    TrainConfig wanted = cfg_.pretrain_cfg;
    std::string name = "pretrain-s" + std::to_string(cfg_.seed) + "-e" + std::to_string(wanted.epochs);
    return cached_run(name, wanted, [&] { return pretrain(model_, corpus(), wanted); });
}

const TrainRun& Experiment::finetune_run(int task_idx) {
    TrainConfig wanted = cfg_.finetune_cfg;
    const ClassificationTask& t = task(task_idx);
    std::string name = "finetune-" + t.name + std::to_string(task_idx + 1) + "-s" + std::to_string(cfg_.seed) +
                       "-e" + std::to_string(wanted.epochs);
    return cached_run(name, wanted, [&] {
        const TrainRun& pt = pretrain_run();
        return finetune(model_, pt.final().params, t, wanted, pt.label);
    });
}

const TrainRun& Experiment::scratch_run(int task_idx) {
    TrainConfig wanted = cfg_.scratch_cfg;
    const ClassificationTask& t = task(task_idx);
    std::string name = "scratch-" + t.name + std::to_string(task_idx + 1) + "-s" + std::to_string(cfg_.seed) +
                       "-e" + std::to_string(wanted.epochs);
    return cached_run(name, wanted, [&] { return train_from_scratch(model_, t, wanted); });
}

const TrainRun& Experiment::extended_run(int task_idx) {
    TrainConfig wanted = cfg_.finetune_cfg;
    wanted.epochs = cfg_.finetune_cfg.epochs * cfg_.extend_factor;
    const ClassificationTask& t = task(task_idx);
    std::string name = "finetune-" + t.name + std::to_string(task_idx + 1) + "-s" + std::to_string(cfg_.seed) +
                       "-e" + std::to_string(wanted.epochs);
    return cached_run(name, wanted, [&] {
        const TrainRun& pt = pretrain_run();
        return finetune(model_, pt.final().params, t, wanted, pt.label);
    });
}

}  // namespace lossscope
