#include "lossscope/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "lossscope/rng.hpp"

namespace lossscope {

namespace {

constexpr std::uint64_t kMatrixTag = 0xA0;
constexpr std::uint64_t kAltMatrixTag = 0xB0;
constexpr std::uint64_t kMotifTag = 0xC0;
constexpr std::uint64_t kSequenceTag = 0xD0;

// sharp rows (temperature < 1) keep the chain predictable enough to learn
std::vector<double> random_row(Rng& rng, int n) {
    std::vector<double> logits(n);
    for (auto& x : logits) x = 2.5 * rng.normal();
    double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (auto& x : logits) {
        x = std::exp(x - mx);
        denom += x;
    }
    for (auto& x : logits) x /= denom;
    return logits;
}

std::vector<int> sample_sequence(Rng& rng, const ModelConfig& cfg,
                                 const std::vector<std::vector<double>>& matrix,
                                 const std::vector<double>& initial) {
    std::vector<int> seq(cfg.max_seq_len);
    seq[0] = cfg.cls_token_id();
    int prev = int(rng.categorical(initial));
    seq[1] = prev;
    for (int i = 2; i < cfg.max_seq_len; ++i) {
        prev = int(rng.categorical(matrix[prev]));
        seq[i] = prev;
    }
    return seq;
}

bool contains_motif(const std::vector<int>& seq, const std::vector<int>& motif) {
    if (seq.size() < motif.size() + 1) return false;
    for (std::size_t i = 1; i + motif.size() <= seq.size(); ++i) {
        bool hit = true;
        for (std::size_t k = 0; k < motif.size(); ++k) hit &= (seq[i + k] == motif[k]);
        if (hit) return true;
    }
    return false;
}

}  // namespace

std::string task_kind_name(TaskKind kind) { return kind == TaskKind::regime ? "regime" : "motif"; }

TaskKind task_kind_from_name(std::string_view name) {
    if (name == "regime") return TaskKind::regime;
    if (name == "motif") return TaskKind::motif;
    throw std::invalid_argument("unknown task kind: '" + std::string(name) + "'");
}

std::vector<std::vector<double>> transition_matrix(const ModelConfig& cfg, std::uint64_t seed) {
    const int n = cfg.data_vocab();
    Rng rng(seed);
    std::vector<std::vector<double>> m(n);
    for (auto& row : m) row = random_row(rng, n);
    return m;
}

SyntheticCorpus gen_corpus(const ModelConfig& cfg, std::uint64_t seed, int size) {
    if (size < 1) throw std::invalid_argument("gen_corpus: size must be at least 1");
    SyntheticCorpus corpus;
    corpus.vocab_size = cfg.vocab_size;
    corpus.rule = "markov";
    corpus.seed = seed;
    corpus.transition = transition_matrix(cfg, derive_seed(seed, kMatrixTag));
    corpus.initial.assign(cfg.data_vocab(), 1.0 / cfg.data_vocab());
    Rng rng(derive_seed(seed, kSequenceTag));
    corpus.sequences.reserve(size);
    for (int i = 0; i < size; ++i) {
        corpus.sequences.push_back(sample_sequence(rng, cfg, corpus.transition, corpus.initial));
    }
    return corpus;
}

ClassificationTask gen_task(TaskKind kind, const ModelConfig& cfg, std::uint64_t seed, int train_size,
                            int dev_size) {
    if (train_size < 1 || dev_size < 1) throw std::invalid_argument("gen_task: split sizes must be at least 1");
    ClassificationTask task;
    task.kind = kind;
    task.name = task_kind_name(kind);
    task.task_id = kind == TaskKind::regime ? 0 : 1;
    task.num_classes = 2;
    task.seed = seed;

    std::vector<double> initial(cfg.data_vocab(), 1.0 / cfg.data_vocab());
    if (kind == TaskKind::regime) {
        // class 0 shares the corpus chain for this seed, class 1 is a fresh one
        task.matrices.push_back(transition_matrix(cfg, derive_seed(seed, kMatrixTag)));
        task.matrices.push_back(transition_matrix(cfg, derive_seed(seed, kAltMatrixTag)));
    } else {
        task.matrices.push_back(transition_matrix(cfg, derive_seed(seed, kMatrixTag)));
        Rng motif_rng(derive_seed(seed, kMotifTag));
        while (int(task.motif.size()) < 3) {
            int t = int(motif_rng.uniform_below(std::uint64_t(cfg.data_vocab())));
            if (std::find(task.motif.begin(), task.motif.end(), t) == task.motif.end()) task.motif.push_back(t);
        }
    }

    Rng rng(derive_seed(seed, kSequenceTag, std::uint64_t(task.task_id)));
    std::set<std::vector<int>> seen;
    auto fresh_example = [&](int label) {
        while (true) {
            std::vector<int> seq;
            if (kind == TaskKind::regime) {
                seq = sample_sequence(rng, cfg, task.matrices[label], initial);
            } else {
                seq = sample_sequence(rng, cfg, task.matrices[0], initial);
                if (label == 1) {
                    std::size_t pos = 1 + rng.uniform_below(std::uint64_t(seq.size() - 1 - task.motif.size()));
                    for (std::size_t k = 0; k < task.motif.size(); ++k) seq[pos + k] = task.motif[k];
                } else if (contains_motif(seq, task.motif)) {
                    continue;  // rare; resample negatives that contain the motif by chance
                }
            }
            if (seen.insert(seq).second) return seq;
        }
    };

    auto fill_split = [&](Batch& split, int n) {
        for (int i = 0; i < n; ++i) {
            int label = i % 2;
            split.token_ids.push_back(fresh_example(label));
            split.labels.push_back(label);
        }
    };
    fill_split(task.train, train_size);
    fill_split(task.dev, dev_size);
    return task;
}

Batch mask_sequences(const std::vector<std::vector<int>>& sequences, const std::vector<std::size_t>& indices,
                     double mask_prob, int mask_token, std::uint64_t seed) {
    Batch batch;
    batch.token_ids.reserve(indices.size());
    batch.masks.reserve(indices.size());
    for (std::size_t idx : indices) {
        if (idx >= sequences.size()) throw std::invalid_argument("mask_sequences: index out of range");
        // per-sequence stream: the mask pattern depends only on (seed, idx)
        Rng rng(derive_seed(seed, idx));
        std::vector<int> toks = sequences[idx];
        std::vector<TargetSlot> slots;
        for (std::size_t p = 1; p < toks.size(); ++p) {
            if (rng.uniform01() < mask_prob) {
                slots.push_back({int(p), toks[p]});
                toks[p] = mask_token;
            }
        }
        if (slots.empty() && toks.size() > 1) {
            std::size_t p = 1 + rng.uniform_below(toks.size() - 1);
            slots.push_back({int(p), toks[p]});
            toks[p] = mask_token;
        }
        batch.token_ids.push_back(std::move(toks));
        batch.masks.push_back(std::move(slots));
    }
    return batch;
}

std::string corpus_to_jsonl(const SyntheticCorpus& corpus) {
    nlohmann::json meta = {
        {"format", "lossscope-corpus"},
        {"version", 1},
        {"vocab_size", corpus.vocab_size},
        {"rule", corpus.rule},
        {"seed", corpus.seed},
        {"transition", corpus.transition},
        {"initial", corpus.initial},
    };
    std::string out = meta.dump() + "\n";
    for (const auto& seq : corpus.sequences) {
        out += nlohmann::json{{"tokens", seq}}.dump() + "\n";
    }
    return out;
}

namespace {

std::vector<std::string> non_empty_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        if (end > start) lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

}  // namespace

SyntheticCorpus corpus_from_jsonl(const std::string& text) {
    auto lines = non_empty_lines(text);
    if (lines.empty()) throw std::runtime_error("corpus file is empty");
    nlohmann::json meta = nlohmann::json::parse(lines[0]);
    if (meta.value("format", "") != "lossscope-corpus") throw std::runtime_error("not a corpus file");
    SyntheticCorpus corpus;
    corpus.vocab_size = meta.at("vocab_size").get<int>();
    corpus.rule = meta.at("rule").get<std::string>();
    corpus.seed = meta.at("seed").get<std::uint64_t>();
    corpus.transition = meta.at("transition").get<std::vector<std::vector<double>>>();
    corpus.initial = meta.at("initial").get<std::vector<double>>();
    for (std::size_t i = 1; i < lines.size(); ++i) {
        nlohmann::json row = nlohmann::json::parse(lines[i]);
        corpus.sequences.push_back(row.at("tokens").get<std::vector<int>>());
    }
    return corpus;
}

std::string task_to_jsonl(const ClassificationTask& task) {
    nlohmann::json meta = {
        {"format", "lossscope-task"},
        {"version", 1},
        {"name", task.name},
        {"kind", task_kind_name(task.kind)},
        {"task_id", task.task_id},
        {"num_classes", task.num_classes},
        {"seed", task.seed},
        {"matrices", task.matrices},
        {"motif", task.motif},
    };
    std::string out = meta.dump() + "\n";
    auto dump_split = [&out](const Batch& split, const char* name) {
        for (std::size_t i = 0; i < split.size(); ++i) {
            out += nlohmann::json{{"split", name}, {"tokens", split.token_ids[i]}, {"label", split.labels[i]}}
                       .dump() +
                   "\n";
        }
    };
    dump_split(task.train, "train");
    dump_split(task.dev, "dev");
    return out;
}

ClassificationTask task_from_jsonl(const std::string& text) {
    auto lines = non_empty_lines(text);
    if (lines.empty()) throw std::runtime_error("task file is empty");
    nlohmann::json meta = nlohmann::json::parse(lines[0]);
    if (meta.value("format", "") != "lossscope-task") throw std::runtime_error("not a task file");
    ClassificationTask task;
    task.name = meta.at("name").get<std::string>();
    task.kind = task_kind_from_name(meta.at("kind").get<std::string>());
    task.task_id = meta.at("task_id").get<int>();
    task.num_classes = meta.at("num_classes").get<int>();
    task.seed = meta.at("seed").get<std::uint64_t>();
    task.matrices = meta.at("matrices").get<std::vector<std::vector<std::vector<double>>>>();
    task.motif = meta.at("motif").get<std::vector<int>>();
    for (std::size_t i = 1; i < lines.size(); ++i) {
        nlohmann::json row = nlohmann::json::parse(lines[i]);
        Batch& split = row.at("split").get<std::string>() == "train" ? task.train : task.dev;
        split.token_ids.push_back(row.at("tokens").get<std::vector<int>>());
        split.labels.push_back(row.at("label").get<int>());
    }
    return task;
}

}  // namespace lossscope
