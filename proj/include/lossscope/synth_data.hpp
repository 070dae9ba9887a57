#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lossscope/model.hpp"

namespace lossscope {

// Token sequences from a seeded first-order transition process. Class-0 of
// the "regime" task uses the same chain for the same seed, which is what lets
// masked-token pretraining transfer to the downstream tasks.
struct SyntheticCorpus {
    std::vector<std::vector<int>> sequences;  // each starts with the cls token
    int vocab_size = 0;
    std::string rule;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> transition;  // data_vocab x data_vocab, row-stochastic
    std::vector<double> initial;
};

enum class TaskKind { regime, motif };

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(std::string_view name);

struct ClassificationTask {
    std::string name;
    TaskKind kind = TaskKind::regime;
    int task_id = 0;
    int num_classes = 2;
    std::uint64_t seed = 0;
    Batch train;
    Batch dev;
    // generator internals, kept for oracles and inspection
    std::vector<std::vector<std::vector<double>>> matrices;  // regime: per-class transition
    std::vector<int> motif;
};

// row-stochastic transition matrix over the data vocabulary
std::vector<std::vector<double>> transition_matrix(const ModelConfig& cfg, std::uint64_t seed);

SyntheticCorpus gen_corpus(const ModelConfig& cfg, std::uint64_t seed, int size);

ClassificationTask gen_task(TaskKind kind, const ModelConfig& cfg, std::uint64_t seed, int train_size,
                            int dev_size);

// Masked copies of the given corpus sequences: each position after the
// leading cls token is masked independently with probability mask_prob (at
// least one per sequence), original ids recorded as targets.
Batch mask_sequences(const std::vector<std::vector<int>>& sequences, const std::vector<std::size_t>& indices,
                     double mask_prob, int mask_token, std::uint64_t seed);

// JSON-lines round trip: first line holds generator metadata, then one
// sequence / labeled example per line.
std::string corpus_to_jsonl(const SyntheticCorpus& corpus);
SyntheticCorpus corpus_from_jsonl(const std::string& text);
std::string task_to_jsonl(const ClassificationTask& task);
ClassificationTask task_from_jsonl(const std::string& text);

}  // namespace lossscope
