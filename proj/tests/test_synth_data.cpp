#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "lossscope/synth_data.hpp"

using namespace lossscope;

namespace {

ModelConfig default_config() { return ModelConfig{}; }

bool same_sequences(const std::vector<std::vector<int>>& a, const std::vector<std::vector<int>>& b) {
    return a == b;
}

}  // namespace

TEST_CASE("gen_corpus determinism and shape") {
    auto cfg = default_config();
    auto a = gen_corpus(cfg, 5, 20);
    auto b = gen_corpus(cfg, 5, 20);
    CHECK(same_sequences(a.sequences, b.sequences));
    CHECK(a.transition == b.transition);

    auto c = gen_corpus(cfg, 6, 20);
    CHECK(!same_sequences(a.sequences, c.sequences));

    auto one = gen_corpus(cfg, 5, 1);
    CHECK(one.sequences.size() == 1);
    CHECK_THROWS_AS(gen_corpus(cfg, 5, 0), std::invalid_argument);

    for (const auto& seq : a.sequences) {
        CHECK(int(seq.size()) == cfg.max_seq_len);
        CHECK(seq[0] == cfg.cls_token_id());
        for (std::size_t i = 1; i < seq.size(); ++i) {
            CHECK(seq[i] >= 0);
            CHECK(seq[i] < cfg.data_vocab());
        }
    }
}

TEST_CASE("empirical bigrams converge to the generator matrix") {
    auto cfg = default_config();
    auto corpus = gen_corpus(cfg, 0, 10000);
    const int n = cfg.data_vocab();
    std::vector<std::vector<double>> counts(n, std::vector<double>(n, 0.0));
    std::vector<double> row_totals(n, 0.0);
    for (const auto& seq : corpus.sequences) {
        for (std::size_t i = 1; i + 1 < seq.size(); ++i) {
            counts[seq[i]][seq[i + 1]] += 1.0;
            row_totals[seq[i]] += 1.0;
        }
    }
    double total = 0.0;
    for (double t : row_totals) total += t;
    // row-weighted total-variation distance between empirical transitions
    // and the true matrix
    double tv = 0.0;
    for (int v = 0; v < n; ++v) {
        if (row_totals[v] == 0.0) continue;
        double row_tv = 0.0;
        for (int w = 0; w < n; ++w) {
            row_tv += std::abs(counts[v][w] / row_totals[v] - corpus.transition[v][w]);
        }
        tv += (row_totals[v] / total) * 0.5 * row_tv;
    }
    CHECK(tv < 0.05);
}

TEST_CASE("gen_task determinism, balance, and validity") {
    auto cfg = default_config();
    for (TaskKind kind : {TaskKind::regime, TaskKind::motif}) {
        auto a = gen_task(kind, cfg, 3, 33, 17);
        auto b = gen_task(kind, cfg, 3, 33, 17);
        CHECK(a.train.token_ids == b.train.token_ids);
        CHECK(a.dev.labels == b.dev.labels);

        CHECK(a.train.size() == 33);
        CHECK(a.dev.size() == 17);
        long ones = 0;
        for (int y : a.train.labels) ones += y;
        CHECK(std::abs(double(ones) - double(33 - ones)) <= 1.0);

        for (const auto& seq : a.train.token_ids) {
            CHECK(seq[0] == cfg.cls_token_id());
            for (std::size_t i = 1; i < seq.size(); ++i) CHECK(seq[i] < cfg.data_vocab());
        }
    }
    CHECK_THROWS_AS(gen_task(TaskKind::regime, cfg, 3, 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(task_kind_from_name("nope"), std::invalid_argument);
}

TEST_CASE("train and dev splits are disjoint across seeds") {
    auto cfg = default_config();
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        for (TaskKind kind : {TaskKind::regime, TaskKind::motif}) {
            auto task = gen_task(kind, cfg, seed, 40, 40);
            std::set<std::vector<int>> train_set(task.train.token_ids.begin(), task.train.token_ids.end());
            for (const auto& seq : task.dev.token_ids) CHECK(train_set.count(seq) == 0);
        }
    }
}

TEST_CASE("motif labels match motif presence") {
    auto cfg = default_config();
    auto task = gen_task(TaskKind::motif, cfg, 9, 50, 50);
    REQUIRE(task.motif.size() == 3);
    auto has_motif = [&](const std::vector<int>& seq) {
        for (std::size_t i = 1; i + 3 <= seq.size(); ++i) {
            if (seq[i] == task.motif[0] && seq[i + 1] == task.motif[1] && seq[i + 2] == task.motif[2]) return true;
        }
        return false;
    };
    for (std::size_t i = 0; i < task.train.size(); ++i) {
        CHECK(has_motif(task.train.token_ids[i]) == (task.train.labels[i] == 1));
    }
}

TEST_CASE("likelihood-ratio oracle solves the regime task") {
    auto cfg = default_config();
    auto task = gen_task(TaskKind::regime, cfg, 0, 64, 256);
    REQUIRE(task.matrices.size() == 2);
    long wrong = 0;
    for (std::size_t i = 0; i < task.dev.size(); ++i) {
        const auto& seq = task.dev.token_ids[i];
        double score = 0.0;  // log P(x | class 0) - log P(x | class 1)
        for (std::size_t p = 1; p + 1 < seq.size(); ++p) {
            score += std::log(task.matrices[0][seq[p]][seq[p + 1]]);
            score -= std::log(task.matrices[1][seq[p]][seq[p + 1]]);
        }
        int pred = score > 0.0 ? 0 : 1;
        if (pred != task.dev.labels[i]) ++wrong;
    }
    double err = double(wrong) / double(task.dev.size());
    CHECK(err < 0.15);
}

TEST_CASE("mask_sequences") {
    auto cfg = default_config();
    auto corpus = gen_corpus(cfg, 1, 30);
    std::vector<std::size_t> indices = {0, 5, 7};
    auto a = mask_sequences(corpus.sequences, indices, 0.15, cfg.mask_token_id(), 42);
    auto b = mask_sequences(corpus.sequences, indices, 0.15, cfg.mask_token_id(), 42);
    CHECK(a.token_ids == b.token_ids);

    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(!a.masks[i].empty());
        for (const TargetSlot& slot : a.masks[i]) {
            CHECK(slot.position >= 1);  // the cls position is never masked
            CHECK(a.token_ids[i][slot.position] == cfg.mask_token_id());
            CHECK(slot.target == corpus.sequences[indices[i]][slot.position]);
        }
    }

    // mask pattern depends on the original index, not the batch position
    auto c = mask_sequences(corpus.sequences, {5}, 0.15, cfg.mask_token_id(), 42);
    CHECK(c.token_ids[0] == a.token_ids[1]);
}

TEST_CASE("corpus and task jsonl round-trips") {
    auto cfg = default_config();
    auto corpus = gen_corpus(cfg, 4, 12);
    auto corpus2 = corpus_from_jsonl(corpus_to_jsonl(corpus));
    CHECK(corpus2.sequences == corpus.sequences);
    CHECK(corpus2.transition == corpus.transition);
    CHECK(corpus2.seed == corpus.seed);

    auto task = gen_task(TaskKind::motif, cfg, 4, 10, 6);
    auto task2 = task_from_jsonl(task_to_jsonl(task));
    CHECK(task2.train.token_ids == task.train.token_ids);
    CHECK(task2.train.labels == task.train.labels);
    CHECK(task2.dev.token_ids == task.dev.token_ids);
    CHECK(task2.motif == task.motif);
    CHECK(task2.matrices == task.matrices);
    CHECK(task_kind_name(task2.kind) == "motif");

    CHECK_THROWS(corpus_from_jsonl("not json"));
    CHECK_THROWS(corpus_from_jsonl(task_to_jsonl(task)));
}
