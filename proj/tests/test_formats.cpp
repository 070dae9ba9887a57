#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "lossscope/experiment.hpp"
#include "lossscope/sha256.hpp"
#include "lossscope/text_format.hpp"

using namespace lossscope;

TEST_CASE("sha256 known vectors") {
    CHECK(Sha256::hash_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(Sha256::hash_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(Sha256::hash_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    // incremental updates match one-shot hashing
    Sha256 h;
    h.update("ab", 2);
    h.update("c", 1);
    CHECK(h.hex_digest() == Sha256::hash_hex("abc"));
    // streaming across the 64-byte block boundary
    std::string long_input(150, 'x');
    Sha256 h2;
    h2.update(long_input.data(), 100);
    h2.update(long_input.data() + 100, 50);
    CHECK(h2.hex_digest() == Sha256::hash_hex(long_input));
}

TEST_CASE("double formatting round-trips") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 3.141592653589793, -0.0}) {
        CHECK(parse_double(format_double(v)) == v);
    }
    double tricky = std::nextafter(1.0, 2.0);
    CHECK(parse_double(format_double(tricky)) == tricky);
    CHECK(std::isnan(parse_double("nan")));
    CHECK_THROWS(parse_double("1.2.3"));
    CHECK_THROWS(parse_double(""));
    CHECK_THROWS(parse_long("12x"));
}

TEST_CASE("experiment config defaults") {
    auto cfg = default_experiment_config();
    CHECK(cfg.model.num_layers == 6);
    CHECK(cfg.model.model_dim == 32);
    CHECK(cfg.grid.samples_per_axis == 40);
    CHECK(cfg.grid.alpha_min == -4.0);
    CHECK(cfg.pretrain_cfg.objective == HeadKind::masked_lm);
    CHECK(cfg.finetune_cfg.objective == HeadKind::classification);
    CHECK(cfg.scratch_cfg.epochs == 2 * cfg.finetune_cfg.epochs);
    cfg.validate();

    // empty text keeps every default
    auto parsed = parse_experiment_config("");
    CHECK(parsed.model == cfg.model);
    CHECK(parsed.seed == cfg.seed);
}

TEST_CASE("experiment config parsing") {
    const char* text = R"(
# comment
[model]
layers = 4
dim = 16

[data]
corpus_size = 100
task2_kind = regime

[finetune]
epochs = 7
lr = 5e-4

[landscape]
samples = 11
subsample = 32

[run]
seed = 9
out_dir = results
)";
    auto cfg = parse_experiment_config(text);
    CHECK(cfg.model.num_layers == 4);
    CHECK(cfg.model.model_dim == 16);
    CHECK(cfg.corpus_size == 100);
    CHECK(cfg.task_kinds[1] == TaskKind::regime);
    CHECK(cfg.finetune_cfg.epochs == 7);
    CHECK(cfg.finetune_cfg.learning_rate == 5e-4);
    CHECK(cfg.grid.samples_per_axis == 11);
    CHECK(cfg.subsample == 32);
    CHECK(cfg.seed == 9);
    CHECK(cfg.out_dir == "results");
    // master seed binds the per-stage seeds
    CHECK(cfg.pretrain_cfg.seed == 9);
    CHECK(cfg.finetune_cfg.seed == 9);

    CHECK_THROWS_WITH_AS(parse_experiment_config("[model]\nwut = 1\n"), doctest::Contains("unknown key"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_experiment_config("[nope]\nx = 1\n"), doctest::Contains("unknown section"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_experiment_config("[model]\nlayers 4\n"), doctest::Contains("expected key"),
                         std::runtime_error);
    CHECK_THROWS_AS(parse_experiment_config("[model]\nlayers = 0\n"), std::invalid_argument);
}
