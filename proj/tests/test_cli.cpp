#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "lossscope/repro.hpp"
#include "lossscope/serialize.hpp"

using namespace lossscope;

namespace {

std::string binary() {
    const char* env = std::getenv("LOSSSCOPE_BIN");
    REQUIRE(env != nullptr);
    return env;
}

int run(const std::string& args) {
    std::string cmd = binary() + " " + args + " 2>/dev/null >/dev/null";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

struct Sandbox {
    std::filesystem::path dir;
    Sandbox() {
        dir = std::filesystem::temp_directory_path() / "lossscope_cli_test";
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        std::ofstream cfg(dir / "tiny.cfg");
        cfg << "[model]\nlayers = 3\ndim = 8\nheads = 2\nffn = 16\nvocab = 16\nseq_len = 8\n"
            << "[data]\ncorpus_size = 40\ntask1_train = 16\ntask1_dev = 12\ntask2_train = 12\ntask2_dev = 12\n"
            << "[pretrain]\nepochs = 1\nbatch_size = 8\n"
            << "[finetune]\nepochs = 2\nbatch_size = 8\n"
            << "[scratch]\nepochs = 2\nbatch_size = 8\n"
            << "[landscape]\nsamples = 4\nsubsample = 6\n"
            << "[run]\nseed = 1\nout_dir = " << (dir / "out").string() << "\n";
    }
    ~Sandbox() { std::filesystem::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("usage surface") {
    CHECK(run("--help") == 0);
    CHECK(run("surface --help") == 0);
    CHECK(run("no-such-command") == 1);
    CHECK(run("rollback") == 1);          // required options missing
    CHECK(run("rollback --theta0 a") == 1);
    CHECK(run("repro fig99") == 1);       // unknown figure id
    CHECK(run("train --mode nope --out x") == 1);
}

TEST_CASE("end-to-end pipeline with file round-trips") {
    Sandbox box;
    std::string cfg = " --config " + box.path("tiny.cfg");

    CHECK(run("gen-data" + cfg + " --out " + box.path("data")) == 0);
    CHECK(std::filesystem::exists(box.path("data/corpus.jsonl")));

    CHECK(run("pretrain" + cfg + " --out " + box.path("runs/pre")) == 0);
    CHECK(run("train" + cfg + " --mode finetune --task 1 --init " + box.path("runs/pre/epoch_0001.ckpt") +
              " --out " + box.path("runs/ft1")) == 0);
    CHECK(run("train" + cfg + " --mode finetune --task 2 --init " + box.path("runs/pre/epoch_0001.ckpt") +
              " --out " + box.path("runs/ft2")) == 0);

    // missing file is a data error, not a usage error
    CHECK(run("train" + cfg + " --mode finetune --task 1 --init " + box.path("missing.ckpt") + " --out " +
              box.path("runs/x")) == 2);

    std::string t0 = box.path("runs/ft1/epoch_0000.ckpt");
    std::string t1 = box.path("runs/ft1/epoch_0002.ckpt");
    std::string t2 = box.path("runs/ft2/epoch_0002.ckpt");
    std::string data = box.path("data/task1.jsonl");
    std::string data_bytes_before = file_bytes(data);

    CHECK(run("curve --theta0 " + t0 + " --theta1 " + t1 + " --data " + data +
              " --subsample 4 --samples 5 --out " + box.path("c.csv")) == 0);
    CHECK(run("surface --theta0 " + t0 + " --theta1 " + t1 + " --theta2 " + t2 + " --data " + data +
              " --subsample 4 --samples 3 --out " + box.path("s.grid")) == 0);
    CHECK(run("trajectory --run " + box.path("runs/ft1") + " --out " + box.path("t.csv")) == 0);
    CHECK(run("rollback --theta0 " + t0 + " --theta1 " + t1 + " --data " + data + " --out " +
              box.path("rb.csv")) == 0);

    // every file the CLI writes is re-readable
    CHECK_NOTHROW(curve_from_csv(file_bytes(box.path("c.csv"))));
    CHECK_NOTHROW(surface_from_text(file_bytes(box.path("s.grid"))));
    CHECK_NOTHROW(trajectory_from_csv(file_bytes(box.path("t.csv"))));
    CHECK_NOTHROW(rollback_from_csv(file_bytes(box.path("rb.csv"))));

    CHECK(run("render --in " + box.path("s.grid") + " --out " + box.path("s.svg")) == 0);
    CHECK(run("render --in " + box.path("s.grid") + " --overlay " + box.path("t.csv") + " --out " +
              box.path("o.svg")) == 0);
    CHECK(run("render --in " + box.path("c.csv") + " --out " + box.path("c.svg")) == 0);
    CHECK(file_bytes(box.path("s.svg")).find("</svg>") != std::string::npos);

    // rendering twice is byte-identical
    CHECK(run("render --in " + box.path("s.grid") + " --out " + box.path("s2.svg")) == 0);
    CHECK(file_bytes(box.path("s.svg")) == file_bytes(box.path("s2.svg")));

    // malformed input: an empty grid file is rejected without creating output
    std::ofstream(box.path("empty.grid")).close();
    CHECK(run("render --in " + box.path("empty.grid") + " --out " + box.path("never.svg")) == 2);
    CHECK(!std::filesystem::exists(box.path("never.svg")));

    // inputs were not mutated by any subcommand
    CHECK(file_bytes(data) == data_bytes_before);
}

TEST_CASE("repro manifests are stable across runs and worker counts") {
    Sandbox box;
    std::string cfg = " --config " + box.path("tiny.cfg");
    CHECK(run("repro table1" + cfg + " --out " + box.path("r1") + " --workers 1") == 0);
    CHECK(run("repro table1" + cfg + " --out " + box.path("r2") + " --workers 3") == 0);
    CHECK(run("repro table1" + cfg + " --out " + box.path("r1") + " --workers 2") == 0);  // cached rerun

    std::string m1 = file_bytes(box.path("r1/table1/manifest.json"));
    std::string m2 = file_bytes(box.path("r2/table1/manifest.json"));
    CHECK(m1 == m2);

    auto parsed = manifest_from_json(m1);
    CHECK(parsed.figure_id == "table1");
    CHECK(parsed.files.size() == 2);
    for (const auto& f : parsed.files) CHECK(f.sha256.size() == 64);
}
